#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pnat/core/ops.hpp"
#include "pnat/core/rng.hpp"
#include "pnat/model/attention.hpp"

namespace pnat {

namespace init {

inline std::uint64_t name_key(std::uint64_t seed, const std::string& name) {
  std::uint64_t h = rng::splitmix64(seed);
  for (unsigned char c : name) h = rng::splitmix64(h ^ c);
  return h;
}

template <std::floating_point T>
void uniform(Parameter<T>& p, double bound, std::uint64_t seed) {
  const auto k = name_key(seed, p.name);
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    p.value[i] = static_cast<T>((2.0 * rng::uniform(k, i) - 1.0) * bound);
  }
}

template <std::floating_point T>
void normal(Parameter<T>& p, double stddev, std::uint64_t seed) {
  const auto k = name_key(seed, p.name);
  for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = static_cast<T>(rng::normal(k, i) * stddev);
}

template <std::floating_point T>
void xavier(Parameter<T>& p, std::uint64_t seed) {
  const double fan = static_cast<double>(p.value.rows() + p.value.cols());
  uniform(p, std::sqrt(6.0 / fan), seed);
}

}  // namespace init

/// Standard sinusoidal absolute position table [n x d].
template <std::floating_point T>
Tensor<T> sinusoid_table(std::size_t n, std::size_t d) {
  auto pe = Tensor<T>::matrix(n, d);
  for (std::size_t pos = 0; pos < n; ++pos) {
    for (std::size_t i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      const double a = static_cast<double>(pos) * rate;
      pe(pos, i) = static_cast<T>(i % 2 == 0 ? std::sin(a) : std::cos(a));
    }
  }
  return pe;
}

template <std::floating_point T>
struct Linear {
  Parameter<T>* weight = nullptr;  // [in x out]
  Parameter<T>* bias = nullptr;    // [1 x out]

  static Linear create(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
                       std::uint64_t seed) {
    Linear l;
    l.weight = &store.create(name + ".weight", {in, out});
    l.bias = &store.create(name + ".bias", {1, out});
    init::xavier(*l.weight, seed);
    return l;
  }

  Var<T> operator()(Tape<T>& tape, Var<T> x) const {
    return ops::add_row(ops::matmul(x, tape.parameter(*weight)), tape.parameter(*bias));
  }
};

template <std::floating_point T>
struct LayerNorm {
  Parameter<T>* gain = nullptr;
  Parameter<T>* bias = nullptr;

  static LayerNorm create(ParameterStore<T>& store, const std::string& name, std::size_t d) {
    LayerNorm ln;
    ln.gain = &store.create(name + ".gain", {1, d});
    ln.bias = &store.create(name + ".bias", {1, d});
    ln.gain->value.fill(T{1});
    return ln;
  }

  Var<T> operator()(Tape<T>& tape, Var<T> x) const {
    return ops::layer_norm(x, tape.parameter(*gain), tape.parameter(*bias));
  }
};

template <std::floating_point T>
struct MultiHeadAttention {
  Linear<T> wq, wk, wv, wo;
  Parameter<T>* rel_k = nullptr;  // [(2*clip+1) x d_head], relative variant only
  Parameter<T>* rel_v = nullptr;
  std::size_t heads = 1;

  static MultiHeadAttention create(ParameterStore<T>& store, const std::string& name, std::size_t d,
                                   std::size_t heads, int rel_clip, std::uint64_t seed) {
    MultiHeadAttention a;
    a.heads = heads;
    a.wq = Linear<T>::create(store, name + ".wq", d, d, seed);
    a.wk = Linear<T>::create(store, name + ".wk", d, d, seed);
    a.wv = Linear<T>::create(store, name + ".wv", d, d, seed);
    a.wo = Linear<T>::create(store, name + ".wo", d, d, seed);
    if (rel_clip > 0) {
      const std::size_t n = static_cast<std::size_t>(2 * rel_clip + 1);
      a.rel_k = &store.create(name + ".rel_k", {n, d / heads});
      a.rel_v = &store.create(name + ".rel_v", {n, d / heads});
      init::xavier(*a.rel_k, seed);
      init::xavier(*a.rel_v, seed);
    }
    return a;
  }

  Var<T> operator()(Tape<T>& tape, Var<T> query, Var<T> memory, const AttentionMask& mask,
                    const RelativeBuckets* buckets = nullptr) const {
    auto q = wq(tape, query);
    auto k = wk(tape, memory);
    auto v = wv(tape, memory);
    Var<T> o;
    if (buckets != nullptr) {
      if (rel_k == nullptr) throw ShapeError("attention: relative buckets given to absolute attention");
      o = attention(q, k, v, heads, mask, buckets, tape.parameter(*rel_k), tape.parameter(*rel_v));
    } else {
      o = attention(q, k, v, heads, mask);
    }
    return wo(tape, o);
  }
};

template <std::floating_point T>
struct FeedForward {
  Linear<T> in, out;

  static FeedForward create(ParameterStore<T>& store, const std::string& name, std::size_t d,
                            std::size_t hidden, std::uint64_t seed) {
    return {Linear<T>::create(store, name + ".in", d, hidden, seed),
            Linear<T>::create(store, name + ".out", hidden, d, seed)};
  }

  Var<T> operator()(Tape<T>& tape, Var<T> x) const { return out(tape, ops::relu(in(tape, x))); }
};

/// Pre-norm transformer block: self-attention, optional attention over a
/// memory (source states), position-wise feed-forward.
template <std::floating_point T>
struct TransformerLayer {
  LayerNorm<T> ln_self, ln_cross, ln_ffn;
  MultiHeadAttention<T> self_attn, cross_attn;
  FeedForward<T> ffn;
  bool has_cross = false;
  std::uint64_t dropout_site = 0;

  static TransformerLayer create(ParameterStore<T>& store, const std::string& name, std::size_t d,
                                 std::size_t hidden, std::size_t heads, bool cross, int self_rel_clip,
                                 std::uint64_t seed, std::uint64_t site) {
    TransformerLayer l;
    l.has_cross = cross;
    l.dropout_site = site;
    l.ln_self = LayerNorm<T>::create(store, name + ".ln_self", d);
    l.self_attn = MultiHeadAttention<T>::create(store, name + ".self_attn", d, heads, self_rel_clip, seed);
    if (cross) {
      l.ln_cross = LayerNorm<T>::create(store, name + ".ln_cross", d);
      l.cross_attn = MultiHeadAttention<T>::create(store, name + ".cross_attn", d, heads, 0, seed);
    }
    l.ln_ffn = LayerNorm<T>::create(store, name + ".ln_ffn", d);
    l.ffn = FeedForward<T>::create(store, name + ".ffn", d, hidden, seed);
    return l;
  }

  Var<T> operator()(Tape<T>& tape, Var<T> x, const AttentionMask& self_mask, const RelativeBuckets* buckets,
                    const Var<T>* memory, const AttentionMask& memory_mask,
                    const ops::DropoutContext& drop) const {
    auto h = ln_self(tape, x);
    x = ops::add(x, ops::dropout(self_attn(tape, h, h, self_mask, buckets), drop, dropout_site));
    if (has_cross) {
      if (memory == nullptr) throw ShapeError("transformer layer: missing memory for cross-attention");
      h = ln_cross(tape, x);
      x = ops::add(x, ops::dropout(cross_attn(tape, h, *memory, memory_mask), drop, dropout_site + 1));
    }
    h = ln_ffn(tape, x);
    return ops::add(x, ops::dropout(ffn(tape, h), drop, dropout_site + 2));
  }
};

}  // namespace pnat
