#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "pnat/core/tape.hpp"
#include "pnat/position/permutation.hpp"

namespace pnat {

struct AttentionMask {
  std::vector<std::uint8_t> key_valid;  // empty: all keys valid
  bool causal = false;

  [[nodiscard]] bool allowed(std::size_t i, std::size_t j) const noexcept {
    if (causal && j > i) return false;
    return key_valid.empty() || key_valid[j];
  }
};

/// Scaled dot-product attention over `heads` column groups of q/k/v, with
/// optional relative-position key/value embeddings shared across heads:
///   s_ij = q_i . (k_j + a^K_{b(i,j)}) / sqrt(dh)
///   o_i  = sum_j softmax(s_i)_j (v_j + a^V_{b(i,j)})
/// `rel_k` / `rel_v` are [(2*clip+1) x dh]; `buckets` is required with them.
template <std::floating_point T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, std::size_t heads, const AttentionMask& mask,
                 const RelativeBuckets* buckets = nullptr, Var<T> rel_k = {}, Var<T> rel_v = {}) {
  const auto& qv = q.value();
  const auto& kv = k.value();
  const auto& vv = v.value();
  const std::size_t lq = qv.rows();
  const std::size_t lk = kv.rows();
  const std::size_t d = qv.cols();
  if (kv.cols() != d || vv.cols() != d || vv.rows() != lk || heads == 0 || d % heads != 0) {
    throw ShapeError("attention: incompatible q/k/v shapes");
  }
  if (!mask.key_valid.empty() && mask.key_valid.size() != lk) throw ShapeError("attention: key mask size");
  const bool relative = buckets != nullptr;
  if (relative && (buckets->size != lq || lq != lk || !rel_k.valid() || !rel_v.valid())) {
    throw ShapeError("attention: relative buckets require square self-attention and both tables");
  }
  const std::size_t dh = d / heads;
  const T scale = T{1} / std::sqrt(static_cast<T>(dh));
  const Tensor<T>* rk = relative ? &rel_k.value() : nullptr;
  const Tensor<T>* rv = relative ? &rel_v.value() : nullptr;

  std::vector<T> probs(heads * lq * lk, T{0});
  auto out = Tensor<T>::matrix(lq, d);
  std::vector<T> scores(lk);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < lq; ++i) {
      const T* qi = qv.data() + i * d + off;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < lk; ++j) {
        if (!mask.allowed(i, j)) {
          scores[j] = -std::numeric_limits<T>::infinity();
          continue;
        }
        const T* kj = kv.data() + j * d + off;
        T s{0};
        for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
        if (relative) {
          const T* a = rk->data() + static_cast<std::size_t>(buckets->at(i, j)) * dh;
          for (std::size_t c = 0; c < dh; ++c) s += qi[c] * a[c];
        }
        scores[j] = s * scale;
        mx = std::max(mx, scores[j]);
      }
      if (mx == -std::numeric_limits<T>::infinity()) throw ShapeError("attention: row with no visible keys");
      T z{0};
      T* p = probs.data() + (h * lq + i) * lk;
      for (std::size_t j = 0; j < lk; ++j) {
        p[j] = mask.allowed(i, j) ? std::exp(scores[j] - mx) : T{0};
        z += p[j];
      }
      T* oi = out.data() + i * d + off;
      for (std::size_t j = 0; j < lk; ++j) {
        p[j] /= z;
        if (p[j] == T{0}) continue;
        const T* vj = vv.data() + j * d + off;
        for (std::size_t c = 0; c < dh; ++c) oi[c] += p[j] * vj[c];
        if (relative) {
          const T* a = rv->data() + static_cast<std::size_t>(buckets->at(i, j)) * dh;
          for (std::size_t c = 0; c < dh; ++c) oi[c] += p[j] * a[c];
        }
      }
    }
  }

  std::vector<int> bucket_index = relative ? buckets->index : std::vector<int>{};
  auto backward = [=, probs = std::move(probs), bucket_index = std::move(bucket_index)](Tape<T>& t,
                                                                                      std::uint32_t self) {
    const auto& g = t.grad(self);
    const auto& qv = q.value();
    const auto& kv = k.value();
    const auto& vv = v.value();
    const Tensor<T>* rk = relative ? &rel_k.value() : nullptr;
    const Tensor<T>* rv = relative ? &rel_v.value() : nullptr;
    Tensor<T>* gq = t.needs_grad(q) ? &t.grad(q) : nullptr;
    Tensor<T>* gk = t.needs_grad(k) ? &t.grad(k) : nullptr;
    Tensor<T>* gv = t.needs_grad(v) ? &t.grad(v) : nullptr;
    Tensor<T>* grk = relative && t.needs_grad(rel_k) ? &t.grad(rel_k) : nullptr;
    Tensor<T>* grv = relative && t.needs_grad(rel_v) ? &t.grad(rel_v) : nullptr;
    std::vector<T> dp(lk);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dh;
      for (std::size_t i = 0; i < lq; ++i) {
        const T* p = probs.data() + (h * lq + i) * lk;
        const T* gi = g.data() + i * d + off;
        const T* qi = qv.data() + i * d + off;
        T dot{0};
        for (std::size_t j = 0; j < lk; ++j) {
          if (p[j] == T{0}) {
            dp[j] = T{0};
            continue;
          }
          const T* vj = vv.data() + j * d + off;
          T s{0};
          for (std::size_t c = 0; c < dh; ++c) s += gi[c] * vj[c];
          const std::size_t b = relative ? static_cast<std::size_t>(bucket_index[i * lk + j]) : 0;
          if (relative) {
            const T* a = rv->data() + b * dh;
            for (std::size_t c = 0; c < dh; ++c) s += gi[c] * a[c];
          }
          dp[j] = s;
          dot += p[j] * s;
          if (gv) {
            T* gvj = gv->data() + j * d + off;
            for (std::size_t c = 0; c < dh; ++c) gvj[c] += p[j] * gi[c];
          }
          if (grv) {
            T* a = grv->data() + b * dh;
            for (std::size_t c = 0; c < dh; ++c) a[c] += p[j] * gi[c];
          }
        }
        for (std::size_t j = 0; j < lk; ++j) {
          if (p[j] == T{0}) continue;
          const T ds = p[j] * (dp[j] - dot) * scale;
          const T* kj = kv.data() + j * d + off;
          const std::size_t b = relative ? static_cast<std::size_t>(bucket_index[i * lk + j]) : 0;
          if (gq) {
            T* gqi = gq->data() + i * d + off;
            for (std::size_t c = 0; c < dh; ++c) gqi[c] += ds * kj[c];
            if (relative) {
              const T* a = rk->data() + b * dh;
              for (std::size_t c = 0; c < dh; ++c) gqi[c] += ds * a[c];
            }
          }
          if (gk) {
            T* gkj = gk->data() + j * d + off;
            for (std::size_t c = 0; c < dh; ++c) gkj[c] += ds * qi[c];
          }
          if (grk) {
            T* a = grk->data() + b * dh;
            for (std::size_t c = 0; c < dh; ++c) a[c] += ds * qi[c];
          }
        }
      }
    }
  };
  if (relative) {
    return q.tape().record(std::move(out), {q, k, v, rel_k, rel_v}, std::move(backward));
  }
  return q.tape().record(std::move(out), {q, k, v}, std::move(backward));
}

}  // namespace pnat
