#pragma once

#include <optional>
#include <span>
#include <vector>

#include "pnat/model/at_model.hpp"
#include "pnat/model/pnat_model.hpp"
#include "pnat/position/search.hpp"

namespace pnat {

/// Reference positions for one pair: HSP over cosine(D, target embeddings),
/// computed on detached values.
template <std::floating_point T>
Permutation reference_positions(const PnatModel<T>& model, const Tensor<T>& d_inputs, std::span<const int> target,
                                SimilarityStats* stats = nullptr) {
  return hsp(similarity_matrix<T>(d_inputs, target, model.target_embedding().value, stats));
}

struct LossOptions {
  double alpha = 0.3;
  bool length_loss = true;  // joint length training on a detached encoder
  ops::DropoutContext drop;
  /// Replaces HSP as the reference permutation (used to hold z fixed).
  const Permutation* fixed_z = nullptr;
};

template <std::floating_point T>
struct ExampleLoss {
  Var<T> loss_g;
  std::optional<Var<T>> loss_p;
  std::optional<Var<T>> loss_len;
  Var<T> total;  // L_g + alpha * L_p
  Var<T> root;   // total plus the length term, the backward root
  Permutation z_ref;
};

/// Per-pair joint loss. NAT-base uses identity positions and no L_p.
template <std::floating_point T>
ExampleLoss<T> example_loss(const PnatModel<T>& model, Tape<T>& tape, std::span<const int> src,
                            std::span<const int> tgt, const LossOptions& opt) {
  if (tgt.empty()) throw DataError("empty target sentence");
  const std::size_t m = tgt.size();
  auto enc = model.encode(tape, src, opt.drop);
  auto d = model.decoder_inputs(tape, enc, m);
  ExampleLoss<T> out;
  if (opt.fixed_z) {
    out.z_ref = *opt.fixed_z;
  } else if (model.learns_positions()) {
    out.z_ref = reference_positions(model, d.value(), tgt);
  } else {
    out.z_ref = Permutation::identity(m);
  }
  std::vector<int> targets(m);
  for (std::size_t t = 0; t < m; ++t) targets[t] = tgt[static_cast<std::size_t>(out.z_ref[t])];
  out.loss_g = ops::cross_entropy(model.decode_nat(tape, d, out.z_ref, enc, opt.drop), targets);
  out.total = out.loss_g;
  if (model.learns_positions()) {
    auto r = model.predictor().sub_encode(tape, d, enc, opt.drop);
    out.loss_p = model.predictor().position_loss(tape, r, out.z_ref);
    if (opt.alpha != 0.0) out.total = ops::add(out.loss_g, ops::scale(*out.loss_p, static_cast<T>(opt.alpha)));
  }
  out.root = out.total;
  if (opt.length_loss) {
    out.loss_len = model.bridge().length_loss(tape, enc, m, true);
    out.root = ops::add(out.root, *out.loss_len);
  }
  return out;
}

/// Teacher-forced AT loss, including the EOS step.
template <std::floating_point T>
ExampleLoss<T> example_loss(const AtModel<T>& model, Tape<T>& tape, std::span<const int> src,
                            std::span<const int> tgt, const LossOptions& opt) {
  ExampleLoss<T> out;
  out.loss_g = model.loss(tape, src, tgt, opt.drop);
  out.total = out.root = out.loss_g;
  out.z_ref = Permutation::identity(tgt.size());
  return out;
}

}  // namespace pnat
