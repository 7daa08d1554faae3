#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

#include "pnat/core/errors.hpp"
#include "pnat/core/rng.hpp"

namespace pnat {

/// One encoded sentence pair; ids exclude BOS/EOS.
struct Example {
  std::vector<int> src;
  std::vector<int> tgt;
};

/// Padded source/target id matrices for a group of corpus examples.
struct Batch {
  std::vector<std::size_t> indices;  // corpus positions
  std::size_t width = 0;             // padded row length (max over src and tgt)
  std::vector<int> src_ids, tgt_ids;  // [size x width], pad = 0
  std::vector<std::size_t> src_lengths, tgt_lengths;

  [[nodiscard]] std::size_t size() const noexcept { return indices.size(); }
  /// Padded token count; never exceeds the budget the batch was built with.
  [[nodiscard]] std::size_t tokens() const noexcept { return size() * width; }
  [[nodiscard]] std::size_t target_tokens() const noexcept {
    return std::accumulate(tgt_lengths.begin(), tgt_lengths.end(), std::size_t{0});
  }
  [[nodiscard]] std::span<const int> source(std::size_t i) const {
    return {src_ids.data() + i * width, src_lengths[i]};
  }
  [[nodiscard]] std::span<const int> target(std::size_t i) const {
    return {tgt_ids.data() + i * width, tgt_lengths[i]};
  }
  /// Key-valid mask of row i (1 for real tokens).
  [[nodiscard]] std::vector<std::uint8_t> source_mask(std::size_t i) const {
    std::vector<std::uint8_t> m(width, 0);
    std::fill_n(m.begin(), src_lengths[i], 1);
    return m;
  }
};

inline Batch make_batch(const std::vector<Example>& data, const std::vector<std::size_t>& indices) {
  Batch b;
  b.indices = indices;
  for (auto i : indices) b.width = std::max({b.width, data[i].src.size(), data[i].tgt.size()});
  b.src_ids.assign(indices.size() * b.width, 0);
  b.tgt_ids.assign(indices.size() * b.width, 0);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto& ex = data[indices[r]];
    std::copy(ex.src.begin(), ex.src.end(), b.src_ids.begin() + static_cast<std::ptrdiff_t>(r * b.width));
    std::copy(ex.tgt.begin(), ex.tgt.end(), b.tgt_ids.begin() + static_cast<std::ptrdiff_t>(r * b.width));
    b.src_lengths.push_back(ex.src.size());
    b.tgt_lengths.push_back(ex.tgt.size());
  }
  return b;
}

/// Shuffles the corpus with a stream keyed by (seed, epoch) and packs it into
/// batches whose padded size stays within `tokens_per_batch`. Sentences are
/// never split.
inline std::vector<Batch> plan_epoch(const std::vector<Example>& data, std::size_t tokens_per_batch,
                                     std::uint64_t seed, std::uint64_t epoch) {
  if (data.empty()) throw DataError("cannot batch an empty corpus");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng::Stream stream(rng::key({seed, epoch, 0xBA7C4ULL}));
  stream.shuffle(order.begin(), order.end());
  std::vector<Batch> out;
  std::vector<std::size_t> cur;
  std::size_t width = 0;
  for (auto i : order) {
    const std::size_t len = std::max(data[i].src.size(), data[i].tgt.size());
    if (data[i].src.empty() || data[i].tgt.empty()) throw DataError("empty sentence in corpus");
    if (len > tokens_per_batch) {
      throw ConfigError("train.tokens_per_batch (" + std::to_string(tokens_per_batch) +
                        ") is smaller than a sentence of length " + std::to_string(len));
    }
    const std::size_t w = std::max(width, len);
    if (!cur.empty() && w * (cur.size() + 1) > tokens_per_batch) {
      out.push_back(make_batch(data, cur));
      cur.clear();
      width = 0;
    }
    cur.push_back(i);
    width = std::max(width, len);
  }
  if (!cur.empty()) out.push_back(make_batch(data, cur));
  return out;
}

}  // namespace pnat
