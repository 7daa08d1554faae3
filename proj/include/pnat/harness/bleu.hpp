#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "pnat/core/errors.hpp"

namespace pnat {

/// Corpus-level sufficient statistics.
struct BleuStats {
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;
};

template <class Tok>
void accumulate_bleu(BleuStats& st, const std::vector<Tok>& hyp, const std::vector<Tok>& ref) {
  st.hyp_length += hyp.size();
  st.ref_length += ref.size();
  for (std::size_t n = 1; n <= 4; ++n) {
    if (hyp.size() < n) break;
    std::map<std::vector<Tok>, std::size_t> ref_counts;
    for (std::size_t i = 0; i + n <= ref.size(); ++i) ++ref_counts[std::vector<Tok>(ref.begin() + i, ref.begin() + i + n)];
    std::map<std::vector<Tok>, std::size_t> hyp_counts;
    for (std::size_t i = 0; i + n <= hyp.size(); ++i) ++hyp_counts[std::vector<Tok>(hyp.begin() + i, hyp.begin() + i + n)];
    for (const auto& [gram, c] : hyp_counts) {
      auto it = ref_counts.find(gram);
      st.matches[n - 1] += it == ref_counts.end() ? 0 : std::min(c, it->second);
    }
    st.totals[n - 1] += hyp.size() - n + 1;
  }
}

/// BLEU in [0, 100] from statistics. The maximum order is clamped to the
/// largest n with any hypothesis n-grams, i.e. min(4, longest hypothesis).
/// No smoothing: a zero precision at any used order gives 0.
inline double bleu_from_stats(const BleuStats& st) {
  if (st.hyp_length == 0) return 0.0;
  std::size_t order = 0;
  while (order < 4 && st.totals[order] > 0) ++order;
  double log_p = 0.0;
  for (std::size_t n = 0; n < order; ++n) {
    if (st.matches[n] == 0) return 0.0;
    log_p += std::log(static_cast<double>(st.matches[n]) / static_cast<double>(st.totals[n]));
  }
  log_p /= static_cast<double>(order);
  const double c = static_cast<double>(st.hyp_length);
  const double r = static_cast<double>(st.ref_length);
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return 100.0 * bp * std::exp(log_p);
}

template <class Tok>
double corpus_bleu(const std::vector<std::vector<Tok>>& hyps, const std::vector<std::vector<Tok>>& refs) {
  if (hyps.empty()) throw DataError("corpus_bleu: empty hypothesis set");
  if (hyps.size() != refs.size()) throw DataError("corpus_bleu: hypothesis/reference count mismatch");
  BleuStats st;
  for (std::size_t i = 0; i < hyps.size(); ++i) accumulate_bleu(st, hyps[i], refs[i]);
  return bleu_from_stats(st);
}

}  // namespace pnat
