#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "pnat/harness/vocab.hpp"
#include "pnat/training/batch.hpp"

namespace pnat {

/// Aligned sentence lists. Provenance is "raw", "distilled" or
/// "synthetic:<kind>".
struct ParallelCorpus {
  std::vector<std::string> src;
  std::vector<std::string> tgt;
  std::string provenance = "raw";

  [[nodiscard]] std::size_t size() const noexcept { return src.size(); }

  void validate() const {
    if (src.size() != tgt.size()) {
      throw DataError("corpus sides differ in length: " + std::to_string(src.size()) + " vs " +
                      std::to_string(tgt.size()));
    }
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (split_tokens(src[i]).empty() || split_tokens(tgt[i]).empty()) {
        throw DataError("empty sentence at line " + std::to_string(i + 1));
      }
    }
  }
};

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read " + path);
  std::vector<std::string> out;
  for (std::string line; std::getline(is, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(std::move(line));
  }
  return out;
}

inline void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path);
  for (const auto& l : lines) os << l << '\n';
}

/// Reads `<prefix>.src` and `<prefix>.tgt`.
inline ParallelCorpus read_corpus(const std::string& prefix, std::string provenance = "raw") {
  ParallelCorpus c{read_lines(prefix + ".src"), read_lines(prefix + ".tgt"), std::move(provenance)};
  c.validate();
  return c;
}

inline void write_corpus(const std::string& prefix, const ParallelCorpus& c) {
  c.validate();
  write_lines(prefix + ".src", c.src);
  write_lines(prefix + ".tgt", c.tgt);
}

inline std::vector<Example> encode_corpus(const ParallelCorpus& c, const Vocab& src_vocab, const Vocab& tgt_vocab) {
  c.validate();
  std::vector<Example> out;
  out.reserve(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) out.push_back({src_vocab.encode(c.src[i]), tgt_vocab.encode(c.tgt[i])});
  return out;
}

}  // namespace pnat
