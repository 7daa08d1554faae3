#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "pnat/core/errors.hpp"
#include "pnat/model/encoder.hpp"

namespace pnat {

/// Whitespace tokenizer.
inline std::vector<std::string> split_tokens(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(std::move(w));
  return out;
}

inline std::string join_tokens(const std::vector<std::string>& toks) {
  std::string s;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) s += ' ';
    s += toks[i];
  }
  return s;
}

/// Token <-> id map with reserved ids pad=0, bos=1, eos=2, unk=3.
class Vocab {
 public:
  Vocab() : tokens_{"<pad>", "<s>", "</s>", "<unk>"} {
    for (std::size_t i = 0; i < tokens_.size(); ++i) ids_[tokens_[i]] = static_cast<int>(i);
  }

  /// Tokens seen at least `min_count` times, ordered by count desc, then
  /// lexicographically.
  static Vocab build(const std::vector<std::string>& sentences, std::size_t min_count = 1) {
    std::map<std::string, std::size_t> counts;
    for (const auto& s : sentences) {
      for (auto& w : split_tokens(s)) ++counts[w];
    }
    std::vector<std::pair<std::string, std::size_t>> items(counts.begin(), counts.end());
    std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocab v;
    for (auto& [w, c] : items) {
      if (c >= min_count) v.add(w);
    }
    return v;
  }

  static Vocab from_tokens(const std::vector<std::string>& tokens) {
    Vocab v;
    if (tokens.size() < v.tokens_.size() || !std::equal(v.tokens_.begin(), v.tokens_.end(), tokens.begin())) {
      throw DataError("vocab: reserved tokens missing or reordered");
    }
    for (std::size_t i = v.tokens_.size(); i < tokens.size(); ++i) v.add(tokens[i]);
    return v;
  }

  [[nodiscard]] std::size_t size() const noexcept { return tokens_.size(); }
  [[nodiscard]] const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  [[nodiscard]] bool contains(const std::string& w) const { return ids_.contains(w); }

  [[nodiscard]] int id(const std::string& w) const {
    auto it = ids_.find(w);
    return it == ids_.end() ? token::unk : it->second;
  }
  [[nodiscard]] const std::string& token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) throw DataError("vocab: id out of range");
    return tokens_[static_cast<std::size_t>(id)];
  }

  [[nodiscard]] std::vector<int> encode(const std::string& line) const {
    std::vector<int> out;
    for (auto& w : split_tokens(line)) out.push_back(id(w));
    return out;
  }
  [[nodiscard]] std::string decode(const std::vector<int>& ids) const {
    std::vector<std::string> toks;
    for (int i : ids) toks.push_back(token(i));
    return join_tokens(toks);
  }

  /// One token per line, in id order.
  void save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write vocab: " + path);
    for (const auto& t : tokens_) os << t << '\n';
  }
  static Vocab load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot read vocab: " + path);
    std::vector<std::string> toks;
    for (std::string line; std::getline(is, line);) {
      if (!line.empty()) toks.push_back(line);
    }
    return from_tokens(toks);
  }

  bool operator==(const Vocab& o) const { return tokens_ == o.tokens_; }

 private:
  void add(const std::string& w) {
    if (ids_.contains(w)) throw DataError("vocab: duplicate token '" + w + "'");
    ids_[w] = static_cast<int>(tokens_.size());
    tokens_.push_back(w);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace pnat
