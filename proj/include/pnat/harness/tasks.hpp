#pragma once

#include <algorithm>
#include <array>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "pnat/core/rng.hpp"
#include "pnat/harness/corpus.hpp"

namespace pnat {

enum class TaskKind { copy, reverse, sort, rule_reorder };

inline std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::copy: return "copy";
    case TaskKind::reverse: return "reverse";
    case TaskKind::sort: return "sort";
    case TaskKind::rule_reorder: return "rule_reorder";
  }
  return "?";
}

inline TaskKind parse_task_kind(const std::string& s) {
  if (s == "copy") return TaskKind::copy;
  if (s == "reverse") return TaskKind::reverse;
  if (s == "sort") return TaskKind::sort;
  if (s == "rule_reorder") return TaskKind::rule_reorder;
  throw ConfigError("unknown task '" + s + "' (expected copy|reverse|sort|rule_reorder)");
}

struct TaskSpec {
  TaskKind kind = TaskKind::rule_reorder;
  std::size_t vocab_size = 50;
  std::size_t min_len = 3;
  std::size_t max_len = 16;
  std::uint64_t seed = 1;
  std::size_t train_size = 20000;
  std::size_t dev_size = 500;
  std::size_t test_size = 500;

  void validate() const {
    if (vocab_size < 2) throw ConfigError("task.vocab_size must be >= 2");
    if (min_len < 1 || min_len > max_len) throw ConfigError("task lengths need 1 <= min_len <= max_len");
    if (kind == TaskKind::rule_reorder && max_len > vocab_size) {
      throw ConfigError("rule_reorder draws tokens without replacement: max_len must be <= vocab_size");
    }
  }
};

struct TaskSplits {
  ParallelCorpus train, dev, test;
};

/// The hidden rule of rule_reorder: every token belongs to one of four
/// classes; the target lists tokens class by class in a fixed class order,
/// keeping source order within a class or reversing it.
struct ReorderRule {
  static constexpr std::size_t classes = 4;
  std::vector<int> token_class;                 // per token index
  std::array<int, classes> class_order{};       // output rank -> class
  std::array<bool, classes> reversed{};         // per class

  static ReorderRule from_seed(std::size_t vocab_size, std::uint64_t seed) {
    ReorderRule r;
    rng::Stream s(rng::key({seed, 0x5EC7ULL}));
    std::vector<std::size_t> ids(vocab_size);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    s.shuffle(ids.begin(), ids.end());
    r.token_class.assign(vocab_size, 0);
    for (std::size_t i = 0; i < vocab_size; ++i) r.token_class[ids[i]] = static_cast<int>(i % classes);
    std::iota(r.class_order.begin(), r.class_order.end(), 0);
    s.shuffle(r.class_order.begin(), r.class_order.end());
    for (auto& rev : r.reversed) rev = s.below(2) == 1;
    return r;
  }

  [[nodiscard]] std::vector<std::size_t> apply(const std::vector<std::size_t>& src) const {
    std::vector<std::size_t> out;
    for (int c : class_order) {
      std::vector<std::size_t> group;
      for (auto t : src) {
        if (token_class[t] == c) group.push_back(t);
      }
      if (reversed[static_cast<std::size_t>(c)]) std::reverse(group.begin(), group.end());
      out.insert(out.end(), group.begin(), group.end());
    }
    return out;
  }
};

namespace detail {

inline std::string task_token(TaskKind kind, std::size_t t) {
  return kind == TaskKind::sort ? std::to_string(t) : "w" + std::to_string(t);
}

inline std::string render(TaskKind kind, const std::vector<std::size_t>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) s += ' ';
    s += task_token(kind, ids[i]);
  }
  return s;
}

}  // namespace detail

/// Deterministic train/dev/test corpora; no source sentence appears twice
/// across (or within) the splits.
inline TaskSplits gen_synthetic(const TaskSpec& spec) {
  spec.validate();
  const auto rule = ReorderRule::from_seed(spec.vocab_size, spec.seed);
  rng::Stream s(rng::key({spec.seed, 0xDA7AULL}));
  std::unordered_set<std::string> seen;
  const std::string prov = "synthetic:" + to_string(spec.kind);
  TaskSplits out{{{}, {}, prov}, {{}, {}, prov}, {{}, {}, prov}};
  auto fill = [&](ParallelCorpus& c, std::size_t n) {
    std::size_t attempts = 0;
    while (c.size() < n) {
      if (++attempts > 50 * (n + 100)) throw ConfigError("task space too small for the requested split sizes");
      const std::size_t len = spec.min_len + s.below(spec.max_len - spec.min_len + 1);
      std::vector<std::size_t> src;
      if (spec.kind == TaskKind::rule_reorder) {
        std::vector<std::size_t> pool(spec.vocab_size);
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        for (std::size_t i = 0; i < len; ++i) {
          std::swap(pool[i], pool[i + s.below(spec.vocab_size - i)]);
          src.push_back(pool[i]);
        }
      } else {
        for (std::size_t i = 0; i < len; ++i) src.push_back(s.below(spec.vocab_size));
      }
      auto line = detail::render(spec.kind, src);
      if (!seen.insert(line).second) continue;
      std::vector<std::size_t> tgt = src;
      switch (spec.kind) {
        case TaskKind::copy: break;
        case TaskKind::reverse: std::reverse(tgt.begin(), tgt.end()); break;
        case TaskKind::sort: std::sort(tgt.begin(), tgt.end()); break;
        case TaskKind::rule_reorder: tgt = rule.apply(src); break;
      }
      c.src.push_back(std::move(line));
      c.tgt.push_back(detail::render(spec.kind, tgt));
    }
  };
  fill(out.train, spec.train_size);
  fill(out.dev, spec.dev_size);
  fill(out.test, spec.test_size);
  return out;
}

}  // namespace pnat
