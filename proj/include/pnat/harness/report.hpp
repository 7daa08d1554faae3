#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pnat/decoding/decode.hpp"
#include "pnat/harness/corpus.hpp"

namespace pnat {

/// One evaluated configuration, as appended to `<run>/eval.jsonl`.
struct EvalRow {
  std::string label;
  std::string split;
  double bleu = 0.0;
  double bleu_rr = 0.0;
  std::optional<double> perm_acc, rel_acc;
  double sentences_per_second = 0.0;
  std::size_t sentences = 0;
  std::string checkpoint;

  [[nodiscard]] nlohmann::json to_json() const {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    return {{"label", label},       {"split", split},     {"bleu", bleu},
            {"bleu_rr", bleu_rr},   {"perm_acc", opt(perm_acc)}, {"rel_acc", opt(rel_acc)},
            {"sentences_per_second", sentences_per_second}, {"sentences", sentences}, {"checkpoint", checkpoint}};
  }
  static EvalRow from_json(const nlohmann::json& j) {
    auto opt = [&](const char* k) {
      return !j.contains(k) || j.at(k).is_null() ? std::optional<double>{} : j.at(k).get<double>();
    };
    EvalRow r;
    r.label = j.at("label").get<std::string>();
    r.split = j.value("split", std::string("dev"));
    r.bleu = j.at("bleu").get<double>();
    r.bleu_rr = j.value("bleu_rr", r.bleu);
    r.perm_acc = opt("perm_acc");
    r.rel_acc = opt("rel_acc");
    r.sentences_per_second = j.value("sentences_per_second", 0.0);
    r.sentences = j.value("sentences", std::size_t{0});
    r.checkpoint = j.value("checkpoint", std::string());
    return r;
  }
};

namespace report_rows {
inline const std::string at = "AT baseline";
inline const std::string nat_base = "NAT-base";
inline const std::string hsp = "PNAT w/ HSP";
inline const std::string ar = "PNAT w/ AR-Predictor";
inline const std::string nar = "PNAT w/ NAR-Predictor";
}  // namespace report_rows

inline std::string row_label(ModelKind kind, PositionSource positions) {
  if (kind == ModelKind::at) return report_rows::at;
  if (kind == ModelKind::nat_base) return report_rows::nat_base;
  switch (positions) {
    case PositionSource::hsp_oracle: return report_rows::hsp;
    case PositionSource::ar: return report_rows::ar;
    case PositionSource::nar: return report_rows::nar;
    case PositionSource::identity: return "PNAT w/ identity positions";
  }
  return "?";
}

/// Per-sentence position case, as written by the `positions` command.
struct PositionCase {
  std::string source, reference, hsp_output, predicted_output;
  std::string hsp_z, predicted_z;
};

inline nlohmann::json to_json(const PositionCase& c) {
  return {{"source", c.source},         {"reference", c.reference}, {"hsp_z", c.hsp_z},
          {"predicted_z", c.predicted_z}, {"hsp_output", c.hsp_output}, {"predicted_output", c.predicted_output}};
}

inline PositionCase position_case_from_json(const nlohmann::json& j) {
  return {j.at("source").get<std::string>(),     j.at("reference").get<std::string>(),
          j.at("hsp_output").get<std::string>(), j.at("predicted_output").get<std::string>(),
          j.at("hsp_z").get<std::string>(),      j.at("predicted_z").get<std::string>()};
}

inline std::vector<nlohmann::json> read_jsonl(const std::string& path) {
  std::vector<nlohmann::json> out;
  std::ifstream is(path);
  if (!is) return out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(is, line);) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline void append_jsonl(const std::string& path, const nlohmann::json& j) {
  std::ofstream os(path, std::ios::app);
  if (!os) throw DataError("cannot append to " + path);
  os << j.dump() << '\n';
}

namespace detail {

inline std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

/// Mean of every row carrying `label` (several seeds may be logged).
struct Aggregate {
  std::size_t n = 0;
  double bleu = 0, bleu_rr = 0, sps = 0;
  std::optional<double> perm, rel;
};

inline std::optional<Aggregate> aggregate(const std::vector<EvalRow>& rows, const std::string& label,
                                          const std::string& split) {
  Aggregate a;
  double perm = 0, rel = 0;
  std::size_t n_pos = 0;
  for (const auto& r : rows) {
    if (r.label != label || r.split != split) continue;
    ++a.n;
    a.bleu += r.bleu;
    a.bleu_rr += r.bleu_rr;
    a.sps += r.sentences_per_second;
    if (r.perm_acc && r.rel_acc) {
      perm += *r.perm_acc;
      rel += *r.rel_acc;
      ++n_pos;
    }
  }
  if (a.n == 0) return std::nullopt;
  const double n = static_cast<double>(a.n);
  a.bleu /= n;
  a.bleu_rr /= n;
  a.sps /= n;
  if (n_pos) {
    a.perm = perm / static_cast<double>(n_pos);
    a.rel = rel / static_cast<double>(n_pos);
  }
  return a;
}

}  // namespace detail

/// Case blocks in the order source, reference, searched positions and
/// their decode, predicted positions and their decode.
inline std::string render_cases(const std::vector<PositionCase>& cases, std::size_t max_cases) {
  std::ostringstream os;
  if (cases.empty()) os << "absent\n";
  for (std::size_t i = 0; i < std::min(max_cases, cases.size()); ++i) {
    const auto& c = cases[i];
    os << "```\nSource:                 " << c.source << "\nReference:              " << c.reference
       << "\nHSP positions:          " << c.hsp_z << "\nHSP decode:             " << c.hsp_output
       << "\nPredicted positions:    " << c.predicted_z << "\nPredicted decode:       " << c.predicted_output
       << "\n```\n";
  }
  return os.str();
}

/// Markdown report: the position-strategy table, the remove-repeats table
/// and up to `max_cases` position cases. Rows without data are marked
/// absent; every number comes from `rows` or `cases`.
inline std::string render_report(const std::vector<EvalRow>& rows, const std::vector<PositionCase>& cases,
                                 const std::string& split = "dev", std::size_t max_cases = 5) {
  using detail::fmt2;
  std::ostringstream os;
  const auto at = detail::aggregate(rows, report_rows::at, split);
  os << "## Position strategies (" << split << ")\n\n"
     << "Permutation accuracy: share of slots whose predicted position equals the HSP position.\n"
     << "Relative accuracy (r=4): share of ordered slot pairs within HSP offset 4 whose clipped predicted offset "
        "matches.\n\n"
     << "| Model | perm-acc | rel-acc(r=4) | BLEU | speed vs AT | runs |\n|---|---|---|---|---|---|\n";
  for (const auto* label : {&report_rows::at, &report_rows::nat_base, &report_rows::hsp, &report_rows::ar,
                            &report_rows::nar}) {
    const auto a = detail::aggregate(rows, *label, split);
    if (!a) {
      os << "| " << *label << " | absent | absent | absent | absent | 0 |\n";
      continue;
    }
    os << "| " << *label << " | " << (a->perm ? fmt2(100.0 * *a->perm) : "-") << " | "
       << (a->rel ? fmt2(100.0 * *a->rel) : "-") << " | " << fmt2(a->bleu) << " | "
       << (at && at->sps > 0 ? fmt2(a->sps / at->sps) + "x" : "absent") << " | " << a->n << " |\n";
  }
  os << "\n## Remove repeats (" << split << ")\n\n| Model | BLEU | BLEU (RR) | delta | runs |\n|---|---|---|---|---|\n";
  for (const auto* label : {&report_rows::nat_base, &report_rows::ar, &report_rows::nar}) {
    const auto a = detail::aggregate(rows, *label, split);
    if (!a) {
      os << "| " << *label << " | absent | absent | absent | 0 |\n";
      continue;
    }
    os << "| " << *label << " | " << fmt2(a->bleu) << " | " << fmt2(a->bleu_rr) << " | "
       << fmt2(a->bleu_rr - a->bleu) << " | " << a->n << " |\n";
  }
  os << "\n## Position cases\n\n" << render_cases(cases, max_cases);
  return os.str();
}

/// Reads `<dir>/eval.jsonl` and `<dir>/cases.jsonl`.
inline std::string report_from_directory(const std::string& dir, const std::string& split = "dev") {
  if (!std::filesystem::is_directory(dir)) throw DataError("no such run directory: " + dir);
  std::vector<EvalRow> rows;
  for (const auto& j : read_jsonl(dir + "/eval.jsonl")) rows.push_back(EvalRow::from_json(j));
  std::vector<PositionCase> cases;
  for (const auto& j : read_jsonl(dir + "/cases.jsonl")) cases.push_back(position_case_from_json(j));
  return render_report(rows, cases, split);
}

}  // namespace pnat
