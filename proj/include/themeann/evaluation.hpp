#pragma once

// Macro-averaged per-label precision / recall / F-measure.

#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "themeann/common.hpp"

namespace themeann {

using LabelSets = std::map<std::string, std::set<std::string>>;  // image id -> labels

struct LabelMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
  std::size_t predicted = 0;
  std::size_t actual = 0;
  std::size_t correct = 0;
  friend bool operator==(const LabelMetrics&, const LabelMetrics&) = default;
};

struct EvalReport {
  std::map<std::string, LabelMetrics> per_label;
  double mean_precision = 0.0;
  double mean_recall = 0.0;
  double mean_f = 0.0;
  std::size_t recall_positive = 0;
  std::size_t total_labels = 0;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

inline double f_measure(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

/// Precision is 0 for a label never predicted; recall is 0 for a label never
/// true. Means are unweighted over every label in the universe (by default
/// the union of predicted and true labels).
inline EvalReport per_label_prf(const LabelSets& predictions, const LabelSets& truth,
                                const std::optional<std::set<std::string>>& universe = std::nullopt) {
  if (predictions.size() != truth.size())
    throw DataError("predictions cover " + std::to_string(predictions.size()) + " images but truth covers " +
                    std::to_string(truth.size()));
  for (const auto& [id, _] : predictions)
    if (!truth.count(id)) throw DataError("image '" + id + "' has predictions but no ground truth");

  EvalReport rep;
  if (universe) {
    for (const auto& l : *universe) rep.per_label[l];
  } else {
    for (const auto& [id, labels] : predictions)
      for (const auto& l : labels) rep.per_label[l];
    for (const auto& [id, labels] : truth)
      for (const auto& l : labels) rep.per_label[l];
  }
  for (const auto& [id, pred] : predictions) {
    const auto& actual = truth.at(id);
    for (const auto& l : pred)
      if (auto it = rep.per_label.find(l); it != rep.per_label.end()) {
        ++it->second.predicted;
        if (actual.count(l)) ++it->second.correct;
      }
    for (const auto& l : actual)
      if (auto it = rep.per_label.find(l); it != rep.per_label.end()) ++it->second.actual;
  }
  if (rep.per_label.empty()) throw DataError("evaluation has no labels");
  for (auto& [label, m] : rep.per_label) {
    m.precision = m.predicted ? static_cast<double>(m.correct) / static_cast<double>(m.predicted) : 0.0;
    m.recall = m.actual ? static_cast<double>(m.correct) / static_cast<double>(m.actual) : 0.0;
    m.f = f_measure(m.precision, m.recall);
    rep.mean_precision += m.precision;
    rep.mean_recall += m.recall;
    rep.mean_f += m.f;
    if (m.recall > 0.0) ++rep.recall_positive;
  }
  rep.total_labels = rep.per_label.size();
  const double n = static_cast<double>(rep.total_labels);
  rep.mean_precision /= n;
  rep.mean_recall /= n;
  rep.mean_f /= n;
  return rep;
}

inline std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * v);
  return buf;
}

/// Pipe-delimited table, one row per report:
///   | <label column> | Mean precision | Mean recall | Mean F-measure | Labels with recall > 0 | Total labels |
inline std::string render_table(const std::vector<EvalReport>& reports, const std::vector<std::string>& names,
                                const std::string& label_column = "Run") {
  if (reports.empty()) throw DataError("render_table needs at least one report");
  if (names.size() != reports.size()) throw DataError("render_table needs one row name per report");
  std::string out = "| " + label_column +
                    " | Mean precision | Mean recall | Mean F-measure | Labels with recall > 0 | Total labels |\n";
  out += "|---|---|---|---|---|---|\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    out += "| " + names[i] + " | " + percent(r.mean_precision) + " | " + percent(r.mean_recall) + " | " +
           percent(r.mean_f) + " | " + std::to_string(r.recall_positive) + " | " + std::to_string(r.total_labels) +
           " |\n";
  }
  return out;
}

/// key=value lines: aggregates first, then label.<name>.<metric>.
inline std::string render_report_kv(const EvalReport& r) {
  std::string out;
  out += "mean_precision=" + format_double(r.mean_precision) + "\n";
  out += "mean_recall=" + format_double(r.mean_recall) + "\n";
  out += "mean_f=" + format_double(r.mean_f) + "\n";
  out += "recall_positive=" + std::to_string(r.recall_positive) + "\n";
  out += "total_labels=" + std::to_string(r.total_labels) + "\n";
  for (const auto& [l, m] : r.per_label) {
    out += "label." + l + ".precision=" + format_double(m.precision) + "\n";
    out += "label." + l + ".recall=" + format_double(m.recall) + "\n";
    out += "label." + l + ".f=" + format_double(m.f) + "\n";
  }
  return out;
}

/// Aggregates only; per-label entries are ignored.
inline EvalReport parse_report_kv(std::string_view text) {
  EvalReport r;
  for (const auto& line : split(text, '\n')) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const auto k = line.substr(0, eq), v = line.substr(eq + 1);
    if (k == "mean_precision") r.mean_precision = parse_double(v, k);
    else if (k == "mean_recall") r.mean_recall = parse_double(v, k);
    else if (k == "mean_f") r.mean_f = parse_double(v, k);
    else if (k == "recall_positive") r.recall_positive = static_cast<std::size_t>(parse_int(v, k));
    else if (k == "total_labels") r.total_labels = static_cast<std::size_t>(parse_int(v, k));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Label-set files: `id<TAB>label label ...` (space-separated labels). Lines
// starting with `#` are ignored. Annotation files (4 tab fields, `;`-joined
// `label:score` items) are also accepted.

inline LabelSets parse_label_sets(std::string_view text) {
  LabelSets out;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    if (raw.empty() || raw.front() == '#') continue;
    const auto f = split(raw, '\t');
    std::set<std::string> labels;
    if (f.size() == 2) {
      for (auto& l : split_ws(f[1])) labels.insert(l);
    } else if (f.size() == 4) {
      if (!f[3].empty())
        for (const auto& item : split(f[3], ';')) labels.insert(item.substr(0, item.rfind(':')));
    } else {
      throw DataError("label file line " + std::to_string(line_no) + ": expected 'id<TAB>labels'");
    }
    if (!out.emplace(f[0], std::move(labels)).second)
      throw DataError("label file line " + std::to_string(line_no) + ": duplicate id '" + f[0] + "'");
  }
  return out;
}

inline std::string render_label_sets(const LabelSets& sets) {
  std::string out;
  for (const auto& [id, labels] : sets) {
    out += id + "\t";
    bool first = true;
    for (const auto& l : labels) {
      out += (first ? "" : " ") + l;
      first = false;
    }
    out += "\n";
  }
  return out;
}

}  // namespace themeann
