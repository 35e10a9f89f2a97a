#pragma once

// Weighted semantic network with path-based relatedness and "projection"
// (ranked expansion of a word list into related concepts).
//
// relatedness(a, b) sums, over every simple undirected path of at most
// max_depth edges between a and b, the product of normalized edge weights
// times decay^(length - 1), then squashes the sum s to 100 * s / (1 + s).
// An edge's normalized weight is min(1, weight / reference_weight), which
// depends on that edge alone, so adding an edge can only add paths.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "themeann/common.hpp"

namespace themeann {

struct Assertion {
  std::string start;
  std::string relation;
  std::string end;
  double weight = 0.0;
};

struct RelatednessConfig {
  std::size_t max_depth = 2;
  double decay = 0.5;
  double reference_weight = 1.0;
  std::set<std::string> relations;  // empty: every relation type

  void validate() const {
    if (max_depth < 1) throw ConfigError("max_depth must be >= 1");
    if (!(decay > 0.0 && decay < 1.0)) throw ConfigError("decay must lie in (0, 1)");
    if (!(reference_weight > 0.0)) throw ConfigError("reference_weight must be > 0");
  }
};

/// Lowercase, trim, and join internal spaces with underscores.
inline std::string normalize_concept(std::string_view s) {
  std::string t = trim(s), out;
  bool space = false;
  for (unsigned char c : t) {
    if (c == ' ' || c == '\t') {
      space = true;
      continue;
    }
    if (space && !out.empty()) out.push_back('_');
    space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

class SemanticGraph {
 public:
  SemanticGraph() = default;

  /// Adds an assertion, merging with an identical (start, relation, end) by
  /// summing weights.
  void add(std::string start, std::string relation, std::string end, double weight) {
    start = normalize_concept(start);
    end = normalize_concept(end);
    relation = trim(relation);
    if (start.empty() || end.empty()) throw DataError("assertion with empty node");
    if (start == end) throw DataError("self-loop assertion on '" + start + "'");
    if (!(weight >= 0.0) || !std::isfinite(weight)) throw DataError("assertion weight must be finite and non-negative");
    const auto key = start + '\x1f' + relation + '\x1f' + end;
    if (auto it = by_key_.find(key); it != by_key_.end()) {
      assertions_[it->second].weight += weight;
      return;
    }
    by_key_.emplace(key, assertions_.size());
    const auto s = intern(start), e = intern(end);
    adjacency_[s].push_back({e, assertions_.size()});
    adjacency_[e].push_back({s, assertions_.size()});
    assertions_.push_back({std::move(start), std::move(relation), std::move(end), weight});
  }

  bool contains(const std::string& node) const { return ids_.count(normalize_concept(node)) != 0; }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t assertion_count() const noexcept { return assertions_.size(); }
  const std::vector<Assertion>& assertions() const noexcept { return assertions_; }
  const std::vector<std::string>& nodes() const noexcept { return nodes_; }

  struct Edge {
    std::size_t to;
    std::size_t assertion;
  };

  std::optional<std::size_t> id(const std::string& node) const {
    auto it = ids_.find(normalize_concept(node));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }

  /// Neighbourhood lookup is total: an unknown id has no edges.
  const std::vector<Edge>& edges(std::size_t node) const {
    static const std::vector<Edge> none;
    return node < adjacency_.size() ? adjacency_[node] : none;
  }

  const std::string& name(std::size_t node) const { return nodes_.at(node); }

 private:
  std::size_t intern(const std::string& s) {
    if (auto it = ids_.find(s); it != ids_.end()) return it->second;
    ids_.emplace(s, nodes_.size());
    nodes_.push_back(s);
    adjacency_.emplace_back();
    return nodes_.size() - 1;
  }

  std::vector<std::string> nodes_;
  std::unordered_map<std::string, std::size_t> ids_;
  std::vector<std::vector<Edge>> adjacency_;
  std::vector<Assertion> assertions_;
  std::unordered_map<std::string, std::size_t> by_key_;
};

/// TSV rows: start, relation, end, weight. Blank lines and `#` comments skipped.
inline SemanticGraph parse_graph(std::string_view text) {
  SemanticGraph g;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    std::string line = raw;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || trim(line).front() == '#') continue;
    const auto f = split(line, '\t');
    const auto where = "graph line " + std::to_string(line_no) + ": ";
    if (f.size() != 4) throw DataError(where + "expected 4 tab-separated fields");
    double w = 0.0;
    try {
      w = parse_double(trim(f[3]), "weight");
    } catch (const ConfigError&) {
      throw DataError(where + "bad weight '" + f[3] + "'");
    }
    if (w < 0.0) throw DataError(where + "negative weight");
    try {
      g.add(f[0], f[1], f[2], w);
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
  }
  return g;
}

inline SemanticGraph load_graph(const std::filesystem::path& path) { return parse_graph(read_file(path)); }

namespace detail {

inline double edge_weight(const SemanticGraph& g, std::size_t assertion, const RelatednessConfig& cfg) {
  const auto& a = g.assertions()[assertion];
  if (!cfg.relations.empty() && !cfg.relations.count(a.relation)) return 0.0;
  return std::min(1.0, a.weight / cfg.reference_weight);
}

inline void path_sum(const SemanticGraph& g, std::size_t at, std::size_t target, std::size_t depth, double product,
                     std::vector<char>& visited, const RelatednessConfig& cfg, double& acc) {
  for (const auto& e : g.edges(at)) {
    if (visited[e.to]) continue;
    const double w = edge_weight(g, e.assertion, cfg);
    if (w <= 0.0) continue;
    const double p = product * w;
    if (e.to == target) {
      acc += p * std::pow(cfg.decay, static_cast<double>(depth));
      continue;
    }
    if (depth + 1 < cfg.max_depth) {
      visited[e.to] = 1;
      path_sum(g, e.to, target, depth + 1, p, visited, cfg, acc);
      visited[e.to] = 0;
    }
  }
}

inline void reachable(const SemanticGraph& g, std::size_t from, std::size_t depth, const RelatednessConfig& cfg,
                      std::set<std::size_t>& out) {
  std::vector<std::size_t> frontier{from};
  std::map<std::size_t, std::size_t> dist{{from, 0}};
  for (std::size_t d = 0; d < depth; ++d) {
    std::vector<std::size_t> next;
    for (auto u : frontier)
      for (const auto& e : g.edges(u)) {
        if (edge_weight(g, e.assertion, cfg) <= 0.0 || dist.count(e.to)) continue;
        dist[e.to] = d + 1;
        next.push_back(e.to);
        out.insert(e.to);
      }
    frontier = std::move(next);
  }
}

}  // namespace detail

inline double squash(double s) { return 100.0 * s / (1.0 + s); }

/// Raw path sum between two nodes (before squashing).
inline double path_strength(const SemanticGraph& g, const std::string& a, const std::string& b,
                            const RelatednessConfig& cfg = {}) {
  cfg.validate();
  auto ia = g.id(a), ib = g.id(b);
  if (!ia || !ib) return 0.0;
  // enumerate from the lexicographically smaller end so the float sum is
  // identical whichever argument order is used
  if (g.name(*ib) < g.name(*ia)) std::swap(ia, ib);
  std::vector<char> visited(g.node_count(), 0);
  visited[*ia] = 1;
  double acc = 0.0;
  detail::path_sum(g, *ia, *ib, 0, 1.0, visited, cfg, acc);
  return acc;
}

/// Score in [0, 100]. Unknown words score 0; a present word with itself scores 100.
inline double relatedness(const SemanticGraph& g, const std::string& a, const std::string& b,
                          const RelatednessConfig& cfg = {}) {
  const auto ia = g.id(a), ib = g.id(b);
  if (!ia || !ib) return 0.0;
  if (*ia == *ib) return 100.0;
  return squash(path_strength(g, a, b, cfg));
}

inline double avg_pairwise_relatedness(const SemanticGraph& g, const std::vector<std::string>& words,
                                       const RelatednessConfig& cfg = {}) {
  if (words.size() < 2) throw ConfigError("average relatedness needs at least 2 words");
  double s = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < words.size(); ++i)
    for (std::size_t j = i + 1; j < words.size(); ++j) {
      s += relatedness(g, words[i], words[j], cfg);
      ++pairs;
    }
  return s / static_cast<double>(pairs);
}

struct ProjectedWord {
  std::string word;
  double score = 0.0;
};

/// Concepts within max_depth of any input, ranked by summed relatedness to
/// all inputs; inputs themselves are excluded and ties sort by name.
inline std::vector<ProjectedWord> projection(const SemanticGraph& g, const std::vector<std::string>& words,
                                             const RelatednessConfig& cfg, std::size_t top_n) {
  cfg.validate();
  std::set<std::size_t> inputs, candidates;
  for (const auto& w : words)
    if (auto id = g.id(w)) inputs.insert(*id);
  for (auto i : inputs) detail::reachable(g, i, cfg.max_depth, cfg, candidates);
  std::vector<ProjectedWord> out;
  for (auto c : candidates) {
    if (inputs.count(c)) continue;
    double s = 0.0;
    for (auto i : inputs) s += relatedness(g, g.name(c), g.name(i), cfg);
    if (s > 0.0) out.push_back({g.name(c), s});
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.score > b.score || (a.score == b.score && a.word < b.word); });
  if (out.size() > top_n) out.resize(top_n);
  return out;
}

/// Original annotation words first (deduplicated), then projected words not
/// already present.
inline std::vector<std::string> augment_annotations(const SemanticGraph& g, const std::vector<std::string>& annotations,
                                                    const RelatednessConfig& cfg, std::size_t top_n) {
  if (annotations.empty()) throw DataError("augment needs at least one annotation word");
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& w : annotations) {
    const auto n = normalize_concept(w);
    if (seen.insert(n).second) out.push_back(n);
  }
  for (const auto& p : projection(g, out, cfg, top_n))
    if (seen.insert(p.word).second) out.push_back(p.word);
  return out;
}

}  // namespace themeann
