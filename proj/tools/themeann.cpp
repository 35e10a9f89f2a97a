// themeann command-line driver.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "themeann/themeann.hpp"

namespace fs = std::filesystem;
using namespace themeann;

namespace {

struct Globals {
  std::string config;
  std::optional<long long> seed;
  std::optional<unsigned> jobs;
  std::string out;
  std::vector<std::string> sets;
};

std::string absolute(const std::string& p) { return fs::absolute(p).lexically_normal().string(); }

/// Flag values that land in the run config, keyed by config key.
using Overrides = std::vector<std::pair<std::string, std::string>>;

RunConfig build_config(const Globals& g, const Overrides& flags) {
  if (g.config.empty()) throw ConfigError("--config FILE is required");
  KeyValues extra;
  for (const auto& s : g.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    extra.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
  if (g.seed) extra.set("seed", std::to_string(*g.seed));
  if (g.jobs) extra.set("jobs", std::to_string(*g.jobs));
  if (!g.out.empty()) extra.set("out", absolute(g.out));
  for (const auto& [k, v] : flags) extra.set(k, v);
  return RunConfig::load(g.config, extra);
}

void print_file(const fs::path& p) {
  if (fs::exists(p)) std::cout << read_file(p);
}

int run_stage(const Globals& g, const Overrides& flags, const std::string& stage) {
  const auto cfg = build_config(g, flags);
  const auto manifest = run_pipeline(cfg, stage);
  std::cerr << "themeann: " << stage << " done in " << cfg.out_dir.string() << " (" << manifest.recomputed()
            << " stage(s) recomputed)\n";
  if (stage == "evaluate") print_file(cfg.out_dir / "report.txt");
  return 0;
}

template <class T>
void flag_to(Overrides& o, const std::string& key, const std::optional<T>& v) {
  if (!v) return;
  if constexpr (std::is_same_v<T, std::string>)
    o.emplace_back(key, *v);
  else if constexpr (std::is_floating_point_v<T>)
    o.emplace_back(key, format_double(*v));
  else
    o.emplace_back(key, std::to_string(*v));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Image annotation with description themes and relevance models"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Run configuration file");
  app.add_option("--seed", g.seed, "Master seed (overrides the config)");
  app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output directory (overrides the config)");
  app.add_option("--set", g.sets, "Override a config key (key=value), repeatable");

  Overrides flags;
  std::string selected;

  for (const char* name : {"ingest", "features"})
    app.add_subcommand(name, std::string("Run the pipeline through the ") + name + " stage")->callback([&, name] {
      selected = name;
    });

  std::optional<long long> lda_themes, lda_iters, lda_seed;
  std::optional<double> lda_alpha, lda_beta, lda_tau;
  auto* lda = app.add_subcommand("lda", "Fit description themes");
  lda->add_option("--themes", lda_themes)->check(CLI::PositiveNumber);
  lda->add_option("--alpha", lda_alpha);
  lda->add_option("--beta", lda_beta);
  lda->add_option("--iters", lda_iters)->check(CLI::PositiveNumber);
  lda->add_option("--seed", lda_seed);
  lda->add_option("--presence-threshold", lda_tau);
  lda->callback([&] {
    selected = "lda";
    flag_to(flags, "lda.themes", lda_themes);
    flag_to(flags, "lda.alpha", lda_alpha);
    flag_to(flags, "lda.beta", lda_beta);
    flag_to(flags, "lda.iterations", lda_iters);
    flag_to(flags, "lda.seed", lda_seed);
    flag_to(flags, "lda.presence_threshold", lda_tau);
  });

  std::optional<long long> cl_k, cl_min, cl_seed;
  std::optional<double> cl_rate;
  auto* cluster = app.add_subcommand("cluster", "Cluster training images and route test images");
  cluster->add_option("--k", cl_k)->check(CLI::PositiveNumber);
  cluster->add_option("--min-members", cl_min)->check(CLI::PositiveNumber);
  cluster->add_option("--themes-per-100", cl_rate);
  cluster->add_option("--seed", cl_seed);
  cluster->callback([&] {
    selected = "cluster";
    flags.emplace_back("cluster.enabled", "on");
    flag_to(flags, "cluster.k", cl_k);
    flag_to(flags, "cluster.min_members", cl_min);
    flag_to(flags, "cluster.themes_per_100", cl_rate);
    flag_to(flags, "cluster.seed", cl_seed);
  });

  std::optional<std::string> ann_vocab, ann_kernel, ann_count;
  std::optional<double> ann_mu, ann_bw;
  auto* annotate = app.add_subcommand("annotate", "Annotate test images");
  annotate->add_option("--vocab", ann_vocab, "dirichlet or bernoulli");
  annotate->add_option("--kernel", ann_kernel, "spatial or full");
  annotate->add_option("--mu", ann_mu);
  annotate->add_option("--bandwidth", ann_bw);
  annotate->add_option("--annotations", ann_count, "train-average or a count");
  annotate->callback([&] {
    selected = "annotate";
    flag_to(flags, "relevance.vocab", ann_vocab);
    flag_to(flags, "relevance.kernel", ann_kernel);
    flag_to(flags, "relevance.mu", ann_mu);
    flag_to(flags, "relevance.bandwidth", ann_bw);
    flag_to(flags, "relevance.annotations", ann_count);
  });

  std::optional<std::string> aug_graph, aug_relations;
  std::optional<long long> aug_top, aug_depth;
  std::optional<double> aug_decay;
  auto* augment = app.add_subcommand("augment", "Expand theme words through a semantic graph");
  augment->add_option("--graph", aug_graph, "Edge dump (start, relation, end, weight)");
  augment->add_option("--top-n", aug_top)->check(CLI::NonNegativeNumber);
  augment->add_option("--max-depth", aug_depth)->check(CLI::PositiveNumber);
  augment->add_option("--decay", aug_decay);
  augment->add_option("--relations", aug_relations, "Comma-separated relation filter");
  augment->callback([&] {
    selected = "augment";
    if (aug_graph) aug_graph = absolute(*aug_graph);
    flag_to(flags, "semantics.graph", aug_graph);
    flag_to(flags, "semantics.top_n", aug_top);
    flag_to(flags, "semantics.max_depth", aug_depth);
    flag_to(flags, "semantics.decay", aug_decay);
    flag_to(flags, "semantics.relations", aug_relations);
  });

  std::string ev_pred, ev_truth, ev_out;
  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against ground truth");
  evaluate->add_option("--predictions", ev_pred, "Annotation or label file");
  evaluate->add_option("--truth", ev_truth, "Label file");
  evaluate->add_option("--out", ev_out, "Report file (key=value; a table is written next to it)");
  evaluate->callback([&] { selected = "evaluate"; });

  app.add_subcommand("pipeline", "Run every stage")->callback([&] { selected = "pipeline"; });

  std::vector<std::string> cmp_inputs;
  auto* compare = app.add_subcommand("compare", "Compare evaluated runs on the same test split");
  compare->add_option("manifests", cmp_inputs, "Run directories or manifest.json files")->required();
  compare->callback([&] { selected = "compare"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (selected == "compare") {
      std::vector<fs::path> paths;
      for (const auto& p : cmp_inputs) paths.push_back(fs::is_directory(p) ? fs::path(p) / "manifest.json" : fs::path(p));
      const auto table = compare_variants(paths);
      if (!g.out.empty()) write_file_atomic(g.out, table);
      std::cout << table;
      return 0;
    }
    if (selected == "evaluate" && (!ev_pred.empty() || !ev_truth.empty())) {
      if (ev_pred.empty() || ev_truth.empty()) throw ConfigError("evaluate needs both --predictions and --truth");
      const auto report = per_label_prf(parse_label_sets(read_file(ev_pred)), parse_label_sets(read_file(ev_truth)));
      const auto table = render_table({report}, {fs::path(ev_pred).filename().string()});
      if (!ev_out.empty()) {
        write_file_atomic(ev_out, render_report_kv(report));
        write_file_atomic(ev_out + ".txt", table);
      }
      std::cout << table;
      return 0;
    }
    return run_stage(g, flags, selected == "pipeline" ? "evaluate" : selected);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
