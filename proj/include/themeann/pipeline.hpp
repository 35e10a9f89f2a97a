#pragma once

// End-to-end runs: ingest -> features -> [cluster] -> lda -> annotate ->
// [augment] -> evaluate. Each stage reads its inputs through a tracking
// context, is keyed by a hash of its config section and input checksums, and
// is skipped when the previous run's manifest holds the same key and its
// outputs are intact.

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "themeann/cluster.hpp"
#include "themeann/common.hpp"
#include "themeann/corpus.hpp"
#include "themeann/evaluation.hpp"
#include "themeann/features.hpp"
#include "themeann/image.hpp"
#include "themeann/relevance.hpp"
#include "themeann/semantics.hpp"
#include "themeann/synthetic.hpp"
#include "themeann/theme_model.hpp"

namespace themeann {

namespace fs = std::filesystem;

enum class Mode { theme, keyword };

struct RunConfig {
  KeyValues raw;
  fs::path base_dir;  // relative paths in the config resolve against this

  std::optional<fs::path> manifest;
  std::optional<SynthConfig> synth;
  TokenizerConfig tokenizer;
  std::size_t min_count = 1;
  SplitSpec split;
  GridSpec grid;
  GaborConfig gabor;
  LdaConfig lda;
  PresenceRule presence = ThresholdRule{0.1};
  RelevanceConfig relevance;
  bool clustering = false;
  ClusterConfig cluster;
  Mode mode = Mode::theme;
  std::size_t keyword_vocab = 291;
  std::size_t words_per_theme = 3;
  std::optional<fs::path> graph;
  RelatednessConfig relatedness;
  std::size_t augment_top_n = 3;
  fs::path out_dir = "run";
  unsigned jobs = 1;

  /// Hash of every setting that can change an output (excludes out and jobs).
  std::string hash() const {
    std::string canon;
    for (const auto& [k, v] : raw.entries())
      if (k != "out" && k != "jobs") canon += k + "=" + v + "\n";
    return checksum(canon);
  }

  std::string section(std::initializer_list<std::string_view> prefixes) const {
    std::string s;
    for (auto p : prefixes) s += raw.canonical(p);
    return s;
  }

  std::string variant() const {
    if (mode == Mode::keyword) return "keyword/" + variant_name(relevance);
    return std::string("theme/") + variant_name(relevance) + (clustering ? "/clustered" : "");
  }

  static RunConfig from_keys(const KeyValues& kv, const fs::path& base_dir = ".") {
    RunConfig c;
    c.raw = kv;
    c.base_dir = base_dir;
    auto resolve = [&](const std::string& p) {
      fs::path path(p);
      return path.is_relative() ? base_dir / path : path;
    };
    const auto seed = static_cast<std::uint64_t>(kv.get_int("seed", 1));

    if (kv.has("dataset.manifest")) c.manifest = resolve(kv.get("dataset.manifest", std::string{}));
    if (kv.get_bool("dataset.synthetic", false)) {
      KeyValues s = kv;
      if (!s.has("synth.seed")) s.set("synth.seed", std::to_string(seed));
      c.synth = SynthConfig::from_keys(s);
    }
    if (c.manifest && c.synth) throw ConfigError("set either dataset.manifest or dataset.synthetic, not both");
    if (!c.manifest && !c.synth) throw ConfigError("no dataset: set dataset.manifest or dataset.synthetic = on");
    if (kv.has("dataset.stopwords")) c.tokenizer.stopwords = load_stopwords(resolve(kv.get("dataset.stopwords", std::string{})));
    c.min_count = static_cast<std::size_t>(kv.get_int("dataset.min_count", 1));

    c.split.test_fraction = kv.get("split.test_fraction", 0.1);
    c.split.seed = static_cast<std::uint64_t>(kv.get_int("split.seed", static_cast<long long>(seed)));

    c.grid.rows = static_cast<std::size_t>(kv.get_int("grid.rows", 5));
    c.grid.cols = static_cast<std::size_t>(kv.get_int("grid.cols", 5));
    if (c.grid.rows == 0 || c.grid.cols == 0) throw ConfigError("grid rows and cols must be >= 1");
    c.gabor.base_wavelength = kv.get("gabor.base_wavelength", c.gabor.base_wavelength);
    c.gabor.scales = static_cast<std::size_t>(kv.get_int("gabor.scales", 3));
    c.gabor.orientations = static_cast<std::size_t>(kv.get_int("gabor.orientations", 4));
    c.gabor.sigma_per_wavelength = kv.get("gabor.sigma_per_wavelength", c.gabor.sigma_per_wavelength);
    c.gabor.support_sigmas = kv.get("gabor.support_sigmas", c.gabor.support_sigmas);

    c.lda.themes = static_cast<std::size_t>(kv.get_int("lda.themes", 10));
    if (kv.has("lda.alpha")) c.lda.alpha = kv.get("lda.alpha", 0.0);
    c.lda.beta = kv.get("lda.beta", 0.01);
    c.lda.iterations = static_cast<std::size_t>(kv.get_int("lda.iterations", 1000));
    c.lda.seed = static_cast<std::uint64_t>(kv.get_int("lda.seed", static_cast<long long>(seed)));
    if (kv.has("lda.presence_top_m"))
      c.presence = TopMRule{static_cast<std::size_t>(kv.get_int("lda.presence_top_m", 1))};
    else
      c.presence = ThresholdRule{kv.get("lda.presence_threshold", 0.1)};
    if (const auto* t = std::get_if<ThresholdRule>(&c.presence); t && !(t->tau > 0.0))
      throw ConfigError("lda.presence_threshold must be > 0");

    c.relevance.mu = kv.get("relevance.mu", 5.0);
    c.relevance.bandwidth = kv.get("relevance.bandwidth", 0.5);
    const auto vocab = kv.get("relevance.vocab", std::string("dirichlet"));
    if (vocab == "dirichlet") c.relevance.vocab = VocabModel::dirichlet;
    else if (vocab == "bernoulli") c.relevance.vocab = VocabModel::bernoulli;
    else throw ConfigError("relevance.vocab must be dirichlet or bernoulli");
    const auto kernel = kv.get("relevance.kernel", std::string("spatial"));
    if (kernel == "spatial") c.relevance.kernel = KernelKind::spatial;
    else if (kernel == "full") c.relevance.kernel = KernelKind::full;
    else throw ConfigError("relevance.kernel must be spatial or full");
    const auto ann = kv.get("relevance.annotations", std::string("train-average"));
    if (ann != "train-average") c.relevance.n_annotations = static_cast<std::size_t>(parse_int(ann, "relevance.annotations"));
    c.relevance.validate();

    c.clustering = kv.get_bool("cluster.enabled", false);
    c.cluster.k_initial = static_cast<std::size_t>(kv.get_int("cluster.k", 8));
    c.cluster.min_members = static_cast<std::size_t>(kv.get_int("cluster.min_members", 10));
    c.cluster.themes_per_100 = kv.get("cluster.themes_per_100", 2.0);
    c.cluster.seed = static_cast<std::uint64_t>(kv.get_int("cluster.seed", static_cast<long long>(seed)));
    c.cluster.validate();

    const auto mode = kv.get("mode", std::string("theme"));
    if (mode == "theme") c.mode = Mode::theme;
    else if (mode == "keyword") c.mode = Mode::keyword;
    else throw ConfigError("mode must be theme or keyword");
    if (c.mode == Mode::keyword && c.clustering) throw ConfigError("clustering applies to theme mode only");
    c.keyword_vocab = static_cast<std::size_t>(kv.get_int("keyword.vocab_size", 291));
    c.words_per_theme = static_cast<std::size_t>(kv.get_int("keyword.words_per_theme", 3));
    if (c.keyword_vocab == 0 || c.words_per_theme == 0) throw ConfigError("keyword sizes must be >= 1");

    if (kv.has("semantics.graph")) c.graph = resolve(kv.get("semantics.graph", std::string{}));
    c.relatedness.max_depth = static_cast<std::size_t>(kv.get_int("semantics.max_depth", 2));
    c.relatedness.decay = kv.get("semantics.decay", 0.5);
    c.relatedness.reference_weight = kv.get("semantics.reference_weight", 1.0);
    if (kv.has("semantics.relations"))
      for (auto& r : themeann::split(kv.get("semantics.relations", std::string{}), ',')) c.relatedness.relations.insert(trim(r));
    c.relatedness.validate();
    c.augment_top_n = static_cast<std::size_t>(kv.get_int("semantics.top_n", 3));

    c.out_dir = resolve(kv.get("out", std::string("run")));
    c.jobs = static_cast<unsigned>(std::max<long long>(1, kv.get_int("jobs", 1)));
    return c;
  }

  static RunConfig load(const fs::path& path, const KeyValues& overrides = {}) {
    auto kv = KeyValues::load(path);
    for (const auto& [k, v] : overrides.entries()) kv.set(k, v);
    return from_keys(kv, path.parent_path().empty() ? fs::path(".") : path.parent_path());
  }
};

// ---------------------------------------------------------------------------
// Manifest

struct ArtifactRecord {
  std::string path;
  std::string checksum;
};

struct StageRecord {
  std::string name;
  std::string key;
  bool cached = false;
  double wall_ms = 0.0;
  std::vector<ArtifactRecord> inputs;
  std::vector<ArtifactRecord> outputs;
  std::uint64_t kernel_evaluations = 0;
};

struct RunManifest {
  std::string config_hash;
  std::string variant;
  std::string split_checksum;
  std::vector<StageRecord> stages;
  std::map<std::string, std::string> reports;  // name -> report.kv path (relative to the out dir)

  std::size_t recomputed() const {
    std::size_t n = 0;
    for (const auto& s : stages) n += s.cached ? 0 : 1;
    return n;
  }
  std::uint64_t kernel_evaluations() const {
    std::uint64_t n = 0;
    for (const auto& s : stages) n += s.kernel_evaluations;
    return n;
  }
  const StageRecord* stage(const std::string& name) const {
    for (const auto& s : stages)
      if (s.name == name) return &s;
    return nullptr;
  }
};

inline nlohmann::json to_json(const RunManifest& m) {
  using nlohmann::json;
  json j;
  j["config_hash"] = m.config_hash;
  j["variant"] = m.variant;
  j["split_checksum"] = m.split_checksum;
  j["reports"] = m.reports;
  j["counters"] = {{"kernel_evaluations", m.kernel_evaluations()}, {"recomputed_stages", m.recomputed()}};
  auto artifacts = [](const std::vector<ArtifactRecord>& v) {
    json a = json::array();
    for (const auto& r : v) a.push_back({{"path", r.path}, {"checksum", r.checksum}});
    return a;
  };
  j["stages"] = json::array();
  for (const auto& s : m.stages)
    j["stages"].push_back({{"name", s.name},
                           {"key", s.key},
                           {"cached", s.cached},
                           {"wall_ms", s.wall_ms},
                           {"kernel_evaluations", s.kernel_evaluations},
                           {"inputs", artifacts(s.inputs)},
                           {"outputs", artifacts(s.outputs)}});
  return j;
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
  RunManifest m;
  m.config_hash = j.value("config_hash", "");
  m.variant = j.value("variant", "");
  m.split_checksum = j.value("split_checksum", "");
  if (j.contains("reports")) m.reports = j["reports"].get<std::map<std::string, std::string>>();
  auto artifacts = [](const nlohmann::json& a) {
    std::vector<ArtifactRecord> v;
    for (const auto& r : a) v.push_back({r.at("path").get<std::string>(), r.at("checksum").get<std::string>()});
    return v;
  };
  for (const auto& s : j.at("stages")) {
    StageRecord r;
    r.name = s.at("name").get<std::string>();
    r.key = s.at("key").get<std::string>();
    r.cached = s.value("cached", false);
    r.wall_ms = s.value("wall_ms", 0.0);
    r.kernel_evaluations = s.value("kernel_evaluations", std::uint64_t{0});
    r.inputs = artifacts(s.at("inputs"));
    r.outputs = artifacts(s.at("outputs"));
    m.stages.push_back(std::move(r));
  }
  return m;
}

inline RunManifest load_run_manifest(const fs::path& path) {
  try {
    return manifest_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed run manifest " + path.string() + ": " + e.what());
  }
}

/// Observer for every artifact read by a pipeline stage (tests use it to
/// check that stages only touch artifacts recorded in the manifest).
inline std::function<void(const fs::path&)>& artifact_read_hook() {
  static std::function<void(const fs::path&)> hook;
  return hook;
}

// ---------------------------------------------------------------------------
// Stage context

class StageContext {
 public:
  StageContext(std::string name, fs::path out_dir, std::string config_section, const RunManifest* previous)
      : out_dir_(std::move(out_dir)), previous_(previous), start_(std::chrono::steady_clock::now()) {
    record_.name = std::move(name);
    key_material_ = record_.name + "\n" + config_section;
  }

  const std::string& name() const noexcept { return record_.name; }

  std::string read(const fs::path& path) {
    if (auto& hook = artifact_read_hook()) hook(path);
    auto content = read_file(path);
    const auto sum = checksum(content);
    record_.inputs.push_back({display(path), sum});
    key_material_ += display(path) + ":" + sum + "\n";
    return content;
  }

  /// True when the previous run recorded this stage with an identical key and
  /// its outputs are still intact; the outputs are then adopted unchanged.
  bool try_cache() {
    record_.key = checksum(key_material_);
    if (!previous_) return false;
    const auto* prev = previous_->stage(record_.name);
    if (!prev || prev->key != record_.key) return false;
    for (const auto& o : prev->outputs) {
      const fs::path p = resolve(o.path);
      if (!fs::exists(p) || checksum(read_file(p)) != o.checksum) return false;
    }
    record_.outputs = prev->outputs;
    record_.cached = true;
    return true;
  }

  void write(const fs::path& path, std::string_view content) {
    write_file_atomic(path, content);
    record_.outputs.push_back({display(path), checksum(content)});
  }

  void add_kernel_evaluations(std::uint64_t n) { record_.kernel_evaluations += n; }

  StageRecord finish() {
    if (record_.key.empty()) record_.key = checksum(key_material_);
    record_.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
    return record_;
  }

  std::string display(const fs::path& p) const {
    const auto rel = p.lexically_normal().lexically_relative(out_dir_.lexically_normal());
    if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
    return fs::absolute(p).lexically_normal().generic_string();
  }

  fs::path resolve(const std::string& p) const {
    fs::path path(p);
    return path.is_relative() ? out_dir_ / path : path;
  }

 private:
  fs::path out_dir_;
  const RunManifest* previous_;
  std::chrono::steady_clock::time_point start_;
  StageRecord record_;
  std::string key_material_;
};

// ---------------------------------------------------------------------------
// Intermediate file formats
//
// corpus.tsv:  # id<TAB>split<TAB>image<TAB>words
//              one row per document, split is train|test, words space-joined.
// routing.tsv: test_id<TAB>cluster, plus `dropped<TAB>train_id` rows.
// labels:      see evaluation.hpp (id<TAB>space-separated labels)

struct CorpusRow {
  std::string id;
  bool test = false;
  std::string image;
  std::vector<std::string> words;
};

inline std::string render_corpus_rows(const std::vector<CorpusRow>& rows) {
  std::string out = "# id\tsplit\timage\twords\n";
  for (const auto& r : rows) {
    out += r.id + "\t" + (r.test ? "test" : "train") + "\t" + r.image + "\t";
    for (std::size_t i = 0; i < r.words.size(); ++i) out += (i ? " " : "") + r.words[i];
    out += "\n";
  }
  return out;
}

inline std::vector<CorpusRow> parse_corpus_rows(std::string_view text) {
  std::vector<CorpusRow> rows;
  std::size_t line_no = 0;
  for (const auto& line : split(text, '\n')) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto f = split(line, '\t');
    if (f.size() != 4 || (f[1] != "train" && f[1] != "test"))
      throw DataError("corpus.tsv line " + std::to_string(line_no) + ": malformed");
    rows.push_back({f[0], f[1] == "test", f[2], split_ws(f[3])});
  }
  return rows;
}

inline std::string split_checksum(const std::vector<CorpusRow>& rows) {
  std::string ids;
  for (const auto& r : rows)
    if (r.test) ids += r.id + "\n";
  return checksum(ids);
}

inline std::string theme_label(std::optional<std::size_t> cluster, std::size_t k) {
  return cluster ? "c" + std::to_string(*cluster) + ".t" + std::to_string(k) : "t" + std::to_string(k);
}

// ---------------------------------------------------------------------------
// Pipeline

class Pipeline {
 public:
  static constexpr const char* kStages[] = {"ingest", "features", "cluster", "lda", "annotate", "augment", "evaluate"};

  explicit Pipeline(RunConfig cfg) : cfg_(std::move(cfg)), out_(cfg_.out_dir) {}

  const RunConfig& config() const noexcept { return cfg_; }
  const fs::path& out_dir() const noexcept { return out_; }

  /// Run every stage up to and including `last` (all stages by default).
  RunManifest run(const std::string& last = "evaluate") {
    bool known = false;
    for (auto s : kStages) known |= last == s;
    if (!known) throw ConfigError("unknown stage '" + last + "'");
    fs::create_directories(out_);
    const auto manifest_path = out_ / "manifest.json";
    if (fs::exists(manifest_path)) {
      try {
        previous_ = load_run_manifest(manifest_path);
      } catch (const DataError&) {
        previous_.reset();
      }
    }
    manifest_ = RunManifest{};
    manifest_.config_hash = cfg_.hash();
    manifest_.variant = cfg_.variant();

    using StageFn = void (Pipeline::*)(StageContext&);
    const std::vector<std::pair<std::string, StageFn>> stages = {
        {"ingest", &Pipeline::stage_ingest},       {"features", &Pipeline::stage_features},
        {"cluster", &Pipeline::stage_cluster},     {"lda", &Pipeline::stage_lda},
        {"annotate", &Pipeline::stage_annotate},   {"augment", &Pipeline::stage_augment},
        {"evaluate", &Pipeline::stage_evaluate}};
    for (const auto& [name, fn] : stages) {
      const bool skip = (name == "cluster" && !cfg_.clustering) || (name == "lda" && cfg_.mode == Mode::keyword) ||
                        (name == "augment" && (!cfg_.graph || cfg_.mode == Mode::keyword));
      if (!skip) {
        StageContext ctx(name, out_, section_for(name), previous_ ? &*previous_ : nullptr);
        try {
          (this->*fn)(ctx);
        } catch (const ConfigError& e) {
          write_manifest();
          throw ConfigError("stage '" + name + "': " + e.what());
        } catch (const DataError& e) {
          write_manifest();
          throw DataError("stage '" + name + "': " + e.what());
        } catch (const std::exception& e) {
          write_manifest();
          throw StageError(name, e.what());
        }
        manifest_.stages.push_back(ctx.finish());
      }
      if (name == last) break;
    }
    write_manifest();
    return manifest_;
  }

 private:
  std::string section_for(const std::string& stage) const {
    if (stage == "ingest") return cfg_.section({"dataset.", "synth.", "split.", "seed"});
    if (stage == "features") return cfg_.section({"grid.", "gabor."});
    if (stage == "cluster") return cfg_.section({"cluster."});
    if (stage == "lda") return cfg_.section({"lda.", "cluster.", "dataset.min_count"});
    if (stage == "augment") return cfg_.section({"semantics.", "keyword."});
    return cfg_.hash();
  }

  void write_manifest() {
    write_file_atomic(out_ / "manifest.json", to_json(manifest_).dump(2) + "\n");
  }

  fs::path p(const std::string& name) const { return out_ / name; }

  // --- shared loaders -----------------------------------------------------

  struct Loaded {
    std::vector<CorpusRow> rows;
    std::map<std::string, std::size_t> row_of;
    std::vector<FeatureGrid> grids;  // standardized, corpus order
  };

  Loaded load_corpus(StageContext& ctx) {
    Loaded l;
    l.rows = parse_corpus_rows(ctx.read(p("corpus.tsv")));
    for (std::size_t i = 0; i < l.rows.size(); ++i) l.row_of[l.rows[i].id] = i;
    manifest_.split_checksum = split_checksum(l.rows);
    return l;
  }

  void load_features(StageContext& ctx, Loaded& l) {
    auto raw = parse_feature_grids(ctx.read(p("features.tsv")));
    const auto std_ = parse_standardizer(ctx.read(p("standardizer.txt")));
    if (raw.size() != l.rows.size()) throw DataError("features.tsv does not match corpus.tsv");
    for (auto& g : raw) l.grids.push_back(std_.apply(g));
  }

  /// Keyword vocabulary: the most frequent training words.
  Vocabulary keyword_vocabulary(const Loaded& l) const {
    Corpus train;
    for (const auto& r : l.rows)
      if (!r.test) train.push_back({r.id, r.image, {}, r.words});
    return build_vocabulary(train, cfg_.min_count, cfg_.keyword_vocab);
  }

  /// Every word of each test description; a method is scored over the words
  /// it is able to emit (its label universe).
  static LabelSets description_truth(const Loaded& l) {
    LabelSets truth;
    for (const auto& r : l.rows)
      if (r.test) truth[r.id].insert(r.words.begin(), r.words.end());
    return truth;
  }

  // --- stages -------------------------------------------------------------

  void stage_ingest(StageContext& ctx) {
    Corpus corpus;
    std::vector<Image> images;
    if (cfg_.manifest) {
      const auto text = ctx.read(*cfg_.manifest);
      if (ctx.try_cache()) return;
      corpus = parse_manifest(text, cfg_.manifest->parent_path());
      tokenize_corpus(corpus, cfg_.tokenizer);
    } else {
      if (ctx.try_cache()) return;
      auto synth = generate_synthetic(*cfg_.synth);
      corpus = std::move(synth.corpus);
      images = std::move(synth.images);
      std::string planted = "# id\tgroup\tdominant_theme\n";
      for (std::size_t d = 0; d < corpus.size(); ++d) {
        corpus[d].image_ref = (out_ / "images" / (corpus[d].id + ".ppm")).string();
        ctx.write(corpus[d].image_ref, encode_ppm(images[d]));
        planted += corpus[d].id + "\t" + std::to_string(synth.group[d]) + "\t" + std::to_string(synth.dominant[d]) + "\n";
      }
      ctx.write(p("planted.tsv"), planted);
    }
    if (corpus.empty()) throw DataError("dataset is empty");
    const auto parts = split(corpus, cfg_.split);
    std::set<std::string> test_ids;
    for (const auto& d : parts.test) test_ids.insert(d.id);
    std::vector<CorpusRow> rows;
    for (const auto& d : corpus) rows.push_back({d.id, test_ids.count(d.id) != 0, ctx.display(d.image_ref), d.words});
    ctx.write(p("corpus.tsv"), render_corpus_rows(rows));
  }

  void stage_features(StageContext& ctx) {
    auto l = load_corpus(ctx);
    std::vector<std::string> bytes(l.rows.size());
    for (std::size_t i = 0; i < l.rows.size(); ++i) bytes[i] = ctx.read(ctx.resolve(l.rows[i].image));
    if (ctx.try_cache()) return;
    const FeatureExtractor extractor(cfg_.grid, cfg_.gabor);
    std::vector<FeatureGrid> grids(l.rows.size());
    parallel_for(l.rows.size(), cfg_.jobs, [&](std::size_t i) {
      grids[i] = extractor.extract(decode_ppm(bytes[i], l.rows[i].image), l.rows[i].id);
    });
    std::vector<FeatureGrid> train;
    for (std::size_t i = 0; i < grids.size(); ++i)
      if (!l.rows[i].test) train.push_back(grids[i]);
    const auto standardizer = fit_standardizer(train);
    ctx.write(p("features.tsv"), render_feature_grids(grids));
    ctx.write(p("standardizer.txt"), render_standardizer(standardizer));
  }

  void stage_cluster(StageContext& ctx) {
    auto l = load_corpus(ctx);
    load_features(ctx, l);
    if (ctx.try_cache()) return;
    std::vector<FeatureGrid> train;
    for (std::size_t i = 0; i < l.rows.size(); ++i)
      if (!l.rows[i].test) train.push_back(l.grids[i]);
    const auto fitted = fit_clusters(train, cfg_.cluster);
    const auto pruned = prune(fitted, cfg_.cluster.min_members);
    std::string routing = "# id\tcluster\n";
    for (std::size_t i = 0; i < l.rows.size(); ++i)
      if (l.rows[i].test) routing += l.rows[i].id + "\t" + std::to_string(assign(l.grids[i], pruned.model)) + "\n";
    for (const auto& id : pruned.dropped) routing += "dropped\t" + id + "\n";
    ctx.write(p("clusters.txt"), render_cluster_model(pruned.model));
    ctx.write(p("routing.tsv"), routing);
  }

  struct Routing {
    ClusterModel model;
    std::map<std::string, std::size_t> cluster_of;  // train members and routed test images
    std::set<std::string> dropped;
  };

  Routing load_routing(StageContext& ctx) {
    Routing r;
    r.model = parse_cluster_model(ctx.read(p("clusters.txt")));
    for (std::size_t i = 0; i < r.model.member_ids.size(); ++i) r.cluster_of[r.model.member_ids[i]] = r.model.membership[i];
    for (const auto& line : split(ctx.read(p("routing.tsv")), '\n')) {
      if (line.empty() || line.front() == '#') continue;
      const auto f = split(line, '\t');
      if (f.size() != 2) throw DataError("routing.tsv: malformed row");
      if (f[0] == "dropped")
        r.dropped.insert(f[1]);
      else
        r.cluster_of[f[0]] = static_cast<std::size_t>(parse_int(f[1], "cluster"));
    }
    return r;
  }

  /// Fit LDA over the given corpus rows with K themes. Per-cluster budgets
  /// are clamped to the cluster size; an explicit K larger than the corpus is
  /// left for fit_lda to reject.
  ThemeModel fit_rows(const std::vector<const CorpusRow*>& rows, std::size_t K, bool clamp) const {
    Corpus c;
    for (const auto* r : rows) c.push_back({r->id, r->image, {}, r->words});
    const auto vocab = build_vocabulary(c, cfg_.min_count);
    auto docs = encode_corpus(c, vocab);
    LdaConfig lc = cfg_.lda;
    lc.themes = clamp ? std::min(K, docs.size()) : K;
    return fit_lda(docs, vocab, lc);
  }

  void stage_lda(StageContext& ctx) {
    auto l = load_corpus(ctx);
    std::optional<Routing> routing;
    if (cfg_.clustering) routing = load_routing(ctx);
    if (ctx.try_cache()) return;
    if (!routing) {
      std::vector<const CorpusRow*> all;
      for (const auto& r : l.rows) all.push_back(&r);
      ctx.write(p("themes.txt"), render_theme_model(fit_rows(all, cfg_.lda.themes, false)));
      return;
    }
    for (std::size_t c = 0; c < routing->model.clusters(); ++c) {
      std::vector<const CorpusRow*> members;
      std::size_t train_members = 0;
      for (const auto& r : l.rows) {
        auto it = routing->cluster_of.find(r.id);
        if (it == routing->cluster_of.end() || it->second != c) continue;
        members.push_back(&r);
        train_members += r.test ? 0 : 1;
      }
      const auto K = theme_budget(train_members, cfg_.cluster.themes_per_100);
      ctx.write(p("themes_c" + std::to_string(c) + ".txt"), render_theme_model(fit_rows(members, K, true)));
    }
  }

  /// Theme models keyed by cluster (nullopt key for the unclustered model).
  std::vector<std::pair<std::optional<std::size_t>, ThemeModel>> load_theme_models(StageContext& ctx,
                                                                                 const std::optional<Routing>& routing) {
    std::vector<std::pair<std::optional<std::size_t>, ThemeModel>> out;
    if (!routing) {
      out.emplace_back(std::nullopt, parse_theme_model(ctx.read(p("themes.txt"))));
    } else {
      for (std::size_t c = 0; c < routing->model.clusters(); ++c)
        out.emplace_back(c, parse_theme_model(ctx.read(p("themes_c" + std::to_string(c) + ".txt"))));
    }
    return out;
  }

  void stage_annotate(StageContext& ctx) {
    auto l = load_corpus(ctx);
    load_features(ctx, l);
    if (cfg_.mode == Mode::keyword) {
      if (ctx.try_cache()) return;
      annotate_keywords(ctx, l);
      return;
    }
    std::optional<Routing> routing;
    if (cfg_.clustering) routing = load_routing(ctx);
    auto models = load_theme_models(ctx, routing);
    if (ctx.try_cache()) return;

    std::vector<AnnotationResult> results;
    std::string words_out;
    std::uint64_t evaluations = 0;
    for (const auto& [cluster, model] : models) {
      std::map<std::string, std::size_t> doc_row;
      for (std::size_t d = 0; d < model.doc_ids.size(); ++d) doc_row[model.doc_ids[d]] = d;
      std::vector<FeatureGrid> train;
      std::vector<std::size_t> train_docs;
      std::vector<std::size_t> test_rows;
      for (std::size_t i = 0; i < l.rows.size(); ++i) {
        auto it = doc_row.find(l.rows[i].id);
        if (it == doc_row.end()) continue;
        if (l.rows[i].test) {
          test_rows.push_back(i);
        } else {
          train.push_back(l.grids[i]);
          train_docs.push_back(it->second);
        }
      }
      if (test_rows.empty()) continue;
      if (train.empty()) throw DataError("a theme model has no training images");
      Matrix theta(train_docs.size(), model.themes);
      for (std::size_t j = 0; j < train_docs.size(); ++j)
        std::copy(model.theta.row(train_docs[j]).begin(), model.theta.row(train_docs[j]).end(), theta.row(j).begin());
      std::vector<std::string> names;
      for (std::size_t k = 0; k < model.themes; ++k) names.push_back(theme_label(cluster, k));
      RelevanceModel rm(std::move(train), LabelStats::from_themes(names, theta, cfg_.presence), cfg_.relevance);

      std::vector<AnnotationResult> local(test_rows.size());
      std::vector<KernelCounter> counters(test_rows.size());
      parallel_for(test_rows.size(), cfg_.jobs,
                   [&](std::size_t t) { local[t] = rm.annotate(l.grids[test_rows[t]], &counters[t]); });
      for (std::size_t t = 0; t < test_rows.size(); ++t) {
        evaluations += counters[t].evaluations;
        if (cluster) local[t].variant += "/clustered";
        // top words of each assigned theme, best-ranked occurrence kept
        std::vector<std::string> words;
        std::set<std::string> seen;
        for (const auto& lab : local[t].labels)
          for (const auto& w : top_words(model, lab.index, std::min(cfg_.words_per_theme, model.vocab_size())))
            if (seen.insert(w.word).second) words.push_back(w.word);
        words_out += local[t].image_id + "\t";
        for (std::size_t i = 0; i < words.size(); ++i) words_out += (i ? " " : "") + words[i];
        words_out += "\n";
        results.push_back(std::move(local[t]));
      }
    }
    std::sort(results.begin(), results.end(), [&](const auto& a, const auto& b) { return l.row_of[a.image_id] < l.row_of[b.image_id]; });
    ctx.add_kernel_evaluations(evaluations);
    ctx.write(p("annotations.tsv"), render_annotations(results, cfg_.hash()));
    ctx.write(p("theme_words.tsv"), sorted_label_file(words_out));
  }

  static std::string sorted_label_file(const std::string& text) { return render_label_sets(parse_label_sets(text)); }

  void annotate_keywords(StageContext& ctx, const Loaded& l) {
    const auto vocab = keyword_vocabulary(l);
    std::vector<FeatureGrid> train;
    std::vector<std::vector<std::size_t>> docs;
    std::vector<std::size_t> test_rows;
    for (std::size_t i = 0; i < l.rows.size(); ++i) {
      if (l.rows[i].test) {
        test_rows.push_back(i);
        continue;
      }
      train.push_back(l.grids[i]);
      docs.push_back(vocab.encode(l.rows[i].words));
    }
    RelevanceModel rm(std::move(train), LabelStats::from_words(vocab, docs), cfg_.relevance);
    std::vector<AnnotationResult> results(test_rows.size());
    std::vector<KernelCounter> counters(test_rows.size());
    parallel_for(test_rows.size(), cfg_.jobs,
                 [&](std::size_t t) { results[t] = rm.annotate(l.grids[test_rows[t]], &counters[t]); });
    std::uint64_t evaluations = 0;
    for (const auto& c : counters) evaluations += c.evaluations;
    ctx.add_kernel_evaluations(evaluations);
    ctx.write(p("annotations.tsv"), render_annotations(results, cfg_.hash()));
  }

  void stage_augment(StageContext& ctx) {
    const auto words = parse_label_sets(ctx.read(p("theme_words.tsv")));
    const auto graph_text = ctx.read(*cfg_.graph);
    if (ctx.try_cache()) return;
    const auto graph = parse_graph(graph_text);
    // keep the theme-word order from the annotation file
    std::map<std::string, std::vector<std::string>> ordered;
    for (const auto& line : split(read_file(p("theme_words.tsv")), '\n')) {
      const auto f = split(line, '\t');
      if (f.size() == 2) ordered[f[0]] = split_ws(f[1]);
    }
    std::string out;
    for (const auto& [id, _] : words) {
      const auto& ann = ordered[id];
      out += id + "\t";
      if (!ann.empty()) {
        const auto aug = augment_annotations(graph, ann, cfg_.relatedness, cfg_.augment_top_n);
        for (std::size_t i = 0; i < aug.size(); ++i) out += (i ? " " : "") + aug[i];
      }
      out += "\n";
    }
    ctx.write(p("augmented.tsv"), out);
  }

  void stage_evaluate(StageContext& ctx) {
    auto l = load_corpus(ctx);
    const auto annotations = parse_label_sets(ctx.read(p("annotations.tsv")));
    std::optional<LabelSets> theme_words;
    std::vector<std::pair<std::optional<std::size_t>, ThemeModel>> models;
    if (cfg_.mode == Mode::theme) {
      theme_words = parse_label_sets(ctx.read(p("theme_words.tsv")));
      std::optional<Routing> routing;
      if (cfg_.clustering) routing = load_routing(ctx);
      models = load_theme_models(ctx, routing);
    }
    const bool cached = ctx.try_cache();
    manifest_.reports["primary"] = "report.kv";
    if (cfg_.mode == Mode::theme) manifest_.reports["words"] = "report_words.kv";
    if (cached) return;

    const auto word_truth = description_truth(l);
    std::vector<EvalReport> reports;
    std::vector<std::string> names;
    if (cfg_.mode == Mode::keyword) {
      const auto vocab = keyword_vocabulary(l);
      const std::set<std::string> universe(vocab.terms().begin(), vocab.terms().end());
      reports.push_back(per_label_prf(annotations, word_truth, universe));
      names.push_back("keywords " + cfg_.variant());
      ctx.write(p("truth_words.tsv"), render_label_sets(word_truth));
      ctx.write(p("report.kv"), render_report_kv(reports[0]));
    } else {
      LabelSets theme_truth;
      std::set<std::string> universe, word_universe;
      for (const auto& [cluster, model] : models) {
        for (std::size_t k = 0; k < model.themes; ++k) {
          universe.insert(theme_label(cluster, k));
          for (const auto& w : top_words(model, k, std::min(cfg_.words_per_theme, model.vocab_size())))
            word_universe.insert(w.word);
        }
        for (std::size_t d = 0; d < model.doc_ids.size(); ++d) {
          const auto& id = model.doc_ids[d];
          if (!annotations.count(id)) continue;
          auto& s = theme_truth[id];
          const auto present = theme_presence(model.theta.row(d), cfg_.presence);
          for (std::size_t k = 0; k < model.themes; ++k)
            if (present[k]) s.insert(theme_label(cluster, k));
        }
      }
      LabelSets words_truth;
      for (const auto& [id, _] : *theme_words) words_truth[id] = word_truth.count(id) ? word_truth.at(id) : std::set<std::string>{};
      reports.push_back(per_label_prf(annotations, theme_truth, universe));
      reports.push_back(per_label_prf(*theme_words, words_truth, word_universe));
      names = {"themes " + cfg_.variant(), "theme words " + cfg_.variant()};
      ctx.write(p("truth_themes.tsv"), render_label_sets(theme_truth));
      ctx.write(p("truth_words.tsv"), render_label_sets(words_truth));
      ctx.write(p("report.kv"), render_report_kv(reports[0]));
      ctx.write(p("report_words.kv"), render_report_kv(reports[1]));
    }
    ctx.write(p("report.txt"), render_table(reports, names));
  }

  RunConfig cfg_;
  fs::path out_;
  std::optional<RunManifest> previous_;
  RunManifest manifest_;
};

inline RunManifest run_pipeline(const RunConfig& cfg, const std::string& last = "evaluate") {
  Pipeline p(cfg);
  return p.run(last);
}

inline RunManifest run_pipeline(const fs::path& config_path, const KeyValues& overrides = {}) {
  return run_pipeline(RunConfig::load(config_path, overrides));
}

// ---------------------------------------------------------------------------
// Comparison

/// Side-by-side metrics for runs evaluated on the identical test split.
inline std::string compare_variants(const std::vector<fs::path>& manifest_paths) {
  if (manifest_paths.empty()) throw ConfigError("compare needs at least one manifest");
  std::vector<EvalReport> reports;
  std::vector<std::string> names;
  std::string split0;
  fs::path first;
  for (const auto& path : manifest_paths) {
    const auto m = load_run_manifest(path);
    if (m.split_checksum.empty()) throw DataError("manifest " + path.string() + " records no test split");
    if (split0.empty()) {
      split0 = m.split_checksum;
      first = path;
    } else if (m.split_checksum != split0) {
      throw DataError("test splits differ: " + first.string() + " has " + split0 + ", " + path.string() + " has " +
                      m.split_checksum);
    }
    if (m.reports.empty()) throw DataError("manifest " + path.string() + " has no evaluation reports");
    const auto dir = path.parent_path();
    for (const auto& [name, rel] : m.reports) {
      reports.push_back(parse_report_kv(read_file(dir / rel)));
      names.push_back((name == "words" ? "words " : "") + m.variant);
    }
  }
  return render_table(reports, names, "Variant");
}

}  // namespace themeann
