#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "themeann/corpus.hpp"
#include "themeann/synthetic.hpp"
#include "themeann/theme_model.hpp"

using namespace themeann;
namespace fs = std::filesystem;

namespace {

TokenizerConfig stop(std::set<std::string> words) {
  TokenizerConfig cfg;
  cfg.stopwords = std::move(words);
  return cfg;
}

Corpus docs_from(const std::vector<std::vector<std::string>>& words) {
  Corpus c;
  for (std::size_t i = 0; i < words.size(); ++i) c.push_back({"d" + std::to_string(i), "", "", words[i]});
  return c;
}

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("themeann_corpus_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Tokenize, LowercasesStripsPunctuationAndStopwords) {
  EXPECT_EQ(tokenize("A large, dense forest.", stop({"a", "the"})),
            (std::vector<std::string>{"large", "dense", "forest"}));
}

TEST(Tokenize, EmptyInput) { EXPECT_TRUE(tokenize("").empty()); }

TEST(Tokenize, CaseFolding) {
  EXPECT_EQ(tokenize("Forest forest FOREST"), (std::vector<std::string>{"forest", "forest", "forest"}));
}

TEST(Tokenize, ApostrophesJoinAndUtf8Survives) {
  EXPECT_EQ(tokenize("the child's café"), (std::vector<std::string>{"childs", "café"}));
}

TEST(Tokenize, IdempotentOnOwnOutput) {
  const std::vector<std::string> texts = {"A man, his dog & the sea!", "Red-brick walls; wooden lamp...",
                                          "  spaces\tand\nnewlines  ", "ÜBER straße 12b"};
  for (const auto& t : texts) {
    const auto once = tokenize(t);
    std::string joined;
    for (const auto& w : once) joined += w + " ";
    EXPECT_EQ(tokenize(joined), once) << t;
  }
}

TEST(Tokenize, StopwordFileOverridesDefaults) {
  const auto dir = temp_dir("stop");
  write_file_atomic(dir / "stop.txt", "# custom\nForest\n\npath\n");
  const TokenizerConfig cfg{load_stopwords(dir / "stop.txt"), 1};
  EXPECT_EQ(tokenize("the forest path", cfg), (std::vector<std::string>{"the"}));
}

TEST(Vocabulary, RelativeFrequencies) {
  const auto v = build_vocabulary(docs_from({{"forest", "path", "forest"}, {"forest"}}));
  ASSERT_EQ(v.size(), 2u);
  EXPECT_DOUBLE_EQ(v.frequency(v.index("forest")), 0.75);
  EXPECT_DOUBLE_EQ(v.frequency(v.index("path")), 0.25);
}

TEST(Vocabulary, SingleTerm) {
  const auto v = build_vocabulary(docs_from({{"sky", "sky"}}));
  EXPECT_DOUBLE_EQ(v.frequency(0), 1.0);
}

TEST(Vocabulary, MinCountFiltersThenRenormalizes) {
  const auto v = build_vocabulary(docs_from({{"forest", "path", "forest"}, {"forest"}}), 2);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v.term(0), "forest");
  EXPECT_DOUBLE_EQ(v.frequency(0), 1.0);
}

TEST(Vocabulary, EverythingFilteredIsAnError) {
  EXPECT_THROW(build_vocabulary(docs_from({{"a1", "b1"}}), 5), DataError);
}

TEST(Vocabulary, MaxTermsKeepsMostFrequent) {
  const auto v = build_vocabulary(docs_from({{"x", "y", "y", "z", "z", "z"}}), 1, 2);
  EXPECT_EQ(v.terms(), (std::vector<std::string>{"y", "z"}));
}

TEST(Vocabulary, FrequenciesSumToOneAndEncodeFlagsOov) {
  auto synth = generate_synthetic({});
  const auto v = build_vocabulary(synth.corpus);
  double s = 0.0;
  for (double p : v.frequencies()) s += p;
  EXPECT_NEAR(s, 1.0, 1e-9);
  std::size_t oov = 0;
  const auto ids = v.encode({synth.corpus[0].words[0], "notaword", synth.corpus[1].words[0]}, &oov);
  EXPECT_EQ(ids.size(), 2u);
  EXPECT_EQ(oov, 1u);
}

TEST(Split, NinetyTen) {
  Corpus c = docs_from(std::vector<std::vector<std::string>>(100, {"w"}));
  const auto s = split(c, {0.1, 4});
  EXPECT_EQ(s.train.size(), 90u);
  EXPECT_EQ(s.test.size(), 10u);
}

TEST(Split, DeterministicPerSeed) {
  Corpus c = docs_from(std::vector<std::vector<std::string>>(50, {"w"}));
  auto ids = [](const Corpus& x) {
    std::vector<std::string> out;
    for (const auto& d : x) out.push_back(d.id);
    return out;
  };
  EXPECT_EQ(ids(split(c, {0.3, 9}).test), ids(split(c, {0.3, 9}).test));
  EXPECT_NE(ids(split(c, {0.3, 9}).test), ids(split(c, {0.3, 10}).test));
}

TEST(Split, DegenerateFractionsFail) {
  Corpus two = docs_from({{"a"}, {"b"}});
  EXPECT_THROW(split(two, {0.999, 1}), DataError);
  EXPECT_THROW(split(two, {0.01, 1}), DataError);
  EXPECT_THROW(split(Corpus{}, {0.5, 1}), DataError);
}

TEST(Split, PartitionProperty) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 60);
    const double f = 0.01 + 0.98 * uniform01(rng);
    Corpus c = docs_from(std::vector<std::vector<std::string>>(n, {"w"}));
    for (std::size_t i = 0; i < n; ++i) c[i].id = "doc" + std::to_string(i);
    const auto n_test = static_cast<std::size_t>(std::llround(f * static_cast<double>(n)));
    if (n_test == 0 || n_test >= n) {
      EXPECT_THROW(split(c, {f, trial + 0ull}), DataError);
      continue;
    }
    const auto s = split(c, {f, static_cast<std::uint64_t>(trial)});
    std::set<std::string> tr, te;
    for (const auto& d : s.train) tr.insert(d.id);
    for (const auto& d : s.test) te.insert(d.id);
    EXPECT_EQ(te.size(), n_test);
    EXPECT_EQ(tr.size() + te.size(), n);
    for (const auto& id : te) EXPECT_FALSE(tr.count(id));
  }
}

TEST(Manifest, LoadsRowsRelativeToManifest) {
  const auto dir = temp_dir("manifest");
  fs::create_directories(dir / "img");
  for (auto name : {"a.ppm", "b.ppm", "c.ppm"}) save_ppm(Image(2, 2), dir / "img" / name);
  write_file_atomic(dir / "m.txt",
                    "id|image|description\n1|img/a.ppm|A forest path\n2|img/b.ppm|Blue sky | sea\n3|img/c.ppm|\n");
  const auto c = load_manifest(dir / "m.txt");
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c[1].description, "Blue sky | sea");
  EXPECT_TRUE(fs::exists(c[2].image_ref));
}

TEST(Manifest, DuplicateIdNamesIdAndRow) {
  try {
    parse_manifest("id|image|description\nx|a.ppm|one\nx|b.ppm|two\n", ".", false);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("'x'"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos);
  }
}

TEST(Manifest, MissingImageAndMalformedRows) {
  EXPECT_THROW(parse_manifest("id|image|description\nx|nope.ppm|d\n", "/nonexistent"), DataError);
  EXPECT_THROW(parse_manifest("id|image|description\njust-one-field\n", ".", false), DataError);
  EXPECT_THROW(load_manifest("/nonexistent/manifest.txt"), DataError);
}

TEST(Manifest, EmptyManifestIsEmptyCorpus) {
  EXPECT_TRUE(parse_manifest("id|image|description\n", ".").empty());
  EXPECT_TRUE(parse_manifest("", ".").empty());
}

TEST(Synthetic, FixedSeedIsBitIdentical) {
  SynthConfig cfg;
  cfg.docs = 20;
  const auto a = generate_synthetic(cfg), b = generate_synthetic(cfg);
  for (std::size_t d = 0; d < cfg.docs; ++d) {
    EXPECT_EQ(a.corpus[d].description, b.corpus[d].description);
    EXPECT_EQ(encode_ppm(a.images[d]), encode_ppm(b.images[d]));
  }
  EXPECT_EQ(a.phi, b.phi);
  EXPECT_EQ(a.dominant, b.dominant);
}

TEST(Synthetic, DominantThemeIsThetaArgmax) {
  SynthConfig cfg;
  cfg.docs = 200;
  const auto s = generate_synthetic(cfg);
  ASSERT_EQ(s.dominant.size(), 200u);
  for (std::size_t d = 0; d < 200; ++d)
    for (std::size_t k = 0; k < cfg.themes; ++k) EXPECT_LE(s.theta(d, k), s.theta(d, s.dominant[d]));
}

TEST(Synthetic, SingleThemeRecoveredBySingleThemeLda) {
  SynthConfig cfg;
  cfg.themes = 1;
  cfg.docs = 100;
  const auto s = generate_synthetic(cfg);
  const auto vocab = build_vocabulary(s.corpus);
  LdaConfig lc;
  lc.themes = 1;
  lc.iterations = 20;
  const auto model = fit_lda(encode_corpus(s.corpus, vocab), vocab, lc);
  double tv = 0.0;
  for (std::size_t w = 0; w < cfg.vocab; ++w) {
    const auto idx = vocab.index(s.words[w]);
    const double recovered = idx == Vocabulary::npos ? 0.0 : model.phi(0, idx);
    tv += std::abs(recovered - s.phi(0, w));
  }
  EXPECT_LE(0.5 * tv, 0.05);
}
