#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "themeann/synthetic.hpp"
#include "themeann/theme_model.hpp"

using namespace themeann;

namespace {

struct Fixture {
  SyntheticCorpus synth;
  Vocabulary vocab{{}, {}};
  std::vector<TokenDoc> docs;
};

Fixture planted(std::size_t K, std::size_t docs, std::size_t length, std::uint64_t seed = 1) {
  SynthConfig sc;
  sc.themes = K;
  sc.docs = docs;
  sc.doc_length = length;
  sc.seed = seed;
  sc.tile_size = 25;
  sc.grid = {1, 1};
  Fixture f;
  f.synth = generate_synthetic(sc);
  f.vocab = build_vocabulary(f.synth.corpus);
  f.docs = encode_corpus(f.synth.corpus, f.vocab);
  return f;
}

/// Planted phi row re-indexed to the fitted vocabulary order.
std::vector<double> planted_row(const Fixture& f, std::size_t k) {
  std::vector<double> row(f.vocab.size(), 0.0);
  for (std::size_t w = 0; w < f.synth.words.size(); ++w)
    if (auto i = f.vocab.index(f.synth.words[w]); i != Vocabulary::npos) row[i] = f.synth.phi(k, w);
  return row;
}

double tv(std::span<const double> a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

ThemeModel tiny_model(std::vector<double> phi_row, std::vector<std::string> words) {
  ThemeModel m;
  m.themes = 1;
  m.vocabulary = std::move(words);
  m.phi = Matrix(1, phi_row.size());
  for (std::size_t w = 0; w < phi_row.size(); ++w) m.phi(0, w) = phi_row[w];
  return m;
}

}  // namespace

TEST(Lda, RowsAreNormalizedAndDeterministic) {
  auto f = planted(3, 60, 30);
  LdaConfig cfg;
  cfg.themes = 3;
  cfg.iterations = 50;
  const auto a = fit_lda(f.docs, f.vocab, cfg), b = fit_lda(f.docs, f.vocab, cfg);
  EXPECT_EQ(a.phi, b.phi);
  EXPECT_EQ(a.theta, b.theta);
  for (const Matrix* m : {&a.phi, &a.theta})
    for (std::size_t r = 0; r < m->rows(); ++r) {
      double s = 0.0;
      for (double v : m->row(r)) {
        EXPECT_GE(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  EXPECT_DOUBLE_EQ(a.alpha, 50.0 / 3.0);
}

TEST(Lda, SingleThemeMatchesSmoothedUnigram) {
  auto f = planted(1, 40, 20);
  LdaConfig cfg;
  cfg.themes = 1;
  cfg.iterations = 5;
  const auto m = fit_lda(f.docs, f.vocab, cfg);
  std::vector<double> counts(f.vocab.size(), 0.0);
  double n = 0.0;
  for (const auto& d : f.docs)
    for (auto w : d.tokens) {
      counts[w] += 1.0;
      n += 1.0;
    }
  const double V = static_cast<double>(f.vocab.size());
  for (std::size_t w = 0; w < counts.size(); ++w) EXPECT_NEAR(m.phi(0, w), (counts[w] + 0.01) / (n + V * 0.01), 1e-6);
}

TEST(Lda, RecoversPlantedThemes) {
  auto f = planted(3, 200, 60, 11);
  LdaConfig cfg;
  cfg.themes = 3;
  cfg.alpha = 0.1;
  cfg.iterations = 300;
  const auto m = fit_lda(f.docs, f.vocab, cfg);
  std::vector<std::size_t> perm{0, 1, 2}, best;
  double best_tv = 1e9;
  do {
    double s = 0.0;
    for (std::size_t k = 0; k < 3; ++k) s += tv(m.phi.row(perm[k]), planted_row(f, k));
    if (s < best_tv) {
      best_tv = s;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  EXPECT_LE(best_tv / 3.0, 0.25);
  std::size_t agree = 0;
  for (std::size_t d = 0; d < f.docs.size(); ++d) {
    const auto row = m.theta.row(d);
    const auto arg = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    agree += arg == best[f.synth.dominant[d]] ? 1 : 0;
  }
  EXPECT_GE(static_cast<double>(agree) / 200.0, 0.8);
}

TEST(Lda, LikelihoodImprovesOverTheRun) {
  auto f = planted(3, 80, 40, 2);
  LdaConfig cfg;
  cfg.themes = 3;
  cfg.alpha = 0.1;
  cfg.iterations = 100;
  const auto m = fit_lda(f.docs, f.vocab, cfg);
  ASSERT_GE(m.log_likelihood_trace.size(), 2u);
  EXPECT_GT(m.log_likelihood_trace.back().second, m.log_likelihood_trace.front().second);
}

TEST(Lda, RejectsEmptyDocsAndTooManyThemes) {
  auto f = planted(2, 5, 10);
  LdaConfig cfg;
  cfg.themes = 2;
  auto docs = f.docs;
  docs[3].tokens.clear();
  try {
    fit_lda(docs, f.vocab, cfg);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(docs[3].id), std::string::npos);
  }
  EXPECT_THROW(fit_lda({}, f.vocab, cfg), DataError);
  cfg.themes = 6;
  EXPECT_THROW(fit_lda(f.docs, f.vocab, cfg), ConfigError);
}

TEST(Presence, ThresholdAndTopM) {
  const std::vector<double> onehot{0, 1, 0}, uni{0.25, 0.25, 0.25, 0.25};
  EXPECT_EQ(theme_presence(onehot, ThresholdRule{0.1}), (std::vector<bool>{false, true, false}));
  EXPECT_EQ(theme_presence(uni, ThresholdRule{0.1}), (std::vector<bool>{true, true, true, true}));
  EXPECT_EQ(theme_presence(uni, TopMRule{1}), (std::vector<bool>{true, false, false, false}));
  EXPECT_THROW(theme_presence(uni, ThresholdRule{0.0}), ConfigError);
  EXPECT_THROW(theme_presence(uni, TopMRule{5}), ConfigError);
}

TEST(TopWords, CyclingThemeOrderingAndFormat) {
  const auto m = tiny_model({0.0932, 0.113, 0.1275, 0.114, 0.119, 0.4333},
                            {"cycling", "jersey", "shorts", "helmet", "cyclist", "other"});
  const auto top = top_words(m, 0, 6);
  std::vector<std::string> order;
  for (const auto& w : top) order.push_back(w.word);
  EXPECT_EQ(order, (std::vector<std::string>{"other", "shorts", "cyclist", "helmet", "jersey", "cycling"}));
  const std::vector<RankedWord> five(top.begin() + 1, top.end());
  EXPECT_EQ(format_top_words(five), "'shorts': 0.1275, 'cyclist': 0.119, 'helmet': 0.114, 'jersey': 0.113, 'cycling': 0.0932");
}

TEST(TopWords, TiesGoToLowerIndex) {
  const auto m = tiny_model({0.25, 0.25, 0.25, 0.25}, {"d", "c", "b", "a"});
  for (int rep = 0; rep < 3; ++rep) {
    const auto top = top_words(m, 0, 4);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(top[i].index, i);
  }
  EXPECT_THROW(top_words(m, 0, 5), ConfigError);
}

TEST(HeldOut, SingleWordSingleTheme) {
  auto m = tiny_model({0.7, 0.3}, {"x", "y"});
  m.alpha = 1.0;
  EXPECT_NEAR(held_out_log_likelihood(m, {{"d", {1}}}), std::log(0.3), 1e-12);
  EXPECT_THROW(held_out_log_likelihood(m, {}), DataError);
}

TEST(HeldOut, TrainingDocsBeatShuffledDocs) {
  auto f = planted(3, 120, 40, 5);
  LdaConfig cfg;
  cfg.themes = 3;
  cfg.alpha = 0.1;
  cfg.iterations = 150;
  const auto m = fit_lda(f.docs, f.vocab, cfg);
  // random-theme documents: tokens drawn uniformly from the vocabulary
  Rng rng(9);
  std::vector<TokenDoc> random_docs;
  for (std::size_t d = 0; d < 40; ++d) {
    TokenDoc doc{"r" + std::to_string(d), {}};
    for (int i = 0; i < 40; ++i) doc.tokens.push_back(uniform_index(rng, f.vocab.size()));
    random_docs.push_back(doc);
  }
  const std::vector<TokenDoc> train(f.docs.begin(), f.docs.begin() + 40);
  const double a = held_out_log_likelihood(m, train), b = held_out_log_likelihood(m, random_docs);
  EXPECT_LE(a, 0.0);
  EXPECT_GT(a, b);
}

TEST(Serialization, ThemeModelRoundTrip) {
  auto f = planted(2, 20, 15);
  LdaConfig cfg;
  cfg.themes = 2;
  cfg.iterations = 20;
  const auto m = fit_lda(f.docs, f.vocab, cfg);
  const auto back = parse_theme_model(render_theme_model(m));
  EXPECT_EQ(back.phi, m.phi);
  EXPECT_EQ(back.theta, m.theta);
  EXPECT_EQ(back.vocabulary, m.vocabulary);
  EXPECT_EQ(back.doc_ids, m.doc_ids);
  EXPECT_EQ(back.alpha, m.alpha);
  EXPECT_EQ(back.seed, m.seed);
  EXPECT_EQ(render_theme_model(back), render_theme_model(m));
}
