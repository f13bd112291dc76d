#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "gbias/cbow.hpp"
#include "gbias/embedding.hpp"

using namespace gbias;

namespace {

// Two interchangeable groups: a-words only ever appear between "x" markers,
// b-words only between "y" markers.
std::vector<std::string> two_group_corpus(std::uint64_t seed, int sentences) {
  std::mt19937_64 rng(seed);
  std::vector<std::string> toks;
  for (int s = 0; s < sentences; ++s) {
    const bool a = rng() % 2 == 0;
    const std::string g = a ? "a" : "b";
    const std::string m = a ? "x" : "y";
    toks.push_back(m + std::to_string(rng() % 3));
    toks.push_back(m + std::to_string(rng() % 3));
    toks.push_back(g + std::to_string(rng() % 5));
    toks.push_back(m + std::to_string(rng() % 3));
    toks.push_back(m + std::to_string(rng() % 3));
    toks.push_back("<eos>");
  }
  return toks;
}

EmbeddingMatrix small(std::initializer_list<std::pair<const char*, std::vector<double>>> rows) {
  std::vector<std::string> words;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->second.size()));
  Eigen::Index r = 0;
  for (const auto& [w, v] : rows) {
    words.emplace_back(w);
    for (std::size_t c = 0; c < v.size(); ++c) m(r, static_cast<Eigen::Index>(c)) = v[c];
    ++r;
  }
  return EmbeddingMatrix(words, m);
}

}  // namespace

TEST(Cosine, BasicValues) {
  Eigen::Vector2d e1(1, 0), e2(0, 1), v(0.3, -2.0);
  EXPECT_DOUBLE_EQ(cosine(v, v), 1.0);
  EXPECT_DOUBLE_EQ(cosine(e1, e2), 0.0);
  EXPECT_DOUBLE_EQ(cosine(e1, Eigen::Vector2d(-1, 0)), -1.0);
}

TEST(Cosine, ZeroVectorIsDegenerate) {
  try {
    cosine(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Degenerate);
  }
}

TEST(Cosine, ScaleInvariance) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1), s(0.01, 100);
  for (int t = 0; t < 200; ++t) {
    Eigen::VectorXd a(7), b(7);
    for (int i = 0; i < 7; ++i) {
      a[i] = u(rng);
      b[i] = u(rng);
    }
    const double alpha = s(rng), beta = s(rng);
    EXPECT_NEAR(cosine(a, b), cosine((alpha * a).eval(), (beta * b).eval()), 1e-12);
  }
}

TEST(Neighbors, KZeroAndFullList) {
  const auto emb = small({{"a", {1, 0}}, {"b", {1, 0.1}}, {"c", {0, 1}}, {"d", {-1, 0}}});
  EXPECT_TRUE(nearest_neighbors(emb, "a", 0).empty());
  const auto all = nearest_neighbors(emb, "a", 10);
  ASSERT_EQ(all.size(), 3u);
  EXPECT_EQ(all[0].first, "b");
  EXPECT_EQ(all[1].first, "c");
  EXPECT_EQ(all[2].first, "d");
  for (std::size_t i = 1; i < all.size(); ++i) EXPECT_GE(all[i - 1].second, all[i].second);
}

TEST(Neighbors, TiesBrokenByRow) {
  const auto emb = small({{"q", {1, 0}}, {"z", {0, 1}}, {"m", {0, -1}}, {"a", {0, 2}}});
  const auto n = nearest_neighbors(emb, "q", 3);
  EXPECT_EQ(n[0].first, "z");
  EXPECT_EQ(n[1].first, "m");
  EXPECT_EQ(n[2].first, "a");
}

TEST(Neighbors, UnknownWordIsLookupError) {
  const auto emb = small({{"a", {1, 0}}});
  try {
    nearest_neighbors(emb, "nope", 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Lookup);
  }
}

TEST(NormalizeRows, ScalesToUnitNorm) {
  const auto n = normalize_rows(small({{"a", {3, 4}}, {"b", {0, 2}}}));
  EXPECT_TRUE(n.normalized());
  EXPECT_NEAR(n.vectors()(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(n.vectors()(0, 1), 0.8, 1e-15);
  const auto again = normalize_rows(n);
  EXPECT_LE((again.vectors() - n.vectors()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(NormalizeRows, ZeroRowNamesWord) {
  try {
    normalize_rows(small({{"a", {3, 4}}, {"hollow", {0, 0}}}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Degenerate);
    EXPECT_NE(std::string(e.what()).find("hollow"), std::string::npos);
  }
}

TEST(EmbeddingText, RoundTrip) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd(0, 1);
  Eigen::MatrixXd m(6, 5);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng) * std::pow(10.0, static_cast<double>(i % 7) - 3);
  const EmbeddingMatrix emb({"<unk>", "<eos>", "a", "b", "c", "d"}, m);
  std::stringstream ss;
  save_text(emb, ss);
  std::string header;
  std::getline(std::stringstream(ss.str()), header);
  EXPECT_EQ(header, "6 5");
  const auto back = load_text(ss);
  EXPECT_EQ(back.words(), emb.words());
  EXPECT_LE((back.vectors() - m).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(EmbeddingText, ParseErrorsCarryLineNumbers) {
  const auto parse_error = [](const std::string& text, const std::string& needle) {
    std::istringstream in(text);
    try {
      load_text(in);
      ADD_FAILURE() << "expected a parse error for: " << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::Parse);
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  parse_error("", "header");
  parse_error("2 5\na 1 2 3 4 5\nb 1 2 3 4\n", "line 3");
  parse_error("1 2\na 1 x\n", "line 2");
  parse_error("1 2\na 1 2\nb 3 4\n", "line 3");
  parse_error("3 2\na 1 2\n", "rows");
}

TEST(Cbow, ShapeAndFiniteness) {
  const auto toks = two_group_corpus(1, 200);
  const auto vocab = Vocabulary::build(toks, 1);
  CbowConfig cfg;
  cfg.dim = 10;
  cfg.epochs = 2;
  const auto emb = train_cbow(encode(toks, vocab), vocab, cfg);
  EXPECT_EQ(emb.rows(), static_cast<Eigen::Index>(vocab.size()));
  EXPECT_EQ(emb.dim(), 10);
  EXPECT_TRUE(emb.all_finite());
  EXPECT_EQ(emb.words(), vocab.words());
}

TEST(Cbow, DeterministicForFixedSeed) {
  const auto toks = two_group_corpus(2, 300);
  const auto vocab = Vocabulary::build(toks, 1);
  const auto ids = encode(toks, vocab);
  CbowConfig cfg;
  cfg.dim = 16;
  const auto a = train_cbow(ids, vocab, cfg);
  const auto b = train_cbow(ids, vocab, cfg);
  EXPECT_TRUE(a.vectors() == b.vectors());
  cfg.seed = 2;
  const auto c = train_cbow(ids, vocab, cfg);
  EXPECT_FALSE(a.vectors() == c.vectors());
}

TEST(Cbow, TwoGroupsSeparate) {
  const auto toks = two_group_corpus(1, 4000);
  const auto vocab = Vocabulary::build(toks, 1);
  CbowConfig cfg;
  cfg.dim = 20;
  cfg.seed = 1;
  cfg.subsample_threshold = 0;
  const auto emb = train_cbow(encode(toks, vocab), vocab, cfg);
  double within = 0, across = 0;
  int nw = 0, na = 0;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      const auto ai = emb.row(emb.index_of("a" + std::to_string(i)));
      const auto bi = emb.row(emb.index_of("b" + std::to_string(i)));
      const auto aj = emb.row(emb.index_of("a" + std::to_string(j)));
      const auto bj = emb.row(emb.index_of("b" + std::to_string(j)));
      if (i < j) {
        within += cosine(ai, aj) + cosine(bi, bj);
        nw += 2;
      }
      across += cosine(ai, bj);
      ++na;
    }
  }
  EXPECT_GE(within / nw - across / na, 0.2);
  for (int i = 0; i < 5; ++i) {
    const std::string w = "a" + std::to_string(i);
    EXPECT_EQ(nearest_neighbors(emb, w, 1)[0].first[0], 'a') << w;
  }
}

TEST(Cbow, TooShortCorpus) {
  const auto toks = two_group_corpus(1, 1);
  const auto vocab = Vocabulary::build(toks, 1);
  CbowConfig cfg;
  cfg.window = 6;
  try {
    train_cbow(encode(toks, vocab), vocab, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientData);
  }
}

TEST(Cbow, DivergenceReportsEpoch) {
  const auto toks = two_group_corpus(3, 500);
  const auto vocab = Vocabulary::build(toks, 1);
  CbowConfig cfg;
  cfg.dim = 8;
  cfg.learning_rate = 1e300;
  cfg.min_learning_rate = 1e299;
  cfg.subsample_threshold = 0;
  try {
    train_cbow(encode(toks, vocab), vocab, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Divergence);
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos) << e.what();
  }
}

TEST(Cbow, ConfigValidation) {
  CbowConfig cfg;
  cfg.dim = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = CbowConfig{};
  cfg.min_learning_rate = cfg.learning_rate;
  EXPECT_THROW(cfg.validate(), Error);
  EXPECT_NO_THROW(CbowConfig::desk().validate());
  EXPECT_EQ(CbowConfig::paper().dim, 400);
}

TEST(NoiseDistribution, ProportionalToCountPowerOverNonSpecials) {
  const auto toks = two_group_corpus(4, 100);
  const auto vocab = Vocabulary::build(toks, 1);
  const auto p = noise_distribution(vocab);
  EXPECT_NEAR(p.sum(), 1.0, 1e-12);
  EXPECT_EQ(p[Vocabulary::kUnk], 0.0);
  EXPECT_EQ(p[Vocabulary::kEos], 0.0);
  double z = 0;
  for (std::size_t i = 2; i < vocab.size(); ++i) z += std::pow(static_cast<double>(vocab.count(static_cast<WordId>(i))), 0.75);
  for (std::size_t i = 2; i < vocab.size(); ++i) {
    EXPECT_NEAR(p[static_cast<Eigen::Index>(i)], std::pow(static_cast<double>(vocab.count(static_cast<WordId>(i))), 0.75) / z, 1e-15);
  }
}
