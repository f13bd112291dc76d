#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <filesystem>
#include <fstream>
#include <random>

#include "gbias/checkpoint.hpp"
#include "gbias/lstm_lm.hpp"

using namespace gbias;

namespace {

Vocabulary make_vocab(int words) {
  std::vector<std::string> tokens;
  for (int i = 0; i < words; ++i) tokens.push_back("w" + std::to_string(i));
  return Vocabulary::build(tokens, 1);
}

std::vector<WordId> random_ids(std::size_t n, std::size_t vocab, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<WordId> pick(1, static_cast<WordId>(vocab - 1));
  std::vector<WordId> ids(n);
  for (auto& id : ids) id = pick(rng);
  return ids;
}

LmConfig tiny(int hidden = 8, int emb = 8, int layers = 1) {
  LmConfig c;
  c.layers = layers;
  c.hidden = hidden;
  c.emb_dim = emb;
  c.seq_len = 5;
  c.batch = 4;
  c.dropout = 0.0;
  c.learning_rate = 1.0;
  c.epochs = 2;
  return c;
}

// A one-layer network whose output is exactly a bigram table: one-hot
// inputs, saturated gates, and an output layer holding log-probabilities.
LanguageModel bigram_network(const Vocabulary& vocab, const Eigen::MatrixXd& log_p) {
  const auto v = static_cast<Eigen::Index>(vocab.size());
  LmConfig cfg = tiny(static_cast<int>(v), static_cast<int>(v));
  auto p = LstmParameters<double>::zeros(v, v, v, 1);
  p.embedding.setIdentity();
  auto& layer = p.layers[0];
  layer.bias.segment(0, v).setConstant(1000.0);
  layer.bias.segment(v, v).setConstant(-1000.0);
  layer.bias.segment(3 * v, v).setConstant(1000.0);
  layer.w_input.middleRows(2 * v, v).setIdentity();
  p.out_weight = log_p / std::tanh(std::tanh(1.0));
  return LanguageModel(cfg, vocab, std::move(p));
}

}  // namespace

TEST(LanguageModel, ZeroParametersGiveUniformPerplexity) {
  const Vocabulary vocab = make_vocab(40);
  ASSERT_EQ(vocab.size(), 42u);
  const LanguageModel model(tiny(), vocab, LstmParameters<double>::zeros(42, 8, 8, 1));
  const auto ids = random_ids(100, 42, 1);
  EXPECT_NEAR(perplexity_corpus(model, ids), 42.0, 1e-9);
  const std::vector<std::string> sentence{"w1", "w2", "w3"};
  EXPECT_NEAR(perplexity_sentence(model, sentence), 42.0, 1e-9);
}

TEST(LanguageModel, BigramNetworkMatchesCountOracle) {
  const Vocabulary vocab = make_vocab(6);
  const std::size_t v = vocab.size();
  const auto train_ids = random_ids(400, v, 3);
  const double alpha = 0.5;
  std::vector<std::vector<double>> counts(v, std::vector<double>(v, 0.0));
  WordId prev = Vocabulary::kEos;
  for (WordId id : train_ids) {
    counts[static_cast<std::size_t>(prev)][static_cast<std::size_t>(id)] += 1;
    prev = id;
  }
  Eigen::MatrixXd log_p(v, v);  // row: next word, column: previous word
  for (std::size_t w = 0; w < v; ++w) {
    double total = 0;
    for (double c : counts[w]) total += c;
    for (std::size_t u = 0; u < v; ++u) {
      log_p(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(w)) =
          std::log((counts[w][u] + alpha) / (total + alpha * static_cast<double>(v)));
    }
  }
  const LanguageModel model = bigram_network(vocab, log_p);

  const auto test_ids = random_ids(97, v, 4);
  double nll = 0;
  prev = Vocabulary::kEos;
  for (WordId id : test_ids) {
    const std::size_t w = static_cast<std::size_t>(prev), u = static_cast<std::size_t>(id);
    double total = 0;
    for (double c : counts[w]) total += c;
    nll -= std::log((counts[w][u] + alpha) / (total + alpha * static_cast<double>(v)));
    prev = id;
  }
  const double oracle = std::exp(nll / static_cast<double>(test_ids.size()));
  EXPECT_LE(std::abs(perplexity_corpus(model, test_ids) - oracle) / oracle, 1e-10);

  const std::vector<std::string> sentence{"w0", "w3", "w3", "w5"};
  double s_nll = 0;
  std::vector<WordId> s_ids{Vocabulary::kEos};
  for (const auto& t : sentence) s_ids.push_back(vocab.id(t));
  s_ids.push_back(Vocabulary::kEos);
  for (std::size_t k = 1; k < s_ids.size(); ++k) s_nll -= log_p(s_ids[k], s_ids[k - 1]);
  const double s_oracle = std::exp(s_nll / 5.0);
  EXPECT_LE(std::abs(perplexity_sentence(model, sentence) - s_oracle) / s_oracle, 1e-10);
}

TEST(LanguageModel, StateCarriesAcrossCallsAndChunks) {
  const Vocabulary vocab = make_vocab(10);
  LmConfig cfg = tiny();
  const LanguageModel model = init_model(cfg, vocab);
  const std::vector<WordId> ab{3, 7};
  const auto [joint, joint_state] = model.forward(ab, model.zero_state());
  const auto [first, mid] = model.forward(std::span<const WordId>(ab).first(1), model.zero_state());
  const auto [second, end] = model.forward(std::span<const WordId>(ab).subspan(1), mid);
  EXPECT_LE((joint.col(0) - first.col(0)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE((joint.col(1) - second.col(0)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE((joint_state.h[0] - end.h[0]).cwiseAbs().maxCoeff(), 1e-15);

  const auto ids = random_ids(53, vocab.size(), 9);
  cfg.seq_len = 1;
  const LanguageModel one(cfg, vocab, model.params());
  cfg.seq_len = 64;
  const LanguageModel whole(cfg, vocab, model.params());
  const auto a = stream_nll(one, ids), b = stream_nll(whole, ids);
  EXPECT_EQ(a.tokens, 53u);
  EXPECT_NEAR(a.nll, b.nll, 1e-10 * b.nll);
}

TEST(LanguageModel, GradientMatchesFiniteDifferences) {
  const Vocabulary vocab = make_vocab(18);
  ASSERT_EQ(vocab.size(), 20u);
  for (int layers : {1, 2}) {
    const LanguageModel model = init_model(tiny(8, 8, layers), vocab);
    const auto ids = random_ids(6, vocab.size(), 11);
    const auto res = grad_check(model, ids);
    EXPECT_LE(res.max_relative_error, 1e-4) << res.worst_tensor << "[" << res.worst_index << "]";
    EXPECT_GT(res.checked, 0u);
  }
}

TEST(Training, UpdateNormIsBoundedByClip) {
  const Vocabulary vocab = make_vocab(18);
  LmConfig cfg = tiny();
  cfg.learning_rate = 20.0;
  cfg.grad_clip = 0.25;
  LanguageModel model = init_model(cfg, vocab);
  const auto ids = random_ids(400, vocab.size(), 2);
  LstmParameters<double> before = model.params();
  double worst = 0;
  TrainOptions opts;
  opts.on_update = [&](std::uint64_t) {
    double sq = 0;
    auto now = model.params();
    before.for_each([&](const std::string& name, auto& t) {
      now.for_each([&](const std::string& n2, const auto& u) {
        if (n2 == name) sq += (u - t).squaredNorm();
      });
    });
    worst = std::max(worst, std::sqrt(sq));
    before = std::move(now);
  };
  const auto stats = train(model, ids, opts);
  EXPECT_GT(stats.updates, 0u);
  EXPECT_LE(worst, 20.0 * 0.25 * (1 + 1e-9));
  EXPECT_GT(worst, 0.0);
}

TEST(Training, FrozenEmbeddingIsBitwiseUnchanged) {
  const Vocabulary vocab = make_vocab(18);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(vocab.size()), 8);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  const EmbeddingMatrix emb(vocab.words(), m);
  LmConfig cfg = tiny();
  cfg.embedding_mode = EmbeddingMode::FrozenPretrained;
  cfg.dropout = 0.2;
  LanguageModel model = init_model(cfg, vocab, &emb);
  const Eigen::MatrixXd initial = model.params().embedding;
  EXPECT_EQ(initial, m.transpose());
  const Eigen::MatrixXd out_initial = model.params().out_weight;
  train(model, random_ids(300, vocab.size(), 6));
  EXPECT_EQ(model.params().embedding, initial);
  EXPECT_NE(model.params().out_weight, out_initial);
}

TEST(Training, LearnedEmbeddingMoves) {
  const Vocabulary vocab = make_vocab(18);
  LanguageModel model = init_model(tiny(), vocab);
  const Eigen::MatrixXd initial = model.params().embedding;
  train(model, random_ids(300, vocab.size(), 6));
  EXPECT_NE(model.params().embedding, initial);
}

TEST(Training, DeterministicForFixedSeed) {
  const Vocabulary vocab = make_vocab(18);
  LmConfig cfg = tiny();
  cfg.dropout = 0.3;
  const auto ids = random_ids(300, vocab.size(), 7);
  LanguageModel a = init_model(cfg, vocab), b = init_model(cfg, vocab);
  const auto sa = train(a, ids), sb = train(b, ids);
  EXPECT_EQ(sa.epoch_loss, sb.epoch_loss);
  EXPECT_EQ(a.params().out_weight, b.params().out_weight);
}

TEST(Training, LossDecreasesOnRepetitiveStream) {
  const Vocabulary vocab = make_vocab(8);
  std::vector<WordId> ids;
  for (int k = 0; k < 200; ++k)
    for (WordId w = 2; w < 10; ++w) ids.push_back(w);
  LmConfig cfg = tiny(16, 8);
  cfg.epochs = 4;
  LanguageModel model = init_model(cfg, vocab);
  const auto stats = train(model, ids);
  EXPECT_LT(stats.epoch_loss.back(), stats.epoch_loss.front());
  EXPECT_LT(perplexity_corpus(model, ids), 2.0);
}

TEST(Training, DivergenceIsReported) {
  const Vocabulary vocab = make_vocab(18);
  LmConfig cfg = tiny();
  cfg.learning_rate = 1e308;
  cfg.grad_clip = 1e308;
  LanguageModel model = init_model(cfg, vocab);
  try {
    train(model, random_ids(300, vocab.size(), 8));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Divergence);
    EXPECT_EQ(e.exit_code(), 3);
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos) << e.what();
  }
}

TEST(Training, ShortStreamAndBadConfig) {
  const Vocabulary vocab = make_vocab(18);
  LanguageModel model = init_model(tiny(), vocab);
  try {
    train(model, random_ids(5, vocab.size(), 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientData);
  }
  LmConfig bad = tiny();
  bad.dropout = 1.0;
  EXPECT_THROW(bad.validate(), Error);
  EXPECT_THROW(perplexity_corpus(model, std::vector<WordId>{}), Error);
}

TEST(Init, PretrainedMismatchErrors) {
  const Vocabulary vocab = make_vocab(4);
  const EmbeddingMatrix wrong_dim(vocab.words(), Eigen::MatrixXd::Ones(6, 3));
  LmConfig cfg = tiny();
  cfg.embedding_mode = EmbeddingMode::FrozenPretrained;
  try {
    init_model(cfg, vocab, &wrong_dim);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Config);
  }
  std::vector<std::string> words = vocab.words();
  words[3] = "other";
  const EmbeddingMatrix missing(words, Eigen::MatrixXd::Ones(6, 8));
  try {
    init_model(cfg, vocab, &missing);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Lookup);
    EXPECT_NE(std::string(e.what()).find(vocab.word(3)), std::string::npos);
  }
  EXPECT_THROW(init_model(cfg, vocab), Error);
}

TEST(Checkpoint, RoundTripIsExact) {
  const Vocabulary vocab = make_vocab(12);
  LmConfig cfg = tiny(6, 5, 2);
  const LanguageModel model = init_model(cfg, vocab);
  const auto path = std::filesystem::temp_directory_path() / "gbias_test.ckpt";
  save_checkpoint(model, path.string(), Json{{"embedding_source", "learned"}});
  Json meta;
  const LanguageModel back = load_checkpoint(path.string(), &meta);
  EXPECT_EQ(meta.at("embedding_source"), "learned");
  EXPECT_EQ(back.vocab(), vocab);
  EXPECT_EQ(back.config().hidden, 6);
  EXPECT_EQ(back.config().layers, 2);
  model.params().for_each([&](const std::string& name, const auto& t) {
    back.params().for_each([&](const std::string& n2, const auto& u) {
      if (n2 == name) EXPECT_TRUE(t == u) << name;
    });
  });
  const auto ids = random_ids(40, vocab.size(), 3);
  EXPECT_EQ(perplexity_corpus(model, ids), perplexity_corpus(back, ids));
  std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptionIsDetected) {
  const Vocabulary vocab = make_vocab(12);
  const LanguageModel model = init_model(tiny(), vocab);
  const auto path = std::filesystem::temp_directory_path() / "gbias_corrupt.ckpt";
  save_checkpoint(model, path.string());
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  const auto write = [&](const std::string& b) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << b;
  };
  const auto code = [&]() {
    try {
      load_checkpoint(path.string());
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Divergence;
  };
  write(bytes.substr(0, bytes.size() - 8));
  EXPECT_EQ(code(), ErrorCode::Parse);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  write(bad_magic);
  EXPECT_EQ(code(), ErrorCode::Parse);
  write(bytes + "extra");
  EXPECT_EQ(code(), ErrorCode::Parse);
  std::filesystem::remove(path);
  EXPECT_EQ(code(), ErrorCode::Io);
}

TEST(LanguageModel, SoftmaxColumnsAreDistributions) {
  const Vocabulary vocab = make_vocab(18);
  const LanguageModel model = init_model(tiny(8, 8, 2), vocab);
  const auto ids = random_ids(30, vocab.size(), 21);
  const auto [probs, state] = model.forward(ids, model.zero_state());
  EXPECT_GT(probs.minCoeff(), 0.0);
  EXPECT_LE((probs.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-9);
}

TEST(LanguageModel, EvaluationIsDeterministicAndConsistent) {
  const Vocabulary vocab = make_vocab(18);
  const LanguageModel model = init_model(tiny(), vocab);
  const auto ids = random_ids(70, vocab.size(), 22);
  const NllSum a = stream_nll(model, ids), b = stream_nll(model, ids);
  EXPECT_EQ(a.nll, b.nll);
  EXPECT_NEAR(perplexity_corpus(model, ids), std::exp(a.nll / 70.0), 1e-12 * perplexity_corpus(model, ids));
}

TEST(Training, TinyClipBoundsEveryUpdate) {
  const Vocabulary vocab = make_vocab(18);
  LmConfig cfg = tiny();
  cfg.grad_clip = 1e-12;
  LanguageModel model = init_model(cfg, vocab);
  LstmParameters<double> before = model.params();
  double worst = 0;
  TrainOptions opts;
  opts.on_update = [&](std::uint64_t) {
    double sq = 0;
    auto now = model.params();
    std::vector<const double*> a, b;
    std::vector<Eigen::Index> n;
    before.for_each([&](const std::string&, const auto& t) { a.push_back(t.data()); n.push_back(t.size()); });
    now.for_each([&](const std::string&, const auto& t) { b.push_back(t.data()); });
    double rounding = 0;  // each stored entry moves by whole ulps
    for (std::size_t k = 0; k < a.size(); ++k) {
      for (Eigen::Index i = 0; i < n[k]; ++i) {
        sq += (a[k][i] - b[k][i]) * (a[k][i] - b[k][i]);
        const double ulp = std::numeric_limits<double>::epsilon() * std::max(std::abs(a[k][i]), std::abs(b[k][i]));
        rounding += ulp * ulp;
      }
    }
    worst = std::max(worst, std::sqrt(sq) - std::sqrt(rounding));
    before = std::move(now);
  };
  train(model, random_ids(200, vocab.size(), 3), opts);
  EXPECT_LE(worst, cfg.learning_rate * 1e-12);
}

TEST(Training, RepetitiveCorpusLossDropsInTwoEpochs) {
  const Vocabulary vocab = make_vocab(4);
  std::vector<WordId> ids;
  while (ids.size() < 200)
    for (WordId w : {2, 3, 4, 5, 1}) ids.push_back(w);
  LmConfig cfg;
  cfg.layers = 1;
  cfg.hidden = 16;
  cfg.emb_dim = 8;
  cfg.epochs = 2;
  cfg.seq_len = 10;
  cfg.batch = 4;
  cfg.seed = 1;
  LanguageModel model = init_model(cfg, vocab);
  const auto stats = train(model, ids);
  ASSERT_EQ(stats.epoch_loss.size(), 2u);
  EXPECT_LT(stats.epoch_loss[1], stats.epoch_loss[0]);
  for (std::size_t e = 0; e < 2; ++e) EXPECT_NEAR(stats.epoch_perplexity[e], std::exp(stats.epoch_loss[e]), 1e-12 * stats.epoch_perplexity[e]);
}

TEST(Gradient, UnusedEmbeddingColumnsHaveZeroGradient) {
  const Vocabulary vocab = make_vocab(18);
  const auto params = LstmParameters<double>::zeros(20, 8, 8, 2);
  const std::vector<WordId> ids{3, 4, 5, 3};
  const auto g = sequence_gradient(params, ids);
  for (Eigen::Index w = 0; w < 20; ++w) {
    if (w == 3 || w == 4 || w == 5) continue;
    EXPECT_TRUE((g.embedding.col(w).array() == 0.0).all()) << w;
  }
}
