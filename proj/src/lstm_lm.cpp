#include "gbias/lstm_lm.hpp"

#include <algorithm>
#include <cassert>
#include <chrono>
#include <random>

#include "gbias/error.hpp"

namespace gbias {

namespace {

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <typename Tensor>
void fill_uniform(Tensor& t, double bound, std::mt19937_64& rng) {
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = (2.0 * unit_uniform(rng) - 1.0) * bound;
}

// Builds (inputs, targets) blocks of one row for a single stream.
void single_lane(std::span<const WordId> inputs, std::span<const WordId> targets, IdBlock& in, IdBlock& out) {
  assert(inputs.size() == targets.size());
  const auto n = static_cast<Eigen::Index>(inputs.size());
  in.resize(1, n);
  out.resize(1, n);
  for (Eigen::Index t = 0; t < n; ++t) {
    in(0, t) = inputs[static_cast<std::size_t>(t)];
    out(0, t) = targets[static_cast<std::size_t>(t)];
  }
}

void check_ids(std::span<const WordId> ids, std::size_t vocab_size) {
  for (const WordId w : ids) {
    if (w < 0 || static_cast<std::size_t>(w) >= vocab_size) {
      throw Error(ErrorCode::Config, "token id " + std::to_string(w) + " outside vocabulary of size " +
                                         std::to_string(vocab_size));
    }
  }
}

struct TensorView {
  std::string name;
  double* data;
  Eigen::Index size;
};

std::vector<TensorView> views(LstmParameters<double>& p) {
  std::vector<TensorView> out;
  p.for_each([&](const std::string& name, auto& t) { out.push_back({name, t.data(), t.size()}); });
  return out;
}

}  // namespace

std::string to_string(EmbeddingMode mode) {
  return mode == EmbeddingMode::Learned ? "learned" : "frozen_pretrained";
}

EmbeddingMode embedding_mode_from_string(const std::string& s) {
  if (s == "learned") return EmbeddingMode::Learned;
  if (s == "frozen_pretrained" || s == "frozen" || s == "pretrained") return EmbeddingMode::FrozenPretrained;
  throw Error(ErrorCode::Config, "unknown embedding mode '" + s + "'");
}

void LmConfig::validate() const {
  const auto fail = [](const std::string& m) { throw Error(ErrorCode::Config, "lm config: " + m); };
  if (layers <= 0) fail("layers must be positive");
  if (hidden <= 0) fail("hidden must be positive");
  if (emb_dim <= 0) fail("emb_dim must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (seq_len <= 0) fail("seq_len must be positive");
  if (batch <= 0) fail("batch must be positive");
  if (!(learning_rate > 0)) fail("learning_rate must be positive");
  if (!(lr_decay > 0 && lr_decay <= 1)) fail("lr_decay must lie in (0, 1]");
  if (!(grad_clip > 0)) fail("grad_clip must be positive");
  if (epochs <= 0) fail("epochs must be positive");
}

LmConfig LmConfig::paper() {
  LmConfig c;
  c.layers = 3;
  c.hidden = 1150;
  c.emb_dim = 400;
  c.dropout = 0.2;
  c.seq_len = 70;
  c.batch = 100;
  return c;
}

LanguageModel::LanguageModel(LmConfig config, Vocabulary vocab, LstmParameters<double> params)
    : config_(std::move(config)), vocab_(std::move(vocab)), params_(std::move(params)) {
  const auto v = static_cast<Eigen::Index>(vocab_.size());
  if (params_.vocab_size() != v || params_.embedding.cols() != v || params_.out_bias.size() != v) {
    throw Error(ErrorCode::Config, "language model parameters do not match vocabulary size " + std::to_string(v));
  }
  if (params_.emb_dim() != config_.emb_dim || params_.hidden() != config_.hidden ||
      params_.num_layers() != config_.layers) {
    throw Error(ErrorCode::Config, "language model parameters do not match config shapes");
  }
}

LstmState<double> LanguageModel::zero_state(Eigen::Index batch) const {
  return LstmState<double>::zeros(config_.layers, config_.hidden, batch);
}

std::pair<Eigen::MatrixXd, LstmState<double>> LanguageModel::forward(std::span<const WordId> ids,
                                                                     LstmState<double> state) const {
  check_ids(ids, vocab_.size());
  if (ids.empty()) return {Eigen::MatrixXd(static_cast<Eigen::Index>(vocab_.size()), 0), std::move(state)};
  IdBlock in, unused;
  single_lane(ids, ids, in, unused);
  ForwardCache<double> cache;
  lstm_forward(params_, in, state, cache);
  return {cache.log_probs.array().exp().matrix(), std::move(state)};
}

LanguageModel init_model(const LmConfig& cfg, const Vocabulary& vocab, const EmbeddingMatrix* pretrained) {
  cfg.validate();
  const bool frozen = cfg.embedding_mode == EmbeddingMode::FrozenPretrained;
  if (frozen && !pretrained) throw Error(ErrorCode::Config, "FrozenPretrained mode requires a pre-trained embedding");
  if (!frozen && pretrained) throw Error(ErrorCode::Config, "Learned mode does not take a pre-trained embedding");

  const auto v = static_cast<Eigen::Index>(vocab.size());
  auto params = LstmParameters<double>::zeros(v, cfg.emb_dim, cfg.hidden, cfg.layers);
  std::mt19937_64 rng(cfg.seed);

  if (frozen) {
    if (pretrained->dim() != cfg.emb_dim) {
      throw Error(ErrorCode::Config, "pre-trained embedding dimension " + std::to_string(pretrained->dim()) +
                                         " does not match emb_dim " + std::to_string(cfg.emb_dim));
    }
    for (Eigen::Index w = 0; w < v; ++w) {
      const auto& word = vocab.word(static_cast<WordId>(w));
      const auto row = pretrained->find(word);
      if (!row) throw Error(ErrorCode::Lookup, "vocabulary word '" + word + "' missing from pre-trained embedding");
      params.embedding.col(w) = pretrained->row(*row).transpose();
    }
  } else {
    fill_uniform(params.embedding, 0.1, rng);
  }

  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
  for (auto& layer : params.layers) {
    fill_uniform(layer.w_input, bound, rng);
    fill_uniform(layer.w_recurrent, bound, rng);
    fill_uniform(layer.bias, bound, rng);
  }
  fill_uniform(params.out_weight, bound, rng);
  return LanguageModel(cfg, vocab, std::move(params));
}

TrainStats train(LanguageModel& model, std::span<const WordId> train_ids, const TrainOptions& opts) {
  const LmConfig& cfg = model.config();
  cfg.validate();
  check_ids(train_ids, model.vocab().size());
  const auto n = train_ids.size();
  if (n < static_cast<std::size_t>(cfg.seq_len) + 1) {
    throw Error(ErrorCode::InsufficientData, "training stream of " + std::to_string(n) +
                                                 " tokens is shorter than seq_len + 1 = " + std::to_string(cfg.seq_len + 1));
  }

  // Lanes are contiguous slices; each must hold at least one full window.
  const auto lanes = static_cast<Eigen::Index>(
      std::max<std::size_t>(1, std::min<std::size_t>(cfg.batch, n / (static_cast<std::size_t>(cfg.seq_len) + 1))));
  const auto lane_len = static_cast<Eigen::Index>(n / static_cast<std::size_t>(lanes));
  const auto lane = [&](Eigen::Index b, Eigen::Index i) {
    return train_ids[static_cast<std::size_t>(b * lane_len + i)];
  };

  const bool train_embedding = cfg.embedding_trainable();
  LstmParameters<double>& params = model.params();
  LstmParameters<double> grads = params;
  std::mt19937_64 rng(cfg.seed ^ 0x5851f42d4c957f2dULL);
  const Dropout<double> dropout{cfg.dropout, &rng};

  TrainStats stats;
  double rate = cfg.learning_rate;
  double best = std::numeric_limits<double>::infinity();
  ForwardCache<double> cache;
  IdBlock inputs, targets;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    auto state = LstmState<double>::zeros(cfg.layers, cfg.hidden, lanes);
    double epoch_nll = 0.0;
    std::size_t epoch_tokens = 0;
    std::uint64_t step = 0;

    for (Eigen::Index pos = 0; pos < lane_len - 1; pos += cfg.seq_len) {
      const Eigen::Index steps = std::min<Eigen::Index>(cfg.seq_len, lane_len - 1 - pos);
      inputs.resize(lanes, steps);
      targets.resize(lanes, steps);
      for (Eigen::Index b = 0; b < lanes; ++b) {
        for (Eigen::Index t = 0; t < steps; ++t) {
          inputs(b, t) = lane(b, pos + t);
          targets(b, t) = lane(b, pos + t + 1);
        }
      }

      lstm_forward(params, inputs, state, cache, dropout);
      const double nll = lstm_nll(cache, targets);
      if (!std::isfinite(nll)) {
        throw Error(ErrorCode::Divergence, "language model diverged: non-finite loss in epoch " +
                                               std::to_string(epoch + 1) + ", step " + std::to_string(step + 1));
      }
      const auto tokens = static_cast<std::size_t>(steps * lanes);
      epoch_nll += nll;
      epoch_tokens += tokens;

      grads.set_zero();
      lstm_backward(params, cache, targets, 1.0 / static_cast<double>(tokens), grads, train_embedding);

      double sq = 0.0;
      grads.for_each([&](const std::string& name, const auto& g) {
        if (name != "embedding" || train_embedding) sq += g.squaredNorm();
      });
      const double norm = std::sqrt(sq);
      const double clip = norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0;
      const double step_size = rate * clip;

      auto gv = views(grads);
      auto pv = views(params);
      for (std::size_t k = 0; k < pv.size(); ++k) {
        if (pv[k].name == "embedding" && !train_embedding) continue;
        Eigen::Map<Eigen::VectorXd>(pv[k].data, pv[k].size) -= step_size * Eigen::Map<Eigen::VectorXd>(gv[k].data, gv[k].size);
      }
      if (!params.all_finite()) {
        throw Error(ErrorCode::Divergence, "language model diverged: non-finite parameter in epoch " +
                                               std::to_string(epoch + 1) + ", step " + std::to_string(step + 1));
      }
      ++step;
      ++stats.updates;
      if (opts.on_update) opts.on_update(stats.updates);
    }

    const double loss = epoch_nll / static_cast<double>(epoch_tokens);
    stats.epoch_loss.push_back(loss);
    stats.epoch_perplexity.push_back(std::exp(loss));
    stats.epoch_learning_rate.push_back(rate);
    stats.epoch_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());

    double monitored = loss;
    if (!opts.validation.empty()) {
      monitored = std::log(perplexity_corpus(model, opts.validation));
      stats.validation_perplexity = std::exp(monitored);
    }
    if (monitored >= best) rate *= cfg.lr_decay;
    best = std::min(best, monitored);
  }
  return stats;
}

NllSum stream_nll(const LanguageModel& model, std::span<const WordId> ids) {
  check_ids(ids, model.vocab().size());
  NllSum total;
  auto state = model.zero_state();
  ForwardCache<double> cache;
  IdBlock in, out;
  const std::size_t chunk = static_cast<std::size_t>(model.config().seq_len);
  WordId previous = Vocabulary::kEos;
  for (std::size_t begin = 0; begin < ids.size(); begin += chunk) {
    const std::size_t len = std::min(chunk, ids.size() - begin);
    std::vector<WordId> inputs(len);
    inputs[0] = previous;
    for (std::size_t i = 1; i < len; ++i) inputs[i] = ids[begin + i - 1];
    single_lane(inputs, ids.subspan(begin, len), in, out);
    lstm_forward(model.params(), in, state, cache);
    total.nll += lstm_nll(cache, out);
    total.tokens += len;
    previous = ids[begin + len - 1];
  }
  return total;
}

NllSum sentence_nll(const LanguageModel& model, std::span<const std::string> tokens) {
  std::vector<WordId> inputs{Vocabulary::kEos};
  std::vector<WordId> targets;
  for (const auto& t : tokens) {
    const WordId id = model.vocab().id(t);
    inputs.push_back(id);
    targets.push_back(id);
  }
  targets.push_back(Vocabulary::kEos);
  IdBlock in, out;
  single_lane(inputs, targets, in, out);
  auto state = model.zero_state();
  ForwardCache<double> cache;
  lstm_forward(model.params(), in, state, cache);
  return {lstm_nll(cache, out), targets.size()};
}

double perplexity_corpus(const LanguageModel& model, std::span<const WordId> ids) {
  if (ids.empty()) throw Error(ErrorCode::InsufficientData, "perplexity of an empty stream is undefined");
  return stream_nll(model, ids).perplexity();
}

double perplexity_sentence(const LanguageModel& model, std::span<const std::string> tokens) {
  if (tokens.empty()) throw Error(ErrorCode::InsufficientData, "perplexity of an empty sentence is undefined");
  return sentence_nll(model, tokens).perplexity();
}

namespace {

void sequence_blocks(std::span<const WordId> ids, IdBlock& in, IdBlock& out) {
  if (ids.size() < 2) throw Error(ErrorCode::InsufficientData, "sequence loss needs at least two tokens");
  single_lane(ids.first(ids.size() - 1), ids.subspan(1), in, out);
}

template <typename Scalar>
Scalar sequence_loss_as(const LstmParameters<Scalar>& params, std::span<const WordId> ids) {
  IdBlock in, out;
  sequence_blocks(ids, in, out);
  auto state = LstmState<Scalar>::zeros(params.num_layers(), params.hidden(), 1);
  ForwardCache<Scalar> cache;
  lstm_forward(params, in, state, cache);
  return lstm_nll(cache, out) / static_cast<Scalar>(in.cols());
}

LstmParameters<long double> widen(const LstmParameters<double>& p) {
  LstmParameters<long double> q;
  q.embedding = p.embedding.cast<long double>();
  for (const auto& l : p.layers) {
    q.layers.push_back({l.w_input.cast<long double>(), l.w_recurrent.cast<long double>(), l.bias.cast<long double>()});
  }
  q.out_weight = p.out_weight.cast<long double>();
  q.out_bias = p.out_bias.cast<long double>();
  return q;
}

}  // namespace

double sequence_loss(const LstmParameters<double>& params, std::span<const WordId> ids) {
  return sequence_loss_as(params, ids);
}

LstmParameters<double> sequence_gradient(const LstmParameters<double>& params, std::span<const WordId> ids) {
  IdBlock in, out;
  sequence_blocks(ids, in, out);
  auto state = LstmState<double>::zeros(params.num_layers(), params.hidden(), 1);
  ForwardCache<double> cache;
  lstm_forward(params, in, state, cache);
  LstmParameters<double> grads = params;
  grads.set_zero();
  lstm_backward(params, cache, out, 1.0 / static_cast<double>(in.cols()), grads, true);
  return grads;
}

GradCheckResult grad_check(const LanguageModel& model, std::span<const WordId> ids, double h) {
  check_ids(ids, model.vocab().size());
  LstmParameters<double> params = model.params();
  LstmParameters<double> analytic = sequence_gradient(params, ids);
  auto pv = views(params);
  auto gv = views(analytic);

  GradCheckResult res;
  for (std::size_t k = 0; k < pv.size(); ++k) {
    for (Eigen::Index i = 0; i < pv[k].size; ++i) {
      double& w = pv[k].data[i];
      const double saved = w;
      const double up = saved + h;
      const double down = saved - h;
      w = up;
      const long double plus = sequence_loss_as(widen(params), ids);
      w = down;
      const long double minus = sequence_loss_as(widen(params), ids);
      w = saved;
      const double numeric = static_cast<double>((plus - minus) / (static_cast<long double>(up) - down));
      const double a = gv[k].data[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (rel > res.max_relative_error) {
        res.max_relative_error = rel;
        res.worst_tensor = pv[k].name;
        res.worst_index = i;
      }
      ++res.checked;
    }
  }
  return res;
}

}  // namespace gbias
