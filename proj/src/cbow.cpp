#include "gbias/cbow.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <random>
#include <thread>

namespace gbias {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Uniform in [0, 1) from the top 53 bits; independent of the standard
// library's distribution implementations.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// log(1 + exp(x)) without overflow.
inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Element access that is a relaxed atomic in racy multi-writer mode.
template <bool Racy>
inline double load(double& x) {
  if constexpr (Racy) {
    return std::atomic_ref<double>(x).load(std::memory_order_relaxed);
  } else {
    return x;
  }
}

template <bool Racy>
inline void add(double& x, double v) {
  if constexpr (Racy) {
    std::atomic_ref<double> r(x);
    r.store(r.load(std::memory_order_relaxed) + v, std::memory_order_relaxed);
  } else {
    x += v;
  }
}

class NoiseSampler {
 public:
  explicit NoiseSampler(const Eigen::VectorXd& probs) : cdf_(static_cast<std::size_t>(probs.size())) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      cdf_[static_cast<std::size_t>(i)] = acc;
    }
  }

  WordId operator()(std::mt19937_64& rng) const {
    const double u = unit_uniform(rng) * cdf_.back();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return static_cast<WordId>(std::min<std::ptrdiff_t>(it - cdf_.begin(), static_cast<std::ptrdiff_t>(cdf_.size()) - 1));
  }

 private:
  std::vector<double> cdf_;
};

struct SharedState {
  RowMatrix input;   // syn0
  RowMatrix output;  // syn1neg
};

struct ChunkResult {
  double loss_sum = 0.0;
  std::uint64_t updates = 0;
  double last_rate = 0.0;
};

// Trains on ids[begin, end) for one epoch. `progress_base` and `total_work`
// drive the linear learning-rate decay across all epochs.
template <bool Racy>
ChunkResult train_chunk(SharedState& state, std::span<const WordId> ids, std::size_t begin, std::size_t end,
                        const std::vector<double>& keep_prob, const NoiseSampler& noise, const CbowConfig& cfg,
                        double progress_base, double total_work, std::mt19937_64& rng) {
  const Eigen::Index dim = state.input.cols();
  std::vector<WordId> stream;
  stream.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    const WordId w = ids[i];
    if (keep_prob[static_cast<std::size_t>(w)] >= 1.0 || unit_uniform(rng) < keep_prob[static_cast<std::size_t>(w)]) {
      stream.push_back(w);
    }
  }

  ChunkResult res;
  std::vector<double> hidden(static_cast<std::size_t>(dim));
  std::vector<double> grad(static_cast<std::size_t>(dim));
  const double span_len = static_cast<double>(end - begin);
  const double rate_range = cfg.learning_rate - cfg.min_learning_rate;
  const auto n = static_cast<std::ptrdiff_t>(stream.size());

  for (std::ptrdiff_t pos = 0; pos < n; ++pos) {
    const double progress = (progress_base + span_len * static_cast<double>(pos) / static_cast<double>(n)) / total_work;
    const double rate = std::max(cfg.min_learning_rate, cfg.learning_rate - rate_range * progress);
    res.last_rate = rate;

    const auto shrink = static_cast<std::ptrdiff_t>(rng() % static_cast<std::uint64_t>(cfg.window));
    const std::ptrdiff_t half = cfg.window - shrink;
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, pos - half);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, pos + half);

    std::fill(hidden.begin(), hidden.end(), 0.0);
    int context = 0;
    for (std::ptrdiff_t c = lo; c <= hi; ++c) {
      if (c == pos) continue;
      double* row = state.input.row(stream[static_cast<std::size_t>(c)]).data();
      for (Eigen::Index d = 0; d < dim; ++d) hidden[static_cast<std::size_t>(d)] += load<Racy>(row[d]);
      ++context;
    }
    if (context == 0) continue;
    for (auto& h : hidden) h /= context;
    std::fill(grad.begin(), grad.end(), 0.0);

    const WordId center = stream[static_cast<std::size_t>(pos)];
    for (int k = 0; k <= cfg.negatives; ++k) {
      WordId target;
      double label;
      if (k == 0) {
        target = center;
        label = 1.0;
      } else {
        target = noise(rng);
        if (target == center) continue;
        label = 0.0;
      }
      double* out = state.output.row(target).data();
      double score = 0.0;
      for (Eigen::Index d = 0; d < dim; ++d) score += hidden[static_cast<std::size_t>(d)] * load<Racy>(out[d]);
      res.loss_sum += label > 0.5 ? softplus(-score) : softplus(score);
      const double g = (label - sigmoid(score)) * rate;
      for (Eigen::Index d = 0; d < dim; ++d) {
        grad[static_cast<std::size_t>(d)] += g * load<Racy>(out[d]);
        add<Racy>(out[d], g * hidden[static_cast<std::size_t>(d)]);
      }
    }
    ++res.updates;

    // Reference-algorithm convention: every context word receives the full
    // accumulated error, not error / context.
    for (std::ptrdiff_t c = lo; c <= hi; ++c) {
      if (c == pos) continue;
      double* row = state.input.row(stream[static_cast<std::size_t>(c)]).data();
      for (Eigen::Index d = 0; d < dim; ++d) add<Racy>(row[d], grad[static_cast<std::size_t>(d)]);
    }
  }
  return res;
}

}  // namespace

void CbowConfig::validate() const {
  const auto fail = [](const std::string& m) { throw Error(ErrorCode::Config, "cbow config: " + m); };
  if (dim <= 0) fail("dim must be positive");
  if (window <= 0) fail("window must be positive");
  if (negatives < 0) fail("negatives must be non-negative");
  if (epochs <= 0) fail("epochs must be positive");
  if (!(learning_rate > 0)) fail("learning_rate must be positive");
  if (!(min_learning_rate > 0) || !(min_learning_rate < learning_rate)) {
    fail("min_learning_rate must be positive and below learning_rate");
  }
  if (min_count < 1) fail("min_count must be positive");
  if (!(subsample_threshold >= 0)) fail("subsample_threshold must be non-negative");
  if (threads <= 0) fail("threads must be positive");
}

Eigen::VectorXd noise_distribution(const Vocabulary& vocab) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(vocab.size()));
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    if (Vocabulary::is_special(static_cast<WordId>(i))) continue;
    p[static_cast<Eigen::Index>(i)] = std::pow(static_cast<double>(vocab.count(static_cast<WordId>(i))), 0.75);
  }
  const double total = p.sum();
  if (total <= 0) throw Error(ErrorCode::InsufficientData, "noise distribution: no non-special word has a count");
  return p / total;
}

EmbeddingMatrix train_cbow(std::span<const WordId> ids, const Vocabulary& vocab, const CbowConfig& cfg,
                           CbowLog* log) {
  cfg.validate();
  if (ids.size() < static_cast<std::size_t>(cfg.window) + 1) {
    throw Error(ErrorCode::InsufficientData, "cbow: corpus of " + std::to_string(ids.size()) +
                                                 " tokens is shorter than window + 1 = " + std::to_string(cfg.window + 1));
  }
  const auto vocab_size = static_cast<Eigen::Index>(vocab.size());
  for (const WordId w : ids) {
    if (w < 0 || w >= vocab_size) throw Error(ErrorCode::Config, "cbow: id " + std::to_string(w) + " outside vocabulary");
  }

  std::vector<std::uint64_t> counts(vocab.size(), 0);
  for (const WordId w : ids) ++counts[static_cast<std::size_t>(w)];
  std::vector<double> keep_prob(vocab.size(), 1.0);
  if (cfg.subsample_threshold > 0) {
    const double threshold = cfg.subsample_threshold * static_cast<double>(ids.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
      if (counts[i] == 0) continue;
      const double c = static_cast<double>(counts[i]);
      keep_prob[i] = (std::sqrt(c / threshold) + 1.0) * threshold / c;
    }
  }
  const NoiseSampler noise(noise_distribution(vocab));

  std::mt19937_64 rng(cfg.seed);
  SharedState state;
  state.input.resize(vocab_size, cfg.dim);
  const double half_range = 0.5 / cfg.dim;
  for (Eigen::Index i = 0; i < state.input.size(); ++i) {
    state.input.data()[i] = (unit_uniform(rng) * 2.0 - 1.0) * half_range;
  }
  state.output = RowMatrix::Zero(vocab_size, cfg.dim);

  const double total_work = static_cast<double>(ids.size()) * cfg.epochs;
  std::vector<std::mt19937_64> thread_rngs;
  for (int t = 0; t < cfg.threads; ++t) thread_rngs.emplace_back(cfg.seed + 0x9e3779b97f4a7c15ULL * (t + 1));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double base = static_cast<double>(ids.size()) * epoch;
    ChunkResult total;
    if (cfg.threads == 1) {
      total = train_chunk<false>(state, ids, 0, ids.size(), keep_prob, noise, cfg, base, total_work, rng);
    } else {
      std::vector<ChunkResult> parts(static_cast<std::size_t>(cfg.threads));
      std::vector<std::thread> workers;
      const std::size_t per = (ids.size() + cfg.threads - 1) / cfg.threads;
      for (int t = 0; t < cfg.threads; ++t) {
        const std::size_t b = std::min(ids.size(), per * t);
        const std::size_t e = std::min(ids.size(), b + per);
        workers.emplace_back([&, t, b, e] {
          const double chunk_scale = static_cast<double>(ids.size()) / std::max<double>(1.0, static_cast<double>(e - b));
          parts[static_cast<std::size_t>(t)] = train_chunk<true>(state, ids, b, e, keep_prob, noise, cfg, base / chunk_scale,
                                                                 total_work / chunk_scale, thread_rngs[static_cast<std::size_t>(t)]);
        });
      }
      for (auto& w : workers) w.join();
      for (const auto& p : parts) {
        total.loss_sum += p.loss_sum;
        total.updates += p.updates;
        total.last_rate = std::max(total.last_rate, p.last_rate);
      }
    }
    const double mean_loss = total.updates ? total.loss_sum / static_cast<double>(total.updates) : 0.0;
    if (!std::isfinite(mean_loss) || !state.input.allFinite() || !state.output.allFinite()) {
      throw Error(ErrorCode::Divergence, "cbow diverged in epoch " + std::to_string(epoch + 1) +
                                             " at learning rate " + std::to_string(total.last_rate));
    }
    if (log) {
      log->epoch_loss.push_back(mean_loss);
      log->epoch_learning_rate.push_back(total.last_rate);
      log->epoch_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
  }

  return EmbeddingMatrix(vocab.words(), Eigen::MatrixXd(state.input));
}

}  // namespace gbias
