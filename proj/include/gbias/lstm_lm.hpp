#ifndef GBIAS_LSTM_LM_HPP
#define GBIAS_LSTM_LM_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gbias/corpus.hpp"
#include "gbias/embedding.hpp"
#include "gbias/lstm.hpp"

namespace gbias {

enum class EmbeddingMode { Learned, FrozenPretrained };

std::string to_string(EmbeddingMode mode);
EmbeddingMode embedding_mode_from_string(const std::string& s);

struct LmConfig {
  int layers = 2;
  int hidden = 200;
  int emb_dim = 100;
  double dropout = 0.2;
  int seq_len = 35;
  int batch = 20;
  double learning_rate = 20.0;  // applied to the per-token mean loss
  double lr_decay = 0.5;        // factor when an epoch fails to improve
  double grad_clip = 0.25;
  int epochs = 6;
  std::uint64_t seed = 1;
  EmbeddingMode embedding_mode = EmbeddingMode::Learned;
  std::string pretrained_path;  // informational; the matrix is passed to init_model
  bool freeze_pretrained = true;

  void validate() const;
  bool embedding_trainable() const { return embedding_mode == EmbeddingMode::Learned || !freeze_pretrained; }

  static LmConfig desk() { return {}; }
  /// Full-scale settings: 3 x 1150 LSTM, 400-dim embeddings, batch 100,
  /// sequence length 70.
  static LmConfig paper();
};

class LanguageModel {
 public:
  LanguageModel(LmConfig config, Vocabulary vocab, LstmParameters<double> params);

  const LmConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  const LstmParameters<double>& params() const { return params_; }
  LstmParameters<double>& params() { return params_; }

  /// Evaluation-mode forward pass: per-position probability distributions
  /// (|V| x ids.size(), one column per position) and the final state.
  std::pair<Eigen::MatrixXd, LstmState<double>> forward(std::span<const WordId> ids, LstmState<double> state) const;
  LstmState<double> zero_state(Eigen::Index batch = 1) const;

 private:
  LmConfig config_;
  Vocabulary vocab_;
  LstmParameters<double> params_;
};

/// Seeds all weights. `pretrained` must be given exactly in FrozenPretrained
/// mode; its rows are matched to vocabulary words by name.
/// Errors: ErrorCode::Config on dimension mismatch or missing matrix,
/// ErrorCode::Lookup naming a vocabulary word the matrix lacks.
LanguageModel init_model(const LmConfig& cfg, const Vocabulary& vocab, const EmbeddingMatrix* pretrained = nullptr);

struct TrainStats {
  std::vector<double> epoch_loss;        // mean token NLL, natural log
  std::vector<double> epoch_perplexity;  // exp(epoch_loss)
  std::vector<double> epoch_learning_rate;
  std::vector<double> epoch_seconds;
  std::optional<double> validation_perplexity;
  std::uint64_t updates = 0;
};

struct TrainOptions {
  std::span<const WordId> validation;  // optional
  /// Called after every parameter update with the step index.
  std::function<void(std::uint64_t)> on_update;
};

/// Truncated BPTT over `seq_len` windows of `batch` parallel streams, plain
/// SGD with global-norm clipping. Frozen embeddings are never written.
/// ErrorCode::InsufficientData when the stream is too short,
/// ErrorCode::Divergence on a non-finite loss.
TrainStats train(LanguageModel& model, std::span<const WordId> train_ids, const TrainOptions& opts = {});

/// Sum of -ln p over a stream and the number of scored tokens.
struct NllSum {
  double nll = 0.0;
  std::size_t tokens = 0;

  NllSum& operator+=(const NllSum& o) {
    nll += o.nll;
    tokens += o.tokens;
    return *this;
  }
  double perplexity() const { return std::exp(nll / static_cast<double>(tokens)); }
};

/// Scores every id of the stream, the first one conditioned on a leading
/// `<eos>`, with the hidden state carried across seq_len chunks.
NllSum stream_nll(const LanguageModel& model, std::span<const WordId> ids);
/// Zero state, tokens followed by `<eos>`, first token conditioned on `<eos>`.
NllSum sentence_nll(const LanguageModel& model, std::span<const std::string> tokens);

/// ErrorCode::InsufficientData on an empty stream.
double perplexity_corpus(const LanguageModel& model, std::span<const WordId> ids);
/// ErrorCode::InsufficientData on an empty sentence.
double perplexity_sentence(const LanguageModel& model, std::span<const std::string> tokens);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_tensor;
  Eigen::Index worst_index = 0;
  std::size_t checked = 0;
};

/// Loss used by grad_check: mean NLL of ids[1..] given ids[..n-1] from a
/// zero state, without dropout.
double sequence_loss(const LstmParameters<double>& params, std::span<const WordId> ids);
/// Analytic gradient of sequence_loss for every parameter, embeddings included.
LstmParameters<double> sequence_gradient(const LstmParameters<double>& params, std::span<const WordId> ids);

/// Compares every analytic gradient entry with a central difference of step
/// `h`, the loss evaluated in extended precision. Relative error is |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult grad_check(const LanguageModel& model, std::span<const WordId> ids, double h = 1e-5);

}  // namespace gbias

#endif  // GBIAS_LSTM_LM_HPP
