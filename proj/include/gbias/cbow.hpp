#ifndef GBIAS_CBOW_HPP
#define GBIAS_CBOW_HPP

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gbias/corpus.hpp"
#include "gbias/embedding.hpp"

namespace gbias {

struct CbowConfig {
  int dim = 100;
  int window = 5;      // context half-width
  int negatives = 5;   // noise words per target
  int epochs = 5;
  double learning_rate = 0.025;
  double min_learning_rate = 1e-4;
  std::uint64_t min_count = 1;
  std::uint64_t seed = 1;
  double subsample_threshold = 1e-4;  // 0 disables
  int threads = 1;  // > 1 enables lock-free racy updates (nondeterministic)

  /// ErrorCode::Config on any out-of-range field.
  void validate() const;

  static CbowConfig desk() { return {}; }
  static CbowConfig paper() {
    CbowConfig c;
    c.dim = 400;
    return c;
  }
};

struct CbowLog {
  std::vector<double> epoch_loss;           // mean negative-sampling loss per update
  std::vector<double> epoch_learning_rate;  // rate at the end of each epoch
  std::vector<double> epoch_seconds;
};

/// Noise distribution for negative sampling: count^0.75, normalized over
/// non-special words. Specials get probability zero.
Eigen::VectorXd noise_distribution(const Vocabulary& vocab);

/// CBOW with negative sampling. Returns the input-side vectors, one row per
/// vocabulary word. Bit-reproducible for a fixed seed when threads == 1.
/// Errors: ErrorCode::InsufficientData when ids.size() < window + 1,
/// ErrorCode::Divergence when the loss becomes non-finite.
EmbeddingMatrix train_cbow(std::span<const WordId> ids, const Vocabulary& vocab, const CbowConfig& cfg,
                           CbowLog* log = nullptr);

}  // namespace gbias

#endif  // GBIAS_CBOW_HPP
