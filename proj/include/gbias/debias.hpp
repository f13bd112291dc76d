#ifndef GBIAS_DEBIAS_HPP
#define GBIAS_DEBIAS_HPP

#include <cmath>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gbias/embedding.hpp"
#include "gbias/error.hpp"

namespace gbias {

// ---------------------------------------------------------------------------
// Geometric kernels. Templated on the Eigen expression so they apply to any
// dense scalar type; the word-level API below instantiates them with double.

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// w - (w.g) g for unit g.
template <typename DerivedW, typename DerivedG>
Vec<typename DerivedW::Scalar> reject_from(const Eigen::MatrixBase<DerivedW>& w, const Eigen::MatrixBase<DerivedG>& g) {
  return w - w.dot(g) * g;
}

/// Leading principal direction of the rows of `rows` (leading right-singular
/// vector) and the share of total squared norm it captures.
template <typename Derived>
std::pair<Vec<typename Derived::Scalar>, typename Derived::Scalar> leading_direction(
    const Eigen::MatrixBase<Derived>& rows) {
  using Scalar = typename Derived::Scalar;
  Eigen::JacobiSVD<Mat<Scalar>> svd(rows, Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const Scalar total = s.squaredNorm();
  return {svd.matrixV().col(0), total > Scalar(0) ? s[0] * s[0] / total : Scalar(0)};
}

/// Equalizes one pair about the unit direction g. Both outputs are unit
/// norm, share the g-orthogonal part of their midpoint, and sit on opposite
/// sides along g. Returns false, leaving the outputs untouched, when either
/// word is within `cutoff` of the midpoint along g.
template <typename DerivedA, typename DerivedB, typename DerivedG>
bool equalize_pair(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
                   const Eigen::MatrixBase<DerivedG>& g, Vec<typename DerivedA::Scalar>& a_out,
                   Vec<typename DerivedA::Scalar>& b_out, typename DerivedA::Scalar cutoff) {
  using Scalar = typename DerivedA::Scalar;
  const Vec<Scalar> mu = (a + b) / Scalar(2);
  const Vec<Scalar> mu_b = mu.dot(g) * g;
  const Vec<Scalar> nu = mu - mu_b;
  const Vec<Scalar> a_off = a.dot(g) * g - mu_b;
  const Vec<Scalar> b_off = b.dot(g) * g - mu_b;
  const Scalar na = a_off.norm();
  const Scalar nb = b_off.norm();
  if (na < cutoff || nb < cutoff) return false;
  const Scalar scale = std::sqrt(std::max(Scalar(0), Scalar(1) - nu.squaredNorm()));
  a_out = nu + scale * a_off / na;
  b_out = nu + scale * b_off / nb;
  return true;
}

// ---------------------------------------------------------------------------
// Word-level operations.

using WordPair = std::pair<std::string, std::string>;  // (female, male)

struct GenderSubspace {
  Eigen::VectorXd direction;  // unit; positive pole is male
  double explained_variance_ratio = 0.0;
  std::size_t pairs_used = 0;
};

struct WordSets {
  std::vector<WordPair> definitional_pairs;
  std::vector<WordPair> equality_pairs;
  /// Unset means every vocabulary word outside all gendered lists; an
  /// explicitly empty set neutralizes nothing.
  std::optional<std::set<std::string>> neutral_words;
  /// Extra gendered words that are neither neutralized nor paired.
  std::set<std::string> gendered_words;

  /// Every word appearing in a pair or in gendered_words.
  std::set<std::string> all_gendered() const;
  /// ErrorCode::Config when a pair repeats a word or a definitional word is
  /// listed as neutral.
  void validate() const;

  static WordSets defaults();
};

/// Receives messages about skipped pairs. Defaults to stderr.
using WarningSink = std::function<void(const std::string&)>;
void default_warning(const std::string& message);

constexpr double kDegenerateCutoff = 1e-12;

/// Top principal direction of the centered definitional pair vectors,
/// oriented so that (he - she).g > 0 when both are present (otherwise by the
/// mean male-minus-female difference). `emb` must be normalized.
/// Errors: ErrorCode::Config for zero usable pairs or an unnormalized input,
/// ErrorCode::Degenerate when all difference rows vanish.
GenderSubspace gender_direction(const EmbeddingMatrix& emb, const std::vector<WordPair>& pairs,
                                const WarningSink& warn = default_warning);

/// Projects each neutral word off g and renormalizes. Words absent from the
/// vocabulary are ignored. ErrorCode::Degenerate names a word parallel to g.
EmbeddingMatrix neutralize(const EmbeddingMatrix& emb, const std::set<std::string>& neutral_words,
                           const GenderSubspace& sub);

EmbeddingMatrix equalize(const EmbeddingMatrix& emb, const std::vector<WordPair>& pairs, const GenderSubspace& sub,
                         const WarningSink& warn = default_warning);

struct DebiasOptions {
  bool equalize = true;
};

struct DebiasResult {
  EmbeddingMatrix embedding;
  GenderSubspace subspace;
  std::vector<std::string> neutralized;  // words actually projected
  double max_neutral_projection = 0.0;   // max |w.g| over neutralized words
};

/// normalize -> gender_direction -> neutralize -> equalize.
DebiasResult debias_all(const EmbeddingMatrix& emb, const WordSets& sets, const DebiasOptions& opts = {},
                        const WarningSink& warn = default_warning);

/// `female<TAB>male` per line; blank lines and `#` comments are skipped.
std::vector<WordPair> load_pairs(const std::string& path);
/// One word per line; blank lines and `#` comments are skipped.
std::vector<std::string> load_word_list(const std::string& path);

}  // namespace gbias

#endif  // GBIAS_DEBIAS_HPP
