#ifndef GBIAS_EMBEDDING_HPP
#define GBIAS_EMBEDDING_HPP

#include <algorithm>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gbias/error.hpp"

namespace gbias {

/// Word vectors, one row per word. Row order is the word order.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::vector<std::string> words, Eigen::MatrixXd vectors);

  Eigen::Index rows() const { return vectors_.rows(); }
  Eigen::Index dim() const { return vectors_.cols(); }

  const std::vector<std::string>& words() const { return words_; }
  const std::string& word(Eigen::Index row) const { return words_.at(static_cast<std::size_t>(row)); }
  std::optional<Eigen::Index> find(std::string_view word) const;
  /// ErrorCode::Lookup when absent.
  Eigen::Index index_of(std::string_view word) const;
  bool contains(std::string_view word) const { return find(word).has_value(); }

  const Eigen::MatrixXd& vectors() const { return vectors_; }
  /// Mutable access clears the normalized flag; callers re-mark it.
  Eigen::MatrixXd& mutable_vectors() {
    normalized_ = false;
    return vectors_;
  }
  auto row(Eigen::Index i) const { return vectors_.row(i); }

  bool normalized() const { return normalized_; }
  void mark_normalized() { normalized_ = true; }

  bool all_finite() const { return vectors_.allFinite(); }

 private:
  std::vector<std::string> words_;
  Eigen::MatrixXd vectors_;
  std::unordered_map<std::string, Eigen::Index> index_;
  bool normalized_ = false;
};

/// u.v / (|u| |v|). ErrorCode::Degenerate on a zero vector or size mismatch.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine(const Eigen::MatrixBase<DerivedA>& u, const Eigen::MatrixBase<DerivedB>& v) {
  using Scalar = typename DerivedA::Scalar;
  if (u.size() != v.size()) throw Error(ErrorCode::Degenerate, "cosine: dimension mismatch");
  const Scalar nu = u.norm();
  const Scalar nv = v.norm();
  if (nu == Scalar(0) || nv == Scalar(0)) throw Error(ErrorCode::Degenerate, "cosine: zero vector");
  const Scalar c = u.dot(v) / (nu * nv);
  return std::max(Scalar(-1), std::min(Scalar(1), c));
}

/// The k most cosine-similar words to `word`, excluding itself, sorted by
/// similarity descending and then by row ascending. Zero rows are skipped.
std::vector<std::pair<std::string, double>> nearest_neighbors(const EmbeddingMatrix& emb, std::string_view word,
                                                              std::size_t k);

/// Scales every row to unit norm. ErrorCode::Degenerate naming the first zero row.
EmbeddingMatrix normalize_rows(EmbeddingMatrix emb);

/// Text format: "<rows> <dim>" header, then "<word> <v1> ... <vdim>" per row.
/// Values are written in shortest round-trip decimal form.
void save_text(const EmbeddingMatrix& emb, std::ostream& out);
void save_text(const EmbeddingMatrix& emb, const std::string& path);
/// ErrorCode::Parse with the offending line number on malformed input.
EmbeddingMatrix load_text(std::istream& in);
EmbeddingMatrix load_text(const std::string& path);

}  // namespace gbias

#endif  // GBIAS_EMBEDDING_HPP
