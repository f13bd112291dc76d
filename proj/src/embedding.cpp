#include "gbias/embedding.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

namespace gbias {

EmbeddingMatrix::EmbeddingMatrix(std::vector<std::string> words, Eigen::MatrixXd vectors)
    : words_(std::move(words)), vectors_(std::move(vectors)) {
  if (static_cast<Eigen::Index>(words_.size()) != vectors_.rows()) {
    throw Error(ErrorCode::Config, "embedding: word count " + std::to_string(words_.size()) +
                                       " does not match row count " + std::to_string(vectors_.rows()));
  }
  index_.reserve(words_.size());
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], static_cast<Eigen::Index>(i)).second) {
      throw Error(ErrorCode::Config, "embedding: duplicate word '" + words_[i] + "'");
    }
  }
}

std::optional<Eigen::Index> EmbeddingMatrix::find(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Eigen::Index EmbeddingMatrix::index_of(std::string_view word) const {
  if (auto i = find(word)) return *i;
  throw Error(ErrorCode::Lookup, "word not in embedding: '" + std::string(word) + "'");
}

std::vector<std::pair<std::string, double>> nearest_neighbors(const EmbeddingMatrix& emb, std::string_view word,
                                                              std::size_t k) {
  const Eigen::Index q = emb.index_of(word);
  std::vector<std::pair<std::string, double>> out;
  if (k == 0) return out;

  const Eigen::VectorXd query = emb.row(q).transpose();
  std::vector<std::pair<double, Eigen::Index>> scored;
  scored.reserve(static_cast<std::size_t>(emb.rows()));
  for (Eigen::Index i = 0; i < emb.rows(); ++i) {
    if (i == q || emb.row(i).squaredNorm() == 0.0) continue;
    scored.emplace_back(cosine(query, emb.row(i).transpose()), i);
  }
  const std::size_t take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(),
                    [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.emplace_back(emb.word(scored[i].second), scored[i].first);
  return out;
}

EmbeddingMatrix normalize_rows(EmbeddingMatrix emb) {
  Eigen::MatrixXd& m = emb.mutable_vectors();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (n == 0.0) throw Error(ErrorCode::Degenerate, "cannot normalize zero vector of word '" + emb.word(i) + "'");
    m.row(i) /= n;
  }
  emb.mark_normalized();
  return emb;
}

void save_text(const EmbeddingMatrix& emb, std::ostream& out) {
  out << emb.rows() << ' ' << emb.dim() << '\n';
  char buf[64];
  const Eigen::MatrixXd& m = emb.vectors();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << emb.word(i);
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const auto res = std::to_chars(buf, buf + sizeof buf, m(i, j));
      out << ' ';
      out.write(buf, res.ptr - buf);
    }
    out << '\n';
  }
}

void save_text(const EmbeddingMatrix& emb, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write file: " + path);
  save_text(emb, out);
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path);
}

namespace {

std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\r')) ++pos;
    if (pos >= line.size()) break;
    std::size_t end = pos;
    while (end < line.size() && line[end] != ' ' && line[end] != '\r') ++end;
    fields.push_back(line.substr(pos, end - pos));
    pos = end;
  }
  return fields;
}

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& msg) {
  throw Error(ErrorCode::Parse, "embedding file line " + std::to_string(line_no) + ": " + msg);
}

template <typename T>
T parse_number(std::string_view field, std::size_t line_no) {
  T value{};
  const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
    parse_fail(line_no, "non-numeric field '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace

EmbeddingMatrix load_text(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) parse_fail(1, "missing header");
  const auto header = split_spaces(line);
  if (header.size() != 2) parse_fail(1, "header must be '<rows> <dim>'");
  const auto rows = parse_number<long long>(header[0], 1);
  const auto dim = parse_number<long long>(header[1], 1);
  if (rows < 0 || dim <= 0) parse_fail(1, "header must carry non-negative rows and positive dim");

  std::vector<std::string> words;
  words.reserve(static_cast<std::size_t>(rows));
  Eigen::MatrixXd m(rows, dim);
  for (long long r = 0; r < rows; ++r) {
    ++line_no;
    if (!std::getline(in, line)) parse_fail(line_no, "expected " + std::to_string(rows) + " rows, file ended");
    const auto fields = split_spaces(line);
    if (static_cast<long long>(fields.size()) != dim + 1) {
      parse_fail(line_no, "expected word and " + std::to_string(dim) + " values, found " +
                              std::to_string(fields.empty() ? 0 : fields.size() - 1));
    }
    words.emplace_back(fields[0]);
    for (long long j = 0; j < dim; ++j) m(r, j) = parse_number<double>(fields[static_cast<std::size_t>(j) + 1], line_no);
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (!split_spaces(line).empty()) parse_fail(line_no, "more rows than the header declares");
  }
  try {
    return EmbeddingMatrix(std::move(words), std::move(m));
  } catch (const Error& e) {
    throw Error(ErrorCode::Parse, e.what());
  }
}

EmbeddingMatrix load_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open file: " + path);
  return load_text(in);
}

}  // namespace gbias
