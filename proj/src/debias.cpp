#include "gbias/debias.hpp"

#include <cassert>
#include <fstream>
#include <iostream>

namespace gbias {

namespace {

bool rows_unit(const EmbeddingMatrix& emb) {
  if (emb.normalized()) return true;
  const Eigen::MatrixXd& m = emb.vectors();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (std::abs(m.row(i).norm() - 1.0) > 1e-9) return false;
  }
  return true;
}

void require_normalized(const EmbeddingMatrix& emb, const char* op) {
  if (!rows_unit(emb)) throw Error(ErrorCode::Config, std::string(op) + ": embedding rows must be unit norm");
}

std::string strip_line(std::string line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
  return line;
}

}  // namespace

void default_warning(const std::string& message) { std::cerr << "warning: " << message << '\n'; }

std::set<std::string> WordSets::all_gendered() const {
  std::set<std::string> out = gendered_words;
  for (const auto& [f, m] : definitional_pairs) {
    out.insert(f);
    out.insert(m);
  }
  for (const auto& [f, m] : equality_pairs) {
    out.insert(f);
    out.insert(m);
  }
  return out;
}

void WordSets::validate() const {
  for (const auto* list : {&definitional_pairs, &equality_pairs}) {
    for (const auto& [f, m] : *list) {
      if (f == m) throw Error(ErrorCode::Config, "word pair repeats '" + f + "'");
    }
  }
  for (const auto& [f, m] : definitional_pairs) {
    for (const auto& w : {f, m}) {
      if (neutral_words && neutral_words->count(w)) {
        throw Error(ErrorCode::Config, "definitional word '" + w + "' is also listed as neutral");
      }
    }
  }
}

WordSets WordSets::defaults() {
  WordSets s;
  s.definitional_pairs = {{"she", "he"},         {"her", "his"},        {"woman", "man"}, {"herself", "himself"},
                          {"daughter", "son"},   {"mother", "father"},  {"girl", "boy"},  {"female", "male"}};
  s.equality_pairs = s.definitional_pairs;
  for (const WordPair& p : std::vector<WordPair>{{"women", "men"},
                                                 {"girls", "boys"},
                                                 {"mothers", "fathers"},
                                                 {"daughters", "sons"},
                                                 {"wife", "husband"},
                                                 {"sister", "brother"},
                                                 {"aunt", "uncle"},
                                                 {"niece", "nephew"},
                                                 {"queen", "king"},
                                                 {"actress", "actor"},
                                                 {"grandmother", "grandfather"},
                                                 {"mom", "dad"}}) {
    s.equality_pairs.push_back(p);
  }
  s.gendered_words = {"him", "hers", "ms", "mrs", "mr", "lady", "gentleman", "ladies", "gentlemen"};
  return s;
}

GenderSubspace gender_direction(const EmbeddingMatrix& emb, const std::vector<WordPair>& pairs,
                                const WarningSink& warn) {
  require_normalized(emb, "gender_direction");
  std::vector<std::pair<Eigen::Index, Eigen::Index>> usable;  // (female, male)
  for (const auto& [f, m] : pairs) {
    const auto fi = emb.find(f);
    const auto mi = emb.find(m);
    if (!fi || !mi) {
      warn("definitional pair (" + f + ", " + m + ") skipped: word not in vocabulary");
      continue;
    }
    usable.emplace_back(*fi, *mi);
  }
  if (usable.empty()) throw Error(ErrorCode::Config, "gender_direction: no definitional pair has both words in vocabulary");

  Eigen::MatrixXd centered(2 * static_cast<Eigen::Index>(usable.size()), emb.dim());
  for (std::size_t k = 0; k < usable.size(); ++k) {
    const auto a = emb.row(usable[k].first);
    const auto b = emb.row(usable[k].second);
    const Eigen::RowVectorXd center = (a + b) / 2.0;
    centered.row(2 * static_cast<Eigen::Index>(k)) = a - center;
    centered.row(2 * static_cast<Eigen::Index>(k) + 1) = b - center;
  }
  if (centered.cwiseAbs().maxCoeff() < kDegenerateCutoff) {
    throw Error(ErrorCode::Degenerate, "gender_direction: every definitional pair has identical vectors");
  }

  auto [g, ratio] = leading_direction(centered);
  g.normalize();

  double orientation = 0.0;
  const auto he = emb.find("he");
  const auto she = emb.find("she");
  if (he && she) {
    orientation = (emb.row(*he) - emb.row(*she)).dot(g.transpose());
  }
  if (orientation == 0.0) {
    for (const auto& [fi, mi] : usable) orientation += (emb.row(mi) - emb.row(fi)).dot(g.transpose());
  }
  if (orientation < 0.0) g = -g;

  return {std::move(g), ratio, usable.size()};
}

EmbeddingMatrix neutralize(const EmbeddingMatrix& emb, const std::set<std::string>& neutral_words,
                           const GenderSubspace& sub) {
  require_normalized(emb, "neutralize");
  EmbeddingMatrix out = emb;
  Eigen::MatrixXd& m = out.mutable_vectors();
  const Eigen::VectorXd& g = sub.direction;
  for (const auto& w : neutral_words) {
    const auto i = emb.find(w);
    if (!i) continue;
    const Eigen::VectorXd residual = reject_from(m.row(*i).transpose(), g);
    const double n = residual.norm();
    if (n < kDegenerateCutoff) {
      throw Error(ErrorCode::Degenerate, "neutralize: word '" + w + "' is parallel to the gender direction");
    }
    m.row(*i) = residual.transpose() / n;
  }
  out.mark_normalized();
  return out;
}

EmbeddingMatrix equalize(const EmbeddingMatrix& emb, const std::vector<WordPair>& pairs, const GenderSubspace& sub,
                         const WarningSink& warn) {
  require_normalized(emb, "equalize");
  EmbeddingMatrix out = emb;
  Eigen::MatrixXd& m = out.mutable_vectors();
  const Eigen::VectorXd& g = sub.direction;
  for (const auto& [f, male] : pairs) {
    const auto fi = emb.find(f);
    const auto mi = emb.find(male);
    if (!fi || !mi) {
      warn("equality pair (" + f + ", " + male + ") skipped: word not in vocabulary");
      continue;
    }
    const Eigen::VectorXd a = m.row(*fi).transpose();
    const Eigen::VectorXd b = m.row(*mi).transpose();
    // The midpoint of two unit vectors has norm <= 1.
    assert(((a + b) / 2.0).norm() <= 1.0 + 1e-12);
    Eigen::VectorXd a_new, b_new;
    if (!equalize_pair(a, b, g, a_new, b_new, kDegenerateCutoff)) {
      throw Error(ErrorCode::Degenerate,
                  "equalize: pair (" + f + ", " + male + ") is indistinguishable along the gender direction");
    }
    m.row(*fi) = a_new.transpose();
    m.row(*mi) = b_new.transpose();
  }
  out.mark_normalized();
  return out;
}

DebiasResult debias_all(const EmbeddingMatrix& emb, const WordSets& sets, const DebiasOptions& opts,
                        const WarningSink& warn) {
  sets.validate();
  EmbeddingMatrix normalized = normalize_rows(emb);
  GenderSubspace sub = gender_direction(normalized, sets.definitional_pairs, warn);

  std::set<std::string> neutral;
  if (sets.neutral_words) {
    neutral = *sets.neutral_words;
  } else {
    const auto gendered = sets.all_gendered();
    for (const auto& w : normalized.words()) {
      if (!gendered.count(w)) neutral.insert(w);
    }
  }

  DebiasResult res{neutralize(normalized, neutral, sub), std::move(sub), {}, 0.0};
  if (opts.equalize) res.embedding = equalize(res.embedding, sets.equality_pairs, res.subspace, warn);
  for (const auto& w : neutral) {
    if (const auto i = res.embedding.find(w)) {
      res.neutralized.push_back(w);
      res.max_neutral_projection =
          std::max(res.max_neutral_projection, std::abs(res.embedding.row(*i).dot(res.subspace.direction.transpose())));
    }
  }
  return res;
}

std::vector<WordPair> load_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open pair file: " + path);
  std::vector<WordPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_line(line);
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size() || line.find('\t', tab + 1) != std::string::npos) {
      throw Error(ErrorCode::Parse, path + ":" + std::to_string(line_no) + ": expected female<TAB>male");
    }
    pairs.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return pairs;
}

std::vector<std::string> load_word_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open word list: " + path);
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    line = strip_line(line);
    if (line.empty() || line[0] == '#') continue;
    words.push_back(line);
  }
  return words;
}

}  // namespace gbias
