#ifndef GBIAS_EVALSUITE_HPP
#define GBIAS_EVALSUITE_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gbias/corpus.hpp"
#include "gbias/lstm_lm.hpp"

namespace gbias {

using Sentence = std::vector<std::string>;

struct WordListBundle {
  std::vector<std::string> male_nouns;    // definitional: father, male, ...
  std::vector<std::string> female_nouns;  // mother, female, ...
  std::vector<std::string> male_occupations;
  std::vector<std::string> female_occupations;

  /// Lists shipped under data/wordlists.
  static WordListBundle defaults();
  /// Reads male_nouns.txt, female_nouns.txt, male_occupations.txt and
  /// female_occupations.txt from `dir`.
  static WordListBundle load(const std::string& dir);
};

struct TestSet {
  int id = 0;
  std::string description;
  std::vector<Sentence> sentences;

  std::size_t token_count() const;
};

/// "a" or "an" by the initial-vowel rule.
std::string article_for(const std::string& noun);
/// "<pronoun> is <article> <noun>", tokenized.
Sentence stereotype_sentence(const std::string& pronoun, const std::string& noun);
/// Replaces every token equal to `from` with `to`.
Sentence swap_pronoun(Sentence s, const std::string& from, const std::string& to);

std::string testset_description(int id);

/// One of the six sets: 1 he x male nouns, 2 she x female nouns, 3 he x male
/// occupations, 4 = 3 with he -> she, 5 she x female occupations, 6 = 5 with
/// she -> he. ErrorCode::Config naming the set when its source list is empty.
TestSet generate_testset(const WordListBundle& bundle, int id);
std::vector<TestSet> generate_testsets(const WordListBundle& bundle);

/// Files test1.txt ... test6.txt, one sentence per line.
void write_testsets(const std::vector<TestSet>& sets, const std::string& dir);
std::vector<TestSet> read_testsets(const std::string& dir);

/// (swapped - base) / base. ErrorCode::Config for non-positive inputs.
double relative_increment(double pp_base, double pp_swapped);
/// Rounds half away from zero to two decimals with an explicit sign;
/// zero renders without sign ("0.00").
std::string format_increment(double value, char decimal_separator = '.');

struct TestSetScore {
  int id = 0;
  double pp = 0.0;
  NllSum nll;
  std::vector<double> sentence_pp;
};

struct Increments {
  double t2_vs_t1 = 0.0;
  double t4_vs_t3 = 0.0;
  double t6_vs_t5 = 0.0;
};

struct EvalTable {
  std::vector<TestSetScore> per_test;  // in test-set order
  Increments increments;

  const TestSetScore& score(int id) const;
  /// Mean of the per-test perplexities.
  double mean_pp() const;
};

/// Pooled perplexity per set: every sentence scored from a zero state, NLL
/// summed over all tokens of the set and then exponentiated.
/// ErrorCode::InsufficientData on an empty set.
EvalTable evaluate_model(const LanguageModel& model, const std::vector<TestSet>& sets);

/// Increments between matched sets; zero for pairs not present.
Increments compute_increments(const std::vector<TestSetScore>& scores);

struct SentenceDelta {
  int test_id = 0;
  std::string text;
  double pp_bias = 0.0;
  double pp_debias = 0.0;
  double delta = 0.0;  // pp_debias - pp_bias
};

struct Comparison {
  std::vector<SentenceDelta> sentences;
  std::array<double, 6> mean_delta{};      // per test set
  std::array<double, 6> mean_abs_delta{};  // per test set
};

/// Per-sentence perplexities under two models sharing a vocabulary.
/// ErrorCode::Config on vocabulary mismatch.
Comparison compare_models(const LanguageModel& biased, const LanguageModel& debiased, const std::vector<TestSet>& sets);

struct BalancedResult {
  double pp = 0.0;
  std::size_t tokens = 0;
  PronounAudit audit;
};

/// Continuous-state perplexity over a plain-text corpus plus its pronoun
/// audit. ErrorCode::InsufficientData on an empty corpus.
BalancedResult balanced_eval(const LanguageModel& model, const std::string& text);

struct SynthConfig {
  std::uint64_t male_sentences = 1000;  // male-pronoun sentences
  double female_ratio = 0.2;            // female sentences per male sentence
  /// Probability that an occupation slot uses the speaker's own stereotype list.
  double stereotype_strength = 0.8;
  /// Placeholders: {subj} he/she, {poss} his/her, {refl} himself/herself,
  /// {noun} article + definitional noun, {occ} article + occupation,
  /// {occ_bare} occupation without article, {name} a first name of the
  /// speaker's gender, {place} and {time} neutral fillers. Exactly one
  /// pronoun slot each.
  std::vector<std::string> templates;
  WordListBundle words;
  std::vector<std::string> male_names;
  std::vector<std::string> female_names;
  std::vector<std::string> places;
  std::vector<std::string> times;
  std::uint64_t seed = 1;

  static SynthConfig defaults();
  /// ErrorCode::Config on an invalid ratio, empty lists or a template
  /// without exactly one pronoun slot.
  void validate() const;
};

/// Newline-separated sentences: `male_sentences` with male pronouns and
/// round(female_ratio * male_sentences) with female ones, shuffled by seed.
std::string synth_corpus(const SynthConfig& cfg);

}  // namespace gbias

#endif  // GBIAS_EVALSUITE_HPP
