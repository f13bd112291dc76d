#ifndef GBIAS_CORPUS_HPP
#define GBIAS_CORPUS_HPP

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace gbias {

using WordId = std::int32_t;

/// Whitespace-tokenized, lowercased text. Each newline-terminated line with
/// at least one token is one sentence.
struct TokenizedText {
  std::vector<std::vector<std::string>> sentences;

  /// All tokens in order, without sentence markers.
  std::vector<std::string> flat() const;
  std::size_t token_count() const;
};

/// Splits on ASCII whitespace and lowercases ASCII letters. Throws
/// ErrorCode::Decoding with the byte offset of the first invalid UTF-8 sequence.
TokenizedText tokenize(std::string_view text);

/// Reads a whole file; ErrorCode::Io naming the path when it cannot be opened.
std::string read_file(const std::string& path);

class Vocabulary {
 public:
  static constexpr WordId kUnk = 0;
  static constexpr WordId kEos = 1;
  static constexpr std::string_view kUnkToken = "<unk>";
  static constexpr std::string_view kEosToken = "<eos>";

  /// Vocabulary with only the two specials.
  Vocabulary();

  /// Ids by descending count, ties lexicographic; words seen fewer than
  /// `min_count` times are dropped.
  static Vocabulary build(std::span<const std::string> tokens, std::uint64_t min_count);

  /// Same as above; additionally records the sentence count as the `<eos>`
  /// count and the number of dropped tokens as the `<unk>` count.
  static Vocabulary build(const TokenizedText& text, std::uint64_t min_count);

  /// Reads the `word<TAB>count` format written by save().
  static Vocabulary load(std::istream& in);
  void save(std::ostream& out) const;

  std::size_t size() const { return words_.size(); }
  const std::string& word(WordId id) const { return words_.at(static_cast<std::size_t>(id)); }
  std::uint64_t count(WordId id) const { return counts_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& words() const { return words_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }

  std::optional<WordId> find(std::string_view word) const;
  /// Id of `word`, or kUnk when absent.
  WordId id(std::string_view word) const;
  bool contains(std::string_view word) const { return find(word).has_value(); }
  static bool is_special(WordId id) { return id == kUnk || id == kEos; }

  /// Fingerprint over the ordered word list (counts excluded).
  std::string hash() const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.words_ == b.words_ && a.counts_ == b.counts_;
  }

 private:
  void push(std::string word, std::uint64_t count);

  std::vector<std::string> words_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<std::string, WordId> index_;
};

/// Out-of-vocabulary tokens become `<unk>`; no `<eos>` is inserted.
std::vector<WordId> encode(std::span<const std::string> tokens, const Vocabulary& vocab);

/// Like the flat overload, with `<eos>` appended after every sentence.
std::vector<WordId> encode(const TokenizedText& text, const Vocabulary& vocab);

struct PronounSets {
  std::set<std::string> male{"he", "his", "himself"};
  std::set<std::string> female{"she", "her", "herself"};
};

struct PronounAudit {
  std::map<std::string, std::uint64_t> male_counts;
  std::map<std::string, std::uint64_t> female_counts;
  std::uint64_t male_total = 0;
  std::uint64_t female_total = 0;
  /// Empty when no pronoun of either set occurs.
  std::optional<double> female_share;

  /// Counts add; the share is recomputed.
  PronounAudit& merge(const PronounAudit& other);
  std::string to_json() const;
};

/// Exact counts of each listed pronoun. Matching is case-insensitive.
/// ErrorCode::Config when the sets overlap or either is empty.
PronounAudit pronoun_audit(std::span<const std::string> tokens, const PronounSets& sets = {});

}  // namespace gbias

#endif  // GBIAS_CORPUS_HPP
