#include "gbias/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "gbias/error.hpp"
#include "gbias/hash.hpp"

namespace gbias {

namespace {

// Length of the valid UTF-8 sequence starting at `pos`, or 0 if invalid.
std::size_t utf8_sequence_length(std::string_view s, std::size_t pos) {
  const auto byte = [&](std::size_t i) { return static_cast<unsigned char>(s[i]); };
  const unsigned char lead = byte(pos);
  if (lead < 0x80) return 1;
  std::size_t len;
  std::uint32_t cp;
  if ((lead & 0xE0) == 0xC0) {
    len = 2;
    cp = lead & 0x1F;
  } else if ((lead & 0xF0) == 0xE0) {
    len = 3;
    cp = lead & 0x0F;
  } else if ((lead & 0xF8) == 0xF0) {
    len = 4;
    cp = lead & 0x07;
  } else {
    return 0;
  }
  if (pos + len > s.size()) return 0;
  for (std::size_t i = 1; i < len; ++i) {
    const unsigned char c = byte(pos + i);
    if ((c & 0xC0) != 0x80) return 0;
    cp = (cp << 6) | (c & 0x3F);
  }
  static constexpr std::uint32_t kMinForLength[] = {0, 0, 0x80, 0x800, 0x10000};
  if (cp < kMinForLength[len]) return 0;  // overlong
  if (cp > 0x10FFFF) return 0;
  if (cp >= 0xD800 && cp <= 0xDFFF) return 0;  // surrogate
  return len;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

}  // namespace

std::vector<std::string> TokenizedText::flat() const {
  std::vector<std::string> out;
  out.reserve(token_count());
  for (const auto& s : sentences) out.insert(out.end(), s.begin(), s.end());
  return out;
}

std::size_t TokenizedText::token_count() const {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.size();
  return n;
}

TokenizedText tokenize(std::string_view text) {
  TokenizedText out;
  std::vector<std::string> sentence;
  std::string token;
  const auto flush_token = [&] {
    if (!token.empty()) sentence.push_back(std::move(token));
    token.clear();
  };
  const auto flush_sentence = [&] {
    flush_token();
    if (!sentence.empty()) out.sentences.push_back(std::move(sentence));
    sentence.clear();
  };

  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t len = utf8_sequence_length(text, pos);
    if (len == 0) {
      throw Error(ErrorCode::Decoding, "invalid UTF-8 at byte offset " + std::to_string(pos));
    }
    if (len == 1) {
      const char c = text[pos];
      if (c == '\n') {
        flush_sentence();
      } else if (is_space(c)) {
        flush_token();
      } else {
        token.push_back(ascii_lower(c));
      }
    } else {
      token.append(text.substr(pos, len));
    }
    pos += len;
  }
  flush_sentence();
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  push(std::string(kUnkToken), 0);
  push(std::string(kEosToken), 0);
}

void Vocabulary::push(std::string word, std::uint64_t count) {
  index_.emplace(word, static_cast<WordId>(words_.size()));
  words_.push_back(std::move(word));
  counts_.push_back(count);
}

Vocabulary Vocabulary::build(std::span<const std::string> tokens, std::uint64_t min_count) {
  if (min_count < 1) throw Error(ErrorCode::Config, "min_count must be >= 1");
  std::unordered_map<std::string, std::uint64_t> counts;
  for (const auto& t : tokens) ++counts[t];

  std::vector<std::pair<std::string, std::uint64_t>> entries;
  std::uint64_t dropped = 0;
  for (auto& [word, n] : counts) {
    if (word == kUnkToken || word == kEosToken) continue;
    if (n < min_count) {
      dropped += n;
      continue;
    }
    entries.emplace_back(word, n);
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });

  Vocabulary v;
  v.counts_[kUnk] = dropped;
  for (auto& [word, n] : entries) v.push(std::move(word), n);
  return v;
}

Vocabulary Vocabulary::build(const TokenizedText& text, std::uint64_t min_count) {
  const auto tokens = text.flat();
  Vocabulary v = build(std::span<const std::string>(tokens), min_count);
  v.counts_[kEos] = text.sentences.size();
  return v;
}

Vocabulary Vocabulary::load(std::istream& in) {
  Vocabulary v;
  v.words_.clear();
  v.counts_.clear();
  v.index_.clear();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw Error(ErrorCode::Parse, "vocabulary line " + std::to_string(line_no) + ": expected word<TAB>count");
    }
    std::uint64_t count = 0;
    try {
      std::size_t used = 0;
      count = std::stoull(line.substr(tab + 1), &used);
      if (used != line.size() - tab - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(ErrorCode::Parse, "vocabulary line " + std::to_string(line_no) + ": bad count");
    }
    std::string word = line.substr(0, tab);
    if (v.index_.count(word)) {
      throw Error(ErrorCode::Parse, "vocabulary line " + std::to_string(line_no) + ": duplicate word '" + word + "'");
    }
    v.push(std::move(word), count);
  }
  if (v.words_.size() < 2 || v.words_[kUnk] != kUnkToken || v.words_[kEos] != kEosToken) {
    throw Error(ErrorCode::Parse, "vocabulary must start with <unk> and <eos>");
  }
  return v;
}

void Vocabulary::save(std::ostream& out) const {
  for (std::size_t i = 0; i < words_.size(); ++i) out << words_[i] << '\t' << counts_[i] << '\n';
}

std::optional<WordId> Vocabulary::find(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

WordId Vocabulary::id(std::string_view word) const { return find(word).value_or(kUnk); }

std::string Vocabulary::hash() const {
  Fnv1a h;
  for (const auto& w : words_) h.update(w).update("\n");
  return h.hex();
}

// ---------------------------------------------------------------------------

std::vector<WordId> encode(std::span<const std::string> tokens, const Vocabulary& vocab) {
  std::vector<WordId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(vocab.id(t));
  return ids;
}

std::vector<WordId> encode(const TokenizedText& text, const Vocabulary& vocab) {
  std::vector<WordId> ids;
  ids.reserve(text.token_count() + text.sentences.size());
  for (const auto& s : text.sentences) {
    for (const auto& t : s) ids.push_back(vocab.id(t));
    ids.push_back(Vocabulary::kEos);
  }
  return ids;
}

// ---------------------------------------------------------------------------
// Pronoun audit

PronounAudit& PronounAudit::merge(const PronounAudit& other) {
  for (const auto& [w, n] : other.male_counts) male_counts[w] += n;
  for (const auto& [w, n] : other.female_counts) female_counts[w] += n;
  male_total += other.male_total;
  female_total += other.female_total;
  const auto denom = male_total + female_total;
  female_share = denom > 0 ? std::optional<double>(static_cast<double>(female_total) / static_cast<double>(denom))
                           : std::nullopt;
  return *this;
}

std::string PronounAudit::to_json() const {
  nlohmann::ordered_json j;
  j["male_counts"] = male_counts;
  j["female_counts"] = female_counts;
  j["male_total"] = male_total;
  j["female_total"] = female_total;
  j["female_share"] = female_share ? nlohmann::ordered_json(*female_share) : nlohmann::ordered_json(nullptr);
  return j.dump(2);
}

PronounAudit pronoun_audit(std::span<const std::string> tokens, const PronounSets& sets) {
  if (sets.male.empty() || sets.female.empty()) {
    throw Error(ErrorCode::Config, "pronoun sets must be non-empty");
  }
  const auto lower = [](std::string s) {
    for (auto& c : s) c = ascii_lower(c);
    return s;
  };
  std::set<std::string> male, female;
  for (const auto& w : sets.male) male.insert(lower(w));
  for (const auto& w : sets.female) female.insert(lower(w));
  std::vector<std::string> overlap;
  std::set_intersection(male.begin(), male.end(), female.begin(), female.end(), std::back_inserter(overlap));
  if (!overlap.empty()) {
    std::string msg = "male and female pronoun sets overlap:";
    for (const auto& w : overlap) msg += " " + w;
    throw Error(ErrorCode::Config, msg);
  }

  PronounAudit audit;
  for (const auto& w : male) audit.male_counts[w] = 0;
  for (const auto& w : female) audit.female_counts[w] = 0;
  for (const auto& raw : tokens) {
    const std::string t = lower(raw);
    if (auto it = audit.male_counts.find(t); it != audit.male_counts.end()) {
      ++it->second;
      ++audit.male_total;
    } else if (auto jt = audit.female_counts.find(t); jt != audit.female_counts.end()) {
      ++jt->second;
      ++audit.female_total;
    }
  }
  return audit.merge(PronounAudit{});
}

}  // namespace gbias
