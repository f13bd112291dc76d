#include "gbias/evalsuite.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "gbias/debias.hpp"
#include "gbias/error.hpp"

namespace gbias {

namespace {

std::string join(const Sentence& s) {
  std::string out;
  for (const auto& t : s) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

void require_unique(const std::vector<std::string>& list, const std::string& what) {
  std::set<std::string> seen;
  for (const auto& w : list) {
    if (!seen.insert(w).second) throw Error(ErrorCode::Config, what + " lists '" + w + "' twice");
  }
}

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(n)));
}

}  // namespace

WordListBundle WordListBundle::defaults() {
  WordListBundle b;
  b.male_nouns = {"father", "male",   "man",     "son",   "boy",        "brother", "husband",
                  "uncle",  "nephew", "king",    "grandfather", "gentleman", "dad", "groom"};
  b.female_nouns = {"mother", "female", "woman",  "daughter", "girl",        "sister", "wife",
                    "aunt",   "niece",  "queen",  "grandmother", "lady",     "mom",    "bride"};
  b.male_occupations = {"archaeologist", "ballplayer", "broadcaster", "cardiologist", "custodian",
                        "economist",     "lawmaker",   "parishioner", "photojournalist", "protege",
                        "provost",       "surgeon",    "architect",   "financier",    "philosopher",
                        "captain",       "skipper",    "maestro",     "magician",     "warrior",
                        "carpenter",     "mechanic",   "firefighter", "engineer",     "banker",
                        "manager",       "astronaut",  "plumber",     "pilot",        "commander"};
  b.female_occupations = {"hairdresser", "ballerina",   "dermatologist", "organist",  "paralegal",
                          "observer",    "homemaker",   "nurse",         "receptionist", "librarian",
                          "socialite",   "nanny",       "bookkeeper",    "stylist",   "housekeeper",
                          "designer",    "counselor",   "secretary",     "dancer",    "planner"};
  return b;
}

WordListBundle WordListBundle::load(const std::string& dir) {
  const std::filesystem::path d(dir);
  WordListBundle b;
  b.male_nouns = load_word_list((d / "male_nouns.txt").string());
  b.female_nouns = load_word_list((d / "female_nouns.txt").string());
  b.male_occupations = load_word_list((d / "male_occupations.txt").string());
  b.female_occupations = load_word_list((d / "female_occupations.txt").string());
  return b;
}

std::size_t TestSet::token_count() const {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.size();
  return n;
}

std::string article_for(const std::string& noun) {
  if (!noun.empty()) {
    switch (noun.front()) {
      case 'a': case 'e': case 'i': case 'o': case 'u':
      case 'A': case 'E': case 'I': case 'O': case 'U':
        return "an";
      default:
        break;
    }
  }
  return "a";
}

Sentence stereotype_sentence(const std::string& pronoun, const std::string& noun) {
  return {pronoun, "is", article_for(noun), noun};
}

Sentence swap_pronoun(Sentence s, const std::string& from, const std::string& to) {
  for (auto& t : s) {
    if (t == from) t = to;
  }
  return s;
}

std::string testset_description(int id) {
  switch (id) {
    case 1: return "definitional male";
    case 2: return "definitional female";
    case 3: return "stereotypical nouns for male";
    case 4: return "male stereotypes with female pronouns";
    case 5: return "stereotypical nouns for female";
    case 6: return "female stereotypes with male pronouns";
    default: throw Error(ErrorCode::Config, "test set id must be 1..6, got " + std::to_string(id));
  }
}

TestSet generate_testset(const WordListBundle& bundle, int id) {
  TestSet set{id, testset_description(id), {}};
  const std::vector<std::string>* nouns = nullptr;
  std::string pronoun;
  switch (id) {
    case 1: nouns = &bundle.male_nouns; pronoun = "he"; break;
    case 2: nouns = &bundle.female_nouns; pronoun = "she"; break;
    case 3: nouns = &bundle.male_occupations; pronoun = "he"; break;
    case 4: nouns = &bundle.male_occupations; pronoun = "he"; break;
    case 5: nouns = &bundle.female_occupations; pronoun = "she"; break;
    case 6: nouns = &bundle.female_occupations; pronoun = "she"; break;
  }
  if (nouns->empty()) {
    throw Error(ErrorCode::Config, "test set " + std::to_string(id) + " (" + set.description + "): word list is empty");
  }
  require_unique(*nouns, "test set " + std::to_string(id));
  for (const auto& noun : *nouns) {
    Sentence s = stereotype_sentence(pronoun, noun);
    if (id == 4) s = swap_pronoun(std::move(s), "he", "she");
    if (id == 6) s = swap_pronoun(std::move(s), "she", "he");
    set.sentences.push_back(std::move(s));
  }
  return set;
}

std::vector<TestSet> generate_testsets(const WordListBundle& bundle) {
  std::vector<TestSet> sets;
  for (int id = 1; id <= 6; ++id) sets.push_back(generate_testset(bundle, id));
  return sets;
}

void write_testsets(const std::vector<TestSet>& sets, const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& set : sets) {
    const auto path = (std::filesystem::path(dir) / ("test" + std::to_string(set.id) + ".txt")).string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write test set: " + path);
    for (const auto& s : set.sentences) out << join(s) << '\n';
  }
}

std::vector<TestSet> read_testsets(const std::string& dir) {
  std::vector<TestSet> sets;
  for (int id = 1; id <= 6; ++id) {
    const auto path = (std::filesystem::path(dir) / ("test" + std::to_string(id) + ".txt")).string();
    TestSet set{id, testset_description(id), tokenize(read_file(path)).sentences};
    sets.push_back(std::move(set));
  }
  return sets;
}

double relative_increment(double pp_base, double pp_swapped) {
  if (!(pp_base > 0) || !(pp_swapped > 0)) {
    throw Error(ErrorCode::Config, "relative increment needs positive perplexities");
  }
  return (pp_swapped - pp_base) / pp_base;
}

std::string format_increment(double value, char decimal_separator) {
  // The nudge keeps values such as 0.125 that print as exact halves on the
  // away-from-zero side despite binary representation error.
  const double scaled = value * 100.0;
  const long long cents = std::llround(scaled + std::copysign(1e-9, scaled));
  if (cents == 0) return std::string("0") + decimal_separator + "00";
  const long long mag = cents < 0 ? -cents : cents;
  std::string frac = std::to_string(mag % 100);
  if (frac.size() < 2) frac.insert(0, "0");
  return std::string(cents < 0 ? "-" : "+") + std::to_string(mag / 100) + decimal_separator + frac;
}

const TestSetScore& EvalTable::score(int id) const {
  for (const auto& s : per_test) {
    if (s.id == id) return s;
  }
  throw Error(ErrorCode::Lookup, "no score for test set " + std::to_string(id));
}

double EvalTable::mean_pp() const {
  double sum = 0.0;
  for (const auto& s : per_test) sum += s.pp;
  return per_test.empty() ? 0.0 : sum / static_cast<double>(per_test.size());
}

Increments compute_increments(const std::vector<TestSetScore>& scores) {
  const auto pp = [&](int id) -> double {
    for (const auto& s : scores) {
      if (s.id == id) return s.pp;
    }
    return 0.0;
  };
  const auto inc = [&](int base, int swapped) {
    return pp(base) > 0 && pp(swapped) > 0 ? relative_increment(pp(base), pp(swapped)) : 0.0;
  };
  return {inc(1, 2), inc(3, 4), inc(5, 6)};
}

EvalTable evaluate_model(const LanguageModel& model, const std::vector<TestSet>& sets) {
  EvalTable table;
  for (const auto& set : sets) {
    if (set.sentences.empty()) {
      throw Error(ErrorCode::InsufficientData, "test set " + std::to_string(set.id) + " is empty");
    }
    TestSetScore score;
    score.id = set.id;
    for (const auto& s : set.sentences) {
      if (s.empty()) throw Error(ErrorCode::InsufficientData, "test set " + std::to_string(set.id) + " has an empty sentence");
      const NllSum n = sentence_nll(model, s);
      score.sentence_pp.push_back(n.perplexity());
      score.nll += n;
    }
    score.pp = score.nll.perplexity();
    table.per_test.push_back(std::move(score));
  }
  table.increments = compute_increments(table.per_test);
  return table;
}

Comparison compare_models(const LanguageModel& biased, const LanguageModel& debiased, const std::vector<TestSet>& sets) {
  if (biased.vocab().hash() != debiased.vocab().hash()) {
    throw Error(ErrorCode::Config, "compare_models: the two models use different vocabularies");
  }
  Comparison cmp;
  std::array<std::size_t, 6> counts{};
  for (const auto& set : sets) {
    for (const auto& s : set.sentences) {
      SentenceDelta d{set.id, join(s), perplexity_sentence(biased, s), perplexity_sentence(debiased, s), 0.0};
      d.delta = d.pp_debias - d.pp_bias;
      if (set.id >= 1 && set.id <= 6) {
        const auto k = static_cast<std::size_t>(set.id - 1);
        cmp.mean_delta[k] += d.delta;
        cmp.mean_abs_delta[k] += std::abs(d.delta);
        ++counts[k];
      }
      cmp.sentences.push_back(std::move(d));
    }
  }
  for (std::size_t k = 0; k < 6; ++k) {
    if (counts[k]) {
      cmp.mean_delta[k] /= static_cast<double>(counts[k]);
      cmp.mean_abs_delta[k] /= static_cast<double>(counts[k]);
    }
  }
  return cmp;
}

BalancedResult balanced_eval(const LanguageModel& model, const std::string& text) {
  const TokenizedText tok = tokenize(text);
  if (tok.token_count() == 0) throw Error(ErrorCode::InsufficientData, "balanced corpus is empty");
  const auto ids = encode(tok, model.vocab());
  const NllSum n = stream_nll(model, ids);
  const auto flat = tok.flat();
  return {n.perplexity(), n.tokens, pronoun_audit(flat)};
}

// ---------------------------------------------------------------------------
// Synthetic corpus

SynthConfig SynthConfig::defaults() {
  SynthConfig c;
  c.templates = {
      "{subj} is {noun}",
      "{subj} wants to become {occ}",
      "{subj} was {noun} and {occ}",
      "{subj} trained for years as {occ}",
      "{name} said that {subj} is {occ}",
      "{name} works as {occ} and {subj} likes the {place}",
      "{name} is {occ} and {subj} lives near the {place}",
      "on {time} {name} met {poss} friend at the {place}",
      "{poss} job is {occ_bare} work in the {place}",
      "the {occ_bare} introduced {refl} as {name}",
  };
  c.male_names = {"james",  "john",    "robert",  "michael", "william", "david",   "richard", "joseph",
                  "thomas", "charles", "daniel",  "matthew", "anthony", "mark",    "paul",    "steven",
                  "andrew", "kenneth", "george",  "edward",  "brian",   "kevin",   "ronald",  "timothy",
                  "jason",  "jeffrey", "ryan",    "gary",    "jacob",   "eric"};
  c.female_names = {"mary",     "patricia", "jennifer", "linda",    "elizabeth", "barbara",  "susan",
                    "jessica",  "sarah",    "karen",    "nancy",    "lisa",      "betty",    "margaret",
                    "sandra",   "ashley",   "kimberly", "emily",    "donna",     "michelle", "carol",
                    "amanda",   "melissa",  "deborah",  "stephanie", "rebecca",  "laura",    "sharon",
                    "cynthia",  "kathleen"};
  c.places = {"city",  "village", "school", "office",  "hospital", "market", "river",
              "garden", "church", "station", "library", "museum",  "harbor", "farm",
              "factory", "bank",  "court",  "theater", "stadium", "kitchen"};
  c.times = {"monday", "tuesday", "friday", "morning", "evening", "summer",
             "winter", "spring",  "autumn", "yesterday", "today", "weekend"};
  c.words = WordListBundle::defaults();
  return c;
}

namespace {

const std::array<std::string, 3> kPronounSlots = {"{subj}", "{poss}", "{refl}"};

std::size_t count_occurrences(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + needle.size())) ++n;
  return n;
}

void replace_all(std::string& s, const std::string& from, const std::string& to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) s.replace(pos, from.size(), to);
}

}  // namespace

void SynthConfig::validate() const {
  const auto fail = [](const std::string& m) { throw Error(ErrorCode::Config, "synth config: " + m); };
  if (!(female_ratio > 0.0 && female_ratio <= 1.0)) fail("female_ratio must lie in (0, 1]");
  if (!(stereotype_strength >= 0.0 && stereotype_strength <= 1.0)) fail("stereotype_strength must lie in [0, 1]");
  if (male_sentences == 0) fail("male_sentences must be positive");
  if (templates.empty()) fail("template list is empty");
  if (words.male_nouns.empty() || words.female_nouns.empty()) fail("definitional noun lists are empty");
  if (words.male_occupations.empty() || words.female_occupations.empty()) fail("occupation lists are empty");
  for (const auto& t : templates) {
    const auto needs = [&](const char* slot, const std::vector<std::string>& list, const char* name) {
      if (count_occurrences(t, slot) > 0 && list.empty()) fail("template '" + t + "' uses " + slot + " but " + name + " is empty");
    };
    needs("{name}", male_names, "male_names");
    needs("{name}", female_names, "female_names");
    needs("{place}", places, "places");
    needs("{time}", times, "times");
    std::size_t slots = 0;
    for (const auto& p : kPronounSlots) slots += count_occurrences(t, p);
    if (slots != 1) fail("template '" + t + "' must contain exactly one pronoun slot");
  }
}

std::string synth_corpus(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const auto female_count = static_cast<std::uint64_t>(std::llround(cfg.female_ratio * static_cast<double>(cfg.male_sentences)));

  struct Voice {
    std::string subj, poss, refl;
    const std::vector<std::string>* nouns;
    const std::vector<std::string>* own;
    const std::vector<std::string>* other;
    const std::vector<std::string>* names;
  };
  const Voice male{"he", "his", "himself", &cfg.words.male_nouns, &cfg.words.male_occupations,
                   &cfg.words.female_occupations, &cfg.male_names};
  const Voice female{"she", "her", "herself", &cfg.words.female_nouns, &cfg.words.female_occupations,
                     &cfg.words.male_occupations, &cfg.female_names};

  const auto make = [&](const Voice& v) {
    std::string s = cfg.templates[pick(rng, cfg.templates.size())];
    const auto& occupations = unit_uniform(rng) < cfg.stereotype_strength ? *v.own : *v.other;
    const std::string occ = occupations[pick(rng, occupations.size())];
    const std::string noun = (*v.nouns)[pick(rng, v.nouns->size())];
    replace_all(s, "{subj}", v.subj);
    replace_all(s, "{poss}", v.poss);
    replace_all(s, "{refl}", v.refl);
    replace_all(s, "{noun}", article_for(noun) + " " + noun);
    replace_all(s, "{occ}", article_for(occ) + " " + occ);
    replace_all(s, "{occ_bare}", occ);
    const auto fill = [&](const char* slot, const std::vector<std::string>& list) {
      if (s.find(slot) != std::string::npos) replace_all(s, slot, list[pick(rng, list.size())]);
    };
    fill("{name}", *v.names);
    fill("{place}", cfg.places);
    fill("{time}", cfg.times);
    return s;
  };

  std::vector<std::string> lines;
  lines.reserve(cfg.male_sentences + female_count);
  for (std::uint64_t i = 0; i < cfg.male_sentences; ++i) lines.push_back(make(male));
  for (std::uint64_t i = 0; i < female_count; ++i) lines.push_back(make(female));
  for (std::size_t i = lines.size(); i > 1; --i) std::swap(lines[i - 1], lines[pick(rng, i)]);

  std::string out;
  for (const auto& l : lines) {
    out += l;
    out += '\n';
  }
  return out;
}

}  // namespace gbias
