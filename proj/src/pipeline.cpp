#include "gbias/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "gbias/checkpoint.hpp"
#include "gbias/hash.hpp"

namespace gbias {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config

namespace {

template <typename T>
void take(const Json& j, const char* key, T& field) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Config, std::string("config field '") + key + "': " + e.what());
  }
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::Config, "pipeline config must be a JSON object");
  PipelineConfig c;
  take(j, "profile", c.profile);
  if (c.profile == "desk") {
    c.embed = CbowConfig::desk();
    c.lm = LmConfig::desk();
  } else if (c.profile == "paper") {
    c.embed = CbowConfig::paper();
    c.lm = LmConfig::paper();
  } else {
    throw Error(ErrorCode::Config, "unknown profile '" + c.profile + "' (expected desk or paper)");
  }
  take(j, "seed", c.seed);
  take(j, "out_dir", c.out_dir);
  take(j, "corpus", c.corpus);
  take(j, "vocab_min_count", c.vocab_min_count);
  take(j, "lm_train_sentences", c.lm_train_sentences);
  if (j.contains("synth")) {
    c.synth = SynthConfig::defaults();
    apply_synth_config(j["synth"], *c.synth);
  }
  if (j.contains("wordlists")) {
    const Json& w = j["wordlists"];
    take(w, "definitional_pairs", c.definitional_pairs);
    take(w, "equality_pairs", c.equality_pairs);
    take(w, "neutral_words", c.neutral_words);
    take(w, "testset_words", c.testset_words);
  }
  if (j.contains("eval")) {
    const Json& e = j["eval"];
    take(e, "testsets_dir", c.testsets_dir);
    take(e, "balanced_corpus", c.balanced_corpus);
    if (e.contains("balanced_synth")) {
      c.balanced_synth = SynthConfig::defaults();
      c.balanced_synth->female_ratio = 1.0;
      apply_synth_config(e["balanced_synth"], *c.balanced_synth);
    }
  }
  if (j.contains("embed")) apply_cbow_config(j["embed"], c.embed);
  if (j.contains("lm")) apply_lm_config(j["lm"], c.lm);
  if (j.contains("debias")) take(j["debias"], "equalize", c.equalize);
  c.propagate_seed();
  c.embed.validate();
  c.lm.validate();
  if (c.synth) c.synth->validate();
  if (c.balanced_synth) c.balanced_synth->validate();
  return c;
}

void PipelineConfig::propagate_seed() {
  embed.seed = seed;
  lm.seed = seed;
  if (synth) synth->seed = seed;
  if (balanced_synth) balanced_synth->seed = seed + 1000003;
}

Json PipelineConfig::to_json() const {
  Json j;
  j["profile"] = profile;
  j["seed"] = seed;
  j["out_dir"] = out_dir;
  j["corpus"] = corpus;
  if (synth) j["synth"] = synth_config_to_json(*synth);
  j["vocab_min_count"] = vocab_min_count;
  j["lm_train_sentences"] = lm_train_sentences;
  j["wordlists"] = {{"definitional_pairs", definitional_pairs},
                    {"equality_pairs", equality_pairs},
                    {"neutral_words", neutral_words},
                    {"testset_words", testset_words}};
  j["eval"] = {{"testsets_dir", testsets_dir}, {"balanced_corpus", balanced_corpus}};
  if (balanced_synth) j["eval"]["balanced_synth"] = synth_config_to_json(*balanced_synth);
  j["embed"] = cbow_config_to_json(embed);
  j["lm"] = lm_config_to_json(lm);
  j["debias"] = {{"equalize", equalize}};
  return j;
}

void PipelineConfig::validate() const {
  const auto exists = [](const std::string& p, const char* what) {
    if (!p.empty() && !fs::exists(p)) throw Error(ErrorCode::Config, std::string(what) + " not found: " + p);
  };
  if (corpus.empty() && !synth) throw Error(ErrorCode::Config, "config needs either 'corpus' or a 'synth' block");
  exists(corpus, "corpus");
  exists(definitional_pairs, "definitional pair file");
  exists(equality_pairs, "equality pair file");
  exists(neutral_words, "neutral word file");
  exists(testset_words, "test-set word directory");
  exists(testsets_dir, "test-set directory");
  exists(balanced_corpus, "balanced corpus");
}

const std::vector<std::string>& pipeline_stages() {
  static const std::vector<std::string> stages = {"corpus",      "audit",     "embed",    "debias", "lm_learned",
                                                  "lm_biased",   "lm_debiased", "testsets", "eval"};
  return stages;
}

// ---------------------------------------------------------------------------
// Report assembly

BiasReport build_report(const EvalInputs& inputs) {
  BiasReport report;
  report.metadata = inputs.metadata;
  std::vector<LanguageModel> models;
  std::string vocab_hash;
  for (const auto& [id, path] : inputs.models) {
    Json meta;
    models.push_back(load_checkpoint(path, &meta));
    const std::string h = models.back().vocab().hash();
    if (vocab_hash.empty()) {
      vocab_hash = h;
    } else if (h != vocab_hash) {
      throw Error(ErrorCode::Config, "refusing to mix models with different vocabularies: '" + id + "' has vocab hash " +
                                         h + ", expected " + vocab_hash);
    }
    ModelResult r;
    r.model_id = id;
    r.embedding_source = meta.value("embedding_source", to_string(models.back().config().embedding_mode));
    r.vocab_hash = h;
    r.table = evaluate_model(models.back(), inputs.testsets);
    if (inputs.balanced_text) r.balanced = balanced_eval(models.back(), *inputs.balanced_text);
    report.models.push_back(std::move(r));
  }

  if (!inputs.biased_id.empty() && !inputs.debiased_id.empty()) {
    const auto find = [&](const std::string& id) -> const LanguageModel& {
      for (std::size_t i = 0; i < inputs.models.size(); ++i) {
        if (inputs.models[i].first == id) return models[i];
      }
      throw Error(ErrorCode::Config, "no model with id '" + id + "' for the comparison");
    };
    report.comparison = compare_models(find(inputs.biased_id), find(inputs.debiased_id), inputs.testsets);
    report.biased_model_id = inputs.biased_id;
    report.debiased_model_id = inputs.debiased_id;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

void write_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write file: " + tmp.string());
    out << content;
    if (!out) throw Error(ErrorCode::Io, "write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

template <typename Writer>
void write_atomic_with(const fs::path& path, Writer&& writer) {
  const fs::path tmp = path.string() + ".tmp";
  writer(tmp.string());
  fs::rename(tmp, path);
}

std::string file_hash(const std::string& path) { return hash_hex(read_file(path)); }

std::string directory_hash(const std::string& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  Fnv1a h;
  for (const auto& f : files) h.update(f.filename().string()).update("\n").update(read_file(f.string()));
  return h.hex();
}

Json cbow_log_json(const CbowLog& log) {
  return {{"epoch_loss", log.epoch_loss},
          {"epoch_learning_rate", log.epoch_learning_rate},
          {"epoch_seconds", log.epoch_seconds}};
}

Json train_stats_json(const TrainStats& s) {
  Json j{{"epoch_loss", s.epoch_loss},
         {"epoch_perplexity", s.epoch_perplexity},
         {"epoch_learning_rate", s.epoch_learning_rate},
         {"epoch_seconds", s.epoch_seconds},
         {"updates", s.updates}};
  if (s.validation_perplexity) j["validation_perplexity"] = *s.validation_perplexity;
  return j;
}

class StageRunner {
 public:
  StageRunner(fs::path out, const PipelineOptions& opts, PipelineResult& result)
      : out_(std::move(out)), opts_(opts), result_(result) {
    fs::create_directories(out_ / "stages");
  }

  /// Runs `body` unless the marker for `name` already records `hash` and every
  /// output exists. Returns false when the pipeline must stop here.
  template <typename Body>
  bool run(const std::string& name, const std::string& hash, const std::vector<fs::path>& outputs, Body&& body) {
    hashes_[name] = hash;
    const fs::path marker = out_ / "stages" / (name + ".done");
    bool current = fs::exists(marker) && read_file(marker.string()) == hash;
    for (const auto& o : outputs) current = current && fs::exists(o);
    if (current) {
      result_.skipped.push_back(name);
      say("stage " + name + ": up to date, skipped");
    } else {
      say("stage " + name + ": running");
      body();
      write_atomic(marker, hash);
      result_.executed.push_back(name);
    }
    return opts_.stop_after != name;
  }

  const std::string& hash(const std::string& name) const { return hashes_.at(name); }
  const std::map<std::string, std::string>& hashes() const { return hashes_; }

  void say(const std::string& msg) const {
    if (opts_.log) opts_.log(msg);
  }

 private:
  fs::path out_;
  const PipelineOptions& opts_;
  PipelineResult& result_;
  std::map<std::string, std::string> hashes_;
};

std::string combine(std::initializer_list<std::string> parts) {
  Fnv1a h;
  for (const auto& p : parts) h.update(p).update("\x1f");
  return h.hex();
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg, const PipelineOptions& opts) {
  cfg.validate();
  if (!opts.stop_after.empty() &&
      std::find(pipeline_stages().begin(), pipeline_stages().end(), opts.stop_after) == pipeline_stages().end()) {
    throw Error(ErrorCode::Config, "unknown stage '" + opts.stop_after + "'");
  }
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  PipelineResult result;
  StageRunner stages(out, opts, result);
  const std::string config_hash = hash_hex(cfg.to_json().dump());

  // corpus
  const fs::path corpus_path = cfg.corpus.empty() ? out / "corpus.txt" : fs::path(cfg.corpus);
  const std::string corpus_section =
      cfg.corpus.empty() ? synth_config_to_json(*cfg.synth).dump() : "file:" + file_hash(cfg.corpus);
  if (!stages.run("corpus", combine({"corpus", corpus_section}), {corpus_path}, [&] {
        if (cfg.corpus.empty()) write_atomic(corpus_path, synth_corpus(*cfg.synth));
      })) {
    return result;
  }
  const std::string corpus_text = read_file(corpus_path.string());
  const std::string corpus_hash = hash_hex(corpus_text);
  const TokenizedText corpus = tokenize(corpus_text);
  const Vocabulary vocab = Vocabulary::build(corpus, cfg.vocab_min_count);
  const std::vector<WordId> ids = encode(corpus, vocab);
  std::vector<WordId> lm_ids = ids;
  if (cfg.lm_train_sentences > 0 && cfg.lm_train_sentences < corpus.sentences.size()) {
    TokenizedText head;
    head.sentences.assign(corpus.sentences.begin(), corpus.sentences.begin() + static_cast<std::ptrdiff_t>(cfg.lm_train_sentences));
    lm_ids = encode(head, vocab);
  }

  // audit
  const fs::path audit_path = out / "audit.json";
  if (!stages.run("audit", combine({"audit", corpus_hash}), {audit_path}, [&] {
        const auto flat = corpus.flat();
        write_atomic(audit_path, pronoun_audit(flat).to_json() + "\n");
      })) {
    return result;
  }

  // embed
  const fs::path vocab_path = out / "vocab.txt";
  const fs::path emb_path = out / "embeddings.txt";
  const std::string embed_hash = combine({"embed", corpus_hash, std::to_string(cfg.vocab_min_count),
                                          cbow_config_to_json(cfg.embed).dump()});
  if (!stages.run("embed", embed_hash, {vocab_path, emb_path}, [&] {
        std::ostringstream vs;
        vocab.save(vs);
        write_atomic(vocab_path, vs.str());
        CbowLog log;
        const EmbeddingMatrix emb = train_cbow(ids, vocab, cfg.embed, &log);
        write_atomic_with(emb_path, [&](const std::string& p) { save_text(emb, p); });
        Json meta{{"config_hash", config_hash}, {"stage_hash", embed_hash}, {"seed", cfg.embed.seed},
                  {"vocab_hash", vocab.hash()}, {"train_log", cbow_log_json(log)}};
        write_atomic(out / "embeddings.txt.meta.json", meta.dump(2) + "\n");
      })) {
    return result;
  }

  // debias
  WordSets sets = WordSets::defaults();
  std::string wordlist_section;
  if (!cfg.definitional_pairs.empty()) {
    sets.definitional_pairs = load_pairs(cfg.definitional_pairs);
    wordlist_section += file_hash(cfg.definitional_pairs);
  }
  if (!cfg.equality_pairs.empty()) {
    sets.equality_pairs = load_pairs(cfg.equality_pairs);
    wordlist_section += file_hash(cfg.equality_pairs);
  }
  if (!cfg.neutral_words.empty()) {
    const auto words = load_word_list(cfg.neutral_words);
    sets.neutral_words = std::set<std::string>(words.begin(), words.end());
    wordlist_section += file_hash(cfg.neutral_words);
  }
  const fs::path biased_path = out / "embeddings.biased.txt";
  const fs::path debiased_path = out / "embeddings.debiased.txt";
  const fs::path debias_report_path = out / "debias_report.json";
  const std::string debias_hash =
      combine({"debias", embed_hash, wordlist_section, cfg.equalize ? "equalize" : "no-equalize"});
  if (!stages.run("debias", debias_hash, {biased_path, debiased_path, debias_report_path}, [&] {
        const EmbeddingMatrix raw = load_text(emb_path.string());
        const EmbeddingMatrix biased = normalize_rows(raw);
        const DebiasResult res = debias_all(raw, sets, {cfg.equalize}, [&](const std::string& m) { stages.say("warning: " + m); });
        write_atomic_with(biased_path, [&](const std::string& p) { save_text(biased, p); });
        write_atomic_with(debiased_path, [&](const std::string& p) { save_text(res.embedding, p); });
        Json report{{"config_hash", config_hash},
                    {"stage_hash", debias_hash},
                    {"seed", cfg.seed},
                    {"vocab_hash", vocab.hash()},
                    {"explained_variance_ratio", res.subspace.explained_variance_ratio},
                    {"pairs_used", res.subspace.pairs_used},
                    {"neutralized_words", res.neutralized.size()},
                    {"max_abs_projection", res.max_neutral_projection},
                    {"equalize", cfg.equalize}};
        write_atomic(debias_report_path, report.dump(2) + "\n");
      })) {
    return result;
  }

  // three language models
  struct Regime {
    std::string stage, id;
    const fs::path* embedding;
  };
  const std::vector<Regime> regimes = {
      {"lm_learned", "learned", nullptr}, {"lm_biased", "biased", &biased_path}, {"lm_debiased", "debiased", &debiased_path}};
  std::vector<std::pair<std::string, std::string>> checkpoints;
  for (const auto& regime : regimes) {
    LmConfig lm = cfg.lm;
    lm.embedding_mode = regime.embedding ? EmbeddingMode::FrozenPretrained : EmbeddingMode::Learned;
    if (regime.embedding) {
      lm.emb_dim = cfg.embed.dim;
      lm.pretrained_path = regime.embedding->filename().string();
    }
    const fs::path ckpt = out / (regime.stage + ".ckpt");
    const std::string upstream = regime.embedding ? debias_hash : embed_hash;
    const std::string lm_hash = combine({regime.stage, upstream, corpus_hash, std::to_string(cfg.lm_train_sentences),
                                         lm_config_to_json(lm).dump()});
    checkpoints.emplace_back(regime.id, ckpt.string());
    if (!stages.run(regime.stage, lm_hash, {ckpt}, [&] {
          std::optional<EmbeddingMatrix> pre;
          if (regime.embedding) pre = load_text(regime.embedding->string());
          LanguageModel model = init_model(lm, vocab, pre ? &*pre : nullptr);
          const TrainStats stats = train(model, lm_ids);
          Json meta{{"config_hash", config_hash}, {"stage_hash", lm_hash},   {"seed", lm.seed},
                    {"vocab_hash", vocab.hash()}, {"embedding_source", regime.id}};
          write_atomic_with(ckpt, [&](const std::string& p) { save_checkpoint(model, p, meta); });
          write_atomic(out / (regime.stage + ".log.json"), train_stats_json(stats).dump(2) + "\n");
        })) {
      return result;
    }
  }

  // test sets and balanced corpus
  const fs::path testsets_path = cfg.testsets_dir.empty() ? out / "testsets" : fs::path(cfg.testsets_dir);
  const fs::path balanced_path = cfg.balanced_corpus.empty() ? out / "balanced.txt" : fs::path(cfg.balanced_corpus);
  const bool have_balanced = !cfg.balanced_corpus.empty() || cfg.balanced_synth.has_value();
  std::string testset_section = cfg.testsets_dir.empty()
                                    ? (cfg.testset_words.empty() ? "default-words" : directory_hash(cfg.testset_words))
                                    : "dir:" + directory_hash(cfg.testsets_dir);
  if (cfg.balanced_synth) testset_section += synth_config_to_json(*cfg.balanced_synth).dump();
  std::vector<fs::path> testset_outputs;
  if (cfg.testsets_dir.empty()) {
    for (int id = 1; id <= 6; ++id) testset_outputs.push_back(testsets_path / ("test" + std::to_string(id) + ".txt"));
  }
  if (cfg.balanced_synth && cfg.balanced_corpus.empty()) testset_outputs.push_back(balanced_path);
  const std::string testsets_hash = combine({"testsets", testset_section});
  if (!stages.run("testsets", testsets_hash, testset_outputs, [&] {
        if (cfg.testsets_dir.empty()) {
          const WordListBundle bundle =
              cfg.testset_words.empty() ? WordListBundle::defaults() : WordListBundle::load(cfg.testset_words);
          write_testsets(generate_testsets(bundle), testsets_path.string());
        }
        if (cfg.balanced_synth && cfg.balanced_corpus.empty()) write_atomic(balanced_path, synth_corpus(*cfg.balanced_synth));
      })) {
    return result;
  }

  // eval
  const fs::path report_json = out / "report.json";
  const fs::path report_txt = out / "report.txt";
  std::string eval_upstream;
  for (const auto& r : regimes) eval_upstream += stages.hash(r.stage);
  const std::string eval_hash = combine(
      {"eval", eval_upstream, testsets_hash, have_balanced ? file_hash(balanced_path.string()) : "no-balanced"});
  stages.run("eval", eval_hash, {report_json, report_txt}, [&] {
    EvalInputs in;
    in.models = checkpoints;
    in.testsets = read_testsets(testsets_path.string());
    if (have_balanced) in.balanced_text = read_file(balanced_path.string());
    in.biased_id = "biased";
    in.debiased_id = "debiased";
    Json stage_hashes = Json::object();
    for (const auto& [k, v] : stages.hashes()) stage_hashes[k] = v;
    in.metadata = {{"config_hash", config_hash}, {"seed", cfg.seed},        {"profile", cfg.profile},
                   {"corpus_hash", corpus_hash}, {"vocab_hash", vocab.hash()}, {"vocab_size", vocab.size()},
                   {"stage_hashes", stage_hashes}};
    const BiasReport report = build_report(in);
    write_atomic(report_json, report.to_json().dump(2) + "\n");
    write_atomic(report_txt, report.to_text());
  });
  result.completed = true;
  result.report_path = report_json.string();
  return result;
}

}  // namespace gbias
