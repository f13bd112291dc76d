// gbias: command-line front end. Exit codes: 0 success, 2 input or
// configuration error, 3 numeric divergence.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "gbias/checkpoint.hpp"
#include "gbias/hash.hpp"
#include "gbias/pipeline.hpp"

namespace fs = std::filesystem;
using namespace gbias;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string profile;
  std::string out;
};

CLI::Option* add_common(CLI::App* cmd, Common& c, const std::string& out_help) {
  cmd->add_option("--config", c.config, "JSON config file (see docs/config_schema.md)");
  cmd->add_option("--seed", c.seed, "global seed; overrides the config");
  cmd->add_option("--profile", c.profile, "desk or paper; overrides the config")->check(CLI::IsMember({"desk", "paper"}));
  return cmd->add_option("--out", c.out, out_help);
}

/// Config file, then --profile and --seed on top.
PipelineConfig load_config(const Common& c) {
  Json j = Json::object();
  if (!c.config.empty()) {
    try {
      j = Json::parse(read_file(c.config));
    } catch (const Json::parse_error& e) {
      throw Error(ErrorCode::Parse, "config " + c.config + ": " + e.what());
    }
  }
  if (!c.profile.empty()) j["profile"] = c.profile;
  if (c.seed) j["seed"] = *c.seed;
  if (!c.out.empty()) j["out_dir"] = c.out;
  return PipelineConfig::from_json(j);
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write file: " + path);
  out << text;
}

std::string config_hash(const PipelineConfig& cfg) { return hash_hex(cfg.to_json().dump()); }

void write_meta(const std::string& artifact, const PipelineConfig& cfg, Json extra) {
  extra["config_hash"] = config_hash(cfg);
  extra["seed"] = cfg.seed;
  write_text(artifact + ".meta.json", extra.dump(2) + "\n");
}

Vocabulary corpus_vocab(const std::string& corpus_path, std::uint64_t min_count, std::vector<WordId>* ids) {
  const TokenizedText text = tokenize(read_file(corpus_path));
  Vocabulary vocab = Vocabulary::build(text, min_count);
  if (ids) *ids = encode(text, vocab);
  return vocab;
}

void print_stage(const std::string& msg) { std::cerr << msg << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gender-bias measurement toolkit: embeddings, hard debiasing, LSTM language models and bias reports"};
  app.require_subcommand(1);

  // audit
  std::string audit_corpus, audit_out;
  auto* audit = app.add_subcommand("audit", "count gendered pronouns in a corpus");
  audit->add_option("corpus", audit_corpus, "corpus text file")->required();
  audit->add_option("--out", audit_out, "output JSON (default stdout)");

  // synth
  Common synth_c;
  std::optional<std::uint64_t> synth_male;
  std::optional<double> synth_ratio, synth_strength;
  auto* synth = app.add_subcommand("synth", "generate a synthetic pronoun-imbalanced corpus");
  add_common(synth, synth_c, "output text file (default stdout)");
  synth->add_option("--male-sentences", synth_male, "number of male-pronoun sentences");
  synth->add_option("--female-ratio", synth_ratio, "female sentences per male sentence");
  synth->add_option("--stereotype-strength", synth_strength, "probability of a stereotyped occupation");

  // testsets
  std::string ts_words, ts_out;
  auto* testsets = app.add_subcommand("testsets", "write the six stereotype-swap test sets");
  testsets->add_option("--words", ts_words, "word-list directory (default: built-in lists)");
  testsets->add_option("--out", ts_out, "output directory")->required();

  // train-embed
  Common embed_c;
  std::string embed_corpus;
  auto* train_embed = app.add_subcommand("train-embed", "train CBOW embeddings");
  add_common(train_embed, embed_c, "output directory");
  train_embed->add_option("--corpus", embed_corpus, "training corpus; overrides the config");

  // debias
  std::string db_in, db_out, db_def, db_eq, db_neutral, db_report;
  bool db_no_equalize = false;
  auto* debias = app.add_subcommand("debias", "hard-debias an embedding file");
  debias->add_option("embeddings", db_in, "input embedding file")->required();
  debias->add_option("--out", db_out, "output embedding file")->required();
  debias->add_option("--definitional-pairs", db_def, "female<TAB>male pairs defining the gender direction");
  debias->add_option("--equality-pairs", db_eq, "pairs to equalize");
  debias->add_option("--neutral-words", db_neutral, "words to neutralize (default: all non-gendered words)");
  debias->add_option("--report", db_report, "subspace report JSON (default <out>.report.json)");
  debias->add_flag("--no-equalize", db_no_equalize, "skip the equalize step");

  // train-lm
  Common lm_c;
  std::string lm_corpus, lm_mode = "learned", lm_embeddings, lm_validation;
  auto* train_lm = app.add_subcommand("train-lm", "train an LSTM language model");
  add_common(train_lm, lm_c, "output checkpoint path")->required();
  train_lm->add_option("--corpus", lm_corpus, "training corpus; overrides the config");
  train_lm->add_option("--mode", lm_mode, "learned or frozen")->check(CLI::IsMember({"learned", "frozen"}));
  train_lm->add_option("--embeddings", lm_embeddings, "pretrained embedding file (frozen mode)");
  train_lm->add_option("--validation", lm_validation, "validation corpus for per-epoch perplexity");

  // eval
  std::vector<std::string> ev_models;
  std::string ev_testsets, ev_balanced, ev_out, ev_biased, ev_debiased;
  char ev_sep = '.';
  auto* eval = app.add_subcommand("eval", "evaluate checkpoints on the test sets");
  eval->add_option("--model", ev_models, "id=checkpoint (repeatable)")->required();
  eval->add_option("--testsets", ev_testsets, "directory with test1.txt ... test6.txt (default: generated)");
  eval->add_option("--balanced", ev_balanced, "balanced corpus for the continuous-state perplexity");
  eval->add_option("--biased", ev_biased, "model id of the biased regime for the per-sentence comparison");
  eval->add_option("--debiased", ev_debiased, "model id of the debiased regime");
  eval->add_option("--decimal-separator", ev_sep, "decimal separator in the text report");
  eval->add_option("--out", ev_out, "output directory (report.json, report.txt)")->required();

  // pipeline
  Common pipe_c;
  std::string pipe_stop;
  auto* pipeline = app.add_subcommand("pipeline", "run every stage from one config");
  add_common(pipeline, pipe_c, "output directory; overrides the config");
  pipeline->add_option("--stop-after", pipe_stop, "stop after the named stage");

  // neighbors
  std::string nb_file, nb_word;
  std::size_t nb_k = 10;
  auto* neighbors = app.add_subcommand("neighbors", "print the nearest neighbors of a word");
  neighbors->add_option("embeddings", nb_file, "embedding file")->required();
  neighbors->add_option("word", nb_word, "query word")->required();
  neighbors->add_option("-k", nb_k, "number of neighbors");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (audit->parsed()) {
      const TokenizedText text = tokenize(read_file(audit_corpus));
      write_text(audit_out, pronoun_audit(text.flat()).to_json() + "\n");
    } else if (synth->parsed()) {
      SynthConfig cfg = SynthConfig::defaults();
      if (!synth_c.config.empty()) apply_synth_config(Json::parse(read_file(synth_c.config)), cfg);
      if (synth_c.seed) cfg.seed = *synth_c.seed;
      if (synth_male) cfg.male_sentences = *synth_male;
      if (synth_ratio) cfg.female_ratio = *synth_ratio;
      if (synth_strength) cfg.stereotype_strength = *synth_strength;
      cfg.validate();
      write_text(synth_c.out, synth_corpus(cfg));
    } else if (testsets->parsed()) {
      const WordListBundle bundle = ts_words.empty() ? WordListBundle::defaults() : WordListBundle::load(ts_words);
      write_testsets(generate_testsets(bundle), ts_out);
    } else if (train_embed->parsed()) {
      PipelineConfig cfg = load_config(embed_c);
      if (!embed_corpus.empty()) cfg.corpus = embed_corpus;
      if (cfg.corpus.empty()) throw Error(ErrorCode::Config, "train-embed needs --corpus or a config 'corpus' field");
      const fs::path out = embed_c.out.empty() ? fs::path(cfg.out_dir) : fs::path(embed_c.out);
      fs::create_directories(out);
      std::vector<WordId> ids;
      const Vocabulary vocab = corpus_vocab(cfg.corpus, cfg.vocab_min_count, &ids);
      CbowLog log;
      const EmbeddingMatrix emb = train_cbow(ids, vocab, cfg.embed, &log);
      std::ostringstream vs;
      vocab.save(vs);
      write_text((out / "vocab.txt").string(), vs.str());
      save_text(emb, (out / "embeddings.txt").string());
      const Json log_json{{"epoch_loss", log.epoch_loss},
                          {"epoch_learning_rate", log.epoch_learning_rate},
                          {"epoch_seconds", log.epoch_seconds}};
      write_text((out / "embed_log.json").string(), log_json.dump(2) + "\n");
      write_meta((out / "embeddings.txt").string(), cfg,
                 {{"vocab_hash", vocab.hash()}, {"embed", cbow_config_to_json(cfg.embed)}});
    } else if (debias->parsed()) {
      WordSets sets = WordSets::defaults();
      if (!db_def.empty()) sets.definitional_pairs = load_pairs(db_def);
      if (!db_eq.empty()) sets.equality_pairs = load_pairs(db_eq);
      if (!db_neutral.empty()) {
        const auto words = load_word_list(db_neutral);
        sets.neutral_words = std::set<std::string>(words.begin(), words.end());
      }
      const DebiasResult res = debias_all(load_text(db_in), sets, {!db_no_equalize});
      save_text(res.embedding, db_out);
      const Json report{{"input", db_in},
                        {"input_hash", hash_hex(read_file(db_in))},
                        {"explained_variance_ratio", res.subspace.explained_variance_ratio},
                        {"pairs_used", res.subspace.pairs_used},
                        {"neutralized_words", res.neutralized.size()},
                        {"max_abs_projection", res.max_neutral_projection},
                        {"equalize", !db_no_equalize}};
      write_text(db_report.empty() ? db_out + ".report.json" : db_report, report.dump(2) + "\n");
    } else if (train_lm->parsed()) {
      PipelineConfig cfg = load_config(lm_c);
      if (!lm_corpus.empty()) cfg.corpus = lm_corpus;
      if (cfg.corpus.empty()) throw Error(ErrorCode::Config, "train-lm needs --corpus or a config 'corpus' field");
      LmConfig lm = cfg.lm;
      lm.embedding_mode = embedding_mode_from_string(lm_mode);
      std::optional<EmbeddingMatrix> pre;
      if (lm.embedding_mode == EmbeddingMode::FrozenPretrained) {
        if (lm_embeddings.empty()) throw Error(ErrorCode::Config, "frozen mode needs --embeddings");
        pre = load_text(lm_embeddings);
        lm.emb_dim = static_cast<int>(pre->vectors().cols());
        lm.pretrained_path = lm_embeddings;
      }
      std::vector<WordId> ids;
      const Vocabulary vocab = corpus_vocab(cfg.corpus, cfg.vocab_min_count, &ids);
      LanguageModel model = init_model(lm, vocab, pre ? &*pre : nullptr);
      std::vector<WordId> valid;
      TrainOptions opts;
      if (!lm_validation.empty()) {
        valid = encode(tokenize(read_file(lm_validation)), vocab);
        opts.validation = valid;
      }
      const TrainStats stats = train(model, ids, opts);
      const Json meta{{"config_hash", config_hash(cfg)},
                      {"seed", lm.seed},
                      {"vocab_hash", vocab.hash()},
                      {"embedding_source", pre ? lm_embeddings : std::string("learned")}};
      save_checkpoint(model, lm_c.out, meta);
      Json log{{"epoch_loss", stats.epoch_loss},
               {"epoch_perplexity", stats.epoch_perplexity},
               {"epoch_learning_rate", stats.epoch_learning_rate},
               {"epoch_seconds", stats.epoch_seconds},
               {"updates", stats.updates}};
      if (stats.validation_perplexity) log["validation_perplexity"] = *stats.validation_perplexity;
      write_text(lm_c.out + ".log.json", log.dump(2) + "\n");
    } else if (eval->parsed()) {
      EvalInputs in;
      for (const auto& spec : ev_models) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0) throw Error(ErrorCode::Config, "--model expects id=path, got '" + spec + "'");
        in.models.emplace_back(spec.substr(0, eq), spec.substr(eq + 1));
      }
      in.testsets = ev_testsets.empty() ? generate_testsets(WordListBundle::defaults()) : read_testsets(ev_testsets);
      if (!ev_balanced.empty()) in.balanced_text = read_file(ev_balanced);
      in.biased_id = ev_biased;
      in.debiased_id = ev_debiased;
      const BiasReport report = build_report(in);
      fs::create_directories(ev_out);
      write_text((fs::path(ev_out) / "report.json").string(), report.to_json().dump(2) + "\n");
      write_text((fs::path(ev_out) / "report.txt").string(), report.to_text(ev_sep));
    } else if (pipeline->parsed()) {
      const PipelineConfig cfg = load_config(pipe_c);
      PipelineOptions opts;
      opts.stop_after = pipe_stop;
      opts.log = print_stage;
      const PipelineResult res = run_pipeline(cfg, opts);
      if (res.completed) std::cerr << "report: " << res.report_path << '\n';
    } else if (neighbors->parsed()) {
      for (const auto& [w, c] : nearest_neighbors(load_text(nb_file), nb_word, nb_k)) std::cout << w << '\t' << c << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const Json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
