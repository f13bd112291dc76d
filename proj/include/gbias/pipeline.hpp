#ifndef GBIAS_PIPELINE_HPP
#define GBIAS_PIPELINE_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gbias/cbow.hpp"
#include "gbias/config_json.hpp"
#include "gbias/debias.hpp"
#include "gbias/evalsuite.hpp"
#include "gbias/lstm_lm.hpp"
#include "gbias/report.hpp"

namespace gbias {

/// Declarative description of one end-to-end experiment. See
/// docs/config_schema.md for the JSON layout.
struct PipelineConfig {
  std::string profile = "desk";
  std::uint64_t seed = 1;
  std::string out_dir = "out";

  /// Training corpus. When empty, `synth` generates one.
  std::string corpus;
  std::optional<SynthConfig> synth;
  std::uint64_t vocab_min_count = 1;
  /// Language models train on the first N corpus sentences (0: all of them);
  /// the vocabulary and the embeddings always use the whole corpus.
  std::uint64_t lm_train_sentences = 0;

  /// Word-list overrides; empty paths use the built-in defaults.
  std::string definitional_pairs;
  std::string equality_pairs;
  std::string neutral_words;
  std::string testset_words;  // directory, see WordListBundle::load

  /// Pre-generated test sets (test1.txt ... test6.txt); empty generates them.
  std::string testsets_dir;
  /// Balanced evaluation corpus. When empty, `balanced_synth` generates one;
  /// when both are absent the balanced evaluation is skipped.
  std::string balanced_corpus;
  std::optional<SynthConfig> balanced_synth;

  CbowConfig embed;
  LmConfig lm;  // architecture shared by the three regimes
  bool equalize = true;

  /// Profile defaults, then the JSON fields, then the global seed pushed into
  /// every seeded block. ErrorCode::Config on unknown profile or bad fields.
  static PipelineConfig from_json(const Json& j);
  Json to_json() const;
  /// Referenced input paths must exist. ErrorCode::Config otherwise.
  void validate() const;
  /// Re-applies `seed` to embed, lm and synthetic blocks.
  void propagate_seed();
};

struct PipelineOptions {
  /// Stop after the named stage completes (simulates an interrupted run).
  std::string stop_after;
  std::function<void(const std::string&)> log;
};

struct PipelineResult {
  std::vector<std::string> executed;  // stages run in this invocation
  std::vector<std::string> skipped;   // stages whose markers were current
  bool completed = false;
  std::string report_path;
};

/// Stage order: corpus, audit, embed, debias, lm_learned, lm_biased,
/// lm_debiased, testsets, eval. Each stage writes its outputs and then a
/// marker under <out>/stages holding a hash of its config section and its
/// upstream hashes; a rerun skips stages whose marker hash still matches.
PipelineResult run_pipeline(const PipelineConfig& cfg, const PipelineOptions& opts = {});

const std::vector<std::string>& pipeline_stages();

/// Evaluates saved checkpoints into a report; ErrorCode::Config when their
/// vocabulary hashes differ. Ids name the models in the report; biased and
/// debiased ids select the per-sentence comparison (empty to skip it).
struct EvalInputs {
  std::vector<std::pair<std::string, std::string>> models;  // (model id, checkpoint path)
  std::vector<TestSet> testsets;
  std::optional<std::string> balanced_text;
  std::string biased_id;
  std::string debiased_id;
  Json metadata = Json::object();
};
BiasReport build_report(const EvalInputs& inputs);

}  // namespace gbias

#endif  // GBIAS_PIPELINE_HPP
