#include "gbias/config_json.hpp"

namespace gbias {

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

Json cbow_config_to_json(const CbowConfig& c) {
  return {{"dim", c.dim},
          {"window", c.window},
          {"negatives", c.negatives},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"min_learning_rate", c.min_learning_rate},
          {"min_count", c.min_count},
          {"seed", c.seed},
          {"subsample_threshold", c.subsample_threshold},
          {"threads", c.threads}};
}

void apply_cbow_config(const Json& j, CbowConfig& c) {
  if (!j.is_object()) throw Error(ErrorCode::Config, "embed config must be a JSON object");
  take(j, "dim", c.dim);
  take(j, "window", c.window);
  take(j, "negatives", c.negatives);
  take(j, "epochs", c.epochs);
  take(j, "learning_rate", c.learning_rate);
  take(j, "min_learning_rate", c.min_learning_rate);
  take(j, "min_count", c.min_count);
  take(j, "seed", c.seed);
  take(j, "subsample_threshold", c.subsample_threshold);
  take(j, "threads", c.threads);
}

Json lm_config_to_json(const LmConfig& c) {
  return {{"layers", c.layers},
          {"hidden", c.hidden},
          {"emb_dim", c.emb_dim},
          {"dropout", c.dropout},
          {"seq_len", c.seq_len},
          {"batch", c.batch},
          {"learning_rate", c.learning_rate},
          {"lr_decay", c.lr_decay},
          {"grad_clip", c.grad_clip},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"embedding_mode", to_string(c.embedding_mode)},
          {"pretrained_path", c.pretrained_path},
          {"freeze_pretrained", c.freeze_pretrained}};
}

void apply_lm_config(const Json& j, LmConfig& c) {
  if (!j.is_object()) throw Error(ErrorCode::Config, "lm config must be a JSON object");
  take(j, "layers", c.layers);
  take(j, "hidden", c.hidden);
  take(j, "emb_dim", c.emb_dim);
  take(j, "dropout", c.dropout);
  take(j, "seq_len", c.seq_len);
  take(j, "batch", c.batch);
  take(j, "learning_rate", c.learning_rate);
  take(j, "lr_decay", c.lr_decay);
  take(j, "grad_clip", c.grad_clip);
  take(j, "epochs", c.epochs);
  take(j, "seed", c.seed);
  if (j.contains("embedding_mode")) {
    std::string mode;
    take(j, "embedding_mode", mode);
    c.embedding_mode = embedding_mode_from_string(mode);
  }
  take(j, "pretrained_path", c.pretrained_path);
  take(j, "freeze_pretrained", c.freeze_pretrained);
}

Json synth_config_to_json(const SynthConfig& c) {
  return {{"male_sentences", c.male_sentences},
          {"female_ratio", c.female_ratio},
          {"stereotype_strength", c.stereotype_strength},
          {"templates", c.templates},
          {"male_names", c.male_names},
          {"female_names", c.female_names},
          {"places", c.places},
          {"times", c.times},
          {"seed", c.seed}};
}

void apply_synth_config(const Json& j, SynthConfig& c) {
  if (!j.is_object()) throw Error(ErrorCode::Config, "synth config must be a JSON object");
  take(j, "male_sentences", c.male_sentences);
  take(j, "female_ratio", c.female_ratio);
  take(j, "stereotype_strength", c.stereotype_strength);
  take(j, "templates", c.templates);
  take(j, "male_names", c.male_names);
  take(j, "female_names", c.female_names);
  take(j, "places", c.places);
  take(j, "times", c.times);
  take(j, "seed", c.seed);
}

}  // namespace gbias
