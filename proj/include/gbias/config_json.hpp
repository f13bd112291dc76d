#ifndef GBIAS_CONFIG_JSON_HPP
#define GBIAS_CONFIG_JSON_HPP

// JSON (de)serialization of the training configurations. Missing fields keep
// the value already present in the target, so profile defaults can be
// overridden field by field.

#include <json.hpp>

#include "gbias/cbow.hpp"
#include "gbias/evalsuite.hpp"
#include "gbias/lstm_lm.hpp"

namespace gbias {

using Json = nlohmann::json;

Json cbow_config_to_json(const CbowConfig& c);
void apply_cbow_config(const Json& j, CbowConfig& c);

Json lm_config_to_json(const LmConfig& c);
void apply_lm_config(const Json& j, LmConfig& c);

/// Occupation and noun lists are not serialized; templates and context lists are.
Json synth_config_to_json(const SynthConfig& c);
void apply_synth_config(const Json& j, SynthConfig& c);

}  // namespace gbias

#endif  // GBIAS_CONFIG_JSON_HPP
