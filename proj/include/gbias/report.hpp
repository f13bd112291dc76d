#ifndef GBIAS_REPORT_HPP
#define GBIAS_REPORT_HPP

#include <optional>
#include <string>
#include <vector>

#include "gbias/config_json.hpp"
#include "gbias/evalsuite.hpp"

namespace gbias {

struct ModelResult {
  std::string model_id;
  std::string embedding_source;  // "learned", "biased", "debiased" or a path
  std::string vocab_hash;
  EvalTable table;
  std::optional<BalancedResult> balanced;
};

struct BiasReport {
  Json metadata = Json::object();
  std::vector<ModelResult> models;
  std::optional<Comparison> comparison;
  std::string biased_model_id;
  std::string debiased_model_id;

  /// Document layout (see docs/report_schema.md):
  /// {metadata, models: [{model_id, embedding_source, vocab_hash, per_test:
  /// [{id, pp, n_tokens}], increments: {t2_vs_t1, t4_vs_t3, t6_vs_t5},
  /// increments_text, mean_pp, balanced?}], comparison?: {biased_model_id,
  /// debiased_model_id, sentences: [{test_id, text, pp_bias, pp_debias,
  /// delta}], mean_delta, mean_abs_delta}}
  Json to_json() const;
  /// Aligned-column tables: perplexity per test set with increments, then
  /// the per-sentence comparison.
  std::string to_text(char decimal_separator = '.') const;
};

/// Empty when `report` follows the documented layout; otherwise one message
/// per problem.
std::vector<std::string> check_report_schema(const Json& report);

/// Largest |stored increment - increment recomputed from stored PPs| over
/// every model in the document.
double increment_recompute_error(const Json& report);

}  // namespace gbias

#endif  // GBIAS_REPORT_HPP
