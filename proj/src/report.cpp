#include "gbias/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace gbias {

namespace {

Json audit_json(const PronounAudit& a) {
  Json j;
  j["male_counts"] = a.male_counts;
  j["female_counts"] = a.female_counts;
  j["male_total"] = a.male_total;
  j["female_total"] = a.female_total;
  j["female_share"] = a.female_share ? Json(*a.female_share) : Json(nullptr);
  return j;
}

std::string fixed(double v, int decimals, char sep) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s(buf);
  if (sep != '.') {
    for (auto& c : s) {
      if (c == '.') c = sep;
    }
  }
  return s;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s + " " : s + std::string(width - s.size(), ' ');
}

}  // namespace

Json BiasReport::to_json() const {
  Json j;
  j["metadata"] = metadata;
  Json models_json = Json::array();
  for (const auto& m : models) {
    Json mj;
    mj["model_id"] = m.model_id;
    mj["embedding_source"] = m.embedding_source;
    mj["vocab_hash"] = m.vocab_hash;
    Json per_test = Json::array();
    for (const auto& s : m.table.per_test) per_test.push_back({{"id", s.id}, {"pp", s.pp}, {"n_tokens", s.nll.tokens}});
    mj["per_test"] = std::move(per_test);
    const Increments& inc = m.table.increments;
    mj["increments"] = {{"t2_vs_t1", inc.t2_vs_t1}, {"t4_vs_t3", inc.t4_vs_t3}, {"t6_vs_t5", inc.t6_vs_t5}};
    mj["increments_text"] = {{"t2_vs_t1", format_increment(inc.t2_vs_t1)},
                             {"t4_vs_t3", format_increment(inc.t4_vs_t3)},
                             {"t6_vs_t5", format_increment(inc.t6_vs_t5)}};
    mj["mean_pp"] = m.table.mean_pp();
    if (m.balanced) {
      mj["balanced"] = {{"pp", m.balanced->pp}, {"n_tokens", m.balanced->tokens}, {"audit", audit_json(m.balanced->audit)}};
    }
    models_json.push_back(std::move(mj));
  }
  j["models"] = std::move(models_json);
  if (comparison) {
    Json cj;
    cj["biased_model_id"] = biased_model_id;
    cj["debiased_model_id"] = debiased_model_id;
    Json sentences = Json::array();
    for (const auto& s : comparison->sentences) {
      sentences.push_back({{"test_id", s.test_id},
                           {"text", s.text},
                           {"pp_bias", s.pp_bias},
                           {"pp_debias", s.pp_debias},
                           {"delta", s.delta}});
    }
    cj["sentences"] = std::move(sentences);
    cj["mean_delta"] = comparison->mean_delta;
    cj["mean_abs_delta"] = comparison->mean_abs_delta;
    j["comparison"] = std::move(cj);
  }
  return j;
}

std::string BiasReport::to_text(char sep) const {
  std::ostringstream out;
  out << "Perplexity per test set (relative increment vs. matched base set)\n";
  out << pad("System", 24);
  for (int id = 1; id <= 6; ++id) out << pad("Test " + std::to_string(id), id % 2 == 0 ? 18 : 10);
  out << pad("Balanced", 10) << '\n';
  for (const auto& m : models) {
    out << pad(m.model_id, 24);
    for (const auto& s : m.table.per_test) {
      std::string cell = fixed(s.pp, 1, sep);
      if (s.id % 2 == 0) {
        const double inc = s.id == 2 ? m.table.increments.t2_vs_t1
                           : s.id == 4 ? m.table.increments.t4_vs_t3
                                       : m.table.increments.t6_vs_t5;
        cell += " (" + format_increment(inc, sep) + ")";
      }
      out << pad(cell, s.id % 2 == 0 ? 18 : 10);
    }
    out << pad(m.balanced ? fixed(m.balanced->pp, 1, sep) : "-", 10) << '\n';
  }

  if (comparison) {
    out << "\nPer-sentence perplexity, " << biased_model_id << " -> " << debiased_model_id << '\n';
    out << pad("Test", 6) << pad("Sentence", 36) << pad("Bias", 10) << pad("DeBias", 10) << "Delta\n";
    for (const auto& s : comparison->sentences) {
      out << pad(std::to_string(s.test_id), 6) << pad(s.text, 36) << pad(fixed(s.pp_bias, 1, sep), 10)
          << pad(fixed(s.pp_debias, 1, sep), 10) << fixed(s.delta, 1, sep) << '\n';
    }
    out << "\nMean delta per test set:";
    for (std::size_t k = 0; k < 6; ++k) out << "  " << (k + 1) << ": " << fixed(comparison->mean_delta[k], 1, sep);
    out << '\n';
  }
  return out.str();
}

std::vector<std::string> check_report_schema(const Json& r) {
  std::vector<std::string> problems;
  const auto need = [&](const Json& obj, const char* key, bool (Json::*is)() const noexcept, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) {
      problems.push_back(where + ": missing '" + key + "'");
      return false;
    }
    if (!(obj.at(key).*is)()) {
      problems.push_back(where + ": '" + key + "' has the wrong type");
      return false;
    }
    return true;
  };
  if (!r.is_object()) return {"report is not an object"};
  need(r, "metadata", &Json::is_object, "report");
  if (need(r, "models", &Json::is_array, "report")) {
    for (std::size_t i = 0; i < r["models"].size(); ++i) {
      const Json& m = r["models"][i];
      const std::string where = "models[" + std::to_string(i) + "]";
      need(m, "model_id", &Json::is_string, where);
      need(m, "mean_pp", &Json::is_number, where);
      if (need(m, "per_test", &Json::is_array, where)) {
        for (const auto& t : m["per_test"]) {
          need(t, "id", &Json::is_number_integer, where + ".per_test");
          need(t, "pp", &Json::is_number, where + ".per_test");
          need(t, "n_tokens", &Json::is_number_integer, where + ".per_test");
        }
      }
      if (need(m, "increments", &Json::is_object, where)) {
        for (const char* k : {"t2_vs_t1", "t4_vs_t3", "t6_vs_t5"}) need(m["increments"], k, &Json::is_number, where + ".increments");
      }
      if (m.contains("balanced")) {
        need(m["balanced"], "pp", &Json::is_number, where + ".balanced");
        need(m["balanced"], "audit", &Json::is_object, where + ".balanced");
      }
    }
  }
  if (r.contains("comparison")) {
    const Json& c = r["comparison"];
    need(c, "biased_model_id", &Json::is_string, "comparison");
    need(c, "debiased_model_id", &Json::is_string, "comparison");
    if (need(c, "sentences", &Json::is_array, "comparison")) {
      for (const auto& s : c["sentences"]) {
        need(s, "text", &Json::is_string, "comparison.sentences");
        need(s, "pp_bias", &Json::is_number, "comparison.sentences");
        need(s, "pp_debias", &Json::is_number, "comparison.sentences");
        need(s, "delta", &Json::is_number, "comparison.sentences");
      }
    }
  }
  return problems;
}

double increment_recompute_error(const Json& report) {
  double worst = 0.0;
  for (const auto& m : report.at("models")) {
    std::vector<TestSetScore> scores;
    for (const auto& t : m.at("per_test")) {
      TestSetScore s;
      s.id = t.at("id").get<int>();
      s.pp = t.at("pp").get<double>();
      scores.push_back(s);
    }
    const Increments inc = compute_increments(scores);
    const Json& stored = m.at("increments");
    worst = std::max(worst, std::abs(inc.t2_vs_t1 - stored.at("t2_vs_t1").get<double>()));
    worst = std::max(worst, std::abs(inc.t4_vs_t3 - stored.at("t4_vs_t3").get<double>()));
    worst = std::max(worst, std::abs(inc.t6_vs_t5 - stored.at("t6_vs_t5").get<double>()));
  }
  return worst;
}

}  // namespace gbias
