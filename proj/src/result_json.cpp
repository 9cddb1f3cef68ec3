#include "mte/result_json.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mte {

using nlohmann::json;

namespace {

// JSON has no encoding for non-finite numbers; they travel as null.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double read_number(const json& j, const char* key, double fallback = 0.0) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return v.get<double>();
}

json interval(const Interval& i) { return json::array({number(i.low), number(i.high)}); }

Interval read_interval(const json& j, const char* key) {
  if (!j.contains(key)) return {};
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 2) throw std::invalid_argument(std::string(key) + ": expected [low, high]");
  auto get = [](const json& v) {
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  };
  return {get(a[0]), get(a[1])};
}

}  // namespace

ResultRecord make_record(const MTEResult& r, double timing_ms) {
  ResultRecord rec;
  rec.method = std::string(to_string(r.method));
  rec.n = r.n;
  rec.h = r.h;
  rec.kernel = std::string(to_string(r.family));
  if (r.method == Method::DML) rec.folds = r.folds;
  rec.alpha = r.alpha;
  rec.theta1 = r.theta1;
  rec.theta0 = r.theta0;
  rec.delta = r.delta;
  rec.se1 = r.se1;
  rec.se0 = r.se0;
  rec.se_delta = r.se_delta;
  rec.ci1 = r.ci1;
  rec.ci0 = r.ci0;
  rec.ci_delta = r.ci_delta;
  rec.components = r.components;
  rec.flat_curve = r.diagnostics.flat_curve;
  rec.multimodal = r.diagnostics.multimodal;
  rec.m_hat_sign = r.diagnostics.m_hat_nonnegative ? "nonnegative" : "negative";
  rec.fold_reseeds = r.diagnostics.fold_reseeds;
  rec.warnings = r.diagnostics.warnings;
  if (r.diagnostics.bandwidth_rate_warning && rec.warnings.empty())
    rec.warnings.push_back("bandwidth rate conditions not met");
  rec.timing_ms = timing_ms;
  return rec;
}

void to_json(json& j, const ResultRecord& r) {
  j = json{{"schema_version", r.schema_version},
           {"method", r.method},
           {"n", r.n},
           {"h", number(r.h)},
           {"kernel", r.kernel},
           {"alpha", r.alpha},
           {"estimates", {{"theta1", number(r.theta1)},
                          {"theta0", number(r.theta0)},
                          {"delta", number(r.delta)}}},
           {"ses", {{"theta1", number(r.se1)},
                    {"theta0", number(r.se0)},
                    {"delta", number(r.se_delta)}}},
           {"cis", {{"theta1", interval(r.ci1)},
                    {"theta0", interval(r.ci0)},
                    {"delta", interval(r.ci_delta)}}},
           {"variance_components", {{"m1_hat", number(r.components.m1)},
                                    {"m0_hat", number(r.components.m0)},
                                    {"v1_hat", number(r.components.v1)},
                                    {"v0_hat", number(r.components.v0)}}},
           {"diagnostics", {{"flat_curve", r.flat_curve},
                            {"multimodal", r.multimodal},
                            {"m_hat_sign", r.m_hat_sign},
                            {"fold_reseeds", r.fold_reseeds},
                            {"warnings", r.warnings}}},
           {"timing_ms", r.timing_ms}};
  if (r.folds) j["K"] = *r.folds;
}

void from_json(const json& j, ResultRecord& r) {
  r = ResultRecord{};
  r.schema_version = j.at("schema_version").get<std::string>();
  r.method = j.at("method").get<std::string>();
  r.n = j.at("n").get<std::size_t>();
  r.h = read_number(j, "h");
  r.kernel = j.value("kernel", std::string{});
  if (j.contains("K")) r.folds = j.at("K").get<int>();
  r.alpha = read_number(j, "alpha", 0.05);
  const json empty = json::object();
  const json& est = j.contains("estimates") ? j.at("estimates") : empty;
  r.theta1 = read_number(est, "theta1");
  r.theta0 = read_number(est, "theta0");
  r.delta = read_number(est, "delta");
  const json& ses = j.contains("ses") ? j.at("ses") : empty;
  r.se1 = read_number(ses, "theta1");
  r.se0 = read_number(ses, "theta0");
  r.se_delta = read_number(ses, "delta");
  const json& cis = j.contains("cis") ? j.at("cis") : empty;
  r.ci1 = read_interval(cis, "theta1");
  r.ci0 = read_interval(cis, "theta0");
  r.ci_delta = read_interval(cis, "delta");
  const json& vc = j.contains("variance_components") ? j.at("variance_components") : empty;
  r.components = {read_number(vc, "m1_hat"), read_number(vc, "m0_hat"), read_number(vc, "v1_hat"),
                  read_number(vc, "v0_hat")};
  const json& dg = j.contains("diagnostics") ? j.at("diagnostics") : empty;
  r.flat_curve = dg.value("flat_curve", false);
  r.multimodal = dg.value("multimodal", false);
  r.m_hat_sign = dg.value("m_hat_sign", std::string{});
  r.fold_reseeds = dg.value("fold_reseeds", 0);
  r.warnings = dg.value("warnings", std::vector<std::string>{});
  r.timing_ms = read_number(j, "timing_ms");
}

json report_to_json(const sim::MonteCarloReport& report) {
  auto target = [](const sim::TargetSummary& t) {
    return json{{"truth", number(t.truth)}, {"bias", number(t.bias)},
                {"sd", number(t.sd)},       {"rmse", number(t.rmse)},
                {"coverage_95", number(t.coverage_95)},
                {"mean_ci_width", number(t.mean_ci_width)}};
  };
  json records = json::array();
  for (const auto& r : report.records) {
    json rec{{"rep", r.rep}, {"seed", r.seed}, {"ok", r.ok}};
    if (r.ok) {
      rec["theta1"] = number(r.theta1);
      rec["theta0"] = number(r.theta0);
      rec["delta"] = number(r.delta);
      rec["se_theta1"] = number(r.se1);
      rec["se_theta0"] = number(r.se0);
      rec["se_delta"] = number(r.se_delta);
      rec["h"] = number(r.h);
    } else {
      rec["error"] = r.error;
    }
    records.push_back(std::move(rec));
  }
  return json{{"schema_version", kSchemaVersion},
              {"dgp", report.dgp},
              {"n", report.n},
              {"reps", report.reps},
              {"method", std::string(to_string(report.method))},
              {"seed", report.seed},
              {"failures", report.failures},
              {"targets", {{"theta1", target(report.theta1)},
                           {"theta0", target(report.theta0)},
                           {"delta", target(report.delta)}}},
              {"records", std::move(records)}};
}

}  // namespace mte
