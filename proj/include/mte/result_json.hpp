#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mte/result.hpp"
#include "mte/simulation.hpp"

namespace mte {

inline constexpr const char* kSchemaVersion = "1";

/// Machine-readable summary of one estimation run.
struct ResultRecord {
  std::string schema_version = kSchemaVersion;
  std::string method;
  std::size_t n = 0;
  double h = 0.0;
  std::string kernel;
  std::optional<int> folds;
  double alpha = 0.05;

  double theta1 = 0.0;
  double theta0 = 0.0;
  double delta = 0.0;
  double se1 = 0.0;
  double se0 = 0.0;
  double se_delta = 0.0;
  Interval ci1;
  Interval ci0;
  Interval ci_delta;
  VarianceComponents components;

  bool flat_curve = false;
  bool multimodal = false;
  std::string m_hat_sign;  // "negative" or "nonnegative"
  int fold_reseeds = 0;
  std::vector<std::string> warnings;

  double timing_ms = 0.0;

  friend bool operator==(const ResultRecord&, const ResultRecord&) = default;
};

ResultRecord make_record(const MTEResult& result, double timing_ms);

void to_json(nlohmann::json& j, const ResultRecord& r);
/// Unknown fields are ignored; missing optional fields keep their defaults.
void from_json(const nlohmann::json& j, ResultRecord& r);

nlohmann::json report_to_json(const sim::MonteCarloReport& report);

}  // namespace mte
