#pragma once

#include <json.hpp>

#include "egocast/estimator.hpp"
#include "egocast/forecaster.hpp"
#include "egocast/synth.hpp"

namespace egocast {

struct ProviderConfig {
  std::string kind = "null";  // null | informative
  double sigma = 0.05;        // informative-provider noise, meters
  std::uint64_t seed = 0;     // 0: derive from the run seed
};

struct MetricConfig {
  std::vector<double> horizons_s{0.5, 1, 2, 3, 4, 5};
  int anchor_stride = 30;
};

// One experiment: data paths, both model configs, provider, metrics.
// Component seeds left at 0 are derived from the top-level seed, so a
// single --seed pins the whole run.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string train_data;
  std::string test_data;
  std::string out_dir = "run";
  std::string skeleton = "h17";  // h17 | h21
  EstimatorConfig estimator;
  ForecastConfig forecaster;
  ProviderConfig provider;
  MetricConfig metrics;
  GeneratorConfig generator;

  void derive_component_seeds();
  SkeletonSpec skeleton_spec() const;
};

SkeletonSpec skeleton_by_name(const std::string& name);

nlohmann::json estimator_config_to_json(const EstimatorConfig& cfg);
EstimatorConfig estimator_config_from_json(const nlohmann::json& j);
nlohmann::json forecaster_config_to_json(const ForecastConfig& cfg);
ForecastConfig forecaster_config_from_json(const nlohmann::json& j);

nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

// Paper-scale architecture preset: d = 256, L = 3, h = 8, D_v = 256,
// 2e5 / 3e4 iteration budgets.
void apply_paper_arch(RunConfig& cfg);

}  // namespace egocast
