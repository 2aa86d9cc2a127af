#include "egocast/runconfig.hpp"

#include <fstream>

namespace egocast {

namespace {

using nlohmann::json;

template <class T>
void read_field(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad config field \"") + key + "\": " + e.what());
    }
  }
}

}  // namespace

SkeletonSpec skeleton_by_name(const std::string& name) {
  if (name == "h17") return skeleton_h17();
  if (name == "h21") return skeleton_h21();
  throw ConfigError("unknown skeleton '" + name + "' (expected h17 or h21)");
}

SkeletonSpec RunConfig::skeleton_spec() const { return skeleton_by_name(skeleton); }

void RunConfig::derive_component_seeds() {
  if (estimator.seed == 0) estimator.seed = derive_seed(seed, {0xE5ULL});
  if (forecaster.seed == 0) forecaster.seed = derive_seed(seed, {0xFCULL});
  if (provider.seed == 0) provider.seed = derive_seed(seed, {0xB1ULL});
  if (generator.seed == 0) generator.seed = seed;
}

nlohmann::json estimator_config_to_json(const EstimatorConfig& cfg) {
  return json{{"window", cfg.window},         {"width", cfg.width},
              {"layers", cfg.layers},         {"heads", cfg.heads},
              {"visual_dim", cfg.visual_dim}, {"mlp_hidden", cfg.mlp_hidden},
              {"lr", cfg.lr},                 {"batch", cfg.batch},
              {"iterations", cfg.iterations}, {"seed", cfg.seed}};
}

EstimatorConfig estimator_config_from_json(const nlohmann::json& j) {
  EstimatorConfig cfg;
  read_field(j, "window", cfg.window);
  read_field(j, "width", cfg.width);
  read_field(j, "layers", cfg.layers);
  read_field(j, "heads", cfg.heads);
  read_field(j, "visual_dim", cfg.visual_dim);
  read_field(j, "mlp_hidden", cfg.mlp_hidden);
  read_field(j, "lr", cfg.lr);
  read_field(j, "batch", cfg.batch);
  read_field(j, "iterations", cfg.iterations);
  read_field(j, "seed", cfg.seed);
  return cfg;
}

nlohmann::json forecaster_config_to_json(const ForecastConfig& cfg) {
  return json{{"window", cfg.window},
              {"horizon", cfg.horizon},
              {"width", cfg.width},
              {"layers", cfg.layers},
              {"heads", cfg.heads},
              {"mlp_hidden", cfg.mlp_hidden},
              {"weights",
               {{"pose", cfg.weights.pose},
                {"translation", cfg.weights.translation},
                {"rotation", cfg.weights.rotation}}},
              {"groundtruth_inputs", cfg.groundtruth_inputs},
              {"lr", cfg.lr},
              {"batch", cfg.batch},
              {"iterations", cfg.iterations},
              {"seed", cfg.seed}};
}

ForecastConfig forecaster_config_from_json(const nlohmann::json& j) {
  ForecastConfig cfg;
  read_field(j, "window", cfg.window);
  read_field(j, "horizon", cfg.horizon);
  read_field(j, "width", cfg.width);
  read_field(j, "layers", cfg.layers);
  read_field(j, "heads", cfg.heads);
  read_field(j, "mlp_hidden", cfg.mlp_hidden);
  if (j.contains("weights")) {
    read_field(j.at("weights"), "pose", cfg.weights.pose);
    read_field(j.at("weights"), "translation", cfg.weights.translation);
    read_field(j.at("weights"), "rotation", cfg.weights.rotation);
  }
  read_field(j, "groundtruth_inputs", cfg.groundtruth_inputs);
  read_field(j, "lr", cfg.lr);
  read_field(j, "batch", cfg.batch);
  read_field(j, "iterations", cfg.iterations);
  read_field(j, "seed", cfg.seed);
  return cfg;
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
  json generator{{"seed", cfg.generator.seed},
                 {"sequences_per_archetype", cfg.generator.sequences_per_archetype},
                 {"duration_s", cfg.generator.duration_s},
                 {"fps", cfg.generator.fps}};
  return json{{"seed", cfg.seed},
              {"train_data", cfg.train_data},
              {"test_data", cfg.test_data},
              {"out_dir", cfg.out_dir},
              {"skeleton", cfg.skeleton},
              {"estimator", estimator_config_to_json(cfg.estimator)},
              {"forecaster", forecaster_config_to_json(cfg.forecaster)},
              {"provider",
               {{"kind", cfg.provider.kind}, {"sigma", cfg.provider.sigma},
                {"seed", cfg.provider.seed}}},
              {"metrics",
               {{"horizons_s", cfg.metrics.horizons_s},
                {"anchor_stride", cfg.metrics.anchor_stride}}},
              {"generator", std::move(generator)}};
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  RunConfig cfg;
  read_field(j, "seed", cfg.seed);
  read_field(j, "train_data", cfg.train_data);
  read_field(j, "test_data", cfg.test_data);
  read_field(j, "out_dir", cfg.out_dir);
  read_field(j, "skeleton", cfg.skeleton);
  if (j.contains("estimator")) cfg.estimator = estimator_config_from_json(j.at("estimator"));
  if (j.contains("forecaster")) cfg.forecaster = forecaster_config_from_json(j.at("forecaster"));
  if (j.contains("provider")) {
    read_field(j.at("provider"), "kind", cfg.provider.kind);
    read_field(j.at("provider"), "sigma", cfg.provider.sigma);
    read_field(j.at("provider"), "seed", cfg.provider.seed);
  }
  if (j.contains("metrics")) {
    read_field(j.at("metrics"), "horizons_s", cfg.metrics.horizons_s);
    read_field(j.at("metrics"), "anchor_stride", cfg.metrics.anchor_stride);
  }
  if (j.contains("generator")) {
    read_field(j.at("generator"), "seed", cfg.generator.seed);
    read_field(j.at("generator"), "sequences_per_archetype",
               cfg.generator.sequences_per_archetype);
    read_field(j.at("generator"), "duration_s", cfg.generator.duration_s);
    read_field(j.at("generator"), "fps", cfg.generator.fps);
  }
  if (cfg.provider.kind != "null" && cfg.provider.kind != "informative")
    throw ConfigError("provider kind must be null or informative, got '" + cfg.provider.kind +
                      "'");
  if (cfg.metrics.horizons_s.empty()) throw ConfigError("metrics.horizons_s must not be empty");
  for (std::size_t i = 1; i < cfg.metrics.horizons_s.size(); ++i)
    if (cfg.metrics.horizons_s[i] <= cfg.metrics.horizons_s[i - 1])
      throw ConfigError("metrics.horizons_s must be strictly ascending");
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

void apply_paper_arch(RunConfig& cfg) {
  cfg.estimator.width = 256;
  cfg.estimator.layers = 3;
  cfg.estimator.heads = 8;
  cfg.estimator.visual_dim = 256;
  cfg.estimator.iterations = 200000;
  cfg.forecaster.width = 256;
  cfg.forecaster.layers = 3;
  cfg.forecaster.heads = 8;
  cfg.forecaster.iterations = 30000;
}

}  // namespace egocast
