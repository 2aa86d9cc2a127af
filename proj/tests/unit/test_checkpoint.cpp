#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "egocast/harness.hpp"

using namespace egocast;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) {
    path = (std::filesystem::temp_directory_path() / name).string();
  }
  ~TempFile() { std::remove(path.c_str()); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

EstimatorConfig small_config() {
  EstimatorConfig cfg;
  cfg.window = 3;
  cfg.width = 8;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.visual_dim = 4;
  cfg.mlp_hidden = 16;
  cfg.seed = 77;
  return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("checkpoint");

TEST_CASE("save-load-save is byte-identical") {
  TempFile a("egocast_ckpt_a.bin"), b("egocast_ckpt_b.bin");
  CurrentFrameModel model(small_config(), skeleton_h17());
  save_estimator_checkpoint(a.path, model, 123);

  Checkpoint loaded = load_checkpoint(a.path);
  CHECK(loaded.kind == "estimator");
  CHECK(loaded.step == 123);
  std::vector<NamedParam> as_params;
  for (auto& [name, tensor] : loaded.tensors) as_params.push_back({name, tensor});
  save_checkpoint(b.path, loaded.kind, loaded.config, loaded.step, as_params);

  CHECK(slurp(a.path) == slurp(b.path));
}

TEST_CASE("round trip restores bitwise-identical parameters") {
  TempFile tmp("egocast_ckpt_c.bin");
  CurrentFrameModel model(small_config(), skeleton_h17());
  save_estimator_checkpoint(tmp.path, model, 5);

  CurrentFrameModel restored = load_estimator_checkpoint(tmp.path);
  std::vector<NamedParam> a = model.named_parameters();
  std::vector<NamedParam> b = restored.named_parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    const auto va = a[i].tensor.values();
    const auto vb = b[i].tensor.values();
    REQUIRE(va.size() == vb.size());
    for (std::size_t j = 0; j < va.size(); ++j) CHECK(va[j] == vb[j]);
  }

  // Identical behavior, not just identical bytes.
  const std::vector<Vec3> window = {{0, 0, 1.5}, {0.1, 0, 1.5}};
  const std::vector<double> visual(4, 0.25);
  BodyPose pa = model.estimate(window, visual);
  BodyPose pb = restored.estimate(window, visual);
  for (std::size_t j = 0; j < pa.joints.size(); ++j) CHECK(pa.joints[j].x == pb.joints[j].x);
}

TEST_CASE("config echo mismatch fails the load") {
  TempFile tmp("egocast_ckpt_d.bin");
  CurrentFrameModel model(small_config(), skeleton_h17());
  save_estimator_checkpoint(tmp.path, model, 1);

  Checkpoint ckpt = load_checkpoint(tmp.path);
  EstimatorConfig other = small_config();
  other.lr = 9e-9;  // same shapes, different config
  CurrentFrameModel other_model(other, skeleton_h17());
  CHECK_THROWS_AS(require_checkpoint_config(ckpt, "estimator",
                                            nlohmann::json{
                                                {"model", estimator_config_to_json(other)},
                                                {"skeleton", skeleton_to_json(skeleton_h17())}}),
                  ConfigError);
  CHECK_THROWS_AS(require_checkpoint_config(ckpt, "forecaster", ckpt.config), ConfigError);
  (void)other_model;
}

TEST_CASE("kind mixups and corrupted files are rejected") {
  TempFile tmp("egocast_ckpt_e.bin");
  ForecastConfig cfg;
  cfg.window = 3;
  cfg.horizon = 2;
  cfg.width = 8;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.mlp_hidden = 16;
  ForecastModel model(cfg, skeleton_h17());
  save_forecaster_checkpoint(tmp.path, model, 9);

  CHECK_THROWS_AS(load_estimator_checkpoint(tmp.path), Error);

  std::string blob = slurp(tmp.path);
  TempFile cut("egocast_ckpt_f.bin");
  std::ofstream(cut.path, std::ios::binary) << blob.substr(0, blob.size() / 2);
  CHECK_THROWS_AS(load_checkpoint(cut.path), FormatError);

  TempFile junk("egocast_ckpt_g.bin");
  std::ofstream(junk.path, std::ios::binary) << "definitely not a checkpoint";
  CHECK_THROWS_AS(load_checkpoint(junk.path), FormatError);
}

TEST_CASE("forecaster checkpoints round trip through the harness loader") {
  TempFile tmp("egocast_ckpt_h.bin");
  ForecastConfig cfg;
  cfg.window = 4;
  cfg.horizon = 3;
  cfg.width = 8;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.mlp_hidden = 16;
  cfg.seed = 3;
  ForecastModel model(cfg, skeleton_h17());
  save_forecaster_checkpoint(tmp.path, model, 2);
  ForecastModel restored = load_forecaster_checkpoint(tmp.path);

  std::vector<ForecastToken> tokens;
  BodyPose pose;
  for (int j = 0; j < 17; ++j) pose.joints.push_back({0.1 * j, 0.0, 1.0});
  tokens.push_back(build_forecast_token(pose, {0, 0, 1.6}, {1, 0, 0, 0}));

  ForecastOutput a = model.forecast(tokens);
  ForecastOutput b = restored.forecast(tokens);
  for (int f = 0; f < a.frames(); ++f) CHECK(a.positions[f].x == b.positions[f].x);
}

TEST_SUITE_END();
