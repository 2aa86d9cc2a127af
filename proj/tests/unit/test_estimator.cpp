#include <doctest.h>

#include <cmath>

#include "egocast/estimator.hpp"
#include "egocast/synth.hpp"

using namespace egocast;

namespace {

EstimatorConfig tiny_config() {
  EstimatorConfig cfg;
  cfg.window = 3;
  cfg.width = 8;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.visual_dim = 4;
  cfg.mlp_hidden = 16;
  cfg.seed = 5;
  return cfg;
}

SkeletonSpec two_joint_skeleton() {
  SkeletonSpec s;
  s.joints = {"head", "tail"};
  s.root_rule.joints = {"head"};
  return s;
}

std::vector<Vec3> ramp_window(int len) {
  std::vector<Vec3> w;
  for (int i = 0; i < len; ++i) w.push_back({0.1 * i, -0.05 * i, 1.5 + 0.01 * i});
  return w;
}

}  // namespace

TEST_SUITE_BEGIN("estimator");

TEST_CASE("encode_window handles warm-up lengths and stays finite") {
  CurrentFrameModel model(tiny_config(), two_joint_skeleton());
  for (int len = 1; len <= 3; ++len) {
    Tensor e = model.encode_window(ramp_window(len));
    REQUIRE(e.shape() == Shape{8});
    for (double v : e.values()) CHECK(std::isfinite(v));
  }
  CHECK_THROWS_AS(model.encode_window({}), ContractError);
  CHECK_THROWS_AS(model.encode_window(ramp_window(4)), ContractError);
  Tape::active().reset();
}

TEST_CASE("encode_window is deterministic") {
  CurrentFrameModel model(tiny_config(), two_joint_skeleton());
  Tensor a = model.encode_window(ramp_window(2));
  Tensor b = model.encode_window(ramp_window(2));
  for (int i = 0; i < a.numel(); ++i) CHECK(a.at(i) == b.at(i));
  Tape::active().reset();
}

TEST_CASE("estimate emits J x 3 for the default skeletons") {
  for (const SkeletonSpec& skel : {skeleton_h17(), skeleton_h21()}) {
    EstimatorConfig cfg = tiny_config();
    CurrentFrameModel model(cfg, skel);
    const std::vector<double> visual(4, 0.0);
    BodyPose pose = model.estimate(ramp_window(3), visual);
    CHECK(static_cast<int>(pose.joints.size()) == skel.joint_count());
    for (const Vec3& j : pose.joints) CHECK(j.finite());
  }
}

TEST_CASE("estimate is bitwise deterministic") {
  CurrentFrameModel model(tiny_config(), two_joint_skeleton());
  const std::vector<double> visual = {0.1, -0.2, 0.3, 0.4};
  BodyPose a = model.estimate(ramp_window(3), visual);
  BodyPose b = model.estimate(ramp_window(3), visual);
  for (std::size_t j = 0; j < a.joints.size(); ++j) {
    CHECK(a.joints[j].x == b.joints[j].x);
    CHECK(a.joints[j].y == b.joints[j].y);
    CHECK(a.joints[j].z == b.joints[j].z);
  }
}

TEST_CASE("different visual features change the output") {
  CurrentFrameModel model(tiny_config(), two_joint_skeleton());
  const std::vector<double> zero(4, 0.0);
  const std::vector<double> informative = {1.0, -0.5, 0.25, 2.0};
  BodyPose a = model.estimate(ramp_window(3), zero);
  BodyPose b = model.estimate(ramp_window(3), informative);
  bool any_difference = false;
  for (std::size_t j = 0; j < a.joints.size(); ++j)
    any_difference = any_difference || (a.joints[j] - b.joints[j]).norm() > 0;
  CHECK(any_difference);
}

TEST_CASE("visual feature of the wrong dimension is rejected") {
  CurrentFrameModel model(tiny_config(), two_joint_skeleton());
  const std::vector<double> too_long(9, 0.0);
  CHECK_THROWS_AS(model.estimate(ramp_window(2), too_long), ContractError);
}

TEST_CASE("full windows ignore frames before t-k+1") {
  EstimatorConfig cfg = tiny_config();
  CurrentFrameModel model(cfg, skeleton_h17());
  auto null_provider = make_null_provider(cfg.visual_dim);

  PoseSequence a = generate_sequence(MotionArchetype::walk(), skeleton_h17(), 2.0, 3);
  PoseSequence b = a;
  // Rewrite history strictly older than the window of t = 10 (k = 3).
  for (int i = 0; i < 8; ++i) {
    b.frames[i].headset.position.x += 5.0;
    b.frames[i].headset.position.y -= 2.0;
  }
  BodyPose pa = estimate_current_pose(a, 10, *null_provider, model);
  BodyPose pb = estimate_current_pose(b, 10, *null_provider, model);
  for (std::size_t j = 0; j < pa.joints.size(); ++j) {
    CHECK(pa.joints[j].x == pb.joints[j].x);
    CHECK(pa.joints[j].y == pb.joints[j].y);
    CHECK(pa.joints[j].z == pb.joints[j].z);
  }
}

TEST_CASE("width not divisible by heads is a configuration error") {
  EstimatorConfig cfg = tiny_config();
  cfg.width = 10;
  cfg.heads = 4;
  CHECK_THROWS_AS(CurrentFrameModel(cfg, skeleton_h17()), ConfigError);
}

TEST_CASE("null provider returns constant zeros") {
  auto provider = make_null_provider(6);
  CHECK(provider->dim() == 6);
  PoseSequence seq = generate_sequence(MotionArchetype::stand(), skeleton_h17(), 1.0, 1);
  for (int t : {0, 5, 20}) {
    const std::vector<double> f = provider->feature(seq, t);
    REQUIRE(f.size() == 6);
    for (double v : f) CHECK(v == 0.0);
  }
}

TEST_CASE("informative provider with identity projection echoes the pose") {
  SkeletonSpec skel = two_joint_skeleton();
  const int dim = 6;  // 3J
  std::vector<double> identity(36, 0.0);
  for (int i = 0; i < 6; ++i) identity[i * 6 + i] = 1.0;
  auto provider = make_informative_provider_with_projection(skel, identity, dim, 0.0, 1);

  PoseSequence seq;
  seq.skeleton = skel;
  PoseFrame f;
  f.index = 0;
  f.timestamp_s = 0;
  f.headset.position = {0, 0, 1.5};
  f.headset.rotation = {1, 0, 0, 0};
  f.body = BodyPose{{{1, 2, 3}, {4, 5, 6}}};
  seq.frames.push_back(f);

  const std::vector<double> feat = provider->feature(seq, 0);
  CHECK(feat == std::vector<double>{1, 2, 3, 4, 5, 6});
}

TEST_CASE("informative provider is deterministic per seed") {
  SkeletonSpec skel = skeleton_h17();
  PoseSequence seq = generate_sequence(MotionArchetype::walk(), skeleton_h17(), 1.0, 7);
  auto a = make_informative_provider(skel, 8, 0.05, 42);
  auto b = make_informative_provider(skel, 8, 0.05, 42);
  auto c = make_informative_provider(skel, 8, 0.05, 43);
  CHECK(a->feature(seq, 3) == b->feature(seq, 3));
  CHECK(a->feature(seq, 3) == a->feature(seq, 3));
  CHECK(a->feature(seq, 3) != c->feature(seq, 3));
}

TEST_CASE("informative provider rejects frames without ground truth") {
  SkeletonSpec skel = skeleton_h17();
  PoseSequence seq = generate_sequence(MotionArchetype::stand(), skeleton_h17(), 1.0, 2);
  seq.frames[4].body.reset();
  auto provider = make_informative_provider(skel, 8, 0.0, 1);
  CHECK_THROWS_AS(provider->feature(seq, 4), ContractError);
}

TEST_CASE("feature variance grows with noise sigma") {
  SkeletonSpec skel = skeleton_h17();
  // One long stand sequence: pose variation is small, so the projection
  // term is nearly constant and noise dominates the spread.
  PoseSequence seq = generate_sequence(MotionArchetype::stand(), skeleton_h17(), 34.0, 11);
  REQUIRE(seq.size() >= 1000);

  auto spread = [&](double sigma) {
    auto provider = make_informative_provider(skel, 4, sigma, 9);
    double mean = 0, mean_sq = 0;
    const int n = 1000;
    for (int t = 0; t < n; ++t) {
      const double v = provider->feature(seq, t)[0];
      mean += v;
      mean_sq += v * v;
    }
    mean /= n;
    return mean_sq / n - mean * mean;
  };

  const double v0 = spread(0.0);
  const double v_small = spread(0.05);
  const double v_large = spread(0.5);
  CHECK(v_small > v0);
  CHECK(v_large > 10 * v_small);
}

TEST_CASE("gradients flow through the whole estimation path") {
  EstimatorConfig cfg = tiny_config();
  CurrentFrameModel model(cfg, two_joint_skeleton());
  const std::vector<Vec3> window = ramp_window(3);
  const std::vector<double> visual = {0.2, -0.1, 0.4, 0.8};
  const std::vector<double> target = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};

  auto loss_fn = [&]() {
    return l1_loss(model.pose_logits(window, visual), Tensor({6}, target));
  };
  // A representative parameter from each stage; the acceptance suite
  // sweeps every parameter on the tiny configs.
  int checked = 0;
  for (NamedParam& p : model.named_parameters()) {
    if (p.name != "input_proj.weight" && p.name != "fusion.hidden.weight" &&
        p.name != "pos_embed" && p.name != "encoder.layer0.attn.wq")
      continue;
    CHECK(finite_diff_check_param(loss_fn, p.tensor, 1e-5) < 1e-4);
    ++checked;
  }
  CHECK(checked == 4);
}

TEST_CASE("training on a tiny set reduces loss deterministically") {
  EstimatorConfig cfg;
  cfg.window = 4;
  cfg.width = 8;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.visual_dim = 4;
  cfg.mlp_hidden = 16;
  cfg.lr = 3e-3;
  cfg.batch = 4;
  cfg.iterations = 40;
  cfg.seed = 11;

  std::vector<PoseSequence> data = {
      generate_sequence(MotionArchetype::stand(), skeleton_h17(), 2.0, 1),
      generate_sequence(MotionArchetype::walk(), skeleton_h17(), 2.0, 2)};
  auto provider = make_null_provider(cfg.visual_dim);

  CurrentFrameModel model_a(cfg, skeleton_h17());
  TrainStats stats_a = train_current_module(model_a, data, *provider);
  REQUIRE(stats_a.loss_trace.size() == 40);
  CHECK(stats_a.loss_trace.back() < stats_a.loss_trace.front());

  CurrentFrameModel model_b(cfg, skeleton_h17());
  TrainStats stats_b = train_current_module(model_b, data, *provider);
  CHECK(stats_a.loss_trace == stats_b.loss_trace);
  std::vector<NamedParam> pa = model_a.named_parameters();
  std::vector<NamedParam> pb = model_b.named_parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const auto va = pa[i].tensor.values();
    const auto vb = pb[i].tensor.values();
    for (std::size_t j = 0; j < va.size(); ++j) CHECK(va[j] == vb[j]);
  }
}

TEST_CASE("training rejects a dataset with no annotated frames") {
  EstimatorConfig cfg = tiny_config();
  CurrentFrameModel model(cfg, skeleton_h17());
  PoseSequence bare = generate_sequence(MotionArchetype::stand(), skeleton_h17(), 1.0, 1);
  for (PoseFrame& f : bare.frames) f.body.reset();
  std::vector<PoseSequence> data = {bare};
  auto provider = make_null_provider(cfg.visual_dim);
  CHECK_THROWS_AS(train_current_module(model, data, *provider), DataError);
}

TEST_SUITE_END();
