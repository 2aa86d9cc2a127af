#include <doctest.h>

#include <cmath>

#include "egocast/metrics.hpp"
#include "egocast/rng.hpp"
#include "egocast/synth.hpp"

using namespace egocast;

namespace {

std::vector<BodyPose> random_poses(int frames, int joints, Rng& rng) {
  std::vector<BodyPose> out;
  for (int f = 0; f < frames; ++f) {
    BodyPose p;
    for (int j = 0; j < joints; ++j) p.joints.push_back({rng.normal(), rng.normal(), rng.normal()});
    out.push_back(std::move(p));
  }
  return out;
}

// Echoes future ground truth: the perfect forecaster.
ForecastOutput echo_gt(const PoseSequence& seq, int t, int n) {
  ForecastOutput out;
  for (int i = 1; i <= n && t + i < seq.size(); ++i) {
    out.joints.push_back(*seq.frames[t + i].body);
    out.positions.push_back(seq.frames[t + i].headset.position);
    out.rotations.push_back(seq.frames[t + i].headset.rotation);
  }
  return out;
}

// Repeats the pose at the anchor frame forever.
ForecastOutput freeze_last(const PoseSequence& seq, int t, int n) {
  ForecastOutput out;
  for (int i = 0; i < n; ++i) {
    out.joints.push_back(*seq.frames[t].body);
    out.positions.push_back(seq.frames[t].headset.position);
    out.rotations.push_back(seq.frames[t].headset.rotation);
  }
  return out;
}

}  // namespace

TEST_SUITE_BEGIN("metrics");

TEST_CASE("mpjpe of identical poses is zero") {
  Rng rng(1);
  std::vector<BodyPose> poses = random_poses(4, 5, rng);
  CHECK(mpjpe_cm(poses, poses) == 0.0);
}

TEST_CASE("mpjpe hand computation: 3-4-5 triangle") {
  BodyPose gt{{{0, 0, 0}, {1, 1, 1}}};
  BodyPose pred{{{0.03, 0.04, 0}, {1, 1, 1}}};
  std::vector<BodyPose> p = {pred}, g = {gt};
  CHECK(std::fabs(mpjpe_cm(p, g) - 2.5) < 1e-12);

  const std::vector<double> per_joint = per_joint_error_cm(p, g);
  CHECK(std::fabs(per_joint[0] - 5.0) < 1e-12);
  CHECK(per_joint[1] == 0.0);
}

TEST_CASE("mpjpe of a rigid translation is the offset length") {
  Rng rng(2);
  std::vector<BodyPose> gt = random_poses(6, 17, rng);
  const Vec3 d{0.03, -0.07, 0.12};
  std::vector<BodyPose> pred = gt;
  for (BodyPose& p : pred)
    for (Vec3& j : p.joints) j += d;
  CHECK(mpjpe_cm(pred, gt) == doctest::Approx(d.norm() * 100).epsilon(1e-12));
}

TEST_CASE("mpjpe is symmetric") {
  Rng rng(3);
  std::vector<BodyPose> a = random_poses(5, 8, rng);
  std::vector<BodyPose> b = random_poses(5, 8, rng);
  CHECK(mpjpe_cm(a, b) == mpjpe_cm(b, a));
}

TEST_CASE("mpjpe rejects mismatched inputs") {
  Rng rng(4);
  std::vector<BodyPose> a = random_poses(3, 4, rng);
  std::vector<BodyPose> b = random_poses(2, 4, rng);
  CHECK_THROWS_AS(mpjpe_cm(a, b), ContractError);
  std::vector<BodyPose> c = random_poses(3, 5, rng);
  CHECK_THROWS_AS(mpjpe_cm(a, c), DimensionError);
}

TEST_CASE("mean of per-joint errors equals mpjpe on 100 random instances") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int frames = 1 + static_cast<int>(rng.uniform_index(6));
    const int joints = 1 + static_cast<int>(rng.uniform_index(20));
    std::vector<BodyPose> pred = random_poses(frames, joints, rng);
    std::vector<BodyPose> gt = random_poses(frames, joints, rng);
    const std::vector<double> pj = per_joint_error_cm(pred, gt);
    double mean = 0;
    for (double v : pj) mean += v;
    mean /= static_cast<double>(pj.size());
    CHECK(std::fabs(mean - mpjpe_cm(pred, gt)) < 1e-12);
  }
}

TEST_CASE("auc of a flat curve is its level") {
  HorizonCurve flat{{{0.5, 7.25}, {1, 7.25}, {2, 7.25}, {5, 7.25}}};
  CHECK(auc_cm(flat) == doctest::Approx(7.25).epsilon(1e-15));
}

TEST_CASE("auc two-point trapezoid") {
  HorizonCurve two{{{0.5, 10.0}, {5.0, 30.0}}};
  CHECK(auc_cm(two) == 20.0);
}

TEST_CASE("auc rejects a single point") {
  HorizonCurve one{{{1.0, 5.0}}};
  CHECK_THROWS_AS(auc_cm(one), ContractError);
}

TEST_CASE("pointwise domination gives strictly smaller auc") {
  Rng rng(6);
  const std::vector<double> horizons = {0.5, 1, 2, 3, 4, 5};
  for (int trial = 0; trial < 100; ++trial) {
    HorizonCurve low, high;
    for (double h : horizons) {
      const double v = rng.uniform(1.0, 40.0);
      low.points.emplace_back(h, v);
      high.points.emplace_back(h, v + rng.uniform(0.01, 5.0));
    }
    CHECK(auc_cm(low) < auc_cm(high));
  }
}

TEST_CASE("auc is linear in curve values") {
  Rng rng(7);
  HorizonCurve a, b, sum;
  for (double h : {0.5, 1.0, 2.0, 3.0}) {
    const double va = rng.uniform(0, 10), vb = rng.uniform(0, 10);
    a.points.emplace_back(h, va);
    b.points.emplace_back(h, vb);
    sum.points.emplace_back(h, va + vb);
  }
  CHECK(auc_cm(sum) == doctest::Approx(auc_cm(a) + auc_cm(b)).epsilon(1e-12));
}

TEST_CASE("horizon frame offsets at 30 fps") {
  const std::vector<double> horizons = {0.5, 1, 2, 3, 4, 5};
  const std::vector<int> expected = {15, 30, 60, 90, 120, 150};
  for (std::size_t i = 0; i < horizons.size(); ++i)
    CHECK(horizon_frame_offset(horizons[i], 30.0) == expected[i]);
}

TEST_CASE("perfect oracle yields an all-zero curve") {
  std::vector<PoseSequence> eval_set = {
      generate_sequence(MotionArchetype::walk(), skeleton_h17(), 8.0, 31)};
  auto infer = [](const PoseSequence& seq, int t) { return echo_gt(seq, t, 150); };
  HorizonCurve curve = horizon_curve(infer, eval_set, {0.5, 1, 2, 3, 4, 5});
  REQUIRE(curve.points.size() == 6);
  for (const auto& [h, v] : curve.points) CHECK(v == 0.0);
}

TEST_CASE("constant prediction on a walk grows with the horizon") {
  std::vector<PoseSequence> eval_set = {
      generate_sequence(MotionArchetype::walk(), skeleton_h17(), 10.0, 77)};
  auto infer = [](const PoseSequence& seq, int t) { return freeze_last(seq, t, 150); };
  HorizonCurve curve = horizon_curve(infer, eval_set, {0.5, 1, 2, 3, 4, 5});
  for (const auto& [h, v] : curve.points) CHECK(v > 0.0);
  CHECK(curve.points.back().second > 2.0 * curve.points.front().second);
}

TEST_CASE("oracle_align removes a pure translation exactly") {
  std::vector<PoseSequence> seqs = {
      generate_sequence(MotionArchetype::walk(), skeleton_h17(), 4.0, 13)};
  const PoseSequence& seq = seqs[0];
  Rng rng(8);
  const int t = 10, n = 60;
  ForecastOutput pred = echo_gt(seq, t, n);
  std::vector<BodyPose> gt_future;
  for (int i = 0; i < n; ++i) gt_future.push_back(*seq.frames[t + 1 + i].body);

  // Add an arbitrary per-frame translation.
  for (BodyPose& frame : pred.joints) {
    const Vec3 d{rng.normal(), rng.normal(), rng.normal()};
    for (Vec3& j : frame.joints) j += d;
  }
  CHECK(mpjpe_cm(pred.joints, gt_future) > 0.0);

  ForecastOutput aligned = oracle_align(pred, gt_future, seq.skeleton);
  CHECK(mpjpe_cm(aligned.joints, gt_future) < 1e-9);
  for (std::size_t f = 0; f < aligned.joints.size(); ++f) {
    const Vec3 pr = derive_root(aligned.joints[f], seq.skeleton);
    const Vec3 gr = derive_root(gt_future[f], seq.skeleton);
    CHECK((pr - gr).norm() < 1e-12);
  }
}

TEST_CASE("oracle_align is the identity on perfect predictions") {
  std::vector<PoseSequence> seqs = {
      generate_sequence(MotionArchetype::stand(), skeleton_h17(), 3.0, 14)};
  const PoseSequence& seq = seqs[0];
  const int t = 5, n = 30;
  ForecastOutput pred = echo_gt(seq, t, n);
  std::vector<BodyPose> gt_future;
  for (int i = 0; i < n; ++i) gt_future.push_back(*seq.frames[t + 1 + i].body);
  ForecastOutput aligned = oracle_align(pred, gt_future, seq.skeleton);
  CHECK(mpjpe_cm(aligned.joints, pred.joints) == 0.0);
}

TEST_CASE("oracle_align reduces error for drifting trajectories") {
  std::vector<PoseSequence> seqs = {
      generate_sequence(MotionArchetype::walk(), skeleton_h17(), 4.0, 15)};
  const PoseSequence& seq = seqs[0];
  Rng rng(9);
  const int t = 3, n = 45;
  ForecastOutput pred = echo_gt(seq, t, n);
  std::vector<BodyPose> gt_future;
  for (int i = 0; i < n; ++i) gt_future.push_back(*seq.frames[t + 1 + i].body);
  Vec3 drift{0, 0, 0};
  for (BodyPose& frame : pred.joints) {
    drift += Vec3{rng.normal() * 0.02, rng.normal() * 0.02, 0};
    for (Vec3& j : frame.joints) j += drift;
  }
  const double raw = mpjpe_cm(pred.joints, gt_future);
  ForecastOutput aligned = oracle_align(pred, gt_future, seq.skeleton);
  CHECK(mpjpe_cm(aligned.joints, gt_future) < raw);
}

TEST_CASE("oracle_align wants enough ground truth") {
  std::vector<PoseSequence> seqs = {
      generate_sequence(MotionArchetype::stand(), skeleton_h17(), 2.0, 16)};
  ForecastOutput pred = echo_gt(seqs[0], 0, 20);
  std::vector<BodyPose> too_short(pred.joints.begin(), pred.joints.begin() + 5);
  CHECK_THROWS_AS(oracle_align(pred, too_short, seqs[0].skeleton), ContractError);
}

TEST_CASE("evaluate aggregates are anchor-weighted means of sequences") {
  std::vector<PoseSequence> eval_set = {
      generate_sequence(MotionArchetype::walk(), skeleton_h17(), 9.0, 41),
      generate_sequence(MotionArchetype::stand(), skeleton_h17(), 7.0, 42)};
  auto infer = [](const PoseSequence& seq, int t) { return freeze_last(seq, t, 150); };
  EvalOptions opt;
  opt.anchor_stride = 15;
  EvalReport report = evaluate(infer, eval_set, skeleton_h17(), opt);

  REQUIRE(report.per_sequence.size() == 2);
  long anchors = 0;
  std::vector<double> weighted(opt.horizons_s.size(), 0.0);
  for (const SequenceEval& s : report.per_sequence) {
    anchors += s.anchors;
    for (std::size_t hi = 0; hi < s.mpjpe_cm.size(); ++hi)
      weighted[hi] += s.mpjpe_cm[hi] * static_cast<double>(s.anchors);
  }
  CHECK(anchors == report.anchors);
  for (std::size_t hi = 0; hi < weighted.size(); ++hi)
    CHECK(report.curve.points[hi].second ==
          doctest::Approx(weighted[hi] / anchors).epsilon(1e-12));

  // Per-activity curves exist for both archetypes.
  CHECK(report.per_activity.count("walk") == 1);
  CHECK(report.per_activity.count("stand") == 1);
  CHECK(report.auc > 0);
}

TEST_CASE("evaluate is independent of the thread count") {
  std::vector<PoseSequence> eval_set;
  for (std::uint64_t s : {51u, 52u, 53u})
    eval_set.push_back(generate_sequence(MotionArchetype::walk(), skeleton_h17(), 8.0, s));
  auto infer = [](const PoseSequence& seq, int t) { return freeze_last(seq, t, 150); };
  EvalOptions serial;
  serial.anchor_stride = 20;
  EvalOptions parallel = serial;
  parallel.threads = 3;
  EvalReport a = evaluate(infer, eval_set, skeleton_h17(), serial);
  EvalReport b = evaluate(infer, eval_set, skeleton_h17(), parallel);
  REQUIRE(a.curve.points.size() == b.curve.points.size());
  for (std::size_t i = 0; i < a.curve.points.size(); ++i)
    CHECK(a.curve.points[i].second == b.curve.points[i].second);
  CHECK(a.auc == b.auc);
}

TEST_CASE("isotonic fit pools violators") {
  const std::vector<double> fit = isotonic_fit({1, 3, 2, 4});
  REQUIRE(fit.size() == 4);
  CHECK(fit[0] == 1.0);
  CHECK(fit[1] == 2.5);
  CHECK(fit[2] == 2.5);
  CHECK(fit[3] == 4.0);
  for (std::size_t i = 1; i < fit.size(); ++i) CHECK(fit[i] >= fit[i - 1]);

  const std::vector<double> sorted = isotonic_fit({1, 2, 3});
  CHECK(sorted == std::vector<double>{1, 2, 3});
}

TEST_SUITE_END();
