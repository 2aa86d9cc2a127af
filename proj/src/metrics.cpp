#include "egocast/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>

namespace egocast {

void ForecastOutput::validate(int joint_count) const {
  if (joints.size() != positions.size() || joints.size() != rotations.size())
    throw DimensionError("forecast output blocks disagree on frame count");
  for (const BodyPose& pose : joints) {
    if (static_cast<int>(pose.joints.size()) != joint_count)
      throw DimensionError("forecast pose has " + std::to_string(pose.joints.size()) +
                           " joints, expected " + std::to_string(joint_count));
    for (const Vec3& j : pose.joints)
      if (!j.finite()) throw NumericError("non-finite joint in forecast output");
  }
  for (const Vec3& p : positions)
    if (!p.finite()) throw NumericError("non-finite translation in forecast output");
  for (const Quat& q : rotations) {
    if (!q.finite()) throw NumericError("non-finite rotation in forecast output");
    if (std::fabs(q.norm() - 1.0) > 1e-9)
      throw NumericError("forecast rotation is not unit-norm: |y| = " + std::to_string(q.norm()));
  }
}

void LossWeights::validate() const {
  if (pose < 0 || translation < 0 || rotation < 0)
    throw ConfigError("loss weights must be non-negative");
  if (pose == 0 && translation == 0 && rotation == 0)
    throw ConfigError("loss weights must not all be zero");
}

namespace {

void check_aligned(std::span<const BodyPose> pred, std::span<const BodyPose> gt) {
  if (pred.size() != gt.size())
    throw ContractError("prediction has " + std::to_string(pred.size()) + " frames, ground truth " +
                        std::to_string(gt.size()));
  if (pred.empty()) throw ContractError("cannot score zero frames");
  const std::size_t joints = gt.front().joints.size();
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i].joints.size() != joints || gt[i].joints.size() != joints)
      throw DimensionError("skeletons disagree at frame " + std::to_string(i));
}

}  // namespace

double mpjpe_cm(std::span<const BodyPose> pred, std::span<const BodyPose> gt) {
  check_aligned(pred, gt);
  double acc = 0;
  long count = 0;
  for (std::size_t f = 0; f < pred.size(); ++f)
    for (std::size_t j = 0; j < gt[f].joints.size(); ++j) {
      acc += (pred[f].joints[j] - gt[f].joints[j]).norm();
      ++count;
    }
  return acc / static_cast<double>(count) * 100.0;
}

std::vector<double> per_joint_error_cm(std::span<const BodyPose> pred,
                                       std::span<const BodyPose> gt) {
  check_aligned(pred, gt);
  const std::size_t joints = gt.front().joints.size();
  std::vector<double> acc(joints, 0.0);
  for (std::size_t f = 0; f < pred.size(); ++f)
    for (std::size_t j = 0; j < joints; ++j) acc[j] += (pred[f].joints[j] - gt[f].joints[j]).norm();
  for (double& v : acc) v = v / static_cast<double>(pred.size()) * 100.0;
  return acc;
}

void HorizonCurve::validate() const {
  if (points.empty()) throw ContractError("empty horizon curve");
  double prev = -1;
  for (const auto& [h, v] : points) {
    if (!(h > prev)) throw ContractError("horizons must strictly increase");
    if (!(v >= 0) || !std::isfinite(v))
      throw NumericError("curve values must be finite and non-negative");
    prev = h;
  }
}

double auc_cm(const HorizonCurve& curve) {
  curve.validate();
  if (curve.points.size() < 2)
    throw ContractError("AUC needs at least two curve points, got " +
                        std::to_string(curve.points.size()));
  const double h_min = curve.points.front().first;
  const double h_max = curve.points.back().first;
  const double span = h_max - h_min;
  double acc = 0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const double dx = (curve.points[i].first - curve.points[i - 1].first) / span;
    acc += dx * 0.5 * (curve.points[i].second + curve.points[i - 1].second);
  }
  return acc;
}

int horizon_frame_offset(double horizon_s, double fps) {
  return static_cast<int>(std::lround(horizon_s * fps));
}

ForecastOutput oracle_align(const ForecastOutput& pred, std::span<const BodyPose> gt_future,
                            const SkeletonSpec& skeleton) {
  if (gt_future.size() < pred.joints.size())
    throw ContractError("oracle alignment is missing ground truth: got " +
                        std::to_string(gt_future.size()) + " frames for " +
                        std::to_string(pred.joints.size()) + " predictions");
  ForecastOutput aligned = pred;
  for (std::size_t f = 0; f < aligned.joints.size(); ++f) {
    const Vec3 shift =
        derive_root(gt_future[f], skeleton) - derive_root(aligned.joints[f], skeleton);
    for (Vec3& j : aligned.joints[f].joints) j += shift;
  }
  return aligned;
}

namespace {

struct AnchorTotals {
  std::vector<double> sum_per_horizon;  // summed per-anchor MPJPE values
  std::vector<double> sum_per_joint;    // summed per-anchor per-joint means
  long anchors = 0;
};

AnchorTotals evaluate_sequence(const InferFn& infer, const PoseSequence& seq,
                               const SkeletonSpec& skeleton, const EvalOptions& opt,
                               const std::vector<int>& offsets) {
  AnchorTotals totals;
  totals.sum_per_horizon.assign(opt.horizons_s.size(), 0.0);
  totals.sum_per_joint.assign(static_cast<std::size_t>(skeleton.joint_count()), 0.0);
  const int max_offset = *std::max_element(offsets.begin(), offsets.end());

  for (int t = 0; t + max_offset < seq.size(); t += opt.anchor_stride) {
    ForecastOutput out = infer(seq, t);
    if (out.frames() < max_offset)
      throw ContractError("forecast covers " + std::to_string(out.frames()) +
                          " frames but the largest horizon needs " + std::to_string(max_offset));
    if (opt.oracle) {
      std::vector<BodyPose> gt_future;
      gt_future.reserve(static_cast<std::size_t>(out.frames()));
      for (int i = 0; i < out.frames() && t + 1 + i < seq.size(); ++i) {
        const auto& body = seq.frames[t + 1 + i].body;
        if (!body)
          throw ContractError("oracle alignment needs ground truth at frame " +
                              std::to_string(t + 1 + i));
        gt_future.push_back(*body);
      }
      // Predictions beyond the sequence end are dropped before alignment.
      out.joints.resize(gt_future.size());
      out.positions.resize(gt_future.size());
      out.rotations.resize(gt_future.size());
      out = oracle_align(out, gt_future, skeleton);
    }
    for (std::size_t hi = 0; hi < offsets.size(); ++hi) {
      const int off = offsets[hi];
      const auto& gt_body = seq.frames[t + off].body;
      if (!gt_body)
        throw DataError("evaluation frame " + std::to_string(t + off) +
                        " lacks ground truth in sequence '" + seq.activity + "'");
      const BodyPose& pred = out.joints[off - 1];
      const std::span<const BodyPose> pspan(&pred, 1);
      const std::span<const BodyPose> gspan(&*gt_body, 1);
      totals.sum_per_horizon[hi] += mpjpe_cm(pspan, gspan);
      const std::vector<double> pj = per_joint_error_cm(pspan, gspan);
      for (std::size_t j = 0; j < pj.size(); ++j) totals.sum_per_joint[j] += pj[j];
    }
    ++totals.anchors;
  }
  return totals;
}

}  // namespace

EvalReport evaluate(const InferFn& infer, std::span<const PoseSequence> eval_set,
                    const SkeletonSpec& skeleton, const EvalOptions& options) {
  if (options.horizons_s.empty()) throw ConfigError("no horizons configured");
  if (options.anchor_stride < 1) throw ConfigError("anchor stride must be at least 1");
  std::vector<int> offsets;
  for (double h : options.horizons_s) {
    const int off = horizon_frame_offset(h, options.fps);
    if (off < 1) throw ConfigError("horizon " + std::to_string(h) + " s is below one frame");
    offsets.push_back(off);
  }

  std::vector<AnchorTotals> per_seq(eval_set.size());
  const int threads = std::max(1, options.threads);
  if (threads == 1) {
    for (std::size_t i = 0; i < eval_set.size(); ++i)
      per_seq[i] = evaluate_sequence(infer, eval_set[i], skeleton, options, offsets);
  } else {
    // Fan out whole sequences; reduction below stays in sequence order, so
    // results match the single-threaded run exactly.
    std::vector<std::future<AnchorTotals>> futures;
    futures.reserve(eval_set.size());
    std::size_t next = 0;
    while (next < eval_set.size()) {
      const std::size_t batch_end = std::min(eval_set.size(), next + static_cast<std::size_t>(threads));
      for (std::size_t i = next; i < batch_end; ++i)
        futures.push_back(std::async(std::launch::async, [&, i]() {
          return evaluate_sequence(infer, eval_set[i], skeleton, options, offsets);
        }));
      for (std::size_t i = next; i < batch_end; ++i) per_seq[i] = futures[i].get();
      next = batch_end;
    }
  }

  EvalReport report;
  report.per_joint_cm.assign(static_cast<std::size_t>(skeleton.joint_count()), 0.0);
  std::vector<double> total_per_horizon(offsets.size(), 0.0);
  std::map<std::string, std::pair<std::vector<double>, long>> by_activity;

  for (std::size_t i = 0; i < eval_set.size(); ++i) {
    const AnchorTotals& totals = per_seq[i];
    SequenceEval entry;
    entry.activity = eval_set[i].activity;
    entry.anchors = totals.anchors;
    if (totals.anchors > 0) {
      for (double v : totals.sum_per_horizon)
        entry.mpjpe_cm.push_back(v / static_cast<double>(totals.anchors));
    }
    report.per_sequence.push_back(std::move(entry));

    report.anchors += totals.anchors;
    for (std::size_t hi = 0; hi < offsets.size(); ++hi)
      total_per_horizon[hi] += totals.sum_per_horizon[hi];
    for (std::size_t j = 0; j < report.per_joint_cm.size(); ++j)
      report.per_joint_cm[j] += totals.sum_per_joint[j];

    auto& act = by_activity[eval_set[i].activity];
    if (act.first.empty()) act.first.assign(offsets.size(), 0.0);
    for (std::size_t hi = 0; hi < offsets.size(); ++hi)
      act.first[hi] += totals.sum_per_horizon[hi];
    act.second += totals.anchors;
  }

  if (report.anchors == 0) throw DataError("no valid evaluation anchors in the set");

  const double inv = 1.0 / static_cast<double>(report.anchors);
  for (std::size_t hi = 0; hi < offsets.size(); ++hi)
    report.curve.points.emplace_back(options.horizons_s[hi], total_per_horizon[hi] * inv);
  // Per-anchor values already average over horizons' J joints; divide by
  // anchors times horizons to get the per-joint mean.
  for (double& v : report.per_joint_cm)
    v *= inv / static_cast<double>(offsets.size());
  // AUC is defined only for curves with at least two points.
  const bool has_auc = report.curve.points.size() >= 2;
  report.auc = has_auc ? auc_cm(report.curve) : std::numeric_limits<double>::quiet_NaN();

  for (auto& [activity, pair] : by_activity) {
    if (pair.second == 0) continue;
    HorizonCurve curve;
    for (std::size_t hi = 0; hi < offsets.size(); ++hi)
      curve.points.emplace_back(options.horizons_s[hi],
                                pair.first[hi] / static_cast<double>(pair.second));
    report.per_activity_auc[activity] =
        has_auc ? auc_cm(curve) : std::numeric_limits<double>::quiet_NaN();
    report.per_activity[activity] = std::move(curve);
  }
  return report;
}

HorizonCurve horizon_curve(const InferFn& infer, std::span<const PoseSequence> eval_set,
                           const std::vector<double>& horizons_s, double fps, int anchor_stride) {
  EvalOptions opt;
  opt.horizons_s = horizons_s;
  opt.fps = fps;
  opt.anchor_stride = anchor_stride;
  SkeletonSpec skeleton;
  if (eval_set.empty()) throw DataError("empty evaluation set");
  skeleton = eval_set.front().skeleton;
  return evaluate(infer, eval_set, skeleton, opt).curve;
}

std::vector<double> isotonic_fit(const std::vector<double>& values) {
  // Pool adjacent violators with equal weights.
  std::vector<double> level;
  std::vector<long> weight;
  for (double v : values) {
    level.push_back(v);
    weight.push_back(1);
    while (level.size() > 1 && level[level.size() - 2] > level.back()) {
      const double merged = (level[level.size() - 2] * weight[weight.size() - 2] +
                             level.back() * weight.back()) /
                            (weight[weight.size() - 2] + weight.back());
      weight[weight.size() - 2] += weight.back();
      level[level.size() - 2] = merged;
      level.pop_back();
      weight.pop_back();
    }
  }
  std::vector<double> out;
  for (std::size_t i = 0; i < level.size(); ++i)
    out.insert(out.end(), static_cast<std::size_t>(weight[i]), level[i]);
  return out;
}

}  // namespace egocast
