#pragma once

#include <functional>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "egocast/forecast_output.hpp"
#include "egocast/pose.hpp"

namespace egocast {

// Mean per-joint position error in centimeters: plain Euclidean distances,
// no alignment or root subtraction of any kind.
double mpjpe_cm(std::span<const BodyPose> pred, std::span<const BodyPose> gt);

// Per-joint mean distance across frames, in cm. Its mean equals mpjpe_cm.
std::vector<double> per_joint_error_cm(std::span<const BodyPose> pred,
                                       std::span<const BodyPose> gt);

struct HorizonCurve {
  std::vector<std::pair<double, double>> points;  // (horizon_s, mpjpe_cm), ascending

  void validate() const;
};

// Trapezoidal integral of the curve over the minmax-normalized horizon
// axis. Units stay in cm; lower is better.
double auc_cm(const HorizonCurve& curve);

// Future frame offset probed at a horizon: round(h * fps). The forecast
// block index is this value minus one (forecasts start at t+1).
int horizon_frame_offset(double horizon_s, double fps);

// A forecast at anchor t must cover every configured horizon.
using InferFn = std::function<ForecastOutput(const PoseSequence&, int)>;

HorizonCurve horizon_curve(const InferFn& infer, std::span<const PoseSequence> eval_set,
                           const std::vector<double>& horizons_s, double fps = 30.0,
                           int anchor_stride = 30);

// Translates every predicted frame so its root lands on the ground-truth
// root; relative pose and rotations stay untouched. gt_future[i] is the
// ground truth for predicted frame i (i.e. sequence frame t+1+i).
ForecastOutput oracle_align(const ForecastOutput& pred, std::span<const BodyPose> gt_future,
                            const SkeletonSpec& skeleton);

struct EvalOptions {
  std::vector<double> horizons_s{0.5, 1, 2, 3, 4, 5};
  double fps = 30.0;
  int anchor_stride = 30;
  bool oracle = false;  // apply oracle_align before scoring
  int threads = 1;      // per-sequence fan-out cap
};

struct SequenceEval {
  std::string activity;
  long anchors = 0;
  std::vector<double> mpjpe_cm;  // per horizon
};

struct EvalReport {
  HorizonCurve curve;
  double auc = 0.0;
  long anchors = 0;
  std::vector<double> per_joint_cm;            // indexed like the skeleton
  std::vector<SequenceEval> per_sequence;      // one entry per evaluated sequence
  std::map<std::string, HorizonCurve> per_activity;
  std::map<std::string, double> per_activity_auc;
};

// Runs the full evaluation protocol over an annotated set. Deterministic:
// result is independent of the thread count.
EvalReport evaluate(const InferFn& infer, std::span<const PoseSequence> eval_set,
                    const SkeletonSpec& skeleton, const EvalOptions& options);

// Least-squares non-decreasing fit (pool adjacent violators). Used to test
// that error curves grow with the horizon up to a tolerance band.
std::vector<double> isotonic_fit(const std::vector<double>& values);

}  // namespace egocast
