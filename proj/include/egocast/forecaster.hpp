#pragma once

#include "egocast/estimator.hpp"
#include "egocast/forecast_output.hpp"

namespace egocast {

struct ForecastConfig {
  int window = 20;      // k: past tokens
  int horizon = 150;    // n: future frames emitted in one shot
  int width = 64;       // d
  int layers = 2;       // L
  int heads = 4;        // h
  int mlp_hidden = 512; // forecasting head hidden width
  LossWeights weights;
  bool groundtruth_inputs = false;  // feed true past poses instead of pseudo-groundtruth
  double lr = 1e-4;
  int batch = 24;
  int iterations = 2000;
  std::uint64_t seed = 0;

  void validate() const;
};

// Differentiable view of one forecast.
struct ForecastTensors {
  Tensor poses;         // [n x 3J]
  Tensor translations;  // [n x 3]
  Tensor rotations;     // [n x 4], row-normalized
};

// Pose Forecasting Module: project each m-dimensional token, encode with
// self-attention, mean-pool into one fused vector, and emit all n future
// frames from a two-layer head.
class ForecastModel {
 public:
  ForecastModel(ForecastConfig cfg, SkeletonSpec skeleton);

  ForecastTensors forward(std::span<const ForecastToken> tokens) const;
  ForecastOutput forecast(std::span<const ForecastToken> tokens) const;

  std::vector<NamedParam> named_parameters();
  const ForecastConfig& config() const { return cfg_; }
  const SkeletonSpec& skeleton() const { return skeleton_; }
  int token_size() const { return token_dim(skeleton_.joint_count()); }

 private:
  ForecastConfig cfg_;
  SkeletonSpec skeleton_;
  Linear input_proj_;  // m -> d
  Tensor pos_embed_;   // [k x d], indexed from the window's end
  TransformerEncoder encoder_;
  Mlp head_;           // d -> hidden -> n*m
};

// Composite L1 loss of Eq. (pose, rotation, translation), each term a mean
// over its own elements. Ground-truth quaternions are sign-canonicalized
// before comparison.
Tensor forecast_loss_tensor(const ForecastTensors& pred, const Tensor& gt_poses,
                            const Tensor& gt_translations, const Tensor& gt_rotations,
                            const LossWeights& weights);
double forecast_loss(const ForecastOutput& pred, const ForecastOutput& gt,
                     const LossWeights& weights);

// Chained inference: pseudo-groundtruth poses from the estimator feed the
// forecaster. Never reads ground-truth body poses.
ForecastOutput end_to_end_infer(const PoseSequence& seq, int t, const CurrentFrameModel& estimator,
                                const VisualFeatureProvider& provider,
                                const ForecastModel& forecaster);

// Same chain, with the per-frame pseudo-groundtruth poses precomputed by
// pseudo_groundtruth_track (results are identical to end_to_end_infer).
ForecastOutput end_to_end_infer_cached(const PoseSequence& seq, int t,
                                       std::span<const BodyPose> pseudo_track,
                                       const ForecastModel& forecaster);

// Adam on the composite loss over (past window -> n future frames)
// samples. Past tokens come from the frozen estimator unless
// cfg.groundtruth_inputs is set. Sequences shorter than k + n are skipped
// with a warning on stderr.
TrainStats train_forecaster(ForecastModel& model, std::span<const PoseSequence> data,
                            const CurrentFrameModel& estimator,
                            const VisualFeatureProvider& provider);

}  // namespace egocast
