#pragma once

#include <memory>

#include "egocast/adam.hpp"
#include "egocast/nn.hpp"
#include "egocast/pose.hpp"

namespace egocast {

struct EstimatorConfig {
  int window = 20;      // k: past frames fed to the encoder
  int width = 64;       // d: encoder width
  int layers = 2;       // L: encoder depth
  int heads = 4;        // h: attention heads
  int visual_dim = 64;  // D_v: visual feature dimension
  int mlp_hidden = 512; // fusion head hidden width
  double lr = 1e-4;
  int batch = 24;
  int iterations = 2000;
  std::uint64_t seed = 0;

  void validate() const;
};

// Deterministic mapping from a past frame window to a D_v-vector. Same
// window must always produce the same feature; implementations are
// stateless per call and safe to share across threads.
class VisualFeatureProvider {
 public:
  virtual ~VisualFeatureProvider() = default;
  virtual int dim() const = 0;
  virtual std::vector<double> feature(const PoseSequence& seq, int t) const = 0;
};

// Always returns the zero vector: the proprioception-only arm.
std::unique_ptr<VisualFeatureProvider> make_null_provider(int dim);

// Desk-scale stand-in for a visual encoder: a fixed random linear
// projection of the current frame's ground-truth body pose plus Gaussian
// noise of the given sigma. Requires annotated frames.
std::unique_ptr<VisualFeatureProvider> make_informative_provider(const SkeletonSpec& skeleton,
                                                                 int dim, double noise_sigma,
                                                                 std::uint64_t seed);

// Same, with an explicit [dim x 3J] row-major projection matrix.
std::unique_ptr<VisualFeatureProvider> make_informative_provider_with_projection(
    const SkeletonSpec& skeleton, std::vector<double> projection, int dim, double noise_sigma,
    std::uint64_t seed);

// Current-frame estimation: encode past headset translations with a
// transformer, keep the last token, fuse with the visual feature through a
// two-layer perceptron, and regress the 3J joint coordinates.
class CurrentFrameModel {
 public:
  CurrentFrameModel(EstimatorConfig cfg, SkeletonSpec skeleton);

  // e^t for a window of 1..k headset positions, oldest first.
  Tensor encode_window(std::span<const Vec3> positions) const;
  // Differentiable [3J] head output.
  Tensor pose_logits(std::span<const Vec3> positions, std::span<const double> visual) const;
  // Inference without recording.
  BodyPose estimate(std::span<const Vec3> positions, std::span<const double> visual) const;

  std::vector<NamedParam> named_parameters();
  const EstimatorConfig& config() const { return cfg_; }
  const SkeletonSpec& skeleton() const { return skeleton_; }

 private:
  EstimatorConfig cfg_;
  SkeletonSpec skeleton_;
  Linear input_proj_;
  Tensor pos_embed_;  // [k x d], indexed from the window's end
  TransformerEncoder encoder_;
  Mlp fusion_;
};

// Sequence-level wrappers.
Tensor encode_proprio(std::span<const PoseFrame> window, const CurrentFrameModel& model);
BodyPose estimate_current_pose(const PoseSequence& seq, int t, const VisualFeatureProvider& provider,
                               const CurrentFrameModel& model);

// Pseudo-groundtruth pose for every frame of the sequence, computed once
// in inference mode. Frame j uses the window ending at j.
std::vector<BodyPose> pseudo_groundtruth_track(const PoseSequence& seq,
                                               const VisualFeatureProvider& provider,
                                               const CurrentFrameModel& model);

struct TrainStats {
  std::vector<double> loss_trace;  // one entry per iteration
};

// Adam on mean L1 over joint coordinates. Deterministic given the config
// seed; single-threaded.
TrainStats train_current_module(CurrentFrameModel& model, std::span<const PoseSequence> data,
                                const VisualFeatureProvider& provider);

}  // namespace egocast
