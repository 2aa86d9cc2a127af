#pragma once

#include "egocast/pose.hpp"

namespace egocast {

// n future frames of body pose, headset translation, and headset rotation.
struct ForecastOutput {
  std::vector<BodyPose> joints;    // Q: n x J x 3
  std::vector<Vec3> positions;     // P: n x 3
  std::vector<Quat> rotations;     // Y: n x 4, unit-norm after post-processing

  int frames() const { return static_cast<int>(joints.size()); }
  void validate(int joint_count) const;
};

// Weights of the composite forecasting loss: pose, translation, rotation.
struct LossWeights {
  double pose = 1.0;
  double translation = 1.0;
  double rotation = 1.0;

  void validate() const;
};

}  // namespace egocast
