#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "egocast/errors.hpp"

namespace egocast {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

// Rotation quaternion in (w, x, y, z) order. Stored values are kept in the
// canonical form: unit norm, w >= 0.
struct Quat {
  double w = 1, x = 0, y = 0, z = 0;

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
  bool finite() const {
    return std::isfinite(w) && std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }
};

// Unit-norm with w >= 0; throws DegenerateRotationError when the norm is
// at or below 1e-12. Idempotent on already-canonical input.
Quat normalize_quaternion(const Quat& q);

// Composes yaw about +z then pitch about the local +y axis (small angles
// only in this codebase). Result is canonical.
Quat quat_from_yaw_pitch(double yaw, double pitch);

// How a skeleton's root position is derived: the mean of the named joints
// (a single name selects that joint directly).
struct RootRule {
  std::vector<std::string> joints;

  bool operator==(const RootRule&) const = default;
};

struct SkeletonSpec {
  std::vector<std::string> joints;
  RootRule root_rule;

  int joint_count() const { return static_cast<int>(joints.size()); }
  int joint_index(const std::string& name) const;  // -1 when absent
  void validate() const;
  bool operator==(const SkeletonSpec&) const = default;
};

// 17 joints in COCO-style order, root at the hip midpoint.
SkeletonSpec skeleton_h17();
// 21 joints with an explicit pelvis root.
SkeletonSpec skeleton_h21();

struct BodyPose {
  std::vector<Vec3> joints;
};

struct HeadsetPose {
  Vec3 position;
  Quat rotation;
};

struct PoseFrame {
  int index = 0;
  double timestamp_s = 0;
  HeadsetPose headset;
  std::optional<BodyPose> body;
  std::optional<std::vector<double>> visual;
};

struct PoseSequence {
  SkeletonSpec skeleton;
  std::vector<PoseFrame> frames;
  std::string activity;
  double fps = 30.0;

  int size() const { return static_cast<int>(frames.size()); }
  void validate() const;
};

// ---- Forecast-token algebra -------------------------------------------------
//
// A forecast token is the flat vector [q (3J) | p (3) | y (4)].

using ForecastToken = std::vector<double>;

int token_dim(int joint_count);

ForecastToken build_forecast_token(const BodyPose& body, const Vec3& headset_position,
                                   const Quat& headset_rotation);

struct TokenParts {
  BodyPose body;
  Vec3 headset_position;
  Quat headset_rotation;
};

TokenParts split_forecast_token(std::span<const double> token, const SkeletonSpec& skeleton);

// Frames max(0, t-k+1)..t inclusive; shrinks near the sequence start.
std::span<const PoseFrame> past_window(const PoseSequence& seq, int t, int k);

Vec3 derive_root(const BodyPose& body, const SkeletonSpec& skeleton);

}  // namespace egocast
