#include "egocast/pose.hpp"

#include <set>

namespace egocast {

Quat normalize_quaternion(const Quat& q) {
  const double n = q.norm();
  if (!(n > 1e-12))
    throw DegenerateRotationError("quaternion norm " + std::to_string(n) +
                                  " cannot represent a rotation");
  double s = 1.0 / n;
  if (q.w < 0) s = -s;
  return {q.w * s, q.x * s, q.y * s, q.z * s};
}

Quat quat_from_yaw_pitch(double yaw, double pitch) {
  const double cy = std::cos(yaw * 0.5), sy = std::sin(yaw * 0.5);
  const double cp = std::cos(pitch * 0.5), sp = std::sin(pitch * 0.5);
  // yaw about z composed with pitch about y: q = qz(yaw) * qy(pitch)
  Quat q;
  q.w = cy * cp;
  q.x = -sy * sp;
  q.y = cy * sp;
  q.z = sy * cp;
  return normalize_quaternion(q);
}

int SkeletonSpec::joint_index(const std::string& name) const {
  for (std::size_t i = 0; i < joints.size(); ++i)
    if (joints[i] == name) return static_cast<int>(i);
  return -1;
}

void SkeletonSpec::validate() const {
  if (joints.empty()) throw ConfigError("skeleton needs at least one joint");
  std::set<std::string> seen(joints.begin(), joints.end());
  if (seen.size() != joints.size()) throw ConfigError("skeleton joint names must be unique");
  if (root_rule.joints.empty()) throw ConfigError("skeleton root rule names no joints");
  for (const std::string& name : root_rule.joints)
    if (joint_index(name) < 0)
      throw ConfigError("root rule references unknown joint '" + name + "'");
}

SkeletonSpec skeleton_h17() {
  SkeletonSpec s;
  s.joints = {"nose",          "left_eye",      "right_eye",  "left_ear",   "right_ear",
              "left_shoulder", "right_shoulder", "left_elbow", "right_elbow", "left_wrist",
              "right_wrist",   "left_hip",       "right_hip",  "left_knee",  "right_knee",
              "left_ankle",    "right_ankle"};
  s.root_rule.joints = {"left_hip", "right_hip"};
  return s;
}

SkeletonSpec skeleton_h21() {
  SkeletonSpec s;
  s.joints = {"pelvis",     "spine",       "chest",       "neck",        "head",
              "left_shoulder", "left_elbow", "left_wrist",  "left_hand",
              "right_shoulder", "right_elbow", "right_wrist", "right_hand",
              "left_hip",   "left_knee",   "left_ankle",  "left_foot",
              "right_hip",  "right_knee",  "right_ankle", "right_foot"};
  s.root_rule.joints = {"pelvis"};
  return s;
}

void PoseSequence::validate() const {
  skeleton.validate();
  double prev_t = -1;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const PoseFrame& f = frames[i];
    if (f.index != static_cast<int>(i))
      throw FormatError("frame indices must be contiguous from 0, found " +
                        std::to_string(f.index) + " at position " + std::to_string(i));
    if (!(f.timestamp_s > prev_t))
      throw FormatError("timestamps must strictly increase (frame " + std::to_string(i) + ")");
    prev_t = f.timestamp_s;
    if (!f.headset.position.finite() || !f.headset.rotation.finite())
      throw NumericError("non-finite headset pose at frame " + std::to_string(i));
    if (std::fabs(f.headset.rotation.norm() - 1.0) > 1e-9 || f.headset.rotation.w < 0)
      throw FormatError("headset quaternion not canonical at frame " + std::to_string(i));
    if (f.body) {
      if (static_cast<int>(f.body->joints.size()) != skeleton.joint_count())
        throw DimensionError("body pose has " + std::to_string(f.body->joints.size()) +
                             " joints, skeleton wants " + std::to_string(skeleton.joint_count()));
      for (const Vec3& j : f.body->joints)
        if (!j.finite()) throw NumericError("non-finite joint at frame " + std::to_string(i));
    }
  }
}

int token_dim(int joint_count) {
  if (joint_count < 1)
    throw ContractError("token_dim needs a positive joint count, got " +
                        std::to_string(joint_count));
  return 3 * joint_count + 7;
}

ForecastToken build_forecast_token(const BodyPose& body, const Vec3& headset_position,
                                   const Quat& headset_rotation) {
  if (std::fabs(headset_rotation.norm() - 1.0) > 1e-6)
    throw ContractError("headset rotation must be unit-norm, got |y| = " +
                        std::to_string(headset_rotation.norm()));
  ForecastToken token;
  token.reserve(body.joints.size() * 3 + 7);
  for (const Vec3& j : body.joints) {
    token.push_back(j.x);
    token.push_back(j.y);
    token.push_back(j.z);
  }
  token.push_back(headset_position.x);
  token.push_back(headset_position.y);
  token.push_back(headset_position.z);
  token.push_back(headset_rotation.w);
  token.push_back(headset_rotation.x);
  token.push_back(headset_rotation.y);
  token.push_back(headset_rotation.z);
  return token;
}

TokenParts split_forecast_token(std::span<const double> token, const SkeletonSpec& skeleton) {
  const int expected = token_dim(skeleton.joint_count());
  if (static_cast<int>(token.size()) != expected)
    throw ContractError("token has dimension " + std::to_string(token.size()) + ", expected " +
                        std::to_string(expected) + " for " +
                        std::to_string(skeleton.joint_count()) + " joints");
  TokenParts parts;
  parts.body.joints.resize(skeleton.joint_count());
  for (int j = 0; j < skeleton.joint_count(); ++j)
    parts.body.joints[j] = {token[3 * j], token[3 * j + 1], token[3 * j + 2]};
  const std::size_t base = token.size() - 7;
  parts.headset_position = {token[base], token[base + 1], token[base + 2]};
  parts.headset_rotation = {token[base + 3], token[base + 4], token[base + 5], token[base + 6]};
  return parts;
}

std::span<const PoseFrame> past_window(const PoseSequence& seq, int t, int k) {
  if (t < 0 || t >= seq.size())
    throw ContractError("window anchor " + std::to_string(t) + " outside sequence of length " +
                        std::to_string(seq.size()));
  if (k < 1) throw ContractError("window length must be at least 1");
  const int first = std::max(0, t - k + 1);
  return {seq.frames.data() + first, static_cast<std::size_t>(t - first + 1)};
}

Vec3 derive_root(const BodyPose& body, const SkeletonSpec& skeleton) {
  Vec3 acc;
  for (const std::string& name : skeleton.root_rule.joints) {
    const int idx = skeleton.joint_index(name);
    if (idx < 0 || idx >= static_cast<int>(body.joints.size()))
      throw ContractError("root joint '" + name + "' missing from body pose");
    acc += body.joints[idx];
  }
  return acc * (1.0 / static_cast<double>(skeleton.root_rule.joints.size()));
}

}  // namespace egocast
