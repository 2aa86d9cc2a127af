#include "egocast/synth.hpp"

#include <cmath>

#include "egocast/rng.hpp"

namespace egocast {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kHipHeight = 0.92;
constexpr Vec3 kHeadsetOffset{0.0, 0.0, 0.05};

// Catmull-Rom interpolation over uniformly spaced control points.
Vec3 catmull_rom(const std::vector<Vec3>& pts, double knot_spacing, double t) {
  const int n = static_cast<int>(pts.size());
  double u = t / knot_spacing;
  int seg = static_cast<int>(std::floor(u));
  seg = std::max(0, std::min(seg, n - 4));
  const double s = u - seg;
  const Vec3 &p0 = pts[seg], &p1 = pts[seg + 1], &p2 = pts[seg + 2], &p3 = pts[seg + 3];
  const double s2 = s * s, s3 = s2 * s;
  auto blend = [&](double a0, double a1, double a2, double a3) {
    return 0.5 * ((2 * a1) + (-a0 + a2) * s + (2 * a0 - 5 * a1 + 4 * a2 - a3) * s2 +
                  (-a0 + 3 * a1 - 3 * a2 + a3) * s3);
  };
  return {blend(p0.x, p1.x, p2.x, p3.x), blend(p0.y, p1.y, p2.y, p3.y),
          blend(p0.z, p1.z, p2.z, p3.z)};
}

struct SequencePlan {
  std::vector<Vec3> waypoints;
  double knot_spacing = 2.0;
  double phase_offset = 0;
  double heading0 = 0;
  double gait_hz = 0;
};

SequencePlan plan_sequence(const MotionArchetype& a, double duration_s, Rng& rng) {
  SequencePlan plan;
  plan.phase_offset = rng.uniform(0, 2 * kPi);
  plan.heading0 = rng.uniform(-kPi, kPi);
  plan.gait_hz = a.limb_frequency_hz + a.phase_speed_coupling * a.speed_mps;

  // One control point before t=0 and two beyond the end keep the spline
  // defined across the whole sequence.
  const int segments = static_cast<int>(std::ceil(duration_s / plan.knot_spacing)) + 1;
  double heading = plan.heading0;
  Vec3 cursor{0, 0, kHipHeight};
  plan.waypoints.push_back(cursor);  // virtual pre-start point
  for (int i = 0; i <= segments + 1; ++i) {
    plan.waypoints.push_back(
        cursor + Vec3{rng.normal() * a.waypoint_noise_m, rng.normal() * a.waypoint_noise_m, 0});
    heading += rng.normal() * a.turn_rate_rps * plan.knot_spacing;
    // Steer back toward the origin outside the roam radius, so sequences
    // stay inside one room-sized area like real capture spaces.
    const double dist = std::hypot(cursor.x, cursor.y);
    if (dist > a.roam_radius_m) {
      const double to_center = std::atan2(-cursor.y, -cursor.x);
      double delta = std::fmod(to_center - heading, 2 * kPi);
      if (delta > kPi) delta -= 2 * kPi;
      if (delta < -kPi) delta += 2 * kPi;
      heading += std::max(-1.0, std::min(1.0, delta));
    }
    cursor += Vec3{std::cos(heading), std::sin(heading), 0} * (a.speed_mps * plan.knot_spacing);
  }
  // Make the pre-start point mirror the first step so velocity at t=0 is sane.
  plan.waypoints[0] =
      plan.waypoints[1] - (plan.waypoints[2] - plan.waypoints[1]);
  return plan;
}

struct LocalOffset {
  double fwd = 0, lat = 0, up = 0;
};

// Fixed-proportion template around the root (mid-hip / pelvis level),
// oscillated by the gait phase. `side` is +1 left, -1 right, 0 center.
LocalOffset joint_offset(const std::string& name, double phase, double t,
                         const MotionArchetype& a) {
  const double swing = a.limb_amplitude_m * std::sin(phase);
  const double arm_swing = 0.6 * swing;
  const double bob = a.head_bob_m * std::sin(2 * phase);
  const bool reach = a.name == "reach";
  // Reach cycle: right arm extends forward/up on a slow sine.
  const double reach_ext = reach ? a.limb_amplitude_m *
                                       (0.5 + 0.5 * std::sin(2 * kPi * a.limb_frequency_hz * t))
                                 : 0.0;

  auto face = [&](double fwd, double lat, double up) {
    return LocalOffset{fwd, lat + 0.02 * std::sin(phase), up + bob};
  };

  if (name == "nose") return face(0.09, 0.0, 0.68);
  if (name == "left_eye") return face(0.07, 0.03, 0.71);
  if (name == "right_eye") return face(0.07, -0.03, 0.71);
  if (name == "left_ear") return face(0.0, 0.07, 0.70);
  if (name == "right_ear") return face(0.0, -0.07, 0.70);
  if (name == "head") return face(0.0, 0.0, 0.64);
  if (name == "neck") return face(0.0, 0.0, 0.55);
  if (name == "chest") return {0.0, 0.0, 0.38};
  if (name == "spine") return {0.0, 0.0, 0.18};
  if (name == "pelvis") return {0.0, 0.0, 0.0};

  if (name == "left_shoulder") return {-arm_swing, 0.18, 0.52};
  if (name == "right_shoulder") return {arm_swing * (reach ? 0 : 1), -0.18, 0.52};
  if (name == "left_elbow") return {-arm_swing, 0.22, 0.28};
  if (name == "right_elbow")
    return reach ? LocalOffset{0.10 + 0.5 * reach_ext, -0.20, 0.35}
                 : LocalOffset{arm_swing, -0.22, 0.28};
  if (name == "left_wrist") return {-1.4 * arm_swing, 0.24, 0.05};
  if (name == "right_wrist")
    return reach ? LocalOffset{0.15 + reach_ext, -0.16, 0.42 + 0.3 * reach_ext}
                 : LocalOffset{1.4 * arm_swing, -0.24, 0.05};
  if (name == "left_hand") return {-1.5 * arm_swing, 0.25, -0.02};
  if (name == "right_hand")
    return reach ? LocalOffset{0.18 + 1.1 * reach_ext, -0.15, 0.44 + 0.33 * reach_ext}
                 : LocalOffset{1.5 * arm_swing, -0.25, -0.02};

  const double lift_l = 0.3 * a.limb_amplitude_m * std::max(0.0, std::sin(phase));
  const double lift_r = 0.3 * a.limb_amplitude_m * std::max(0.0, -std::sin(phase));
  if (name == "left_hip") return {0.0, 0.10, 0.0};
  if (name == "right_hip") return {0.0, -0.10, 0.0};
  if (name == "left_knee") return {0.5 * swing, 0.10, -0.45 + 0.5 * lift_l};
  if (name == "right_knee") return {-0.5 * swing, -0.10, -0.45 + 0.5 * lift_r};
  if (name == "left_ankle") return {swing, 0.10, -0.87 + lift_l};
  if (name == "right_ankle") return {-swing, -0.10, -0.87 + lift_r};
  if (name == "left_foot") return {swing + 0.08, 0.10, -0.90 + lift_l};
  if (name == "right_foot") return {-swing + 0.08, -0.10, -0.90 + lift_r};

  throw ConfigError("synthetic generator has no template for joint '" + name + "'");
}

}  // namespace

MotionArchetype MotionArchetype::stand() {
  MotionArchetype a;
  a.name = "stand";
  a.speed_mps = 0.0;
  a.turn_rate_rps = 0.0;
  a.waypoint_noise_m = 0.008;
  a.limb_amplitude_m = 0.02;
  a.limb_frequency_hz = 0.4;
  a.phase_speed_coupling = 0.0;
  a.head_bob_m = 0.005;
  return a;
}

MotionArchetype MotionArchetype::walk() {
  MotionArchetype a;
  a.name = "walk";
  a.speed_mps = 1.0;
  a.turn_rate_rps = 0.12;
  a.waypoint_noise_m = 0.03;
  a.limb_amplitude_m = 0.22;
  a.limb_frequency_hz = 0.9;
  a.phase_speed_coupling = 0.5;
  a.head_bob_m = 0.02;
  return a;
}

MotionArchetype MotionArchetype::reach() {
  MotionArchetype a;
  a.name = "reach";
  a.speed_mps = 0.0;
  a.turn_rate_rps = 0.0;
  a.waypoint_noise_m = 0.01;
  a.limb_amplitude_m = 0.30;
  a.limb_frequency_hz = 0.25;
  a.phase_speed_coupling = 0.0;
  a.head_bob_m = 0.008;
  return a;
}

void MotionArchetype::validate() const {
  if (name != "stand" && name != "walk" && name != "reach")
    throw ConfigError("unknown archetype '" + name + "'");
  for (double v : {waypoint_noise_m, limb_amplitude_m, limb_frequency_hz, head_bob_m})
    if (v < 0) throw ConfigError("archetype '" + name + "' has a negative amplitude");
  if (roam_radius_m <= 0) throw ConfigError("roam radius must be positive");
  if (name == "walk" && (speed_mps < 0.3 || speed_mps > 2.0))
    throw ConfigError("walk speed " + std::to_string(speed_mps) + " outside [0.3, 2.0] m/s");
}

PoseSequence generate_sequence(const MotionArchetype& archetype, const SkeletonSpec& skeleton,
                               double duration_s, std::uint64_t seed, double fps) {
  archetype.validate();
  skeleton.validate();
  const int n_frames = static_cast<int>(std::llround(duration_s * fps));
  if (n_frames < 2)
    throw DataError("duration " + std::to_string(duration_s) + " s at " + std::to_string(fps) +
                    " fps is too short for a sequence");

  Rng rng(derive_seed(seed, {0x5e9u}));
  const SequencePlan plan = plan_sequence(archetype, duration_s, rng);

  const int head_ref =
      skeleton.joint_index("nose") >= 0 ? skeleton.joint_index("nose") : skeleton.joint_index("head");
  if (head_ref < 0)
    throw ConfigError("skeleton has neither 'nose' nor 'head'; cannot anchor a headset");

  PoseSequence seq;
  seq.skeleton = skeleton;
  seq.activity = archetype.name;
  seq.fps = fps;
  seq.frames.reserve(static_cast<std::size_t>(n_frames));

  const double dt = 1.0 / fps;
  const bool moving = archetype.speed_mps > 1e-9;
  double heading = plan.heading0;
  for (int i = 0; i < n_frames; ++i) {
    const double t = i / fps;
    // Spline is parameterized from the virtual pre-start point.
    const Vec3 root = catmull_rom(plan.waypoints, plan.knot_spacing, t + plan.knot_spacing);
    if (moving) {
      const Vec3 ahead = catmull_rom(plan.waypoints, plan.knot_spacing, t + plan.knot_spacing + dt);
      const Vec3 behind =
          catmull_rom(plan.waypoints, plan.knot_spacing, std::max(0.0, t + plan.knot_spacing - dt));
      const Vec3 vel = (ahead - behind) * (1.0 / (2 * dt));
      if (vel.norm() > 1e-6) heading = std::atan2(vel.y, vel.x);
    } else {
      heading = plan.heading0 + 0.05 * std::sin(2 * kPi * 0.1 * t);
    }
    const double phase = 2 * kPi * plan.gait_hz * t + plan.phase_offset;
    const Vec3 fwd{std::cos(heading), std::sin(heading), 0};
    const Vec3 left{-std::sin(heading), std::cos(heading), 0};
    const Vec3 up{0, 0, 1};

    BodyPose body;
    body.joints.reserve(skeleton.joints.size());
    for (const std::string& name : skeleton.joints) {
      const LocalOffset o = joint_offset(name, phase, t, archetype);
      body.joints.push_back(root + fwd * o.fwd + left * o.lat + up * o.up);
    }

    PoseFrame frame;
    frame.index = i;
    frame.timestamp_s = t;
    frame.headset.position = body.joints[head_ref] + kHeadsetOffset;
    const double pitch = std::min(0.15, archetype.head_bob_m * 4.0) * std::cos(2 * phase);
    frame.headset.rotation = quat_from_yaw_pitch(heading, pitch);
    frame.body = std::move(body);
    seq.frames.push_back(std::move(frame));
  }
  seq.validate();
  return seq;
}

Dataset generate_dataset(const GeneratorConfig& config) {
  GeneratorConfig cfg = config;
  if (cfg.skeleton.joints.empty()) cfg.skeleton = skeleton_h17();
  if (cfg.archetypes.empty())
    cfg.archetypes = {MotionArchetype::stand(), MotionArchetype::walk(), MotionArchetype::reach()};
  if (cfg.sequences_per_archetype < 1)
    throw ConfigError("sequences_per_archetype must be at least 1");

  Dataset out;
  for (std::size_t ai = 0; ai < cfg.archetypes.size(); ++ai) {
    for (int si = 0; si < cfg.sequences_per_archetype; ++si) {
      const std::uint64_t train_seed = derive_seed(cfg.seed, {1, ai, static_cast<std::uint64_t>(si)});
      const std::uint64_t test_seed = derive_seed(cfg.seed, {2, ai, static_cast<std::uint64_t>(si)});
      out.train.push_back(generate_sequence(cfg.archetypes[ai], cfg.skeleton, cfg.duration_s,
                                            train_seed, cfg.fps));
      out.test.push_back(generate_sequence(cfg.archetypes[ai], cfg.skeleton, cfg.duration_s,
                                           test_seed, cfg.fps));
    }
  }
  return out;
}

}  // namespace egocast
