#pragma once

#include <cstdint>

#include "egocast/pose.hpp"

namespace egocast {

// Parameters of one synthetic motion family. Trajectory fields shape the
// root path; limb fields shape the oscillation of arms/legs around it.
struct MotionArchetype {
  std::string name;                  // stand | walk | reach
  double speed_mps = 0.0;            // nominal root speed along the path
  double turn_rate_rps = 0.0;        // heading random-walk scale
  double waypoint_noise_m = 0.0;     // jitter applied to spline waypoints
  double roam_radius_m = 2.5;        // trajectories steer back inside this radius
  double limb_amplitude_m = 0.0;     // swing / reach amplitude
  double limb_frequency_hz = 0.0;    // base oscillation frequency
  double phase_speed_coupling = 0.0; // extra cycles per second per m/s
  double head_bob_m = 0.0;           // vertical head bob amplitude

  static MotionArchetype stand();
  static MotionArchetype walk();
  static MotionArchetype reach();

  void validate() const;
};

struct GeneratorConfig {
  std::uint64_t seed = 1;
  int sequences_per_archetype = 4;  // per split
  double duration_s = 12.0;
  double fps = 30.0;
  SkeletonSpec skeleton;                    // empty -> skeleton_h17()
  std::vector<MotionArchetype> archetypes;  // empty -> {stand, walk, reach}
};

// Fully annotated synthetic sequence: smooth root trajectory through
// jittered waypoints, limbs oscillating with the gait phase, headset
// anchored to the head joint with a constant offset. Pure function of its
// arguments.
PoseSequence generate_sequence(const MotionArchetype& archetype, const SkeletonSpec& skeleton,
                               double duration_s, std::uint64_t seed, double fps = 30.0);

struct Dataset {
  std::vector<PoseSequence> train;
  std::vector<PoseSequence> test;
};

// Balanced train/test sets with disjoint per-sequence seeds.
Dataset generate_dataset(const GeneratorConfig& config);

}  // namespace egocast
