// micp — range-sensor-to-mesh registration
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "micp/registration.hpp"

namespace micp {

struct TrajectorySample {
  double timestamp = 0.0;  // seconds, strictly increasing
  Transform pose;
};

using Trajectory = std::vector<TrajectorySample>;

// File format: one line per sample, "timestamp tx ty tz qx qy qz qw".
Trajectory load_trajectory(const std::string& path);
void save_trajectory(const Trajectory& traj, const std::string& path);

// Mean Euclidean translation error of `estimate` against `truth`, with the
// truth translation linearly interpolated at each estimate timestamp.
// Throws on empty trajectories or estimate timestamps outside truth's span.
double trajectory_mean_error(const Trajectory& estimate, const Trajectory& truth);

// Dead-reckoned trajectory: relative motions between consecutive truth
// samples, re-integrated with multiplicative Gaussian noise on the step's
// translation magnitude and rotation angle. Deterministic per seed.
Trajectory noisy_odometry(const Trajectory& truth, double noise_per_meter, double noise_per_rad,
                          std::uint64_t seed);

// --- sphere benchmark ---

struct BenchmarkConfig {
  std::vector<std::size_t> face_counts;
  int n_poses = 1000;
  SensorModel model;
  double sphere_radius = 1.0;
  double guess_translation = 0.5;  // meters, ball around the center
  double guess_rotation = 0.3;     // radians
  MicpParams micp;
  std::uint64_t seed = 1;
  bool brute_force = false;

  BenchmarkConfig();
};

struct BenchmarkRow {
  std::size_t face_count = 0;
  double mean_step_seconds = 0.0;
  double median_step_seconds = 0.0;
  double p95_step_seconds = 0.0;
  double fraction_simulation = 0.0;
  double fraction_reduction = 0.0;
  double fraction_svd = 0.0;
  double convergence_rate = 0.0;  // final pose within 1e-3 m of the center
  double mean_iterations = 0.0;
};

struct BenchmarkReport {
  std::vector<BenchmarkRow> rows;
};

// Registers a scan simulated at the sphere center from n_poses random
// guesses, per face count; poses run in parallel.
BenchmarkReport run_sphere_benchmark(const BenchmarkConfig& config);

// include_phases adds the per-phase fraction columns to the CSV
std::string benchmark_to_csv(const BenchmarkReport& report, bool include_phases = true);
std::string benchmark_to_json(const BenchmarkReport& report, bool include_timings = true);

// --- trajectory experiment ---

struct TrajectoryExperimentParams {
  double odom_noise_per_meter = 0.1;
  double odom_noise_per_rad = 0.1;
  double scan_noise_sigma = 0.008;  // meters
  MicpParams micp;
};

struct TrajectoryExperimentResult {
  double odometry_mean_error = 0.0;
  double micp_mean_error = 0.0;
  Trajectory odometry;
  Trajectory corrected;
  int rejected_steps = 0;
};

// Walks the truth trajectory: each sample advances the estimate by the noisy
// odometry increment, simulates a noisy scan at the true pose, and registers
// from the advanced estimate. Inherently sequential in time.
TrajectoryExperimentResult run_trajectory_experiment(const Bvh& bvh, const Trajectory& truth,
                                                     std::span<const SensorRig> rigs,
                                                     const TrajectoryExperimentParams& params,
                                                     std::uint64_t seed);

// --- harness configurations ---

// 16 x 900 spherical layout (full sweep, +-15 degree vertical field).
SphericalModel vlp16_layout(int n_horizontal = 900);

// Four downward rays from the wheel centers; measured ranges are fixed at the
// wheel radius. Returns the rig and the constant scan it observes.
std::pair<SensorRig, Scan> virtual_wheel_rig(double wheel_radius = 0.15,
                                             double half_track = 0.25,
                                             double half_base = 0.30,
                                             std::optional<double> weight = std::nullopt);

// Square loop of side `side` at height z, `samples_per_side` poses per edge,
// heading tangent to the path, dt seconds between samples.
Trajectory square_loop(double side, double z, int samples_per_side, double dt = 0.1);

}  // namespace micp
