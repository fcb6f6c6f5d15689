// micp — range-sensor-to-mesh registration
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <vector>

#include "micp/spc.hpp"

namespace micp {

// Mergeable sufficient statistics of a correspondence set: the cross
// covariance anchored at the base origin, the two means, and the pair count.
struct CrossStatistics {
  Mat3 covariance = Mat3::Zero();  // (1/n) sum m_i s_i^T, about the base origin
  Vec3 mean_scan = Vec3::Zero();
  Vec3 mean_map = Vec3::Zero();
  std::size_t count = 0;
};

struct MicpParams {
  int max_iterations = 50;
  double translation_epsilon = 1e-4;  // meters
  double rotation_epsilon = 1e-4;     // radians
  int min_correspondences = 10;
  SpcParams spc;
  RaycastMode raycast_mode = RaycastMode::Bvh;
};

struct PhaseTimings {
  double simulation = 0.0;  // seconds: raycasting + projection
  double reduction = 0.0;   // seconds: statistics accumulation + merge
  double svd = 0.0;         // seconds: decomposition + transform extraction
};

struct StepDiagnostics {
  Transform delta;                      // the applied correction
  std::size_t correspondence_count = 0;
  std::vector<std::size_t> per_sensor_counts;
  bool rejected = false;                // too few correspondences; pose unchanged
  double mean_residual = 0.0;           // mean |m_i - s_i| of this step's set
  PhaseTimings timings;
};

struct MicpResult {
  Transform pose;
  int iterations_run = 0;
  double final_residual = 0.0;  // mean |projective distance| at the final pose
  bool converged = false;
  bool rejected = false;                 // a step had too few correspondences
  std::size_t correspondence_count = 0;  // at the final pose
  PhaseTimings phase_timings;            // accumulated over all iterations
};

// Statistics of a correspondence set, anchored at the base origin. An empty
// set yields zeroed statistics.
CrossStatistics cross_statistics(const CorrespondenceSet& corr);

// Weighted combination. Without explicit weights each set is weighted by its
// share of the total count; explicit weights must match in length, be >= 0,
// and have a positive sum (they are renormalized). Empty inputs contribute
// nothing either way. Returns zeroed statistics if every count is zero.
CrossStatistics merge_statistics(std::span<const CrossStatistics> stats,
                                 const std::optional<std::vector<double>>& weights = std::nullopt);

// Least-squares rigid correction from the statistics: SVD of the covariance
// with a reflection guard, translation from the means. Requires count >= 3.
Transform solve_umeyama(const CrossStatistics& stats);

// Mean-squared alignment error of a correspondence set under a candidate
// correction (the objective the solver minimizes).
double alignment_error(const CorrespondenceSet& corr, const Transform& delta);

// One correction step over all sensors: correspondences per rig, statistics
// merge (weight overrides where set, count-proportional otherwise), solve,
// and pose update pose' = pose * delta. Rejected (pose unchanged) when fewer
// than min_correspondences pairs survive in total.
std::pair<Transform, StepDiagnostics> micp_step(const Bvh& bvh, std::span<const SensorRig> rigs,
                                                std::span<const Scan> scans, const Transform& pose,
                                                const MicpParams& params);

// Iterates micp_step until the correction magnitude drops below the epsilons
// or max_iterations is reached. A rejected step stops the loop with
// converged = false.
MicpResult micp_converge(const Bvh& bvh, std::span<const SensorRig> rigs,
                         std::span<const Scan> scans, const Transform& initial_pose,
                         const MicpParams& params);

// Result serialization; timing fields are zeroed when include_timings is
// false so outputs can be compared byte-for-byte.
std::string micp_result_to_json(const MicpResult& result, bool include_timings = true);

}  // namespace micp
