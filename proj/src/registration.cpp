// micp — range-sensor-to-mesh registration
// SPDX-License-Identifier: Apache-2.0
#include "micp/registration.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include "micp/json_io.hpp"

namespace micp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

CrossStatistics cross_statistics(const CorrespondenceSet& corr) {
  CrossStatistics st;
  st.count = corr.count();
  if (st.count == 0) return st;
  // fixed-order accumulation keeps results identical across worker counts
  for (std::size_t i = 0; i < corr.count(); ++i) {
    st.covariance.noalias() += corr.map_points[i] * corr.scan_points[i].transpose();
    st.mean_scan += corr.scan_points[i];
    st.mean_map += corr.map_points[i];
  }
  const double inv_n = 1.0 / static_cast<double>(st.count);
  st.covariance *= inv_n;
  st.mean_scan *= inv_n;
  st.mean_map *= inv_n;
  return st;
}

CrossStatistics merge_statistics(std::span<const CrossStatistics> stats,
                                 const std::optional<std::vector<double>>& weights) {
  if (weights && weights->size() != stats.size()) {
    throw std::invalid_argument("merge_statistics: weights/stats length mismatch");
  }

  CrossStatistics merged;
  double weight_sum = 0.0;
  for (std::size_t i = 0; i < stats.size(); ++i) {
    merged.count += stats[i].count;
    if (stats[i].count == 0) continue;  // contributes nothing
    double w;
    if (weights) {
      w = (*weights)[i];
      if (w < 0.0) throw std::invalid_argument("merge_statistics: weights must be >= 0");
    } else {
      w = static_cast<double>(stats[i].count);
    }
    weight_sum += w;
  }
  if (merged.count == 0) return merged;  // zero statistics, flagged by count
  if (weight_sum <= 0.0) {
    throw std::invalid_argument("merge_statistics: weights over non-empty sets must sum > 0");
  }

  for (std::size_t i = 0; i < stats.size(); ++i) {
    if (stats[i].count == 0) continue;
    const double w =
        (weights ? (*weights)[i] : static_cast<double>(stats[i].count)) / weight_sum;
    merged.covariance += w * stats[i].covariance;
    merged.mean_scan += w * stats[i].mean_scan;
    merged.mean_map += w * stats[i].mean_map;
  }
  return merged;
}

Transform solve_umeyama(const CrossStatistics& stats) {
  if (stats.count < 3) {
    throw std::invalid_argument("solve_umeyama: need at least 3 correspondences");
  }
  if (!stats.covariance.allFinite() || !stats.mean_scan.allFinite() ||
      !stats.mean_map.allFinite()) {
    throw std::runtime_error("solve_umeyama: non-finite statistics");
  }
  Eigen::JacobiSVD<Mat3> svd(stats.covariance, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  // reflection guard: force a proper rotation even for degenerate geometry
  Vec3 d = Vec3::Ones();
  if ((u * v.transpose()).determinant() < 0.0) d.z() = -1.0;
  const Mat3 rotation = u * d.asDiagonal() * v.transpose();

  Transform delta;
  delta.rotation = Quat(rotation).normalized();
  delta.translation = stats.mean_map - rotation * stats.mean_scan;
  return delta;
}

double alignment_error(const CorrespondenceSet& corr, const Transform& delta) {
  if (corr.count() == 0) return 0.0;
  const Mat3 rot = delta.rotation_matrix();
  double sum = 0.0;
  for (std::size_t i = 0; i < corr.count(); ++i) {
    sum += (corr.map_points[i] - (rot * corr.scan_points[i] + delta.translation)).squaredNorm();
  }
  return sum / static_cast<double>(corr.count());
}

namespace {

double mean_pair_distance(const CorrespondenceSet& corr) {
  if (corr.count() == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < corr.count(); ++i) {
    sum += (corr.map_points[i] - corr.scan_points[i]).norm();
  }
  return sum / static_cast<double>(corr.count());
}

}  // namespace

std::pair<Transform, StepDiagnostics> micp_step(const Bvh& bvh, std::span<const SensorRig> rigs,
                                                std::span<const Scan> scans, const Transform& pose,
                                                const MicpParams& params) {
  if (rigs.size() != scans.size()) {
    throw std::invalid_argument("micp_step: rigs/scans length mismatch");
  }
  StepDiagnostics diag;

  auto t0 = Clock::now();
  std::vector<CorrespondenceSet> sets;
  sets.reserve(rigs.size());
  for (std::size_t i = 0; i < rigs.size(); ++i) {
    sets.push_back(
        find_correspondences(bvh, rigs[i], scans[i], pose, params.spc, params.raycast_mode));
    diag.per_sensor_counts.push_back(sets.back().count());
    diag.correspondence_count += sets.back().count();
  }
  diag.timings.simulation = seconds_since(t0);

  if (diag.correspondence_count < static_cast<std::size_t>(params.min_correspondences)) {
    diag.rejected = true;
    return {pose, diag};
  }

  t0 = Clock::now();
  std::vector<CrossStatistics> stats;
  stats.reserve(sets.size());
  double residual_sum = 0.0;
  for (const CorrespondenceSet& set : sets) {
    stats.push_back(cross_statistics(set));
    residual_sum += mean_pair_distance(set) * static_cast<double>(set.count());
  }
  diag.mean_residual = residual_sum / static_cast<double>(diag.correspondence_count);

  // weight overrides where set; count-proportional share otherwise
  std::optional<std::vector<double>> weights;
  const bool any_override = std::any_of(rigs.begin(), rigs.end(), [](const SensorRig& r) {
    return r.weight_override.has_value();
  });
  if (any_override) {
    std::vector<double> w(rigs.size());
    for (std::size_t i = 0; i < rigs.size(); ++i) {
      w[i] = rigs[i].weight_override
                 ? *rigs[i].weight_override
                 : static_cast<double>(stats[i].count) /
                       static_cast<double>(diag.correspondence_count);
    }
    weights = std::move(w);
  }
  const CrossStatistics merged = merge_statistics(stats, weights);
  diag.timings.reduction = seconds_since(t0);

  t0 = Clock::now();
  diag.delta = solve_umeyama(merged);
  diag.timings.svd = seconds_since(t0);

  return {compose(pose, diag.delta), diag};
}

MicpResult micp_converge(const Bvh& bvh, std::span<const SensorRig> rigs,
                         std::span<const Scan> scans, const Transform& initial_pose,
                         const MicpParams& params) {
  if (params.max_iterations < 1) {
    throw std::invalid_argument("micp_converge: max_iterations must be >= 1");
  }
  MicpResult result;
  result.pose = initial_pose;

  for (int it = 0; it < params.max_iterations; ++it) {
    auto [next_pose, diag] = micp_step(bvh, rigs, scans, result.pose, params);
    result.iterations_run = it + 1;
    result.phase_timings.simulation += diag.timings.simulation;
    result.phase_timings.reduction += diag.timings.reduction;
    result.phase_timings.svd += diag.timings.svd;
    if (diag.rejected) {
      result.converged = false;
      result.rejected = true;
      break;
    }
    result.pose = next_pose;
    if (diag.delta.translation.norm() < params.translation_epsilon &&
        rotation_angle(diag.delta.rotation) < params.rotation_epsilon) {
      result.converged = true;
      break;
    }
  }

  // residual evaluated at the final pose
  auto t0 = Clock::now();
  double residual_sum = 0.0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < rigs.size(); ++i) {
    const CorrespondenceSet corr = find_correspondences(bvh, rigs[i], scans[i], result.pose,
                                                        params.spc, params.raycast_mode);
    residual_sum += mean_pair_distance(corr) * static_cast<double>(corr.count());
    total += corr.count();
  }
  result.phase_timings.simulation += seconds_since(t0);
  result.correspondence_count = total;
  result.final_residual = total > 0 ? residual_sum / static_cast<double>(total) : 0.0;
  return result;
}

std::string micp_result_to_json(const MicpResult& result, bool include_timings) {
  nlohmann::json j;
  j["pose"] = transform_json(result.pose);
  j["iterations_run"] = result.iterations_run;
  j["final_residual"] = result.final_residual;
  j["converged"] = result.converged;
  j["rejected"] = result.rejected;
  j["correspondence_count"] = result.correspondence_count;
  j["phase_timings"] = {
      {"simulation", include_timings ? result.phase_timings.simulation : 0.0},
      {"reduction", include_timings ? result.phase_timings.reduction : 0.0},
      {"svd", include_timings ? result.phase_timings.svd : 0.0},
  };
  return j.dump(2);
}

}  // namespace micp
