// micp — range-sensor-to-mesh registration
// SPDX-License-Identifier: Apache-2.0
#include "micp/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "micp/parallel.hpp"
#include "micp/rng.hpp"

namespace micp {

namespace {
using Clock = std::chrono::steady_clock;
}

Trajectory load_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open file");
  Trajectory traj;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    TrajectorySample s;
    double qx, qy, qz, qw;
    if (!(ls >> s.timestamp >> s.pose.translation.x() >> s.pose.translation.y() >>
          s.pose.translation.z() >> qx >> qy >> qz >> qw)) {
      throw std::runtime_error(path + ": malformed trajectory line " + std::to_string(line_no));
    }
    s.pose.rotation = Quat(qw, qx, qy, qz).normalized();
    if (!traj.empty() && s.timestamp <= traj.back().timestamp) {
      throw std::runtime_error(path + ": non-increasing timestamp at line " +
                               std::to_string(line_no));
    }
    traj.push_back(s);
  }
  return traj;
}

void save_trajectory(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open file for writing");
  out.precision(17);
  for (const TrajectorySample& s : traj) {
    Quat q = s.pose.rotation.normalized();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    out << s.timestamp << " " << s.pose.translation.x() << " " << s.pose.translation.y() << " "
        << s.pose.translation.z() << " " << q.x() << " " << q.y() << " " << q.z() << " " << q.w()
        << "\n";
  }
}

double trajectory_mean_error(const Trajectory& estimate, const Trajectory& truth) {
  if (estimate.empty() || truth.empty()) {
    throw std::invalid_argument("trajectory_mean_error: empty trajectory");
  }
  if (estimate.front().timestamp < truth.front().timestamp - 1e-12 ||
      estimate.back().timestamp > truth.back().timestamp + 1e-12) {
    throw std::invalid_argument("trajectory_mean_error: estimate outside the truth time span");
  }
  double sum = 0.0;
  std::size_t cursor = 0;
  for (const TrajectorySample& s : estimate) {
    while (cursor + 1 < truth.size() && truth[cursor + 1].timestamp < s.timestamp) ++cursor;
    const TrajectorySample& a = truth[cursor];
    const TrajectorySample& b = truth[std::min(cursor + 1, truth.size() - 1)];
    Vec3 interp = a.pose.translation;
    if (b.timestamp > a.timestamp) {
      const double alpha =
          std::clamp((s.timestamp - a.timestamp) / (b.timestamp - a.timestamp), 0.0, 1.0);
      interp = (1.0 - alpha) * a.pose.translation + alpha * b.pose.translation;
    }
    sum += (s.pose.translation - interp).norm();
  }
  return sum / static_cast<double>(estimate.size());
}

Trajectory noisy_odometry(const Trajectory& truth, double noise_per_meter, double noise_per_rad,
                          std::uint64_t seed) {
  if (noise_per_meter < 0.0 || noise_per_rad < 0.0) {
    throw std::invalid_argument("noisy_odometry: noise parameters must be >= 0");
  }
  if (truth.empty()) return {};
  Rng rng(seed);
  Trajectory out;
  out.reserve(truth.size());
  out.push_back(truth.front());
  for (std::size_t i = 1; i < truth.size(); ++i) {
    const Transform rel = compose(invert(truth[i - 1].pose), truth[i].pose);

    const double length = rel.translation.norm();
    Vec3 translation = rel.translation;
    if (length > 0.0) {
      translation *= 1.0 + noise_per_meter * rng.normal();
    }
    Eigen::AngleAxisd aa(rel.rotation);
    if (aa.angle() > 0.0) {
      aa.angle() *= 1.0 + noise_per_rad * rng.normal();
    }

    Transform noisy_rel;
    noisy_rel.rotation = Quat(aa).normalized();
    noisy_rel.translation = translation;
    TrajectorySample s;
    s.timestamp = truth[i].timestamp;
    s.pose = compose(out.back().pose, noisy_rel);
    out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------- benchmark

BenchmarkConfig::BenchmarkConfig()
    : face_counts{10000, 100000, 1000000}, model(vlp16_layout()) {}

BenchmarkReport run_sphere_benchmark(const BenchmarkConfig& config) {
  if (config.face_counts.empty()) {
    throw std::invalid_argument("run_sphere_benchmark: face_counts must be non-empty");
  }
  BenchmarkReport report;
  for (const std::size_t faces : config.face_counts) {
    const TriangleMesh sphere = generate_sphere(config.sphere_radius, faces);
    const Bvh bvh = build_bvh(sphere);

    SensorRig rig;
    rig.model = config.model;
    const Scan scan = simulate_scan(bvh, rig.model, Transform::identity(), 0.0, config.seed);
    const std::vector<SensorRig> rigs{rig};
    const std::vector<Scan> scans{scan};

    MicpParams micp = config.micp;
    micp.raycast_mode = config.brute_force ? RaycastMode::BruteForce : RaycastMode::Bvh;
    micp.spc.max_range = std::max(micp.spc.max_range, 4.0 * config.sphere_radius);

    struct PoseOutcome {
      int iterations = 0;
      double seconds = 0.0;  // total step time
      PhaseTimings timings;
      bool converged_to_center = false;
    };
    std::vector<PoseOutcome> outcomes(config.n_poses);

#pragma omp parallel for schedule(dynamic) num_threads(worker_count())
    for (int p = 0; p < config.n_poses; ++p) {
      const Transform guess =
          random_pose_in_ball(Transform::identity(), config.guess_translation,
                              config.guess_rotation, config.seed + 1000 + p);
      const auto t0 = Clock::now();
      const MicpResult result = micp_converge(bvh, rigs, scans, guess, micp);
      outcomes[p].seconds = std::chrono::duration<double>(Clock::now() - t0).count();
      outcomes[p].iterations = result.iterations_run;
      outcomes[p].timings = result.phase_timings;
      outcomes[p].converged_to_center = result.pose.translation.norm() < 1e-3;
    }

    BenchmarkRow row;
    row.face_count = faces;
    std::vector<double> per_step;
    double sim = 0.0, red = 0.0, svd = 0.0, total_iters = 0.0;
    int converged = 0;
    for (const PoseOutcome& o : outcomes) {
      per_step.push_back(o.seconds / std::max(1, o.iterations));
      sim += o.timings.simulation;
      red += o.timings.reduction;
      svd += o.timings.svd;
      total_iters += o.iterations;
      converged += o.converged_to_center ? 1 : 0;
    }
    std::sort(per_step.begin(), per_step.end());
    const auto quantile = [&per_step](double q) {
      const std::size_t i = static_cast<std::size_t>(q * (per_step.size() - 1));
      return per_step[i];
    };
    double mean = 0.0;
    for (const double s : per_step) mean += s;
    row.mean_step_seconds = mean / per_step.size();
    row.median_step_seconds = quantile(0.5);
    row.p95_step_seconds = quantile(0.95);
    const double phase_total = sim + red + svd;
    if (phase_total > 0.0) {
      row.fraction_simulation = sim / phase_total;
      row.fraction_reduction = red / phase_total;
      row.fraction_svd = svd / phase_total;
    }
    row.convergence_rate = static_cast<double>(converged) / config.n_poses;
    row.mean_iterations = total_iters / config.n_poses;
    report.rows.push_back(row);
  }
  return report;
}

std::string benchmark_to_csv(const BenchmarkReport& report, bool include_phases) {
  std::ostringstream out;
  out.precision(12);
  out << "face_count,mean_step_s,median_step_s,p95_step_s";
  if (include_phases) out << ",frac_simulation,frac_reduction,frac_svd";
  out << ",convergence_rate,mean_iterations\n";
  for (const BenchmarkRow& r : report.rows) {
    out << r.face_count << "," << r.mean_step_seconds << "," << r.median_step_seconds << ","
        << r.p95_step_seconds;
    if (include_phases) {
      out << "," << r.fraction_simulation << "," << r.fraction_reduction << ","
          << r.fraction_svd;
    }
    out << "," << r.convergence_rate << "," << r.mean_iterations << "\n";
  }
  return out.str();
}

std::string benchmark_to_json(const BenchmarkReport& report, bool include_timings) {
  nlohmann::json rows = nlohmann::json::array();
  for (const BenchmarkRow& r : report.rows) {
    rows.push_back({
        {"face_count", r.face_count},
        {"mean_step_seconds", include_timings ? r.mean_step_seconds : 0.0},
        {"median_step_seconds", include_timings ? r.median_step_seconds : 0.0},
        {"p95_step_seconds", include_timings ? r.p95_step_seconds : 0.0},
        {"fraction_simulation", include_timings ? r.fraction_simulation : 0.0},
        {"fraction_reduction", include_timings ? r.fraction_reduction : 0.0},
        {"fraction_svd", include_timings ? r.fraction_svd : 0.0},
        {"convergence_rate", r.convergence_rate},
        {"mean_iterations", r.mean_iterations},
    });
  }
  return nlohmann::json{{"rows", rows}}.dump(2);
}

// ------------------------------------------------------- trajectory harness

TrajectoryExperimentResult run_trajectory_experiment(const Bvh& bvh, const Trajectory& truth,
                                                     std::span<const SensorRig> rigs,
                                                     const TrajectoryExperimentParams& params,
                                                     std::uint64_t seed) {
  if (truth.size() < 2) {
    throw std::invalid_argument("run_trajectory_experiment: need at least 2 truth samples");
  }
  TrajectoryExperimentResult result;
  result.odometry =
      noisy_odometry(truth, params.odom_noise_per_meter, params.odom_noise_per_rad, seed);

  Transform estimate = truth.front().pose;
  result.corrected.push_back({truth.front().timestamp, estimate});

  for (std::size_t i = 1; i < truth.size(); ++i) {
    const Transform increment =
        compose(invert(result.odometry[i - 1].pose), result.odometry[i].pose);
    estimate = compose(estimate, increment);

    // scans observe the world from the true pose
    std::vector<Scan> scans;
    scans.reserve(rigs.size());
    for (std::size_t r = 0; r < rigs.size(); ++r) {
      const Transform sensor_pose = compose(truth[i].pose, rigs[r].t_sb);
      scans.push_back(simulate_scan(bvh, rigs[r].model, sensor_pose, params.scan_noise_sigma,
                                    mix_seed(seed, i * rigs.size() + r)));
    }

    const MicpResult step = micp_converge(bvh, rigs, scans, estimate, params.micp);
    if (step.rejected) ++result.rejected_steps;
    estimate = step.pose;
    result.corrected.push_back({truth[i].timestamp, estimate});
  }

  result.odometry_mean_error = trajectory_mean_error(result.odometry, truth);
  result.micp_mean_error = trajectory_mean_error(result.corrected, truth);
  return result;
}

// ------------------------------------------------------------ configurations

SphericalModel vlp16_layout(int n_horizontal) {
  SphericalModel m;
  m.theta_min = -kPi;
  m.theta_max = kPi;
  m.n_horizontal = n_horizontal;
  m.phi_min = -15.0 * kPi / 180.0;
  m.phi_max = 15.0 * kPi / 180.0;
  m.n_vertical = 16;
  m.range_min = 0.1;
  m.range_max = 130.0;
  return m;
}

std::pair<SensorRig, Scan> virtual_wheel_rig(double wheel_radius, double half_track,
                                             double half_base, std::optional<double> weight) {
  OnDnModel model;
  model.origins = {Vec3(half_base, half_track, 0.0), Vec3(half_base, -half_track, 0.0),
                   Vec3(-half_base, half_track, 0.0), Vec3(-half_base, -half_track, 0.0)};
  model.directions.assign(4, Vec3(0.0, 0.0, -1.0));
  model.range_min = 0.0;
  model.range_max = 10.0;

  SensorRig rig;
  rig.model = model;
  rig.t_sb = Transform::identity();
  rig.weight_override = weight;

  const Scan scan = Scan::from_ranges(rig.model, std::vector<double>(4, wheel_radius));
  return {rig, scan};
}

Trajectory square_loop(double side, double z, int samples_per_side, double dt) {
  if (samples_per_side < 1) throw std::invalid_argument("square_loop: samples_per_side >= 1");
  const double h = side / 2.0;
  const Vec3 corners[4] = {Vec3(-h, -h, z), Vec3(h, -h, z), Vec3(h, h, z), Vec3(-h, h, z)};
  Trajectory traj;
  int k = 0;
  for (int edge = 0; edge < 4; ++edge) {
    const Vec3& a = corners[edge];
    const Vec3& b = corners[(edge + 1) % 4];
    const Vec3 dir = (b - a).normalized();
    const double yaw = std::atan2(dir.y(), dir.x());
    for (int s = 0; s < samples_per_side; ++s) {
      TrajectorySample sample;
      sample.timestamp = dt * k++;
      sample.pose.translation = a + (b - a) * (static_cast<double>(s) / samples_per_side);
      sample.pose.rotation = Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()));
      traj.push_back(sample);
    }
  }
  // close the loop at the starting corner
  TrajectorySample last;
  last.timestamp = dt * k;
  last.pose.translation = corners[0];
  last.pose.rotation = traj.front().pose.rotation;
  traj.push_back(last);
  return traj;
}

}  // namespace micp
