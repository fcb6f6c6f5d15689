// micp — range-sensor-to-mesh registration
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "micp/bvh.hpp"
#include "micp/se3.hpp"
#include "micp/types.hpp"

namespace micp {

// Rotating-LiDAR grid of azimuth/elevation rays. theta is the azimuth around
// +z, phi the elevation from the xy-plane, forward is +x. Angle spacing is
// inclusive of both bounds when an axis has >= 2 samples, except a full
// 360-degree horizontal sweep, which drops the duplicate endpoint.
struct SphericalModel {
  double theta_min = -kPi, theta_max = kPi;  // horizontal, radians
  int n_horizontal = 1;
  double phi_min = 0.0, phi_max = 0.0;       // vertical, radians
  int n_vertical = 1;
  double range_min = 0.0, range_max = 100.0;
};

// Depth camera through an intrinsic matrix; +z is the optical axis,
// pixels are traversed row-major.
struct PinholeModel {
  int width = 1, height = 1;
  double fx = 1.0, fy = 1.0;
  double cx = 0.0, cy = 0.0;
  double range_min = 0.0, range_max = 100.0;
};

// One origin, arbitrary per-ray directions (sensor frame).
struct O1DnModel {
  Vec3 origin = Vec3::Zero();
  std::vector<Vec3> directions;  // unit
  double range_min = 0.0, range_max = 100.0;
};

// Arbitrary origin/direction pairs, e.g. virtual wheel sensors.
struct OnDnModel {
  std::vector<Vec3> origins;
  std::vector<Vec3> directions;  // unit, paired by index
  double range_min = 0.0, range_max = 100.0;
};

using SensorModel = std::variant<SphericalModel, PinholeModel, O1DnModel, OnDnModel>;

std::size_t ray_count(const SensorModel& model);
double model_range_min(const SensorModel& model);
double model_range_max(const SensorModel& model);

// Measured ranges plus validity (finite and within the model's range bounds).
struct Scan {
  std::vector<double> ranges;  // meters
  std::vector<bool> valid;

  static Scan from_ranges(const SensorModel& model, std::vector<double> ranges);
};

// A sensor mounted on the robot: model, fixed sensor-to-base transform, and
// an optional fusion weight override (>= 0).
struct SensorRig {
  SensorModel model;
  Transform t_sb;
  std::optional<double> weight_override;
};

// Rays in the sensor frame, in the model's deterministic order.
std::vector<Ray> model_rays(const SensorModel& model);

// Cartesian points origin_i + r_i * direction_i for valid measurements
// (sensor frame); nullopt where invalid. Throws on scan/model length mismatch.
std::vector<std::optional<Vec3>> scan_to_points(const SensorModel& model, const Scan& scan);

// Casts the model's rays from sensor_pose into the map and perturbs hit
// ranges with N(0, noise_sigma^2). The noise sample of ray i depends only on
// (seed, i), so results are reproducible at any worker count. Misses and
// out-of-bounds ranges come back invalid.
Scan simulate_scan(const Bvh& bvh, const SensorModel& model, const Transform& sensor_pose,
                   double noise_sigma, std::uint64_t seed);

// --- serialization (consumed by the CLI) ---

// CSV: header "index,range,valid", one row per ray.
std::string scan_to_csv(const Scan& scan);
Scan scan_from_csv(const SensorModel& model, const std::string& csv);

// JSON container holding the model parameters and the ranges.
std::string scan_to_json(const SensorModel& model, const Scan& scan);
std::pair<SensorModel, Scan> scan_from_json(const std::string& json_text);

}  // namespace micp
