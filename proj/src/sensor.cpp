// micp — range-sensor-to-mesh registration
// SPDX-License-Identifier: Apache-2.0
#include "micp/sensor.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "micp/json_io.hpp"
#include "micp/parallel.hpp"
#include "micp/rng.hpp"

namespace micp {

using json = nlohmann::json;

std::size_t ray_count(const SensorModel& model) {
  return std::visit(
      [](const auto& m) -> std::size_t {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, SphericalModel>) {
          return static_cast<std::size_t>(m.n_horizontal) * m.n_vertical;
        } else if constexpr (std::is_same_v<T, PinholeModel>) {
          return static_cast<std::size_t>(m.width) * m.height;
        } else if constexpr (std::is_same_v<T, O1DnModel>) {
          return m.directions.size();
        } else {
          return m.directions.size();
        }
      },
      model);
}

double model_range_min(const SensorModel& model) {
  return std::visit([](const auto& m) { return m.range_min; }, model);
}

double model_range_max(const SensorModel& model) {
  return std::visit([](const auto& m) { return m.range_max; }, model);
}

Scan Scan::from_ranges(const SensorModel& model, std::vector<double> ranges) {
  if (ranges.size() != ray_count(model)) {
    throw std::invalid_argument("Scan::from_ranges: length does not match the model ray count");
  }
  Scan scan;
  scan.valid.resize(ranges.size());
  const double lo = model_range_min(model);
  const double hi = model_range_max(model);
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    scan.valid[i] = std::isfinite(ranges[i]) && ranges[i] >= lo && ranges[i] <= hi;
  }
  scan.ranges = std::move(ranges);
  return scan;
}

namespace {

std::vector<Ray> spherical_rays(const SphericalModel& m) {
  if (m.n_horizontal < 1 || m.n_vertical < 1) {
    throw std::invalid_argument("spherical model: ray grid must be >= 1x1");
  }
  const double h_span = m.theta_max - m.theta_min;
  const bool full_sweep = std::abs(h_span - 2.0 * kPi) < 1e-9;
  const double dtheta =
      m.n_horizontal > 1 ? (full_sweep ? h_span / m.n_horizontal : h_span / (m.n_horizontal - 1))
                         : 0.0;
  const double dphi = m.n_vertical > 1 ? (m.phi_max - m.phi_min) / (m.n_vertical - 1) : 0.0;

  std::vector<Ray> rays;
  rays.reserve(static_cast<std::size_t>(m.n_horizontal) * m.n_vertical);
  for (int iv = 0; iv < m.n_vertical; ++iv) {
    const double phi = m.phi_min + iv * dphi;
    const double cp = std::cos(phi), sp = std::sin(phi);
    for (int ih = 0; ih < m.n_horizontal; ++ih) {
      const double theta = m.theta_min + ih * dtheta;
      Ray r;
      r.direction = Vec3(cp * std::cos(theta), cp * std::sin(theta), sp);
      rays.push_back(r);
    }
  }
  return rays;
}

std::vector<Ray> pinhole_rays(const PinholeModel& m) {
  if (m.width < 1 || m.height < 1 || m.fx == 0.0 || m.fy == 0.0) {
    throw std::invalid_argument("pinhole model: invalid intrinsics");
  }
  std::vector<Ray> rays;
  rays.reserve(static_cast<std::size_t>(m.width) * m.height);
  for (int v = 0; v < m.height; ++v) {
    for (int u = 0; u < m.width; ++u) {
      Ray r;
      r.direction = Vec3((u - m.cx) / m.fx, (v - m.cy) / m.fy, 1.0).normalized();
      rays.push_back(r);
    }
  }
  return rays;
}

}  // namespace

std::vector<Ray> model_rays(const SensorModel& model) {
  return std::visit(
      [](const auto& m) -> std::vector<Ray> {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, SphericalModel>) {
          return spherical_rays(m);
        } else if constexpr (std::is_same_v<T, PinholeModel>) {
          return pinhole_rays(m);
        } else if constexpr (std::is_same_v<T, O1DnModel>) {
          std::vector<Ray> rays(m.directions.size());
          for (std::size_t i = 0; i < m.directions.size(); ++i) {
            rays[i] = {m.origin, m.directions[i]};
          }
          return rays;
        } else {
          if (m.origins.size() != m.directions.size()) {
            throw std::invalid_argument("ondn model: origins/directions length mismatch");
          }
          std::vector<Ray> rays(m.directions.size());
          for (std::size_t i = 0; i < m.directions.size(); ++i) {
            rays[i] = {m.origins[i], m.directions[i]};
          }
          return rays;
        }
      },
      model);
}

std::vector<std::optional<Vec3>> scan_to_points(const SensorModel& model, const Scan& scan) {
  const std::vector<Ray> rays = model_rays(model);
  if (scan.ranges.size() != rays.size() || scan.valid.size() != rays.size()) {
    throw std::invalid_argument("scan_to_points: scan does not match the model");
  }
  std::vector<std::optional<Vec3>> points(rays.size());
  for (std::size_t i = 0; i < rays.size(); ++i) {
    if (scan.valid[i]) {
      points[i] = rays[i].origin + scan.ranges[i] * rays[i].direction;
    }
  }
  return points;
}

Scan simulate_scan(const Bvh& bvh, const SensorModel& model, const Transform& sensor_pose,
                   double noise_sigma, std::uint64_t seed) {
  if (noise_sigma < 0.0) throw std::invalid_argument("simulate_scan: noise_sigma must be >= 0");
  const std::vector<Ray> rays = model_rays(model);
  const double hi = model_range_max(model);
  const Mat3 rot = sensor_pose.rotation_matrix();

  std::vector<double> ranges(rays.size(), -1.0);
  const int n = static_cast<int>(rays.size());
#pragma omp parallel for schedule(static) num_threads(worker_count())
  for (int i = 0; i < n; ++i) {
    Ray posed;
    posed.origin = rot * rays[i].origin + sensor_pose.translation;
    posed.direction = rot * rays[i].direction;
    const std::optional<Hit> hit = closest_hit(bvh, posed, hi);
    if (!hit) continue;
    double r = hit->distance;
    if (noise_sigma > 0.0) {
      r += noise_sigma * Rng::at_index(seed, static_cast<std::uint64_t>(i)).normal();
    }
    ranges[i] = r;
  }
  return Scan::from_ranges(model, std::move(ranges));
}

// ---------------------------------------------------------------- CSV / JSON

std::string scan_to_csv(const Scan& scan) {
  std::ostringstream out;
  out.precision(17);
  out << "index,range,valid\n";
  for (std::size_t i = 0; i < scan.ranges.size(); ++i) {
    out << i << "," << scan.ranges[i] << "," << (scan.valid[i] ? 1 : 0) << "\n";
  }
  return out.str();
}

Scan scan_from_csv(const SensorModel& model, const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);  // header
  std::vector<double> ranges;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t c1 = line.find(',');
    std::size_t c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw std::runtime_error("scan csv: malformed row '" + line + "'");
    }
    ranges.push_back(std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
  }
  return Scan::from_ranges(model, std::move(ranges));
}

std::string scan_to_json(const SensorModel& model, const Scan& scan) {
  json j;
  j["model"] = sensor_model_json(model);
  j["ranges"] = scan.ranges;
  j["valid"] = scan.valid;
  return j.dump(2);
}

std::pair<SensorModel, Scan> scan_from_json(const std::string& json_text) {
  const json j = json::parse(json_text);
  SensorModel model = sensor_model_from_json(j.at("model"));
  std::vector<double> ranges = j.at("ranges").get<std::vector<double>>();
  Scan scan = Scan::from_ranges(model, std::move(ranges));
  return {std::move(model), std::move(scan)};
}

}  // namespace micp
