// micp — range-sensor-to-mesh registration
// SPDX-License-Identifier: Apache-2.0
#include "micp/spc.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "micp/parallel.hpp"

namespace micp {

CorrespondenceSet find_correspondences(const Bvh& bvh, const SensorRig& rig, const Scan& scan,
                                       const Transform& base_pose, const SpcParams& params,
                                       RaycastMode mode) {
  if (params.max_projective_distance <= 0.0 || params.max_range <= 0.0) {
    throw std::invalid_argument("find_correspondences: SpcParams must be > 0");
  }
  const std::vector<Ray> rays = model_rays(rig.model);
  if (scan.ranges.size() != rays.size()) {
    throw std::invalid_argument("find_correspondences: scan does not match the rig model");
  }

  const Transform sensor_to_map = compose(base_pose, rig.t_sb);
  const Transform map_to_base = invert(base_pose);
  const Mat3 rot_sm = sensor_to_map.rotation_matrix();
  const Mat3 rot_mb = map_to_base.rotation_matrix();

  const int n = static_cast<int>(rays.size());
  std::vector<char> kept(n, 0);
  std::vector<Vec3> s_base(n), m_base(n);

#pragma omp parallel for schedule(static) num_threads(worker_count())
  for (int i = 0; i < n; ++i) {
    if (!scan.valid[i]) continue;
    Ray posed;
    posed.origin = rot_sm * rays[i].origin + sensor_to_map.translation;
    posed.direction = rot_sm * rays[i].direction;
    const std::optional<Hit> hit =
        mode == RaycastMode::Bvh ? closest_hit(bvh, posed, params.max_range)
                                 : closest_hit_brute(bvh.mesh(), posed, params.max_range);
    if (!hit) continue;

    // real measurement along the simulated ray, projected onto the hit plane
    const Vec3 s_map = posed.origin + scan.ranges[i] * posed.direction;
    const double d = hit->normal.dot(s_map - hit->point);
    if (std::abs(d) > params.max_projective_distance) continue;
    const Vec3 m_map = s_map - d * hit->normal;

    s_base[i] = rot_mb * s_map + map_to_base.translation;
    m_base[i] = rot_mb * m_map + map_to_base.translation;
    kept[i] = 1;
  }

  CorrespondenceSet corr;
  for (int i = 0; i < n; ++i) {
    if (kept[i]) {
      corr.scan_points.push_back(s_base[i]);
      corr.map_points.push_back(m_base[i]);
    }
  }
  return corr;
}

std::string correspondences_to_csv(const CorrespondenceSet& corr) {
  std::ostringstream out;
  out.precision(17);
  out << "index,sx,sy,sz,mx,my,mz\n";
  for (std::size_t i = 0; i < corr.count(); ++i) {
    const Vec3& s = corr.scan_points[i];
    const Vec3& m = corr.map_points[i];
    out << i << "," << s.x() << "," << s.y() << "," << s.z() << "," << m.x() << "," << m.y()
        << "," << m.z() << "\n";
  }
  return out.str();
}

}  // namespace micp
