// micp — range-sensor-to-mesh registration
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "micp/bvh.hpp"
#include "micp/sensor.hpp"

namespace micp {

// Paired scan points s_i and projected map points m_i, both expressed in the
// robot base frame of the current pose estimate. With this frame choice the
// base origin is the zero vector, which is what the covariance reduction
// assumes.
struct CorrespondenceSet {
  std::vector<Vec3> scan_points;  // s_i
  std::vector<Vec3> map_points;   // m_i

  std::size_t count() const { return scan_points.size(); }
};

struct SpcParams {
  // correspondences with |projective distance| above this are discarded;
  // the default tolerates coarse pose guesses while rejecting dynamic
  // obstacles standing well off the mapped surfaces
  double max_projective_distance = 1.0;  // meters
  double max_range = 100.0;              // raycast limit, meters
};

enum class RaycastMode { Bvh, BruteForce };

// Simulative projective correspondences: for every valid measurement, cast
// the measurement ray from the posed sensor into the map, project the real
// point onto the plane of the simulated hit, and keep the pair if the
// projective offset is small enough. Output order follows ray index.
// Throws std::invalid_argument if the scan does not match the rig's model.
CorrespondenceSet find_correspondences(const Bvh& bvh, const SensorRig& rig, const Scan& scan,
                                       const Transform& base_pose, const SpcParams& params,
                                       RaycastMode mode = RaycastMode::Bvh);

// CSV dump ("index,sx,sy,sz,mx,my,mz") for debugging.
std::string correspondences_to_csv(const CorrespondenceSet& corr);

}  // namespace micp
