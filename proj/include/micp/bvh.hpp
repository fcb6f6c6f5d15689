// micp — range-sensor-to-mesh registration
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <vector>

#include "micp/mesh.hpp"
#include "micp/types.hpp"

namespace micp {

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitX();  // unit length
};

struct Hit {
  double distance = 0.0;      // meters along the ray
  int face_id = -1;
  Vec3 point = Vec3::Zero();  // origin + distance * direction
  Vec3 normal = Vec3::Zero(); // unit, oriented so that normal . direction <= 0
};

// Minimum accepted hit distance; suppresses self-intersection for rays
// starting on geometry.
inline constexpr double kRayEpsilon = 1e-6;

// Binary BVH over mesh triangles. Binned SAH build with median-split
// fallback, leaves hold at most 4 triangles. Immutable after build; queries
// are pure and reentrant. The source mesh must outlive the Bvh.
class Bvh {
 public:
  struct Node {
    Vec3 lo, hi;          // padded bounds
    std::uint32_t first;  // leaf: packed triangle start; inner: left child (right = left+1)
    std::uint32_t count;  // leaf: triangle count; inner: 0
    bool is_leaf() const { return count > 0; }
  };

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<int>& triangle_order() const { return order_; }
  const TriangleMesh& mesh() const { return *mesh_; }

 private:
  friend Bvh build_bvh(const TriangleMesh& mesh);
  friend std::optional<Hit> closest_hit(const Bvh& bvh, const Ray& ray, double max_range);

  struct PackedTri {
    Vec3 v0, e1, e2;
    int face_id;
  };

  const TriangleMesh* mesh_ = nullptr;
  std::vector<Node> nodes_;
  std::vector<PackedTri> tris_;
  std::vector<int> order_;  // face id per packed slot
};

// Deterministic for a given mesh. Throws std::invalid_argument on an empty mesh.
Bvh build_bvh(const TriangleMesh& mesh);

// Nearest intersection with distance in (kRayEpsilon, max_range], both
// triangle sides hittable; equal distances resolve to the lowest face id.
std::optional<Hit> closest_hit(const Bvh& bvh, const Ray& ray, double max_range);

// Exhaustive-scan oracle with the identical contract (and identical
// per-triangle arithmetic) as closest_hit.
std::optional<Hit> closest_hit_brute(const TriangleMesh& mesh, const Ray& ray, double max_range);

// Element i equals closest_hit(bvh, rays[i], max_range). Parallel, output
// order independent of the worker count.
std::vector<std::optional<Hit>> batch_closest_hit(const Bvh& bvh, std::span<const Ray> rays,
                                                  double max_range);

std::vector<std::optional<Hit>> batch_closest_hit_brute(const TriangleMesh& mesh,
                                                        std::span<const Ray> rays,
                                                        double max_range);

}  // namespace micp
