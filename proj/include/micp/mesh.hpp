// micp — range-sensor-to-mesh registration
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "micp/types.hpp"

namespace micp {

// Indexed triangle mesh with precomputed per-face unit normals.
// Normals follow counter-clockwise winding: n = normalize((v1-v0) x (v2-v0)).
// Immutable by convention once built; safe to share read-only across workers.
struct TriangleMesh {
  std::vector<Vec3> vertices;      // meters
  std::vector<Vec3i> faces;        // vertex index triples
  std::vector<Vec3> face_normals;  // unit, one per face

  std::size_t vertex_count() const { return vertices.size(); }
  std::size_t face_count() const { return faces.size(); }
};

struct MeshStats {
  std::size_t vertex_count = 0;
  std::size_t face_count = 0;
  Vec3 bounds_min = Vec3::Zero();
  Vec3 bounds_max = Vec3::Zero();
  double surface_area = 0.0;  // m^2
};

// Recomputes face_normals from vertices/faces and drops degenerate faces
// (area <= 1e-12 m^2). Throws std::runtime_error on out-of-range indices or
// non-finite coordinates.
void finalize_mesh(TriangleMesh& mesh);

// UV sphere centered at the origin; face count within 10% of target_faces,
// outward normals, all vertices at distance `radius`.
TriangleMesh generate_sphere(double radius, std::size_t target_faces);

// Closed 12-triangle box centered at origin with normals pointing inward
// (a room observed from inside).
TriangleMesh generate_box_room(const Vec3& extents);

// Axis-aligned box of given extents around `center`. inward=false gives an
// obstacle seen from outside, inward=true a room seen from inside.
TriangleMesh make_box(const Vec3& center, const Vec3& extents, bool inward);

// Appends all geometry of `other` (vertices re-indexed).
void merge_into(TriangleMesh& mesh, const TriangleMesh& other);

MeshStats mesh_stats(const TriangleMesh& mesh);

}  // namespace micp
