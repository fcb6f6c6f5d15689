// micp — range-sensor-to-mesh registration
// SPDX-License-Identifier: Apache-2.0
#include "micp/mesh.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace micp {

namespace {

double face_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

}  // namespace

void finalize_mesh(TriangleMesh& mesh) {
  for (const Vec3& v : mesh.vertices) {
    if (!v.allFinite()) throw std::runtime_error("mesh contains non-finite coordinates");
  }
  const int n = static_cast<int>(mesh.vertices.size());
  std::vector<Vec3i> kept;
  kept.reserve(mesh.faces.size());
  mesh.face_normals.clear();
  mesh.face_normals.reserve(mesh.faces.size());
  for (const Vec3i& f : mesh.faces) {
    if (f.minCoeff() < 0 || f.maxCoeff() >= n) {
      throw std::runtime_error("mesh face index out of range");
    }
    const Vec3& v0 = mesh.vertices[f[0]];
    const Vec3& v1 = mesh.vertices[f[1]];
    const Vec3& v2 = mesh.vertices[f[2]];
    const Vec3 cr = (v1 - v0).cross(v2 - v0);
    const double area = 0.5 * cr.norm();
    if (area <= 1e-12) continue;  // degenerate
    kept.push_back(f);
    mesh.face_normals.push_back(cr / cr.norm());
  }
  mesh.faces = std::move(kept);
}

TriangleMesh generate_sphere(double radius, std::size_t target_faces) {
  if (radius <= 0.0) throw std::invalid_argument("generate_sphere: radius must be > 0");
  if (target_faces < 8) throw std::invalid_argument("generate_sphere: target_faces must be >= 8");

  // UV tessellation has 2 * slices * (stacks - 1) faces. Search near the
  // analytic optimum for the pair minimizing the deviation from target.
  const double t = static_cast<double>(target_faces);
  const long l0 = std::lround(std::sqrt(t / 2.0));
  long best_slices = 4, best_stacks = 2;
  double best_err = std::numeric_limits<double>::infinity();
  for (long slices = std::max<long>(3, l0 - 3); slices <= l0 + 3; ++slices) {
    const long stacks = std::max<long>(2, std::lround(t / (2.0 * slices)) + 1);
    const double count = 2.0 * slices * (stacks - 1);
    const double err = std::abs(count - t);
    if (err < best_err) {
      best_err = err;
      best_slices = slices;
      best_stacks = stacks;
    }
  }
  const long slices = best_slices;
  const long stacks = best_stacks;

  TriangleMesh mesh;
  mesh.vertices.reserve(static_cast<std::size_t>(slices * (stacks - 1) + 2));
  mesh.vertices.emplace_back(0.0, 0.0, radius);  // north pole, index 0
  for (long r = 1; r < stacks; ++r) {
    const double phi = kPi * static_cast<double>(r) / static_cast<double>(stacks);
    const double z = std::cos(phi);
    const double s = std::sin(phi);
    for (long c = 0; c < slices; ++c) {
      const double theta = 2.0 * kPi * static_cast<double>(c) / static_cast<double>(slices);
      mesh.vertices.emplace_back(radius * s * std::cos(theta), radius * s * std::sin(theta),
                                 radius * z);
    }
  }
  mesh.vertices.emplace_back(0.0, 0.0, -radius);  // south pole
  const int south = static_cast<int>(mesh.vertices.size()) - 1;

  auto ring = [&](long r, long c) {  // r in [1, stacks-1]
    return static_cast<int>(1 + (r - 1) * slices + (c % slices));
  };

  // top cap: CCW seen from outside (+z above)
  for (long c = 0; c < slices; ++c) {
    mesh.faces.emplace_back(Vec3i(0, ring(1, c), ring(1, c + 1)));
  }
  for (long r = 1; r + 1 < stacks; ++r) {
    for (long c = 0; c < slices; ++c) {
      const int a = ring(r, c), b = ring(r, c + 1);
      const int d = ring(r + 1, c), e = ring(r + 1, c + 1);
      mesh.faces.emplace_back(Vec3i(a, d, e));
      mesh.faces.emplace_back(Vec3i(a, e, b));
    }
  }
  for (long c = 0; c < slices; ++c) {
    mesh.faces.emplace_back(Vec3i(south, ring(stacks - 1, c + 1), ring(stacks - 1, c)));
  }

  finalize_mesh(mesh);
  return mesh;
}

TriangleMesh make_box(const Vec3& center, const Vec3& extents, bool inward) {
  if (extents.minCoeff() <= 0.0) throw std::invalid_argument("make_box: extents must be > 0");
  const Vec3 h = 0.5 * extents;
  TriangleMesh mesh;
  mesh.vertices.reserve(8);
  for (int i = 0; i < 8; ++i) {
    mesh.vertices.emplace_back(center.x() + ((i & 1) ? h.x() : -h.x()),
                               center.y() + ((i & 2) ? h.y() : -h.y()),
                               center.z() + ((i & 4) ? h.z() : -h.z()));
  }
  // quads with CCW winding seen from outside
  static const int quads[6][4] = {
      {1, 3, 7, 5},  // +x
      {2, 0, 4, 6},  // -x
      {3, 2, 6, 7},  // +y
      {0, 1, 5, 4},  // -y
      {4, 5, 7, 6},  // +z
      {2, 3, 1, 0},  // -z
  };
  for (const auto& q : quads) {
    if (inward) {
      mesh.faces.emplace_back(Vec3i(q[0], q[2], q[1]));
      mesh.faces.emplace_back(Vec3i(q[0], q[3], q[2]));
    } else {
      mesh.faces.emplace_back(Vec3i(q[0], q[1], q[2]));
      mesh.faces.emplace_back(Vec3i(q[0], q[2], q[3]));
    }
  }
  finalize_mesh(mesh);
  return mesh;
}

TriangleMesh generate_box_room(const Vec3& extents) {
  return make_box(Vec3::Zero(), extents, /*inward=*/true);
}

void merge_into(TriangleMesh& mesh, const TriangleMesh& other) {
  const int offset = static_cast<int>(mesh.vertices.size());
  mesh.vertices.insert(mesh.vertices.end(), other.vertices.begin(), other.vertices.end());
  mesh.faces.reserve(mesh.faces.size() + other.faces.size());
  for (const Vec3i& f : other.faces) {
    mesh.faces.emplace_back(f + Vec3i(offset, offset, offset));
  }
  mesh.face_normals.insert(mesh.face_normals.end(), other.face_normals.begin(),
                           other.face_normals.end());
}

MeshStats mesh_stats(const TriangleMesh& mesh) {
  MeshStats st;
  st.vertex_count = mesh.vertices.size();
  st.face_count = mesh.faces.size();
  if (!mesh.vertices.empty()) {
    st.bounds_min = Vec3::Constant(std::numeric_limits<double>::infinity());
    st.bounds_max = -st.bounds_min;
    for (const Vec3& v : mesh.vertices) {
      st.bounds_min = st.bounds_min.cwiseMin(v);
      st.bounds_max = st.bounds_max.cwiseMax(v);
    }
  }
  for (const Vec3i& f : mesh.faces) {
    st.surface_area += face_area(mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]);
  }
  return st;
}

}  // namespace micp
