// micp — range-sensor-to-mesh registration
// SPDX-License-Identifier: Apache-2.0
#include "micp/bvh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "micp/parallel.hpp"

namespace micp {

namespace {

constexpr int kLeafSize = 4;
constexpr int kSahBins = 16;
constexpr int kMaxSahDepth = 48;  // below this, force median splits
constexpr double kInf = std::numeric_limits<double>::infinity();

struct BuildTri {
  Vec3 lo, hi, centroid;
  int face_id;
};

// Moeller-Trumbore, no backface culling. The BVH path and the brute-force
// oracle call this with edges computed the same way, so reported distances
// agree bitwise.
inline bool intersect_triangle(const Vec3& o, const Vec3& d, const Vec3& v0, const Vec3& e1,
                               const Vec3& e2, double t_max, double& t_out) {
  const Vec3 pvec = d.cross(e2);
  const double det = e1.dot(pvec);
  if (std::abs(det) < 1e-16) return false;
  const double inv_det = 1.0 / det;
  const Vec3 tvec = o - v0;
  const double u = tvec.dot(pvec) * inv_det;
  if (u < 0.0 || u > 1.0) return false;
  const Vec3 qvec = tvec.cross(e1);
  const double v = d.dot(qvec) * inv_det;
  if (v < 0.0 || u + v > 1.0) return false;
  const double t = e2.dot(qvec) * inv_det;
  if (t <= kRayEpsilon || t > t_max) return false;
  t_out = t;
  return true;
}

inline Hit make_hit(const TriangleMesh& mesh, const Ray& ray, double t, int face_id) {
  Hit hit;
  hit.distance = t;
  hit.face_id = face_id;
  hit.point = ray.origin + t * ray.direction;
  hit.normal = mesh.face_normals[face_id];
  if (hit.normal.dot(ray.direction) > 0.0) hit.normal = -hit.normal;
  return hit;
}

// Slab test against [lo, hi]; returns the entry distance or +inf on a miss.
// inv_d has zero components replaced by huge finite values, which keeps the
// arithmetic NaN-free.
inline double aabb_entry(const Vec3& lo, const Vec3& hi, const Vec3& o, const Vec3& inv_d,
                         double t_max) {
  double tmin = kRayEpsilon;
  double tmax = t_max;
  for (int a = 0; a < 3; ++a) {
    const double t0 = (lo[a] - o[a]) * inv_d[a];
    const double t1 = (hi[a] - o[a]) * inv_d[a];
    tmin = std::max(tmin, std::min(t0, t1));
    tmax = std::min(tmax, std::max(t0, t1));
  }
  return tmin <= tmax ? tmin : kInf;
}

inline Vec3 safe_inverse(const Vec3& d) {
  Vec3 inv;
  for (int a = 0; a < 3; ++a) {
    inv[a] = d[a] != 0.0 ? 1.0 / d[a] : std::copysign(std::numeric_limits<double>::max(), d[a]);
  }
  return inv;
}

struct Builder {
  std::vector<BuildTri> tris;
  std::vector<Bvh::Node> nodes;

  explicit Builder(const TriangleMesh& m) {
    tris.reserve(m.faces.size());
    for (std::size_t i = 0; i < m.faces.size(); ++i) {
      const Vec3i& f = m.faces[i];
      BuildTri t;
      t.lo = m.vertices[f[0]].cwiseMin(m.vertices[f[1]]).cwiseMin(m.vertices[f[2]]);
      t.hi = m.vertices[f[0]].cwiseMax(m.vertices[f[1]]).cwiseMax(m.vertices[f[2]]);
      t.centroid = 0.5 * (t.lo + t.hi);
      t.face_id = static_cast<int>(i);
      tris.push_back(t);
    }
  }

  static double half_area(const Vec3& lo, const Vec3& hi) {
    const Vec3 d = (hi - lo).cwiseMax(0.0);
    return d.x() * d.y() + d.y() * d.z() + d.z() * d.x();
  }

  void fill_node(std::uint32_t index, int begin, int end, int depth) {
    Vec3 lo = Vec3::Constant(kInf), hi = Vec3::Constant(-kInf);
    Vec3 clo = lo, chi = hi;
    for (int i = begin; i < end; ++i) {
      lo = lo.cwiseMin(tris[i].lo);
      hi = hi.cwiseMax(tris[i].hi);
      clo = clo.cwiseMin(tris[i].centroid);
      chi = chi.cwiseMax(tris[i].centroid);
    }
    // conservative padding so border hits cannot be pruned by the slab test
    const double pad = 1e-9 * (1.0 + hi.cwiseAbs().cwiseMax(lo.cwiseAbs()).maxCoeff());
    nodes[index].lo = lo.array() - pad;
    nodes[index].hi = hi.array() + pad;

    const int count = end - begin;
    if (count <= kLeafSize) {
      nodes[index].first = static_cast<std::uint32_t>(begin);
      nodes[index].count = static_cast<std::uint32_t>(count);
      return;
    }

    int mid = -1;
    const Vec3 cext = chi - clo;
    int axis = 0;
    cext.maxCoeff(&axis);
    if (depth < kMaxSahDepth && cext[axis] > 0.0) {
      mid = binned_sah_split(begin, end, axis, clo[axis], cext[axis]);
    }
    if (mid <= begin || mid >= end) {
      mid = begin + count / 2;
      std::nth_element(tris.begin() + begin, tris.begin() + mid, tris.begin() + end,
                       [axis](const BuildTri& a, const BuildTri& b) {
                         if (a.centroid[axis] != b.centroid[axis]) {
                           return a.centroid[axis] < b.centroid[axis];
                         }
                         return a.face_id < b.face_id;
                       });
    }

    const std::uint32_t left = static_cast<std::uint32_t>(nodes.size());
    nodes.emplace_back();
    nodes.emplace_back();
    nodes[index].first = left;
    nodes[index].count = 0;
    fill_node(left, begin, mid, depth + 1);
    fill_node(left + 1, mid, end, depth + 1);
  }

  int binned_sah_split(int begin, int end, int axis, double cmin, double cext) {
    struct Bin {
      Vec3 lo = Vec3::Constant(kInf), hi = Vec3::Constant(-kInf);
      int count = 0;
    };
    Bin bins[kSahBins];
    const double scale = kSahBins / cext;
    auto bin_of = [&](const BuildTri& t) {
      const int b = static_cast<int>((t.centroid[axis] - cmin) * scale);
      return std::clamp(b, 0, kSahBins - 1);
    };
    for (int i = begin; i < end; ++i) {
      Bin& bin = bins[bin_of(tris[i])];
      bin.lo = bin.lo.cwiseMin(tris[i].lo);
      bin.hi = bin.hi.cwiseMax(tris[i].hi);
      bin.count++;
    }

    double right_area[kSahBins];
    int right_count[kSahBins];
    Vec3 lo = Vec3::Constant(kInf), hi = Vec3::Constant(-kInf);
    int acc = 0;
    for (int b = kSahBins - 1; b >= 1; --b) {
      lo = lo.cwiseMin(bins[b].lo);
      hi = hi.cwiseMax(bins[b].hi);
      acc += bins[b].count;
      right_area[b] = half_area(lo, hi);
      right_count[b] = acc;
    }

    double best_cost = kInf;
    int best_bin = -1;
    lo = Vec3::Constant(kInf);
    hi = Vec3::Constant(-kInf);
    acc = 0;
    for (int b = 0; b + 1 < kSahBins; ++b) {
      lo = lo.cwiseMin(bins[b].lo);
      hi = hi.cwiseMax(bins[b].hi);
      acc += bins[b].count;
      if (acc == 0 || right_count[b + 1] == 0) continue;
      const double cost = half_area(lo, hi) * acc + right_area[b + 1] * right_count[b + 1];
      if (cost < best_cost) {
        best_cost = cost;
        best_bin = b;
      }
    }
    if (best_bin < 0) return -1;
    auto it = std::stable_partition(tris.begin() + begin, tris.begin() + end,
                                    [&](const BuildTri& t) { return bin_of(t) <= best_bin; });
    return static_cast<int>(it - tris.begin());
  }
};

}  // namespace

Bvh build_bvh(const TriangleMesh& mesh) {
  if (mesh.faces.empty()) throw std::invalid_argument("build_bvh: empty mesh");
  Builder builder(mesh);
  builder.nodes.reserve(2 * mesh.faces.size());
  builder.nodes.emplace_back();
  builder.fill_node(0, 0, static_cast<int>(builder.tris.size()), 0);

  Bvh bvh;
  bvh.mesh_ = &mesh;
  bvh.nodes_ = std::move(builder.nodes);
  bvh.tris_.reserve(builder.tris.size());
  bvh.order_.reserve(builder.tris.size());
  for (const BuildTri& t : builder.tris) {
    const Vec3i& f = mesh.faces[t.face_id];
    Bvh::PackedTri p;
    p.v0 = mesh.vertices[f[0]];
    p.e1 = mesh.vertices[f[1]] - p.v0;
    p.e2 = mesh.vertices[f[2]] - p.v0;
    p.face_id = t.face_id;
    bvh.tris_.push_back(p);
    bvh.order_.push_back(t.face_id);
  }
  return bvh;
}

std::optional<Hit> closest_hit(const Bvh& bvh, const Ray& ray, double max_range) {
  if (max_range <= 0.0) throw std::invalid_argument("closest_hit: max_range must be > 0");
  const Vec3 inv_d = safe_inverse(ray.direction);

  double best_t = max_range;
  int best_id = -1;

  std::uint32_t stack[128];
  int sp = 0;
  std::uint32_t node_index = 0;
  if (aabb_entry(bvh.nodes_[0].lo, bvh.nodes_[0].hi, ray.origin, inv_d, best_t) == kInf) {
    return std::nullopt;
  }
  for (;;) {
    const Bvh::Node& node = bvh.nodes_[node_index];
    if (node.is_leaf()) {
      for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
        const Bvh::PackedTri& tri = bvh.tris_[i];
        double t;
        if (intersect_triangle(ray.origin, ray.direction, tri.v0, tri.e1, tri.e2, best_t, t)) {
          if (t < best_t || (t == best_t && tri.face_id < best_id)) {
            best_t = t;
            best_id = tri.face_id;
          }
        }
      }
    } else {
      const Bvh::Node& lnode = bvh.nodes_[node.first];
      const Bvh::Node& rnode = bvh.nodes_[node.first + 1];
      double tl = aabb_entry(lnode.lo, lnode.hi, ray.origin, inv_d, best_t);
      double tr = aabb_entry(rnode.lo, rnode.hi, ray.origin, inv_d, best_t);
      std::uint32_t near = node.first, far = node.first + 1;
      if (tr < tl) {
        std::swap(near, far);
        std::swap(tl, tr);
      }
      if (tl != kInf) {
        if (tr != kInf) stack[sp++] = far;
        node_index = near;
        continue;
      }
    }
    // pop; re-check the bound because best_t may have shrunk since the push
    for (;;) {
      if (sp == 0) {
        if (best_id < 0) return std::nullopt;
        return make_hit(*bvh.mesh_, ray, best_t, best_id);
      }
      const std::uint32_t candidate = stack[--sp];
      if (aabb_entry(bvh.nodes_[candidate].lo, bvh.nodes_[candidate].hi, ray.origin, inv_d,
                     best_t) != kInf) {
        node_index = candidate;
        break;
      }
    }
  }
}

std::optional<Hit> closest_hit_brute(const TriangleMesh& mesh, const Ray& ray, double max_range) {
  if (max_range <= 0.0) throw std::invalid_argument("closest_hit_brute: max_range must be > 0");
  double best_t = max_range;
  int best_id = -1;
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
    const Vec3i& f = mesh.faces[i];
    const Vec3& v0 = mesh.vertices[f[0]];
    const Vec3 e1 = mesh.vertices[f[1]] - v0;
    const Vec3 e2 = mesh.vertices[f[2]] - v0;
    double t;
    if (intersect_triangle(ray.origin, ray.direction, v0, e1, e2, best_t, t)) {
      // strict improvement keeps the lowest face id on exact ties
      if (t < best_t) {
        best_t = t;
        best_id = static_cast<int>(i);
      }
    }
  }
  if (best_id < 0) return std::nullopt;
  return make_hit(mesh, ray, best_t, best_id);
}

std::vector<std::optional<Hit>> batch_closest_hit(const Bvh& bvh, std::span<const Ray> rays,
                                                  double max_range) {
  std::vector<std::optional<Hit>> out(rays.size());
  const int n = static_cast<int>(rays.size());
#pragma omp parallel for schedule(static) num_threads(worker_count())
  for (int i = 0; i < n; ++i) {
    out[i] = closest_hit(bvh, rays[i], max_range);
  }
  return out;
}

std::vector<std::optional<Hit>> batch_closest_hit_brute(const TriangleMesh& mesh,
                                                        std::span<const Ray> rays,
                                                        double max_range) {
  std::vector<std::optional<Hit>> out(rays.size());
  const int n = static_cast<int>(rays.size());
#pragma omp parallel for schedule(static) num_threads(worker_count())
  for (int i = 0; i < n; ++i) {
    out[i] = closest_hit_brute(mesh, rays[i], max_range);
  }
  return out;
}

}  // namespace micp
