// BVH construction and closest-hit queries against the exhaustive oracle.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <micp/bvh.hpp>
#include <micp/parallel.hpp>
#include <micp/rng.hpp>

using namespace micp;

namespace {

// rays through random interior points, pushed slightly off exact symmetry so
// shared-edge ambiguity cannot make oracle comparison flaky
Ray random_interior_ray(Rng& rng, double span) {
  Ray ray;
  ray.origin = Vec3(rng.uniform(-0.3, 0.3) * span + 1e-4, rng.uniform(-0.3, 0.3) * span + 2e-4,
                    rng.uniform(-0.3, 0.3) * span + 3e-4);
  ray.direction = rng.unit_vector();
  return ray;
}

void check_oracle_equivalence(const TriangleMesh& mesh, int n_rays, std::uint64_t seed,
                              double span = 1.0) {
  const Bvh bvh = build_bvh(mesh);
  Rng rng(seed);
  int hits = 0;
  for (int i = 0; i < n_rays; ++i) {
    const Ray ray = random_interior_ray(rng, span);
    const auto fast = closest_hit(bvh, ray, 1e6);
    const auto slow = closest_hit_brute(mesh, ray, 1e6);
    REQUIRE(fast.has_value() == slow.has_value());
    if (fast) {
      ++hits;
      REQUIRE(std::abs(fast->distance - slow->distance) < 1e-9);
      REQUIRE(fast->face_id == slow->face_id);
      REQUIRE((fast->point - slow->point).norm() < 1e-9);
      REQUIRE((fast->normal - slow->normal).norm() < 1e-12);
    }
  }
  CHECK(hits > 0);
}

}  // namespace

TEST_CASE("single triangle mesh is one leaf") {
  TriangleMesh tri;
  tri.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  tri.faces = {Vec3i(0, 1, 2)};
  finalize_mesh(tri);
  const Bvh bvh = build_bvh(tri);
  REQUIRE(bvh.nodes().size() == 1);
  CHECK(bvh.nodes()[0].is_leaf());

  Ray ray;
  ray.origin = Vec3(0.2, 0.2, 1.0);
  ray.direction = Vec3(0, 0, -1);
  const auto hit = closest_hit(bvh, ray, 10.0);
  REQUIRE(hit.has_value());
  CHECK(hit->distance == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(hit->face_id == 0);
  CHECK(hit->normal.dot(ray.direction) <= 0.0);
}

TEST_CASE("box room closest hits") {
  const TriangleMesh room = generate_box_room(Vec3(10, 10, 3));
  const Bvh bvh = build_bvh(room);

  SUBCASE("ray from the center along +x") {
    Ray ray;
    ray.direction = Vec3(1, 0, 0);
    const auto hit = closest_hit(bvh, ray, 100.0);
    REQUIRE(hit.has_value());
    CHECK(hit->distance == doctest::Approx(5.0).epsilon(1e-12));
    CHECK((hit->normal - Vec3(-1, 0, 0)).norm() < 1e-12);
    CHECK((hit->point - Vec3(5, 0, 0)).norm() < 1e-12);
  }
  SUBCASE("origin outside pointing away misses") {
    Ray ray;
    ray.origin = Vec3(0, 0, 10);
    ray.direction = Vec3(0, 0, 1);
    CHECK(!closest_hit(bvh, ray, 100.0).has_value());
  }
  SUBCASE("max_range cuts hits off") {
    Ray ray;
    ray.direction = Vec3(1, 0, 0);
    CHECK(!closest_hit(bvh, ray, 4.9).has_value());
    CHECK(closest_hit(bvh, ray, 5.1).has_value());
  }
  SUBCASE("all 12 faces are reachable from the center") {
    std::vector<bool> seen(12, false);
    Rng rng(5);
    for (int i = 0; i < 4000; ++i) {
      Ray ray;
      ray.direction = rng.unit_vector();
      const auto hit = closest_hit(bvh, ray, 100.0);
      REQUIRE(hit.has_value());
      seen[hit->face_id] = true;
    }
    for (int f = 0; f < 12; ++f) CHECK(seen[f]);
  }
}

TEST_CASE("hit invariants") {
  const TriangleMesh sphere = generate_sphere(1.0, 5000);
  const Bvh bvh = build_bvh(sphere);
  Rng rng(17);
  for (int i = 0; i < 500; ++i) {
    Ray ray;
    ray.origin = 0.4 * rng.unit_vector() * rng.uniform();
    ray.direction = rng.unit_vector();
    const auto hit = closest_hit(bvh, ray, 10.0);
    REQUIRE(hit.has_value());
    CHECK(hit->distance > 0.0);
    CHECK(hit->normal.dot(ray.direction) <= 0.0);
    CHECK((hit->point - (ray.origin + hit->distance * ray.direction)).norm() < 1e-6);
  }
}

TEST_CASE("ray from inside the unit sphere hits at radius") {
  const TriangleMesh sphere = generate_sphere(1.0, 100000);
  const Bvh bvh = build_bvh(sphere);
  Rng rng(23);
  for (int i = 0; i < 200; ++i) {
    Ray ray;
    ray.direction = rng.unit_vector();
    const auto hit = closest_hit(bvh, ray, 10.0);
    REQUIRE(hit.has_value());
    // analytic oracle: distance 1 within tessellation error
    CHECK(std::abs(hit->distance - 1.0) <= 1e-3);
  }
}

TEST_CASE("bvh structure invariants") {
  const TriangleMesh sphere = generate_sphere(1.0, 2000);
  const Bvh bvh = build_bvh(sphere);

  // every face appears exactly once in the packed order
  std::vector<int> counts(sphere.face_count(), 0);
  for (const int id : bvh.triangle_order()) counts[id]++;
  for (const int c : counts) CHECK(c == 1);

  // leaf triangle bounds are contained in their node bounds
  for (const Bvh::Node& node : bvh.nodes()) {
    if (!node.is_leaf()) continue;
    CHECK(node.count <= 4);
    for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
      const int face = bvh.triangle_order()[i];
      for (int k = 0; k < 3; ++k) {
        const Vec3& v = sphere.vertices[sphere.faces[face][k]];
        CHECK((v.array() >= node.lo.array() - 1e-12).all());
        CHECK((v.array() <= node.hi.array() + 1e-12).all());
      }
    }
  }
}

TEST_CASE("build determinism") {
  const TriangleMesh sphere = generate_sphere(1.0, 3000);
  const Bvh a = build_bvh(sphere);
  const Bvh b = build_bvh(sphere);
  REQUIRE(a.nodes().size() == b.nodes().size());
  CHECK(a.triangle_order() == b.triangle_order());
}

TEST_CASE("oracle equivalence across mesh sizes") {
  check_oracle_equivalence(generate_box_room(Vec3(2, 2, 2)), 1000, 31, 2.0);
  check_oracle_equivalence(generate_sphere(1.0, 1000), 1000, 37);
  check_oracle_equivalence(generate_sphere(1.0, 10000), 1000, 41);
}

TEST_CASE("million-face build matches brute force on sampled rays") {
  const TriangleMesh sphere = generate_sphere(1.0, 1000000);
  const Bvh bvh = build_bvh(sphere);
  Rng rng(53);
  std::vector<Ray> rays(1000);
  for (Ray& r : rays) r = random_interior_ray(rng, 1.0);
  const auto fast = batch_closest_hit(bvh, rays, 10.0);
  const auto slow = batch_closest_hit_brute(sphere, rays, 10.0);
  for (std::size_t i = 0; i < rays.size(); ++i) {
    REQUIRE(fast[i].has_value() == slow[i].has_value());
    if (fast[i]) {
      REQUIRE(std::abs(fast[i]->distance - slow[i]->distance) < 1e-9);
      REQUIRE(fast[i]->face_id == slow[i]->face_id);
    }
  }
}

TEST_CASE("batch semantics") {
  const TriangleMesh sphere = generate_sphere(1.0, 20000);
  const Bvh bvh = build_bvh(sphere);

  SUBCASE("empty input") {
    CHECK(batch_closest_hit(bvh, std::span<const Ray>{}, 10.0).empty());
  }
  SUBCASE("batch equals sequential map") {
    Rng rng(61);
    std::vector<Ray> rays(1000);
    for (Ray& r : rays) r = random_interior_ray(rng, 1.0);
    const auto batch = batch_closest_hit(bvh, rays, 10.0);
    for (std::size_t i = 0; i < rays.size(); ++i) {
      const auto one = closest_hit(bvh, rays[i], 10.0);
      REQUIRE(batch[i].has_value() == one.has_value());
      if (one) {
        CHECK(batch[i]->distance == one->distance);
        CHECK(batch[i]->face_id == one->face_id);
      }
    }
  }
  SUBCASE("identical results across worker counts") {
    Rng rng(67);
    std::vector<Ray> rays(500);
    for (Ray& r : rays) r = random_interior_ray(rng, 1.0);
    set_worker_count(1);
    const auto one = batch_closest_hit(bvh, rays, 10.0);
    set_worker_count(2);
    const auto two = batch_closest_hit(bvh, rays, 10.0);
    set_worker_count(0);
    for (std::size_t i = 0; i < rays.size(); ++i) {
      REQUIRE(one[i].has_value() == two[i].has_value());
      if (one[i]) {
        CHECK(one[i]->distance == two[i]->distance);
        CHECK(one[i]->face_id == two[i]->face_id);
      }
    }
  }
}

TEST_CASE("empty mesh rejected") {
  TriangleMesh empty;
  CHECK_THROWS_AS(build_bvh(empty), std::invalid_argument);
}
