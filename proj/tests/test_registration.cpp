// Cross statistics, the SVD correction, multi-sensor merging, and the
// iterated registration loop.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <micp/eval.hpp>
#include <micp/registration.hpp>
#include <micp/rng.hpp>

using namespace micp;

namespace {

CorrespondenceSet random_set(Rng& rng, std::size_t n, double spread = 2.0) {
  CorrespondenceSet corr;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 s(rng.uniform(-spread, spread), rng.uniform(-spread, spread),
                 rng.uniform(-spread, spread));
    const Vec3 m = s + 0.05 * rng.unit_vector();
    corr.scan_points.push_back(s);
    corr.map_points.push_back(m);
  }
  return corr;
}

SphericalModel lidar_2d(int n_h = 360) {
  SphericalModel m;
  m.theta_min = -kPi;
  m.theta_max = kPi;
  m.n_horizontal = n_h;
  m.phi_min = m.phi_max = 0.0;
  m.n_vertical = 1;
  m.range_min = 0.05;
  m.range_max = 50.0;
  return m;
}

}  // namespace

TEST_CASE("cross_statistics") {
  SUBCASE("empty set") {
    const CrossStatistics st = cross_statistics({});
    CHECK(st.count == 0);
    CHECK(st.covariance == Mat3::Zero());
    CHECK(st.mean_scan == Vec3::Zero());
    CHECK(st.mean_map == Vec3::Zero());
  }
  SUBCASE("single pair outer product") {
    CorrespondenceSet corr;
    corr.scan_points = {Vec3(1, 0, 0)};
    corr.map_points = {Vec3(1, 0, 0)};
    const CrossStatistics st = cross_statistics(corr);
    CHECK(st.count == 1);
    CHECK(st.covariance(0, 0) == 1.0);
    CHECK(st.covariance.cwiseAbs().sum() == 1.0);
    CHECK(st.mean_scan == Vec3(1, 0, 0));
    CHECK(st.mean_map == Vec3(1, 0, 0));
  }
  SUBCASE("matches an entry-by-entry reference loop") {
    Rng rng(101);
    const CorrespondenceSet corr = random_set(rng, 100);
    const CrossStatistics st = cross_statistics(corr);

    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        double sum = 0.0;
        for (std::size_t i = 0; i < corr.count(); ++i) {
          sum += corr.map_points[i][r] * corr.scan_points[i][c];
        }
        CHECK(std::abs(st.covariance(r, c) - sum / 100.0) < 1e-12);
      }
    }
    Vec3 ms = Vec3::Zero(), mm = Vec3::Zero();
    for (std::size_t i = 0; i < corr.count(); ++i) {
      ms += corr.scan_points[i];
      mm += corr.map_points[i];
    }
    CHECK((st.mean_scan - ms / 100.0).norm() < 1e-12);
    CHECK((st.mean_map - mm / 100.0).norm() < 1e-12);
  }
}

TEST_CASE("merge_statistics") {
  Rng rng(55);
  const CorrespondenceSet a = random_set(rng, 40);
  const CorrespondenceSet b = random_set(rng, 160);
  const CrossStatistics sa = cross_statistics(a);
  const CrossStatistics sb = cross_statistics(b);

  SUBCASE("single input is an identity operation") {
    const std::vector<CrossStatistics> stats{sa};
    const CrossStatistics merged = merge_statistics(stats);
    CHECK((merged.covariance - sa.covariance).norm() < 1e-15);
    CHECK(merged.count == sa.count);
  }
  SUBCASE("two identical inputs merge to themselves") {
    const std::vector<CrossStatistics> stats{sa, sa};
    const CrossStatistics merged = merge_statistics(stats);
    CHECK((merged.covariance - sa.covariance).norm() < 1e-12);
    CHECK((merged.mean_scan - sa.mean_scan).norm() < 1e-12);
    CHECK(merged.count == 2 * sa.count);
  }
  SUBCASE("default weights are count-proportional") {
    // 14400-ray sensor next to a 4-ray sensor: w1 = 14400/14404
    CrossStatistics big = sa, small = sb;
    big.count = 14400;
    small.count = 4;
    const double w1 = 14400.0 / 14404.0;
    CHECK(w1 == doctest::Approx(0.99972).epsilon(1e-4));
    const std::vector<CrossStatistics> stats{big, small};
    const CrossStatistics merged = merge_statistics(stats);
    const Mat3 expected = w1 * big.covariance + (1.0 - w1) * small.covariance;
    CHECK((merged.covariance - expected).norm() < 1e-12);
    CHECK(merged.count == 14404);
  }
  SUBCASE("merging equals statistics of the concatenated set") {
    CorrespondenceSet both = a;
    both.scan_points.insert(both.scan_points.end(), b.scan_points.begin(), b.scan_points.end());
    both.map_points.insert(both.map_points.end(), b.map_points.begin(), b.map_points.end());
    const CrossStatistics direct = cross_statistics(both);
    const std::vector<CrossStatistics> stats{sa, sb};
    const CrossStatistics merged = merge_statistics(stats);
    CHECK((merged.covariance - direct.covariance).norm() < 1e-12);
    CHECK((merged.mean_scan - direct.mean_scan).norm() < 1e-12);
    CHECK((merged.mean_map - direct.mean_map).norm() < 1e-12);
    CHECK(merged.count == direct.count);
  }
  SUBCASE("explicit weights are renormalized") {
    const std::vector<CrossStatistics> stats{sa, sb};
    const CrossStatistics merged =
        merge_statistics(stats, std::vector<double>{2.0, 6.0});
    const Mat3 expected = 0.25 * sa.covariance + 0.75 * sb.covariance;
    CHECK((merged.covariance - expected).norm() < 1e-12);
  }
  SUBCASE("empty inputs contribute nothing") {
    const std::vector<CrossStatistics> stats{sa, CrossStatistics{}};
    const CrossStatistics merged = merge_statistics(stats, std::vector<double>{0.5, 0.5});
    CHECK((merged.covariance - sa.covariance).norm() < 1e-15);
    CHECK(merged.count == sa.count);
  }
  SUBCASE("all-zero counts give flagged zero statistics") {
    const std::vector<CrossStatistics> stats{CrossStatistics{}, CrossStatistics{}};
    const CrossStatistics merged = merge_statistics(stats);
    CHECK(merged.count == 0);
    CHECK(merged.covariance == Mat3::Zero());
  }
  SUBCASE("argument validation") {
    const std::vector<CrossStatistics> stats{sa, sb};
    CHECK_THROWS_AS(merge_statistics(stats, std::vector<double>{1.0}), std::invalid_argument);
    CHECK_THROWS_AS(merge_statistics(stats, std::vector<double>{-1.0, 2.0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(merge_statistics(stats, std::vector<double>{0.0, 0.0}),
                    std::invalid_argument);
  }
}

TEST_CASE("solve_umeyama") {
  Rng rng(77);

  SUBCASE("identity on a perfectly aligned set") {
    CorrespondenceSet corr;
    for (int i = 0; i < 10; ++i) {
      const Vec3 p(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      corr.scan_points.push_back(p);
      corr.map_points.push_back(p);
    }
    const Transform delta = solve_umeyama(cross_statistics(corr));
    CHECK(delta.translation.norm() < 1e-12);
    CHECK(rotation_angle(delta.rotation) < 1e-9);
  }
  SUBCASE("recovers a pure translation") {
    // the covariance is anchored at the base origin, so exact recovery needs
    // the scan centroid at that anchor; center the set first
    const Vec3 shift(1, 2, 3);
    std::vector<Vec3> pts;
    Vec3 mean = Vec3::Zero();
    for (int i = 0; i < 50; ++i) {
      pts.emplace_back(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
      mean += pts.back();
    }
    mean /= 50.0;
    CorrespondenceSet corr;
    for (const Vec3& p : pts) {
      corr.scan_points.push_back(p - mean);
      corr.map_points.push_back(p - mean + shift);
    }
    const Transform delta = solve_umeyama(cross_statistics(corr));
    CHECK(rotation_angle(delta.rotation) < 1e-9);
    CHECK((delta.translation - shift).norm() < 1e-9);
  }
  SUBCASE("uncentered sets trade a little rotation for translation") {
    // anchoring the covariance away from the centroid biases the rotation
    // estimate; the correction must still be a proper rotation and must not
    // increase the objective
    const Vec3 shift(1, 2, 3);
    CorrespondenceSet corr;
    for (int i = 0; i < 50; ++i) {
      const Vec3 p =
          Vec3(4, 0, 0) + Vec3(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
      corr.scan_points.push_back(p);
      corr.map_points.push_back(p + shift);
    }
    const Transform delta = solve_umeyama(cross_statistics(corr));
    const Mat3 r = delta.rotation_matrix();
    CHECK(std::abs(r.determinant() - 1.0) < 1e-9);
    CHECK(alignment_error(corr, delta) <=
          alignment_error(corr, Transform::identity()) + 1e-9);
  }
  SUBCASE("recovers a rotation about the base origin") {
    const Quat rot(Eigen::AngleAxisd(20.0 * kPi / 180.0, Vec3::UnitZ()));
    CorrespondenceSet corr;
    for (int i = 0; i < 50; ++i) {
      const Vec3 p(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
      corr.scan_points.push_back(p);
      corr.map_points.push_back(rot * p);
    }
    const Transform delta = solve_umeyama(cross_statistics(corr));
    CHECK(rotation_angle(Quat(delta.rotation.conjugate() * rot)) < 1e-9);
    CHECK(delta.translation.norm() < 1e-9);
  }
  SUBCASE("degenerate geometry still yields proper rotations") {
    // collinear points
    CorrespondenceSet line;
    for (int i = 0; i < 20; ++i) {
      const Vec3 p = static_cast<double>(i) * Vec3(1, 0.5, -0.25);
      line.scan_points.push_back(p);
      line.map_points.push_back(p + Vec3(0.1, 0, 0));
    }
    const Transform d1 = solve_umeyama(cross_statistics(line));
    const Mat3 r1 = d1.rotation_matrix();
    CHECK(std::abs(r1.determinant() - 1.0) < 1e-9);
    CHECK((r1 * r1.transpose() - Mat3::Identity()).norm() < 1e-9);

    // planar points with a mirrored partner set
    CorrespondenceSet plane;
    for (int i = 0; i < 30; ++i) {
      const Vec3 p(rng.uniform(-1, 1), rng.uniform(-1, 1), 0.0);
      plane.scan_points.push_back(p);
      plane.map_points.push_back(Vec3(p.y(), p.x(), 0.0));
    }
    const Transform d2 = solve_umeyama(cross_statistics(plane));
    const Mat3 r2 = d2.rotation_matrix();
    CHECK(std::abs(r2.determinant() - 1.0) < 1e-9);
    CHECK((r2 * r2.transpose() - Mat3::Identity()).norm() < 1e-9);
  }
  SUBCASE("too few correspondences") {
    CorrespondenceSet two;
    two.scan_points = {Vec3(1, 0, 0), Vec3(0, 1, 0)};
    two.map_points = {Vec3(1, 0, 0), Vec3(0, 1, 0)};
    CHECK_THROWS_AS(solve_umeyama(cross_statistics(two)), std::invalid_argument);
  }
}

TEST_CASE("solved correction never increases the fixed-set objective") {
  Rng rng(123);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 3 + static_cast<std::size_t>(rng.uniform() * 40);
    CorrespondenceSet corr;
    const Quat rot(Eigen::AngleAxisd(rng.uniform(0, 0.6), rng.unit_vector()));
    const Vec3 shift = 0.5 * rng.unit_vector();
    const Vec3 center = 3.0 * rng.unit_vector();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3 s = center + Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      corr.scan_points.push_back(s);
      corr.map_points.push_back(rot * s + shift + 0.05 * rng.unit_vector());
    }
    const Transform delta = solve_umeyama(cross_statistics(corr));
    const double solved = alignment_error(corr, delta);
    const double baseline = alignment_error(corr, Transform::identity());
    CHECK(solved <= baseline + 1e-9);
  }
}

TEST_CASE("micp_step") {
  const TriangleMesh room = generate_box_room(Vec3(10, 10, 3));
  const Bvh bvh = build_bvh(room);

  SensorRig rig;
  rig.model = vlp16_layout(180);
  rig.t_sb.translation = Vec3(0, 0, 0.4);

  Transform truth;
  truth.translation = Vec3(0.7, 0.3, -0.2);
  truth.rotation = Quat(Eigen::AngleAxisd(0.25, Vec3::UnitZ()));
  const Scan scan = simulate_scan(bvh, rig.model, compose(truth, rig.t_sb), 0.0, 21);

  const std::vector<SensorRig> rigs{rig};
  const std::vector<Scan> scans{scan};
  MicpParams params;

  SUBCASE("true pose is a fixed point") {
    const auto [pose, diag] = micp_step(bvh, rigs, scans, truth, params);
    CHECK(!diag.rejected);
    CHECK((pose.translation - truth.translation).norm() < 1e-9);
    CHECK(rotation_angle(Quat(pose.rotation.conjugate() * truth.rotation)) < 1e-9);
    CHECK(diag.correspondence_count == diag.per_sensor_counts[0]);
    CHECK(diag.mean_residual < 1e-9);
  }
  SUBCASE("a step from a perturbed pose reduces the error") {
    Transform guess = truth;
    guess.translation += Vec3(0.2, -0.1, 0.0);
    const auto [pose, diag] = micp_step(bvh, rigs, scans, guess, params);
    CHECK(!diag.rejected);
    const double before = pose_error(guess, truth).translation_error;
    const double after = pose_error(pose, truth).translation_error;
    CHECK(after < before);
  }
  SUBCASE("rejection keeps the pose") {
    Transform far_away;
    far_away.translation = Vec3(500, 0, 0);
    const auto [pose, diag] = micp_step(bvh, rigs, scans, far_away, params);
    CHECK(diag.rejected);
    CHECK(diag.correspondence_count < 10);
    CHECK((pose.translation - far_away.translation).norm() == 0.0);
  }
  SUBCASE("sensor order does not matter") {
    auto [rig2, wheel_scan] = virtual_wheel_rig(0.15);
    // consistent wheel geometry: base sits 0.15 above the floor (z = -1.5)
    Transform truth2;
    truth2.translation = Vec3(0.7, 0.3, -1.35);
    const Scan lidar_scan = simulate_scan(bvh, rig.model, compose(truth2, rig.t_sb), 0.0, 22);

    Transform guess = truth2;
    guess.translation += Vec3(-0.2, 0.1, 0.1);

    const std::vector<SensorRig> ab{rig, rig2};
    const std::vector<Scan> ab_scans{lidar_scan, wheel_scan};
    const std::vector<SensorRig> ba{rig2, rig};
    const std::vector<Scan> ba_scans{wheel_scan, lidar_scan};

    const auto [pose_ab, diag_ab] = micp_step(bvh, ab, ab_scans, guess, MicpParams{});
    const auto [pose_ba, diag_ba] = micp_step(bvh, ba, ba_scans, guess, MicpParams{});
    CHECK((pose_ab.translation - pose_ba.translation).norm() < 1e-9);
    CHECK(rotation_angle(Quat(pose_ab.rotation.conjugate() * pose_ba.rotation)) < 1e-9);
    CHECK(diag_ab.correspondence_count == diag_ba.correspondence_count);
  }
}

TEST_CASE("micp_converge") {
  SUBCASE("true pose converges in one iteration") {
    const TriangleMesh room = generate_box_room(Vec3(10, 10, 3));
    const Bvh bvh = build_bvh(room);
    SensorRig rig;
    rig.model = vlp16_layout(180);
    Transform truth;
    truth.translation = Vec3(0.4, -0.8, 0.1);
    const Scan scan = simulate_scan(bvh, rig.model, truth, 0.0, 31);

    const MicpResult result = micp_converge(bvh, std::vector<SensorRig>{rig},
                                            std::vector<Scan>{scan}, truth, MicpParams{});
    CHECK(result.converged);
    CHECK(result.iterations_run == 1);
    CHECK(result.final_residual < 1e-9);
    CHECK(pose_error(result.pose, truth).translation_error < 1e-9);
  }
  SUBCASE("guesses inside a sphere converge to the center") {
    // a narrow elevation band senses z weakly in a sphere, so the z component
    // contracts by only mean(sin^2 phi) per step; give the loop room to finish
    const TriangleMesh sphere = generate_sphere(1.0, 20000);
    const Bvh bvh = build_bvh(sphere);
    SensorRig rig;
    rig.model = vlp16_layout(180);
    const Scan scan = simulate_scan(bvh, rig.model, Transform::identity(), 0.0, 41);
    const std::vector<SensorRig> rigs{rig};
    const std::vector<Scan> scans{scan};

    MicpParams params;
    params.max_iterations = 500;
    params.translation_epsilon = 1e-6;
    params.rotation_epsilon = 1e-6;
    for (int i = 0; i < 10; ++i) {
      const Transform guess =
          random_pose_in_ball(Transform::identity(), 0.5, 0.3, 4000 + i);
      const MicpResult result = micp_converge(bvh, rigs, scans, guess, params);
      CHECK(result.pose.translation.norm() < 1e-3);
    }
  }
  SUBCASE("planar lidar leaves z unobserved; wheels fix it") {
    // floor at z = -1.5; the base rides 0.15 above it. The ring is mounted at
    // base height so a pitch of the base cannot mimic an x shift.
    const TriangleMesh room = generate_box_room(Vec3(10, 10, 3));
    const Bvh bvh = build_bvh(room);

    SensorRig lidar;
    lidar.model = lidar_2d();

    Transform truth;
    truth.translation = Vec3(0.7, 0.3, -1.35);
    const Scan lidar_scan = simulate_scan(bvh, lidar.model, compose(truth, lidar.t_sb), 0.0, 51);

    Transform guess = truth;
    guess.translation += Vec3(-0.5, 0.0, 0.2);

    MicpParams params;
    params.max_iterations = 200;
    params.translation_epsilon = 1e-6;
    params.rotation_epsilon = 1e-6;

    // lidar only: x recovers, z cannot
    const MicpResult lidar_only = micp_converge(
        bvh, std::vector<SensorRig>{lidar}, std::vector<Scan>{lidar_scan}, guess, params);
    const Vec3 err1 = lidar_only.pose.translation - truth.translation;
    CHECK(std::abs(err1.x()) < 0.01);
    CHECK(std::abs(err1.z()) > 0.15);

    // adding the wheel sensor makes z observable
    auto [wheels, wheel_scan] = virtual_wheel_rig(0.15, 0.25, 0.30, 1.0);
    const MicpResult combined =
        micp_converge(bvh, std::vector<SensorRig>{lidar, wheels},
                      std::vector<Scan>{lidar_scan, wheel_scan}, guess, params);
    const Vec3 err2 = combined.pose.translation - truth.translation;
    CHECK(combined.converged);
    CHECK(std::abs(err2.x()) < 0.01);
    CHECK(std::abs(err2.z()) < 0.01);
  }
}

TEST_CASE("result json") {
  MicpResult r;
  r.pose.translation = Vec3(1, 2, 3);
  r.iterations_run = 4;
  r.converged = true;
  r.phase_timings.simulation = 0.5;
  const std::string with_timing = micp_result_to_json(r, true);
  const std::string without = micp_result_to_json(r, false);
  CHECK(with_timing.find("0.5") != std::string::npos);
  CHECK(without.find("0.5") == std::string::npos);
  CHECK(without.find("\"converged\": true") != std::string::npos);
}
