// micp — range-sensor-to-mesh registration
// SPDX-License-Identifier: Apache-2.0
//
// Command line front end. Subcommands: register, benchmark, simulate,
// eval-traj, mesh-info. Exit codes: 0 success/converged, 1 error,
// 2 ran but did not converge.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "micp/eval.hpp"
#include "micp/json_io.hpp"
#include "micp/mesh_io.hpp"
#include "micp/parallel.hpp"

namespace {

using json = nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open file for writing");
  out << content;
  if (!out) throw std::runtime_error(path + ": write error");
}

void emit(const std::optional<std::string>& output_path, const std::string& content) {
  if (output_path) {
    write_file(*output_path, content);
  } else {
    std::cout << content;
    if (!content.empty() && content.back() != '\n') std::cout << "\n";
  }
}

// "tx ty tz" or "tx ty tz qx qy qz qw"
micp::Transform parse_pose(const std::string& text) {
  std::istringstream in(text);
  std::vector<double> v;
  double x;
  while (in >> x) v.push_back(x);
  micp::Transform t;
  if (v.size() == 3) {
    t.translation = micp::Vec3(v[0], v[1], v[2]);
  } else if (v.size() == 7) {
    t.translation = micp::Vec3(v[0], v[1], v[2]);
    t.rotation = micp::Quat(v[6], v[3], v[4], v[5]).normalized();
  } else {
    throw std::runtime_error("pose must be 'tx ty tz' or 'tx ty tz qx qy qz qw'");
  }
  return t;
}

struct RunConfig {
  json map;  // {"path": ...} or {"generator": ...}
  std::vector<micp::SensorRig> rigs;
  micp::MicpParams micp;
  std::uint64_t seed = 42;
  int workers = 0;
};

RunConfig load_config(const std::string& path) {
  const json j = json::parse(read_file(path));
  RunConfig cfg;
  if (j.contains("map")) cfg.map = j.at("map");
  if (j.contains("sensors")) {
    for (const json& s : j.at("sensors")) {
      micp::SensorRig rig;
      rig.model = micp::sensor_model_from_json(s.at("model"));
      if (s.contains("t_sb")) rig.t_sb = micp::transform_from_json(s.at("t_sb"));
      if (s.contains("weight") && !s.at("weight").is_null()) {
        rig.weight_override = s.at("weight").get<double>();
        if (*rig.weight_override < 0.0) {
          throw std::runtime_error(path + ": sensor weight must be >= 0");
        }
      }
      cfg.rigs.push_back(std::move(rig));
    }
  }
  if (j.contains("micp")) {
    const json& m = j.at("micp");
    if (m.contains("max_iterations")) cfg.micp.max_iterations = m.at("max_iterations");
    if (m.contains("translation_epsilon"))
      cfg.micp.translation_epsilon = m.at("translation_epsilon");
    if (m.contains("rotation_epsilon")) cfg.micp.rotation_epsilon = m.at("rotation_epsilon");
    if (m.contains("min_correspondences"))
      cfg.micp.min_correspondences = m.at("min_correspondences");
    if (m.contains("max_projective_distance"))
      cfg.micp.spc.max_projective_distance = m.at("max_projective_distance");
    if (m.contains("max_range")) cfg.micp.spc.max_range = m.at("max_range");
  }
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("workers")) cfg.workers = j.at("workers").get<int>();
  return cfg;
}

micp::TriangleMesh load_map(const json& map_spec) {
  if (map_spec.contains("path")) {
    return micp::load_mesh(map_spec.at("path").get<std::string>());
  }
  if (map_spec.contains("generator")) {
    const std::string gen = map_spec.at("generator");
    if (gen == "sphere") {
      return micp::generate_sphere(map_spec.at("radius").get<double>(),
                                   map_spec.at("faces").get<std::size_t>());
    }
    if (gen == "box_room") {
      return micp::generate_box_room(micp::vec3_from_json(map_spec.at("extents")));
    }
    throw std::runtime_error("unknown map generator '" + gen + "'");
  }
  throw std::runtime_error("config: map needs either 'path' or 'generator'");
}

int cmd_register(const RunConfig& cfg, const std::vector<std::string>& scan_files,
                 const std::string& pose_text, const std::optional<std::string>& output,
                 const std::optional<std::string>& dump_corr, bool no_timing, bool brute) {
  const micp::TriangleMesh mesh = load_map(cfg.map);
  const micp::Bvh bvh = micp::build_bvh(mesh);

  if (scan_files.empty()) throw std::runtime_error("register: at least one --scan is required");
  if (!cfg.rigs.empty() && cfg.rigs.size() != scan_files.size()) {
    throw std::runtime_error("register: scan file count does not match configured sensors");
  }

  std::vector<micp::SensorRig> rigs;
  std::vector<micp::Scan> scans;
  for (std::size_t i = 0; i < scan_files.size(); ++i) {
    auto [model, scan] = micp::scan_from_json(read_file(scan_files[i]));
    micp::SensorRig rig;
    if (i < cfg.rigs.size()) rig = cfg.rigs[i];
    rig.model = std::move(model);  // the scan file describes its own rays
    rigs.push_back(std::move(rig));
    scans.push_back(std::move(scan));
  }

  micp::MicpParams params = cfg.micp;
  params.raycast_mode = brute ? micp::RaycastMode::BruteForce : micp::RaycastMode::Bvh;
  const micp::Transform initial = parse_pose(pose_text);
  const micp::MicpResult result = micp::micp_converge(bvh, rigs, scans, initial, params);

  if (dump_corr) {
    micp::CorrespondenceSet all;
    for (std::size_t i = 0; i < rigs.size(); ++i) {
      micp::CorrespondenceSet c = micp::find_correspondences(bvh, rigs[i], scans[i], result.pose,
                                                             params.spc, params.raycast_mode);
      all.scan_points.insert(all.scan_points.end(), c.scan_points.begin(), c.scan_points.end());
      all.map_points.insert(all.map_points.end(), c.map_points.begin(), c.map_points.end());
    }
    write_file(*dump_corr, micp::correspondences_to_csv(all));
  }

  emit(output, micp::micp_result_to_json(result, !no_timing));
  return result.converged ? 0 : 2;
}

int cmd_simulate(const RunConfig& cfg, std::size_t sensor_index, const std::string& pose_text,
                 double noise, const std::string& output, const std::string& format) {
  if (sensor_index >= cfg.rigs.size()) {
    throw std::runtime_error("simulate: sensor index out of range");
  }
  const micp::TriangleMesh mesh = load_map(cfg.map);
  const micp::Bvh bvh = micp::build_bvh(mesh);
  const micp::SensorRig& rig = cfg.rigs[sensor_index];

  const micp::Transform base_pose = parse_pose(pose_text);
  const micp::Transform sensor_pose = micp::compose(base_pose, rig.t_sb);
  const micp::Scan scan = micp::simulate_scan(bvh, rig.model, sensor_pose, noise, cfg.seed);

  if (format == "csv") {
    write_file(output, micp::scan_to_csv(scan));
  } else {
    write_file(output, micp::scan_to_json(rig.model, scan));
  }
  return 0;
}

int cmd_benchmark(micp::BenchmarkConfig bench, const std::string& output_prefix, bool phases,
                  bool no_timing) {
  const micp::BenchmarkReport report = micp::run_sphere_benchmark(bench);
  write_file(output_prefix + ".csv", micp::benchmark_to_csv(report, phases));
  write_file(output_prefix + ".json", micp::benchmark_to_json(report, !no_timing));
  std::cout << micp::benchmark_to_csv(report, phases);
  return 0;
}

int cmd_eval_traj(const std::string& truth_path, const std::string& estimate_path,
                  const std::optional<std::string>& output) {
  const micp::Trajectory truth = micp::load_trajectory(truth_path);
  const micp::Trajectory estimate = micp::load_trajectory(estimate_path);
  const double me = micp::trajectory_mean_error(estimate, truth);
  json j;
  j["truth"] = truth_path;
  j["estimate"] = estimate_path;
  j["samples"] = estimate.size();
  j["mean_error"] = me;
  emit(output, j.dump(2));
  return 0;
}

int cmd_mesh_info(const std::string& path, const std::optional<std::string>& output) {
  const micp::TriangleMesh mesh = micp::load_mesh(path);
  const micp::MeshStats st = micp::mesh_stats(mesh);
  json j;
  j["path"] = path;
  j["vertex_count"] = st.vertex_count;
  j["face_count"] = st.face_count;
  j["bounds_min"] = micp::vec3_json(st.bounds_min);
  j["bounds_max"] = micp::vec3_json(st.bounds_max);
  j["surface_area"] = st.surface_area;
  emit(output, j.dump(2));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Range-sensor-to-mesh registration and localization"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand

  std::string config_path;
  int workers = 0;
  app.add_option("--workers", workers, "worker threads (0 = auto, or MICP_WORKERS env)");

  // register
  auto* reg = app.add_subcommand("register", "register scans against a mesh map");
  std::vector<std::string> scan_files;
  std::string pose_text = "0 0 0";
  std::optional<std::string> output, dump_corr;
  bool no_timing = false, brute = false;
  std::optional<std::uint64_t> seed_override;
  std::optional<int> max_iter_override;
  std::optional<std::string> map_override;
  reg->add_option("--config", config_path, "run configuration (json)")->required();
  reg->add_option("--scan", scan_files, "scan file (json); repeat per sensor")->required();
  reg->add_option("--initial-pose", pose_text, "'tx ty tz [qx qy qz qw]'");
  reg->add_option("--output", output, "write the result json here instead of stdout");
  reg->add_option("--dump-correspondences", dump_corr, "write final correspondences csv");
  reg->add_option("--max-iterations", max_iter_override, "override config");
  reg->add_option("--map", map_override, "override the map path from the config");
  reg->add_flag("--no-timing", no_timing, "zero timing fields (deterministic output)");
  reg->add_flag("--brute-force", brute, "exhaustive raycasts instead of the BVH");

  // simulate
  auto* sim = app.add_subcommand("simulate", "simulate a scan from a pose");
  std::size_t sensor_index = 0;
  double noise = 0.0;
  std::string sim_output, sim_format = "json";
  sim->add_option("--config", config_path, "run configuration (json)")->required();
  sim->add_option("--sensor", sensor_index, "sensor index in the config");
  sim->add_option("--pose", pose_text, "base pose 'tx ty tz [qx qy qz qw]'");
  sim->add_option("--noise", noise, "range noise sigma (meters)");
  sim->add_option("--seed", seed_override, "override config seed");
  sim->add_option("--output", sim_output, "scan output file")->required();
  sim->add_option("--format", sim_format, "json|csv")
      ->check(CLI::IsMember({"json", "csv"}));

  // benchmark
  auto* bench = app.add_subcommand("benchmark", "sphere registration benchmark");
  std::vector<std::size_t> faces{10000, 100000, 1000000};
  int n_poses = 1000;
  std::uint64_t bench_seed = 1;
  double radius = 1.0;
  std::string output_prefix = "benchmark";
  bool phases = false, bench_brute = false, bench_no_timing = false;
  bench->add_option("--faces", faces, "sphere face counts");
  bench->add_option("--poses", n_poses, "random pose guesses per face count");
  bench->add_option("--seed", bench_seed, "rng seed");
  bench->add_option("--radius", radius, "sphere radius (meters)");
  bench->add_option("--output-prefix", output_prefix, "writes <prefix>.csv and <prefix>.json");
  bench->add_flag("--phases", phases, "include per-phase breakdown columns");
  bench->add_flag("--brute-force", bench_brute, "exhaustive raycasts instead of the BVH");
  bench->add_flag("--no-timing", bench_no_timing, "zero timing fields in the json report");

  // eval-traj
  auto* ev = app.add_subcommand("eval-traj", "mean translation error of a trajectory");
  std::string truth_path, estimate_path;
  std::optional<std::string> ev_output;
  ev->add_option("--truth", truth_path, "ground truth trajectory file")->required();
  ev->add_option("--estimate", estimate_path, "estimated trajectory file")->required();
  ev->add_option("--output", ev_output, "write the report json here instead of stdout");

  // mesh-info
  auto* info = app.add_subcommand("mesh-info", "mesh statistics");
  std::string mesh_path;
  std::optional<std::string> info_output;
  info->add_option("path", mesh_path, "mesh file (ply/obj/stl)")->required();
  info->add_option("--output", info_output, "write the stats json here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (workers > 0) micp::set_worker_count(workers);

    if (reg->parsed()) {
      RunConfig cfg = load_config(config_path);
      if (workers == 0 && cfg.workers > 0) micp::set_worker_count(cfg.workers);
      if (max_iter_override) cfg.micp.max_iterations = *max_iter_override;
      if (map_override) cfg.map = json{{"path", *map_override}};
      return cmd_register(cfg, scan_files, pose_text, output, dump_corr, no_timing, brute);
    }
    if (sim->parsed()) {
      RunConfig cfg = load_config(config_path);
      if (workers == 0 && cfg.workers > 0) micp::set_worker_count(cfg.workers);
      if (seed_override) cfg.seed = *seed_override;
      return cmd_simulate(cfg, sensor_index, pose_text, noise, sim_output, sim_format);
    }
    if (bench->parsed()) {
      micp::BenchmarkConfig bc;
      bc.face_counts = faces;
      bc.n_poses = n_poses;
      bc.seed = bench_seed;
      bc.sphere_radius = radius;
      bc.brute_force = bench_brute;
      return cmd_benchmark(bc, output_prefix, phases, bench_no_timing);
    }
    if (ev->parsed()) {
      return cmd_eval_traj(truth_path, estimate_path, ev_output);
    }
    if (info->parsed()) {
      return cmd_mesh_info(mesh_path, info_output);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
