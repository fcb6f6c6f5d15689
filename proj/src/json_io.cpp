// micp — range-sensor-to-mesh registration
// SPDX-License-Identifier: Apache-2.0
#include "micp/json_io.hpp"

#include <stdexcept>

namespace micp {

using json = nlohmann::json;

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw std::runtime_error("expected a 3-vector");
  return Vec3(j.at(0), j.at(1), j.at(2));
}

json transform_json(const Transform& t) {
  Quat q = t.rotation.normalized();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return json{{"translation", vec3_json(t.translation)},
              {"rotation", json::array({q.x(), q.y(), q.z(), q.w()})}};
}

Transform transform_from_json(const json& j) {
  Transform t;
  t.translation = vec3_from_json(j.at("translation"));
  const json& r = j.at("rotation");
  if (!r.is_array() || r.size() != 4) throw std::runtime_error("expected a quaternion [x,y,z,w]");
  t.rotation = Quat(r.at(3), r.at(0), r.at(1), r.at(2)).normalized();
  return t;
}

namespace {

json vec3s_json(const std::vector<Vec3>& vs) {
  json arr = json::array();
  for (const Vec3& v : vs) arr.push_back(vec3_json(v));
  return arr;
}

std::vector<Vec3> vec3s_from_json(const json& j) {
  std::vector<Vec3> vs;
  vs.reserve(j.size());
  for (const auto& e : j) vs.push_back(vec3_from_json(e));
  return vs;
}

}  // namespace

json sensor_model_json(const SensorModel& model) {
  json j;
  std::visit(
      [&j](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, SphericalModel>) {
          j["type"] = "spherical";
          j["theta_min"] = m.theta_min;
          j["theta_max"] = m.theta_max;
          j["n_horizontal"] = m.n_horizontal;
          j["phi_min"] = m.phi_min;
          j["phi_max"] = m.phi_max;
          j["n_vertical"] = m.n_vertical;
        } else if constexpr (std::is_same_v<T, PinholeModel>) {
          j["type"] = "pinhole";
          j["width"] = m.width;
          j["height"] = m.height;
          j["fx"] = m.fx;
          j["fy"] = m.fy;
          j["cx"] = m.cx;
          j["cy"] = m.cy;
        } else if constexpr (std::is_same_v<T, O1DnModel>) {
          j["type"] = "o1dn";
          j["origin"] = vec3_json(m.origin);
          j["directions"] = vec3s_json(m.directions);
        } else {
          j["type"] = "ondn";
          j["origins"] = vec3s_json(m.origins);
          j["directions"] = vec3s_json(m.directions);
        }
        j["range_min"] = m.range_min;
        j["range_max"] = m.range_max;
      },
      model);
  return j;
}

SensorModel sensor_model_from_json(const json& j) {
  const std::string type = j.at("type");
  if (type == "spherical") {
    SphericalModel m;
    m.theta_min = j.at("theta_min");
    m.theta_max = j.at("theta_max");
    m.n_horizontal = j.at("n_horizontal");
    m.phi_min = j.at("phi_min");
    m.phi_max = j.at("phi_max");
    m.n_vertical = j.at("n_vertical");
    m.range_min = j.at("range_min");
    m.range_max = j.at("range_max");
    return m;
  }
  if (type == "pinhole") {
    PinholeModel m;
    m.width = j.at("width");
    m.height = j.at("height");
    m.fx = j.at("fx");
    m.fy = j.at("fy");
    m.cx = j.at("cx");
    m.cy = j.at("cy");
    m.range_min = j.at("range_min");
    m.range_max = j.at("range_max");
    return m;
  }
  if (type == "o1dn") {
    O1DnModel m;
    m.origin = vec3_from_json(j.at("origin"));
    m.directions = vec3s_from_json(j.at("directions"));
    m.range_min = j.at("range_min");
    m.range_max = j.at("range_max");
    return m;
  }
  if (type == "ondn") {
    OnDnModel m;
    m.origins = vec3s_from_json(j.at("origins"));
    m.directions = vec3s_from_json(j.at("directions"));
    m.range_min = j.at("range_min");
    m.range_max = j.at("range_max");
    return m;
  }
  throw std::runtime_error("sensor model json: unknown type '" + type + "'");
}

}  // namespace micp
