// micp — range-sensor-to-mesh registration
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json.hpp>

#include "micp/se3.hpp"
#include "micp/sensor.hpp"
#include "micp/types.hpp"

namespace micp {

// Shared JSON encoding: vectors as [x,y,z], quaternions as [x,y,z,w] with the
// sign canonicalized (w >= 0) so equal rotations serialize identically.

nlohmann::json vec3_json(const Vec3& v);
Vec3 vec3_from_json(const nlohmann::json& j);

nlohmann::json transform_json(const Transform& t);
Transform transform_from_json(const nlohmann::json& j);

nlohmann::json sensor_model_json(const SensorModel& model);
SensorModel sensor_model_from_json(const nlohmann::json& j);

}  // namespace micp
