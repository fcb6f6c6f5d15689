// micp — range-sensor-to-mesh registration
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "micp/mesh.hpp"

namespace micp {

// Loads PLY (ascii / binary little-endian), OBJ, or STL (ascii / binary).
// Format is picked by extension, then by magic bytes. Polygon faces are
// fan-triangulated; face normals are recomputed; vertices are kept as
// authored (no welding). Throws std::runtime_error on unreadable files,
// unsupported formats, non-finite coordinates, or empty meshes.
TriangleMesh load_mesh(const std::string& path);

enum class MeshFormat { PlyBinary, PlyAscii, Obj, StlBinary, StlAscii };

// Writes `mesh` in the given format. Defaults to the format implied by the
// path extension (binary flavors for .ply/.stl).
void save_mesh(const TriangleMesh& mesh, const std::string& path);
void save_mesh(const TriangleMesh& mesh, const std::string& path, MeshFormat format);

}  // namespace micp
