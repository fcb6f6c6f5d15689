// micp — range-sensor-to-mesh registration
// SPDX-License-Identifier: Apache-2.0
#include "micp/mesh_io.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace micp {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error(path + ": " + what);
}

std::string lower_extension(const std::string& path) {
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos) return {};
  std::string ext = path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext;
}

std::vector<char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open file");
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<char> data(static_cast<std::size_t>(size));
  if (size > 0) in.read(data.data(), size);
  if (!in) fail(path, "read error");
  return data;
}

void add_polygon(TriangleMesh& mesh, const std::vector<int>& poly, const std::string& path) {
  if (poly.size() < 3) fail(path, "face with fewer than 3 vertices");
  for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
    mesh.faces.emplace_back(Vec3i(poly[0], poly[k], poly[k + 1]));
  }
}

// ---------------------------------------------------------------- PLY

struct PlyProperty {
  std::string type;   // scalar type, or list count type
  std::string etype;  // list element type (lists only)
  std::string name;
  bool is_list = false;
};

std::size_t ply_type_size(const std::string& t, const std::string& path) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" ||
      t == "float32")
    return 4;
  if (t == "double" || t == "float64") return 8;
  fail(path, "unknown ply type '" + t + "'");
}

double read_binary_scalar(const char*& p, const std::string& type, const std::string& path) {
  auto get = [&p](auto value) {
    std::memcpy(&value, p, sizeof(value));
    p += sizeof(value);
    return value;
  };
  if (type == "char" || type == "int8") return get(std::int8_t{});
  if (type == "uchar" || type == "uint8") return get(std::uint8_t{});
  if (type == "short" || type == "int16") return get(std::int16_t{});
  if (type == "ushort" || type == "uint16") return get(std::uint16_t{});
  if (type == "int" || type == "int32") return get(std::int32_t{});
  if (type == "uint" || type == "uint32") return get(std::uint32_t{});
  if (type == "float" || type == "float32") return get(float{});
  if (type == "double" || type == "float64") return get(double{});
  fail(path, "unknown ply type '" + type + "'");
}

TriangleMesh load_ply(const std::vector<char>& data, const std::string& path) {
  std::istringstream header(std::string(data.begin(), data.end()));
  std::string line;
  std::getline(header, line);
  bool binary = false;
  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> props;
  };
  std::vector<Element> elements;
  while (std::getline(header, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "comment" || tok == "obj_info" || tok.empty()) continue;
    if (tok == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "binary_little_endian") {
        binary = true;
      } else if (fmt != "ascii") {
        fail(path, "unsupported ply format '" + fmt + "'");
      }
    } else if (tok == "element") {
      Element e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (tok == "property") {
      if (elements.empty()) fail(path, "ply property before element");
      PlyProperty p;
      ls >> p.type;
      if (p.type == "list") {
        p.is_list = true;
        ls >> p.type >> p.etype >> p.name;
      } else {
        ls >> p.name;
      }
      elements.back().props.push_back(p);
    } else if (tok == "end_header") {
      break;
    } else if (tok != "ply") {
      fail(path, "unexpected ply header line '" + line + "'");
    }
  }
  const std::size_t body_offset = static_cast<std::size_t>(header.tellg());

  TriangleMesh mesh;
  if (binary) {
    const char* p = data.data() + body_offset;
    const char* end = data.data() + data.size();
    for (const auto& el : elements) {
      int ix = -1, iy = -1, iz = -1;
      for (std::size_t i = 0; i < el.props.size(); ++i) {
        if (el.props[i].name == "x") ix = static_cast<int>(i);
        if (el.props[i].name == "y") iy = static_cast<int>(i);
        if (el.props[i].name == "z") iz = static_cast<int>(i);
      }
      const bool is_vertex = el.name == "vertex";
      const bool is_face = el.name == "face";
      for (std::size_t n = 0; n < el.count; ++n) {
        Vec3 v = Vec3::Zero();
        std::vector<int> poly;
        for (std::size_t i = 0; i < el.props.size(); ++i) {
          const auto& prop = el.props[i];
          if (prop.is_list) {
            if (p + ply_type_size(prop.type, path) > end) fail(path, "truncated ply body");
            const auto count = static_cast<std::size_t>(read_binary_scalar(p, prop.type, path));
            if (p + count * ply_type_size(prop.etype, path) > end) fail(path, "truncated ply body");
            for (std::size_t k = 0; k < count; ++k) {
              const double idx = read_binary_scalar(p, prop.etype, path);
              if (is_face && (prop.name == "vertex_indices" || prop.name == "vertex_index")) {
                poly.push_back(static_cast<int>(idx));
              }
            }
          } else {
            if (p + ply_type_size(prop.type, path) > end) fail(path, "truncated ply body");
            const double value = read_binary_scalar(p, prop.type, path);
            if (static_cast<int>(i) == ix) v.x() = value;
            if (static_cast<int>(i) == iy) v.y() = value;
            if (static_cast<int>(i) == iz) v.z() = value;
          }
        }
        if (is_vertex) mesh.vertices.push_back(v);
        if (is_face && !poly.empty()) add_polygon(mesh, poly, path);
      }
    }
  } else {
    std::istringstream body(std::string(data.begin() + body_offset, data.end()));
    for (const auto& el : elements) {
      int ix = -1, iy = -1, iz = -1;
      for (std::size_t i = 0; i < el.props.size(); ++i) {
        if (el.props[i].name == "x") ix = static_cast<int>(i);
        if (el.props[i].name == "y") iy = static_cast<int>(i);
        if (el.props[i].name == "z") iz = static_cast<int>(i);
      }
      const bool is_vertex = el.name == "vertex";
      const bool is_face = el.name == "face";
      for (std::size_t n = 0; n < el.count; ++n) {
        Vec3 v = Vec3::Zero();
        std::vector<int> poly;
        for (std::size_t i = 0; i < el.props.size(); ++i) {
          const auto& prop = el.props[i];
          if (prop.is_list) {
            std::size_t count = 0;
            if (!(body >> count)) fail(path, "truncated ply body");
            for (std::size_t k = 0; k < count; ++k) {
              long idx = 0;
              if (!(body >> idx)) fail(path, "truncated ply body");
              if (is_face && (prop.name == "vertex_indices" || prop.name == "vertex_index")) {
                poly.push_back(static_cast<int>(idx));
              }
            }
          } else {
            double value = 0.0;
            if (!(body >> value)) fail(path, "truncated ply body");
            if (static_cast<int>(i) == ix) v.x() = value;
            if (static_cast<int>(i) == iy) v.y() = value;
            if (static_cast<int>(i) == iz) v.z() = value;
          }
        }
        if (is_vertex) mesh.vertices.push_back(v);
        if (is_face && !poly.empty()) add_polygon(mesh, poly, path);
      }
    }
  }
  return mesh;
}

// ---------------------------------------------------------------- OBJ

TriangleMesh load_obj(const std::vector<char>& data, const std::string& path) {
  TriangleMesh mesh;
  std::istringstream in(std::string(data.begin(), data.end()));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;
    if (tok == "v") {
      Vec3 v;
      if (!(ls >> v.x() >> v.y() >> v.z())) fail(path, "malformed obj vertex line");
      mesh.vertices.push_back(v);
    } else if (tok == "f") {
      std::vector<int> poly;
      std::string ref;
      while (ls >> ref) {
        // "i", "i/t", "i//n", "i/t/n" — only the vertex index matters
        const long idx = std::strtol(ref.c_str(), nullptr, 10);
        if (idx == 0) fail(path, "malformed obj face reference '" + ref + "'");
        // negative indices count back from the current end
        const long resolved =
            idx > 0 ? idx - 1 : static_cast<long>(mesh.vertices.size()) + idx;
        poly.push_back(static_cast<int>(resolved));
      }
      add_polygon(mesh, poly, path);
    }
    // everything else (vn, vt, g, o, s, usemtl, comments) is ignored
  }
  return mesh;
}

// ---------------------------------------------------------------- STL

TriangleMesh load_stl_binary(const std::vector<char>& data, const std::string& path) {
  if (data.size() < 84) fail(path, "truncated binary stl");
  std::uint32_t count = 0;
  std::memcpy(&count, data.data() + 80, 4);
  if (data.size() < 84 + static_cast<std::size_t>(count) * 50) fail(path, "truncated binary stl");
  TriangleMesh mesh;
  mesh.vertices.reserve(count * 3);
  mesh.faces.reserve(count);
  const char* p = data.data() + 84;
  for (std::uint32_t i = 0; i < count; ++i) {
    float buf[12];
    std::memcpy(buf, p, 48);
    p += 50;  // 12 floats + 2-byte attribute count
    const int base = static_cast<int>(mesh.vertices.size());
    for (int k = 0; k < 3; ++k) {
      mesh.vertices.emplace_back(buf[3 + 3 * k], buf[4 + 3 * k], buf[5 + 3 * k]);
    }
    mesh.faces.emplace_back(Vec3i(base, base + 1, base + 2));
  }
  return mesh;
}

TriangleMesh load_stl_ascii(const std::vector<char>& data, const std::string& path) {
  TriangleMesh mesh;
  std::istringstream in(std::string(data.begin(), data.end()));
  std::string tok;
  std::vector<int> poly;
  while (in >> tok) {
    if (tok == "vertex") {
      Vec3 v;
      if (!(in >> v.x() >> v.y() >> v.z())) fail(path, "malformed stl vertex");
      poly.push_back(static_cast<int>(mesh.vertices.size()));
      mesh.vertices.push_back(v);
    } else if (tok == "endloop") {
      add_polygon(mesh, poly, path);
      poly.clear();
    }
  }
  return mesh;
}

bool stl_is_binary(const std::vector<char>& data) {
  if (data.size() < 84) return false;
  std::uint32_t count = 0;
  std::memcpy(&count, data.data() + 80, 4);
  if (data.size() == 84 + static_cast<std::size_t>(count) * 50) return true;
  // some binary files pad the tail; require at least a non-ascii signature
  std::string head(data.data(), std::min<std::size_t>(data.size(), 5));
  return head != "solid";
}

enum class Detected { Ply, Obj, Stl, Unknown };

Detected detect(const std::string& path, const std::vector<char>& data) {
  const std::string ext = lower_extension(path);
  if (ext == "ply") return Detected::Ply;
  if (ext == "obj") return Detected::Obj;
  if (ext == "stl") return Detected::Stl;
  const std::string head(data.data(), std::min<std::size_t>(data.size(), 64));
  if (head.rfind("ply", 0) == 0) return Detected::Ply;
  if (head.rfind("solid", 0) == 0) return Detected::Stl;
  if (head.find("\nv ") != std::string::npos || head.rfind("v ", 0) == 0) return Detected::Obj;
  return Detected::Unknown;
}

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

}  // namespace

TriangleMesh load_mesh(const std::string& path) {
  const std::vector<char> data = read_all(path);
  TriangleMesh mesh;
  switch (detect(path, data)) {
    case Detected::Ply:
      mesh = load_ply(data, path);
      break;
    case Detected::Obj:
      mesh = load_obj(data, path);
      break;
    case Detected::Stl:
      mesh = stl_is_binary(data) ? load_stl_binary(data, path) : load_stl_ascii(data, path);
      break;
    default:
      fail(path, "unsupported mesh format");
  }
  if (mesh.vertices.empty() || mesh.faces.empty()) fail(path, "empty mesh");
  try {
    finalize_mesh(mesh);
  } catch (const std::exception& e) {
    fail(path, e.what());
  }
  if (mesh.faces.empty()) fail(path, "empty mesh");
  return mesh;
}

void save_mesh(const TriangleMesh& mesh, const std::string& path) {
  const std::string ext = lower_extension(path);
  MeshFormat fmt = MeshFormat::PlyBinary;
  if (ext == "obj") fmt = MeshFormat::Obj;
  if (ext == "stl") fmt = MeshFormat::StlBinary;
  save_mesh(mesh, path, fmt);
}

void save_mesh(const TriangleMesh& mesh, const std::string& path, MeshFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open file for writing");
  switch (format) {
    case MeshFormat::PlyBinary:
    case MeshFormat::PlyAscii: {
      const bool binary = format == MeshFormat::PlyBinary;
      out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n"
          << "element vertex " << mesh.vertices.size() << "\n"
          << "property double x\nproperty double y\nproperty double z\n"
          << "element face " << mesh.faces.size() << "\n"
          << "property list uchar int vertex_indices\nend_header\n";
      if (binary) {
        for (const Vec3& v : mesh.vertices) {
          out.write(reinterpret_cast<const char*>(v.data()), 24);
        }
        for (const Vec3i& f : mesh.faces) {
          const unsigned char n = 3;
          out.write(reinterpret_cast<const char*>(&n), 1);
          const std::int32_t idx[3] = {f[0], f[1], f[2]};
          out.write(reinterpret_cast<const char*>(idx), 12);
        }
      } else {
        out.precision(17);
        for (const Vec3& v : mesh.vertices) {
          out << v.x() << " " << v.y() << " " << v.z() << "\n";
        }
        for (const Vec3i& f : mesh.faces) {
          out << "3 " << f[0] << " " << f[1] << " " << f[2] << "\n";
        }
      }
      break;
    }
    case MeshFormat::Obj: {
      out.precision(17);
      for (const Vec3& v : mesh.vertices) {
        out << "v " << v.x() << " " << v.y() << " " << v.z() << "\n";
      }
      for (const Vec3i& f : mesh.faces) {
        out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
      }
      break;
    }
    case MeshFormat::StlBinary: {
      char header[80] = {};
      std::snprintf(header, sizeof(header), "micp mesh");
      out.write(header, 80);
      write_u32(out, static_cast<std::uint32_t>(mesh.faces.size()));
      for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
        const Vec3i& f = mesh.faces[i];
        float buf[12];
        const Vec3& n = mesh.face_normals[i];
        buf[0] = static_cast<float>(n.x());
        buf[1] = static_cast<float>(n.y());
        buf[2] = static_cast<float>(n.z());
        for (int k = 0; k < 3; ++k) {
          const Vec3& v = mesh.vertices[f[k]];
          buf[3 + 3 * k] = static_cast<float>(v.x());
          buf[4 + 3 * k] = static_cast<float>(v.y());
          buf[5 + 3 * k] = static_cast<float>(v.z());
        }
        out.write(reinterpret_cast<const char*>(buf), 48);
        const std::uint16_t attr = 0;
        out.write(reinterpret_cast<const char*>(&attr), 2);
      }
      break;
    }
    case MeshFormat::StlAscii: {
      out.precision(17);
      out << "solid micp\n";
      for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
        const Vec3i& f = mesh.faces[i];
        const Vec3& n = mesh.face_normals[i];
        out << "facet normal " << n.x() << " " << n.y() << " " << n.z() << "\n outer loop\n";
        for (int k = 0; k < 3; ++k) {
          const Vec3& v = mesh.vertices[f[k]];
          out << "  vertex " << v.x() << " " << v.y() << " " << v.z() << "\n";
        }
        out << " endloop\nendfacet\n";
      }
      out << "endsolid micp\n";
      break;
    }
  }
  if (!out) fail(path, "write error");
}

}  // namespace micp
