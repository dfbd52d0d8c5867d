#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "surfnn/common.hpp"
#include "surfnn/mesh.hpp"
#include "surfnn/volume.hpp"

namespace surfnn {

namespace detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put_le(std::ostream& os, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& is, const char* what) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw InputError(std::string("truncated file while reading ") + what);
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path.string());
  return is;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write " + path.string());
  return os;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// MVOL: "MVOL", u32 version = 1, u32 dims[3], f32 spacing[3], u32 dtype,
// then raw little-endian data, x fastest. Vectors are interleaved.

enum class MvolType : std::uint32_t { Float32 = 0, Vector32 = 1, Mask8 = 2 };

using AnyVolume = std::variant<ScalarVolume, VectorVolume>;

inline void write_mvol_header(std::ostream& os, const Index3& dims, const std::array<double, 3>& spacing,
                              MvolType type) {
  os.write("MVOL", 4);
  detail::put_le<std::uint32_t>(os, 1);
  for (int d : dims) detail::put_le<std::uint32_t>(os, std::uint32_t(d));
  for (double s : spacing) detail::put_le<float>(os, float(s));
  detail::put_le<std::uint32_t>(os, std::uint32_t(type));
}

/// Writes a scalar volume as f32, or as a u8 mask (foreground -> 1).
inline void write_mvol(const std::filesystem::path& path, const ScalarVolume& vol, MvolType type = MvolType::Float32) {
  if (type == MvolType::Vector32) throw InputError("scalar volume cannot be written as dtype 1");
  auto os = detail::open_out(path);
  write_mvol_header(os, vol.dims(), vol.spacing(), type);
  for (double v : vol.data()) {
    if (type == MvolType::Mask8) {
      detail::put_le<std::uint8_t>(os, is_foreground(v) ? 1 : 0);
    } else {
      detail::put_le<float>(os, float(v));
    }
  }
  if (!os) throw InputError("failed writing " + path.string());
}

inline void write_mvol(const std::filesystem::path& path, const VectorVolume& vol) {
  auto os = detail::open_out(path);
  write_mvol_header(os, vol.dims(), vol.spacing(), MvolType::Vector32);
  for (const Vec3& v : vol.data()) {
    for (int a = 0; a < 3; ++a) detail::put_le<float>(os, float(v[a]));
  }
  if (!os) throw InputError("failed writing " + path.string());
}

inline AnyVolume read_mvol(const std::filesystem::path& path) {
  auto is = detail::open_in(path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "MVOL", 4) != 0) {
    throw InputError("bad magic in " + path.string());
  }
  const auto version = detail::get_le<std::uint32_t>(is, "version");
  if (version != 1) throw InputError("unsupported MVOL version " + std::to_string(version));
  Index3 dims{};
  for (int& d : dims) {
    const auto v = detail::get_le<std::uint32_t>(is, "dims");
    if (v == 0 || v > (1u << 16)) throw InputError("invalid MVOL dims");
    d = int(v);
  }
  std::array<double, 3> spacing{};
  for (double& s : spacing) s = double(detail::get_le<float>(is, "spacing"));
  const auto dtype = detail::get_le<std::uint32_t>(is, "dtype");
  const std::size_t count = std::size_t(dims[0]) * dims[1] * dims[2];

  switch (MvolType(dtype)) {
    case MvolType::Float32: {
      std::vector<double> data(count);
      for (double& v : data) v = double(detail::get_le<float>(is, "data"));
      return ScalarVolume(dims, spacing, std::move(data));
    }
    case MvolType::Mask8: {
      std::vector<double> data(count);
      for (double& v : data) v = detail::get_le<std::uint8_t>(is, "data") ? 1.0 : 0.0;
      return ScalarVolume(dims, spacing, std::move(data));
    }
    case MvolType::Vector32: {
      std::vector<Vec3> data(count);
      for (Vec3& v : data) {
        for (int a = 0; a < 3; ++a) v[a] = double(detail::get_le<float>(is, "data"));
      }
      return VectorVolume(dims, spacing, std::move(data));
    }
  }
  throw InputError("unknown MVOL dtype " + std::to_string(dtype));
}

inline ScalarVolume read_scalar_mvol(const std::filesystem::path& path) {
  AnyVolume v = read_mvol(path);
  if (auto* s = std::get_if<ScalarVolume>(&v)) return std::move(*s);
  throw InputError(path.string() + " holds a vector volume, expected scalar");
}

// ---------------------------------------------------------------------------
// OFF (ASCII)

inline void write_off(const std::filesystem::path& path, const TriMesh& mesh) {
  auto os = detail::open_out(path);
  os << "OFF\n" << mesh.vertices.size() << ' ' << mesh.faces.size() << " 0\n";
  os << std::setprecision(17);
  for (const Vec3& v : mesh.vertices) os << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const Face& f : mesh.faces) os << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
  if (!os) throw InputError("failed writing " + path.string());
}

inline TriMesh read_off(const std::filesystem::path& path) {
  auto is = detail::open_in(path);
  // Tokenize with comments stripped.
  std::stringstream body;
  std::string line;
  while (std::getline(is, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    body << line << '\n';
  }
  std::string magic;
  body >> magic;
  if (magic != "OFF") throw InputError("bad magic in " + path.string() + " (expected OFF)");
  long nv = -1, nf = -1, ne = -1;
  if (!(body >> nv >> nf >> ne) || nv < 0 || nf < 0) throw InputError("bad OFF header in " + path.string());
  std::vector<Vec3> vertices(nv);
  for (Vec3& v : vertices) {
    if (!(body >> v.x() >> v.y() >> v.z())) throw InputError("truncated OFF vertex list in " + path.string());
  }
  std::vector<Face> faces;
  faces.reserve(nf);
  for (long f = 0; f < nf; ++f) {
    int k = 0;
    if (!(body >> k)) throw InputError("truncated OFF face list in " + path.string());
    std::vector<int> poly(k);
    for (int& i : poly) {
      if (!(body >> i)) throw InputError("truncated OFF face list in " + path.string());
    }
    if (k < 3) throw InputError("OFF face with fewer than 3 vertices");
    for (int i = 1; i + 1 < k; ++i) faces.push_back({poly[0], poly[i], poly[i + 1]});
  }
  return make_mesh(std::move(vertices), std::move(faces));
}

// ---------------------------------------------------------------------------
// PLY. Written as binary little-endian with f32 coordinates and u32 indices;
// the reader also accepts ASCII and common scalar types.

inline void write_ply(const std::filesystem::path& path, const TriMesh& mesh) {
  auto os = detail::open_out(path);
  os << "ply\nformat binary_little_endian 1.0\n"
     << "element vertex " << mesh.vertices.size() << "\n"
     << "property float x\nproperty float y\nproperty float z\n"
     << "element face " << mesh.faces.size() << "\n"
     << "property list uchar uint vertex_indices\nend_header\n";
  for (const Vec3& v : mesh.vertices) {
    for (int a = 0; a < 3; ++a) detail::put_le<float>(os, float(v[a]));
  }
  for (const Face& f : mesh.faces) {
    detail::put_le<std::uint8_t>(os, 3);
    for (int i : f) detail::put_le<std::uint32_t>(os, std::uint32_t(i));
  }
  if (!os) throw InputError("failed writing " + path.string());
}

namespace detail {

inline int ply_type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "float" || t == "int32" || t == "uint32" || t == "float32") return 4;
  if (t == "double" || t == "float64") return 8;
  throw InputError("unsupported PLY property type " + t);
}

inline double ply_read_binary(std::istream& is, const std::string& t) {
  if (t == "char" || t == "int8") return get_le<std::int8_t>(is, "PLY data");
  if (t == "uchar" || t == "uint8") return get_le<std::uint8_t>(is, "PLY data");
  if (t == "short" || t == "int16") return get_le<std::int16_t>(is, "PLY data");
  if (t == "ushort" || t == "uint16") return get_le<std::uint16_t>(is, "PLY data");
  if (t == "int" || t == "int32") return get_le<std::int32_t>(is, "PLY data");
  if (t == "uint" || t == "uint32") return get_le<std::uint32_t>(is, "PLY data");
  if (t == "float" || t == "float32") return get_le<float>(is, "PLY data");
  if (t == "double" || t == "float64") return get_le<double>(is, "PLY data");
  throw InputError("unsupported PLY property type " + t);
}

struct PlyProperty {
  std::string name, type, count_type;  // count_type non-empty for lists
};

struct PlyElement {
  std::string name;
  long count = 0;
  std::vector<PlyProperty> props;
};

}  // namespace detail

inline TriMesh read_ply(const std::filesystem::path& path) {
  auto is = detail::open_in(path);
  std::string line;
  if (!std::getline(is, line) || line.rfind("ply", 0) != 0) throw InputError("bad magic in " + path.string());
  std::string format;
  std::vector<detail::PlyElement> elements;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format") {
      ls >> format;
    } else if (key == "element") {
      detail::PlyElement e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (key == "property") {
      if (elements.empty()) throw InputError("PLY property before element");
      detail::PlyProperty p;
      std::string t;
      ls >> t;
      if (t == "list") {
        ls >> p.count_type >> p.type >> p.name;
      } else {
        p.type = t;
        ls >> p.name;
      }
      elements.back().props.push_back(p);
    } else if (key == "end_header") {
      break;
    }
  }
  const bool ascii = format == "ascii";
  if (!ascii && format != "binary_little_endian") throw InputError("unsupported PLY format '" + format + "'");

  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  for (const auto& e : elements) {
    for (long r = 0; r < e.count; ++r) {
      std::istringstream row;
      if (ascii) {
        if (!std::getline(is, line)) throw InputError("truncated PLY data in " + path.string());
        row.str(line);
      }
      auto scalar = [&](const std::string& type) {
        if (ascii) {
          double v;
          if (!(row >> v)) throw InputError("truncated PLY row in " + path.string());
          return v;
        }
        return detail::ply_read_binary(is, type);
      };
      Vec3 pos = Vec3::Zero();
      for (const auto& p : e.props) {
        if (!p.count_type.empty()) {
          const int k = int(scalar(p.count_type));
          std::vector<int> poly(k);
          for (int& i : poly) i = int(scalar(p.type));
          if (e.name == "face" && (p.name == "vertex_indices" || p.name == "vertex_index")) {
            if (k < 3) throw InputError("PLY face with fewer than 3 vertices");
            for (int i = 1; i + 1 < k; ++i) faces.push_back({poly[0], poly[i], poly[i + 1]});
          }
        } else {
          const double v = scalar(p.type);
          if (e.name == "vertex") {
            if (p.name == "x") pos.x() = v;
            if (p.name == "y") pos.y() = v;
            if (p.name == "z") pos.z() = v;
          }
        }
      }
      if (e.name == "vertex") vertices.push_back(pos);
    }
  }
  return make_mesh(std::move(vertices), std::move(faces));
}

inline TriMesh read_mesh(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".off" || ext == ".OFF") return read_off(path);
  if (ext == ".ply" || ext == ".PLY") return read_ply(path);
  throw InputError("unknown mesh extension '" + ext + "' (expected .off or .ply)");
}

inline void write_mesh(const std::filesystem::path& path, const TriMesh& mesh) {
  const std::string ext = path.extension().string();
  if (ext == ".off" || ext == ".OFF") return write_off(path, mesh);
  if (ext == ".ply" || ext == ".PLY") return write_ply(path, mesh);
  throw InputError("unknown mesh extension '" + ext + "' (expected .off or .ply)");
}

}  // namespace surfnn
