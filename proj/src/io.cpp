#include "mapfuse/io.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace mapfuse {

namespace fs = std::filesystem;

namespace {

std::ifstream open_input(const fs::path& path, std::ios::openmode mode) {
  std::ifstream in(path, mode);
  if (!in) throw ParseError("cannot open file: " + path.string());
  return in;
}

std::ofstream open_output(const fs::path& path, std::ios::openmode mode) {
  std::ofstream out(path, mode);
  if (!out) throw DataError("cannot open file for writing: " + path.string());
  return out;
}

enum class PlyType { kFloat32, kFloat64, kUint8, kInt8, kUint16, kInt16,
                     kUint32, kInt32 };

std::size_t ply_type_size(PlyType t) {
  switch (t) {
    case PlyType::kFloat64: return 8;
    case PlyType::kFloat32: case PlyType::kUint32: case PlyType::kInt32:
      return 4;
    case PlyType::kUint16: case PlyType::kInt16: return 2;
    default: return 1;
  }
}

PlyType parse_ply_type(const std::string& name) {
  if (name == "float" || name == "float32") return PlyType::kFloat32;
  if (name == "double" || name == "float64") return PlyType::kFloat64;
  if (name == "uchar" || name == "uint8") return PlyType::kUint8;
  if (name == "char" || name == "int8") return PlyType::kInt8;
  if (name == "ushort" || name == "uint16") return PlyType::kUint16;
  if (name == "short" || name == "int16") return PlyType::kInt16;
  if (name == "uint" || name == "uint32") return PlyType::kUint32;
  if (name == "int" || name == "int32") return PlyType::kInt32;
  throw ParseError("unsupported PLY property type: " + name);
}

double decode_ply_value(const char* bytes, PlyType t) {
  switch (t) {
    case PlyType::kFloat32: {
      float v;
      std::memcpy(&v, bytes, 4);
      return static_cast<double>(v);
    }
    case PlyType::kFloat64: {
      double v;
      std::memcpy(&v, bytes, 8);
      return v;
    }
    case PlyType::kUint8: {
      std::uint8_t v;
      std::memcpy(&v, bytes, 1);
      return v;
    }
    case PlyType::kInt8: {
      std::int8_t v;
      std::memcpy(&v, bytes, 1);
      return v;
    }
    case PlyType::kUint16: {
      std::uint16_t v;
      std::memcpy(&v, bytes, 2);
      return v;
    }
    case PlyType::kInt16: {
      std::int16_t v;
      std::memcpy(&v, bytes, 2);
      return v;
    }
    case PlyType::kUint32: {
      std::uint32_t v;
      std::memcpy(&v, bytes, 4);
      return v;
    }
    default: {
      std::int32_t v;
      std::memcpy(&v, bytes, 4);
      return v;
    }
  }
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::kFloat32;
  std::size_t offset = 0;  // byte offset within a binary vertex record
  std::size_t column = 0;  // token index within an ASCII vertex line
};

struct PlyHeader {
  bool binary = false;
  std::size_t vertex_count = 0;
  std::vector<PlyProperty> properties;
  std::size_t record_size = 0;
};

PlyHeader read_ply_header(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("PLY: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "ply") throw ParseError("PLY: missing magic");

  PlyHeader header;
  bool format_seen = false;
  bool in_vertex = false;
  bool vertex_seen = false;
  bool after_vertex = false;

  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok.empty() || tok == "comment" || tok == "obj_info") continue;
    if (tok == "end_header") {
      if (!format_seen) throw ParseError("PLY: missing format line");
      if (!vertex_seen) throw ParseError("PLY: missing vertex element");
      return header;
    }
    if (tok == "format") {
      std::string fmt, version;
      ls >> fmt >> version;
      if (fmt == "ascii")
        header.binary = false;
      else if (fmt == "binary_little_endian")
        header.binary = true;
      else
        throw ParseError("PLY: unsupported format: " + fmt);
      format_seen = true;
    } else if (tok == "element") {
      std::string name;
      std::size_t count = 0;
      ls >> name >> count;
      if (name == "vertex") {
        if (vertex_seen) throw ParseError("PLY: duplicate vertex element");
        vertex_seen = true;
        in_vertex = true;
        header.vertex_count = count;
      } else {
        if (!vertex_seen)
          throw ParseError("PLY: element before vertex unsupported");
        // Data for trailing elements is simply never read.
        in_vertex = false;
        after_vertex = true;
      }
    } else if (tok == "property") {
      if (!in_vertex) {
        if (after_vertex) continue;
        throw ParseError("PLY: property outside element");
      }
      std::string type_name;
      ls >> type_name;
      if (type_name == "list")
        throw ParseError("PLY: list property on vertex unsupported");
      PlyProperty prop;
      prop.type = parse_ply_type(type_name);
      ls >> prop.name;
      prop.offset = header.record_size;
      prop.column = header.properties.size();
      header.record_size += ply_type_size(prop.type);
      header.properties.push_back(prop);
    } else {
      throw ParseError("PLY: unexpected header token: " + tok);
    }
  }
  throw ParseError("PLY: truncated header");
}

const PlyProperty& find_property(const PlyHeader& header,
                                 const std::string& name) {
  for (const PlyProperty& p : header.properties)
    if (p.name == name) return p;
  throw MissingProperty("PLY: missing vertex property: " + name);
}

bool is_float_type(PlyType t) {
  return t == PlyType::kFloat32 || t == PlyType::kFloat64;
}

}  // namespace

ColoredPointCloud read_ply(const fs::path& path) {
  std::ifstream in = open_input(path, std::ios::binary);
  const PlyHeader header = read_ply_header(in);

  const PlyProperty* pos[3] = {&find_property(header, "x"),
                               &find_property(header, "y"),
                               &find_property(header, "z")};
  const PlyProperty* col[3] = {&find_property(header, "red"),
                               &find_property(header, "green"),
                               &find_property(header, "blue")};
  const bool float_colors = is_float_type(col[0]->type);

  ColoredPointCloud cloud;
  cloud.positions.resize(header.vertex_count);
  cloud.colors.resize(header.vertex_count);

  std::vector<double> values(header.properties.size());
  if (header.binary) {
    std::vector<char> record(header.record_size);
    for (std::size_t i = 0; i < header.vertex_count; ++i) {
      if (!in.read(record.data(), static_cast<std::streamsize>(record.size())))
        throw ParseError("PLY: truncated binary vertex data");
      for (int a = 0; a < 3; ++a) {
        cloud.positions[i][a] =
            decode_ply_value(record.data() + pos[a]->offset, pos[a]->type);
        cloud.colors[i][a] =
            decode_ply_value(record.data() + col[a]->offset, col[a]->type);
      }
    }
  } else {
    std::string line;
    for (std::size_t i = 0; i < header.vertex_count; ++i) {
      if (!std::getline(in, line))
        throw ParseError("PLY: truncated ASCII vertex data");
      std::istringstream ls(line);
      for (double& v : values)
        if (!(ls >> v)) throw ParseError("PLY: malformed ASCII vertex line");
      for (int a = 0; a < 3; ++a) {
        cloud.positions[i][a] = values[pos[a]->column];
        cloud.colors[i][a] = values[col[a]->column];
      }
    }
  }

  if (!float_colors) {
    for (Vec3& c : cloud.colors) c /= 255.0;
  } else {
    // Float colors are taken as-is when already normalized; otherwise they
    // are interpreted as an 8-bit range.
    double max_channel = 0.0;
    for (const Vec3& c : cloud.colors)
      max_channel = std::max(max_channel, c.maxCoeff());
    if (max_channel > 1.0)
      for (Vec3& c : cloud.colors) c /= 255.0;
  }

  cloud.validate();
  return cloud;
}

void write_ply(const ColoredPointCloud& cloud, const fs::path& path) {
  std::ofstream out = open_output(path, std::ios::binary);
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << cloud.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "end_header\n";

  for (std::size_t i = 0; i < cloud.size(); ++i) {
    float p[3];
    std::uint8_t c[3];
    for (int a = 0; a < 3; ++a) {
      p[a] = static_cast<float>(cloud.positions[i][a]);
      // nearbyint rounds half to even under the default FP environment.
      const double scaled =
          std::nearbyint(std::clamp(cloud.colors[i][a], 0.0, 1.0) * 255.0);
      c[a] = static_cast<std::uint8_t>(scaled);
    }
    out.write(reinterpret_cast<const char*>(p), sizeof(p));
    out.write(reinterpret_cast<const char*>(c), sizeof(c));
  }
  if (!out) throw DataError("PLY: write failed: " + path.string());
}

TimedTrajectory read_tum(const fs::path& path) {
  std::ifstream in = open_input(path, std::ios::in);
  TimedTrajectory traj;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    double t, tx, ty, tz, qx, qy, qz, qw;
    if (!(ls >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
      throw ParseError("TUM: malformed line " + std::to_string(line_no) +
                       " in " + path.string());
    std::string extra;
    if (ls >> extra)
      throw ParseError("TUM: trailing fields on line " +
                       std::to_string(line_no));
    Eigen::Quaterniond q(qw, qx, qy, qz);
    if (std::abs(q.norm() - 1.0) > 1e-3)
      throw ParseError("TUM: non-unit quaternion on line " +
                       std::to_string(line_no));
    q.normalize();
    traj.entries.push_back({t, PoseSE3{q.toRotationMatrix(), {tx, ty, tz}}});
  }
  traj.validate();
  return traj;
}

void write_tum(const TimedTrajectory& traj, const fs::path& path) {
  std::ofstream out = open_output(path, std::ios::out);
  out << "# timestamp tx ty tz qx qy qz qw\n";
  char buf[256];
  for (const TimedEntry& e : traj.entries) {
    const Eigen::Quaterniond q(e.pose.rotation);
    const Vec3& t = e.pose.translation;
    // 17 significant digits keep the round trip inside 1e-9 even for
    // hundred-meter translations.
    std::snprintf(buf, sizeof(buf),
                  "%.9f %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n",
                  e.timestamp, t.x(), t.y(), t.z(), q.x(), q.y(), q.z(),
                  q.w());
    out << buf;
  }
  if (!out) throw DataError("TUM: write failed: " + path.string());
}

Extrinsics read_extrinsics(const fs::path& path) {
  std::ifstream in = open_input(path, std::ios::in);
  std::vector<double> values;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    double v;
    while (ls >> v) values.push_back(v);
  }
  if (values.size() != 17)
    throw ParseError("extrinsics: expected 16 matrix entries plus time "
                     "offset, got " + std::to_string(values.size()));

  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = values[static_cast<std::size_t>(4 * r + c)];
  if ((m.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).norm() > 1e-9)
    throw ParseError("extrinsics: last matrix row must be 0 0 0 1");

  Extrinsics ext;
  ext.cam_from_lidar.rotation = m.topLeftCorner<3, 3>();
  ext.cam_from_lidar.translation = m.topRightCorner<3, 1>();
  ext.time_offset = values[16];
  if (!ext.cam_from_lidar.is_valid(1e-6))
    throw ParseError("extrinsics: rotation block is not a rotation");
  return ext;
}

void write_extrinsics(const Extrinsics& ext, const fs::path& path) {
  std::ofstream out = open_output(path, std::ios::out);
  out << "# cam_from_lidar row-major 4x4, then time offset (s)\n";
  out.precision(17);
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = ext.cam_from_lidar.rotation;
  m.topRightCorner<3, 1>() = ext.cam_from_lidar.translation;
  for (int r = 0; r < 4; ++r)
    out << m(r, 0) << ' ' << m(r, 1) << ' ' << m(r, 2) << ' ' << m(r, 3)
        << '\n';
  out << ext.time_offset << '\n';
}

namespace {

std::map<std::string, std::string> read_key_value_file(const fs::path& path) {
  std::ifstream in = open_input(path, std::ios::in);
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("expected `key = value` on line " +
                       std::to_string(line_no) + " of " + path.string());
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ParseError("empty key or value on line " + std::to_string(line_no) +
                       " of " + path.string());
    if (!out.emplace(key, value).second)
      throw ParseError("duplicate key `" + key + "` in " + path.string());
  }
  return out;
}

}  // namespace

SessionManifest read_manifest(const fs::path& path) {
  const fs::path root = path.parent_path();
  auto entries = read_key_value_file(path);

  SessionManifest manifest;
  std::map<int, SessionManifest::Entry> sessions;

  auto take = [&](const std::string& key) {
    auto it = entries.find(key);
    if (it == entries.end())
      throw ParseError("manifest: missing key `" + key + "`");
    const fs::path p = root / it->second;
    entries.erase(it);
    return p;
  };
  manifest.lidar_cloud = take("lidar_cloud");
  manifest.lidar_traj = take("lidar_traj");
  manifest.extrinsics = take("extrinsics");

  for (const auto& [key, value] : entries) {
    if (key.rfind("session.", 0) != 0)
      throw ParseError("manifest: unknown key `" + key + "`");
    const auto dot = key.find('.', 8);
    if (dot == std::string::npos)
      throw ParseError("manifest: malformed session key `" + key + "`");
    int id = 0;
    try {
      id = std::stoi(key.substr(8, dot - 8));
    } catch (const std::exception&) {
      throw ParseError("manifest: malformed session id in `" + key + "`");
    }
    const std::string field = key.substr(dot + 1);
    auto& entry = sessions[id];
    entry.session_id = id;
    if (field == "cloud")
      entry.cloud = root / value;
    else if (field == "traj")
      entry.traj = root / value;
    else
      throw ParseError("manifest: unknown session field `" + field + "`");
  }

  int expected = 0;
  for (const auto& [id, entry] : sessions) {
    if (id != expected++)
      throw ParseError("manifest: session ids must be contiguous from 0");
    if (entry.cloud.empty() || entry.traj.empty())
      throw ParseError("manifest: session " + std::to_string(id) +
                       " missing cloud or traj");
    manifest.sessions.push_back(entry);
  }
  if (manifest.sessions.empty())
    throw ParseError("manifest: no sessions declared");

  auto must_exist = [](const fs::path& p) {
    if (!fs::exists(p))
      throw ParseError("manifest: referenced file missing: " + p.string());
  };
  must_exist(manifest.lidar_cloud);
  must_exist(manifest.lidar_traj);
  must_exist(manifest.extrinsics);
  for (const auto& e : manifest.sessions) {
    must_exist(e.cloud);
    must_exist(e.traj);
  }
  return manifest;
}

void write_manifest(const SessionManifest& manifest, const fs::path& path) {
  std::ofstream out = open_output(path, std::ios::out);
  out << "lidar_cloud = " << manifest.lidar_cloud.filename().string() << '\n';
  out << "lidar_traj = " << manifest.lidar_traj.filename().string() << '\n';
  out << "extrinsics = " << manifest.extrinsics.filename().string() << '\n';
  for (const auto& e : manifest.sessions) {
    out << "session." << e.session_id
        << ".cloud = " << e.cloud.filename().string() << '\n';
    out << "session." << e.session_id
        << ".traj = " << e.traj.filename().string() << '\n';
  }
}

PipelineConfig parse_config(const std::string& text) {
  std::istringstream in(text);
  PipelineConfig cfg;
  std::map<std::string, std::function<void(const std::string&)>> setters;

  auto real = [](double& target) {
    return [&target](const std::string& v) { target = std::stod(v); };
  };
  auto integer = [](int& target) {
    return [&target](const std::string& v) { target = std::stoi(v); };
  };

  setters["prefusion.max_gap"] = real(cfg.prefusion.max_gap);
  setters["prefusion.linearity_threshold"] =
      real(cfg.prefusion.linearity_threshold);
  setters["prefusion.ransac_iterations"] =
      integer(cfg.prefusion.ransac_iterations);
  setters["prefusion.seed"] = [&cfg](const std::string& v) {
    cfg.prefusion.seed = std::stoull(v);
  };
  setters["postfusion.beta"] = real(cfg.postfusion.beta);
  setters["postfusion.max_correspondence_distance"] =
      real(cfg.postfusion.max_correspondence_distance);
  setters["postfusion.convergence_tol"] = real(cfg.postfusion.convergence_tol);
  setters["postfusion.max_iterations"] = integer(cfg.postfusion.max_iterations);
  setters["pgo.sigma_trans"] = real(cfg.pgo.sigma_trans);
  setters["pgo.sigma_rot"] = real(cfg.pgo.sigma_rot);
  setters["pgo.damping"] = real(cfg.pgo.damping);
  setters["pgo.tol"] = real(cfg.pgo.tol);
  setters["pgo.max_iterations"] = integer(cfg.pgo.max_iterations);
  setters["eval.tau"] = real(cfg.eval.tau);
  setters["eval.r_g"] = real(cfg.eval.r_g);
  setters["eval.voxel_size"] = real(cfg.eval.voxel_size);

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: expected `key = value` on line " +
                        std::to_string(line_no));
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end())
      throw ConfigError("config: unknown key `" + key + "`");
    try {
      it->second(value);
    } catch (const std::exception&) {
      throw ConfigError("config: bad value for `" + key + "`: " + value);
    }
  }
  return cfg;
}

PipelineConfig read_config(const fs::path& path) {
  std::ifstream in = open_input(path, std::ios::in);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(e.what()) + " (" + path.string() + ")");
  }
}

}  // namespace mapfuse
