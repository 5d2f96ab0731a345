#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "viewfill/geometry.hpp"
#include "viewfill/pipeline.hpp"
#include "viewfill/qnet.hpp"
#include "viewfill/scenegen.hpp"
#include "viewfill/voxel_grid.hpp"

namespace viewfill::io {

// ---------------------------------------------------------------------------
// Bytes and files
// ---------------------------------------------------------------------------

inline void put_u32(std::string& s, std::uint32_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_f32(std::string& s, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(s, v);
}

class ByteReader {
 public:
  explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(bytes_[pos_ + i]);
    pos_ += 4;
    return v;
  }

  float f32() {
    const std::uint32_t v = u32();
    float f;
    std::memcpy(&f, &v, 4);
    return f;
  }

  void magic(const char (&m)[5]) {
    need(4);
    if (std::memcmp(bytes_.data() + pos_, m, 4) != 0)
      throw std::runtime_error(std::string("bad magic, expected ") + m);
    pos_ += 4;
  }

  bool exhausted() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("truncated file");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

/// Writes to <path>.tmp then renames, so readers never observe partial files.
inline void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for write: " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return bytes;
}

/// Shortest text that round-trips the double exactly.
inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Depth rasters (DPM1)
// ---------------------------------------------------------------------------

inline void save_depth(const std::filesystem::path& path, const DepthMap& d) {
  std::string s;
  s.reserve(12 + d.data.size() * 4);
  s += "DPM1";
  put_u32(s, static_cast<std::uint32_t>(d.width));
  put_u32(s, static_cast<std::uint32_t>(d.height));
  for (float v : d.data) put_f32(s, v);
  write_atomic(path, s);
}

inline DepthMap load_depth(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  ByteReader r(bytes);
  r.magic("DPM1");
  const std::uint32_t w = r.u32(), h = r.u32();
  if (w == 0 || h == 0 || static_cast<std::uint64_t>(w) * h > (1u << 28))
    throw std::runtime_error("implausible depth raster size");
  DepthMap d(static_cast<int>(w), static_cast<int>(h));
  for (float& v : d.data) v = r.f32();
  if (!r.exhausted()) throw std::runtime_error("trailing bytes in depth raster");
  return d;
}

// ---------------------------------------------------------------------------
// Voxel grids (VXG1)
// ---------------------------------------------------------------------------

inline void save_voxel_grid(const std::filesystem::path& path, const VoxelGrid& g) {
  std::string s;
  s.reserve(32 + g.values.size() * 4);
  s += "VXG1";
  for (int a = 0; a < 3; ++a) put_u32(s, static_cast<std::uint32_t>(g.dims[a]));
  for (int a = 0; a < 3; ++a) put_f32(s, static_cast<float>(g.origin[a]));
  put_f32(s, static_cast<float>(g.voxel_size));
  for (double v : g.values) put_f32(s, static_cast<float>(v));
  write_atomic(path, s);
}

inline VoxelGrid load_voxel_grid(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  ByteReader r(bytes);
  r.magic("VXG1");
  std::array<int, 3> dims;
  for (int a = 0; a < 3; ++a) {
    const std::uint32_t d = r.u32();
    if (d == 0 || d > 4096) throw std::runtime_error("implausible voxel grid dims");
    dims[a] = static_cast<int>(d);
  }
  Vec3 origin;
  for (int a = 0; a < 3; ++a) origin[a] = r.f32();
  const double vsize = r.f32();
  VoxelGrid g(dims, origin, vsize, 0.0);
  for (double& v : g.values) v = r.f32();
  if (!r.exhausted()) throw std::runtime_error("trailing bytes in voxel grid");
  return g;
}

// ---------------------------------------------------------------------------
// Cameras (key=value text)
// ---------------------------------------------------------------------------

inline void save_camera(const std::filesystem::path& path, const Camera& cam) {
  std::string s;
  s += "fx=" + fmt_double(cam.fx) + "\n";
  s += "fy=" + fmt_double(cam.fy) + "\n";
  s += "cx=" + fmt_double(cam.cx) + "\n";
  s += "cy=" + fmt_double(cam.cy) + "\n";
  s += "width=" + std::to_string(cam.width) + "\n";
  s += "height=" + std::to_string(cam.height) + "\n";
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      s += "r" + std::to_string(i) + std::to_string(j) + "=" + fmt_double(cam.pose.R(i, j)) + "\n";
  s += "tx=" + fmt_double(cam.pose.t.x()) + "\n";
  s += "ty=" + fmt_double(cam.pose.t.y()) + "\n";
  s += "tz=" + fmt_double(cam.pose.t.z()) + "\n";
  write_atomic(path, s);
}

inline Camera load_camera(const std::filesystem::path& path) {
  std::map<std::string, std::string> kv;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("camera file: missing '=' in " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto want = [&kv, &path](const std::string& key) -> double {
    const auto it = kv.find(key);
    if (it == kv.end())
      throw std::runtime_error("camera file " + path.string() + ": missing key " + key);
    try {
      std::size_t used = 0;
      const double v = std::stod(it->second, &used);
      if (used == it->second.size()) return v;
    } catch (const std::logic_error&) {
    }
    throw std::runtime_error("camera file: bad value for " + key);
  };
  Camera cam;
  cam.fx = want("fx");
  cam.fy = want("fy");
  cam.cx = want("cx");
  cam.cy = want("cy");
  cam.width = static_cast<int>(want("width"));
  cam.height = static_cast<int>(want("height"));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      cam.pose.R(i, j) = want("r" + std::to_string(i) + std::to_string(j));
  cam.pose.t = Vec3(want("tx"), want("ty"), want("tz"));
  if (kv.size() != 18) throw std::runtime_error("camera file: unexpected extra keys");
  cam.validate();
  return cam;
}

// ---------------------------------------------------------------------------
// Point clouds (ASCII PLY)
// ---------------------------------------------------------------------------

inline void save_ply(const std::filesystem::path& path, const PointCloud& cloud) {
  std::string s;
  s += "ply\nformat ascii 1.0\n";
  s += "element vertex " + std::to_string(cloud.points.size()) + "\n";
  s += "property float x\nproperty float y\nproperty float z\n";
  const bool with_iter = cloud.has_provenance();
  if (with_iter) s += "property uchar iter\n";
  s += "end_header\n";
  char buf[128];
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const Vec3& p = cloud.points[i];
    std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g", static_cast<float>(p.x()),
                  static_cast<float>(p.y()), static_cast<float>(p.z()));
    s += buf;
    if (with_iter) {
      const int it = std::clamp(cloud.provenance[i], 0, 255);
      s += ' ';
      s += std::to_string(it);
    }
    s += '\n';
  }
  write_atomic(path, s);
}

inline PointCloud load_ply(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t n_vertex = 0;
  bool with_iter = false;
  std::vector<std::string> props;
  if (!std::getline(in, line) || line != "ply") throw std::runtime_error("PLY: bad header");
  while (std::getline(in, line)) {
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "element") {
      std::string what;
      ls >> what >> n_vertex;
      if (what != "vertex") throw std::runtime_error("PLY: only vertex elements supported");
    } else if (word == "property") {
      std::string type, name;
      ls >> type >> name;
      props.push_back(name);
      if (name == "iter") with_iter = true;
    } else if (word != "format" && word != "comment") {
      throw std::runtime_error("PLY: unsupported header line: " + line);
    }
  }
  const std::vector<std::string> want = with_iter
                                            ? std::vector<std::string>{"x", "y", "z", "iter"}
                                            : std::vector<std::string>{"x", "y", "z"};
  if (props != want) throw std::runtime_error("PLY: unsupported property layout");

  PointCloud cloud;
  cloud.points.reserve(n_vertex);
  for (std::size_t i = 0; i < n_vertex; ++i) {
    float x, y, z;  // properties are declared float; parsing wider would not round-trip
    if (!(in >> x >> y >> z)) throw std::runtime_error("PLY: truncated vertex data");
    cloud.points.emplace_back(x, y, z);
    if (with_iter) {
      int it;
      if (!(in >> it)) throw std::runtime_error("PLY: truncated iter column");
      cloud.provenance.push_back(it);
    }
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// Q-network checkpoints (DQN1)
// ---------------------------------------------------------------------------

inline void save_checkpoint(const std::filesystem::path& path, const QNetwork& net) {
  const auto layers = net.layers();
  std::string s;
  s += "DQN1";
  put_u32(s, static_cast<std::uint32_t>(layers.size()));
  for (const QNetwork::LayerRef& l : layers) {
    put_u32(s, static_cast<std::uint32_t>(l.w.rows()));
    put_u32(s, static_cast<std::uint32_t>(l.w.cols()));
    for (Eigen::Index i = 0; i < l.w.rows(); ++i)
      for (Eigen::Index j = 0; j < l.w.cols(); ++j) put_f32(s, static_cast<float>(l.w(i, j)));
    for (Eigen::Index i = 0; i < l.b.size(); ++i) put_f32(s, static_cast<float>(l.b(i)));
  }
  write_atomic(path, s);
}

/// Loads into an existing network; layer shapes must match its configuration.
inline void load_checkpoint(const std::filesystem::path& path, QNetwork& net) {
  const std::string bytes = read_file(path);
  ByteReader r(bytes);
  r.magic("DQN1");
  auto layers = net.layers();
  const std::uint32_t n = r.u32();
  if (n != layers.size()) throw std::runtime_error("checkpoint: layer count mismatch");
  for (QNetwork::LayerMut& l : layers) {
    const std::uint32_t rows = r.u32(), cols = r.u32();
    if (rows != static_cast<std::uint32_t>(l.w.rows()) ||
        cols != static_cast<std::uint32_t>(l.w.cols()))
      throw std::runtime_error("checkpoint: layer shape mismatch");
    for (std::uint32_t i = 0; i < rows; ++i)
      for (std::uint32_t j = 0; j < cols; ++j) l.w(i, j) = r.f32();
    for (std::uint32_t i = 0; i < rows; ++i) l.b(i) = r.f32();
  }
  if (!r.exhausted()) throw std::runtime_error("checkpoint: trailing bytes");
  if (!net.finite()) throw std::runtime_error("checkpoint: non-finite parameters");
}

// ---------------------------------------------------------------------------
// Completion traces (JSON lines)
// ---------------------------------------------------------------------------

inline void save_trace(const std::filesystem::path& path, const CompletionTrace& trace) {
  std::string s;
  for (const TraceRecord& rec : trace.records) {
    nlohmann::ordered_json j;
    j["iter"] = rec.iter;
    j["view"] = rec.view;
    j["holes_before"] = rec.holes_before;
    j["holes_after"] = rec.holes_after;
    if (rec.has_rewards) {
      j["r_acc"] = rec.r_acc;
      j["r_hole"] = rec.r_hole;
      j["r_total"] = rec.r_total;
    } else {
      j["r_acc"] = nullptr;
      j["r_hole"] = nullptr;
      j["r_total"] = nullptr;
    }
    s += j.dump();
    s += '\n';
  }
  write_atomic(path, s);
}

inline std::vector<TraceRecord> load_trace(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::vector<TraceRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    TraceRecord r;
    r.iter = j.at("iter").get<int>();
    r.view = j.at("view").get<int>();
    r.holes_before = j.at("holes_before").get<std::size_t>();
    r.holes_after = j.at("holes_after").get<std::size_t>();
    r.has_rewards = !j.at("r_acc").is_null();
    if (r.has_rewards) {
      r.r_acc = j.at("r_acc").get<double>();
      r.r_hole = j.at("r_hole").get<double>();
      r.r_total = j.at("r_total").get<double>();
    }
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scenes and dataset entries
// ---------------------------------------------------------------------------

inline void save_scene(const std::filesystem::path& path, const Scene& scene) {
  nlohmann::ordered_json j;
  j["seed"] = scene.seed;
  j["room"] = {{"min", {scene.room.min.x(), scene.room.min.y(), scene.room.min.z()}},
               {"max", {scene.room.max.x(), scene.room.max.y(), scene.room.max.z()}}};
  nlohmann::ordered_json boxes = nlohmann::ordered_json::array();
  for (const Aabb& b : scene.boxes)
    boxes.push_back({{"min", {b.min.x(), b.min.y(), b.min.z()}},
                     {"max", {b.max.x(), b.max.y(), b.max.z()}}});
  j["boxes"] = std::move(boxes);
  write_atomic(path, j.dump(2) + "\n");
}

inline Scene load_scene(const std::filesystem::path& path) {
  const nlohmann::json j = nlohmann::json::parse(read_file(path));
  Scene s;
  s.seed = j.at("seed").get<std::uint64_t>();
  auto vec3 = [](const nlohmann::json& a) { return Vec3(a.at(0), a.at(1), a.at(2)); };
  s.room.min = vec3(j.at("room").at("min"));
  s.room.max = vec3(j.at("room").at("max"));
  for (const auto& b : j.at("boxes")) s.boxes.push_back(Aabb{vec3(b.at("min")), vec3(b.at("max"))});
  return s;
}

/// Writes one dataset entry: scene.json, input.dpm, cam_input.txt,
/// nearby_<k>.dpm, action_<j>.dpm, action_<j>_cam.txt.
inline void save_dataset_entry(const std::filesystem::path& dir, const Scene& scene,
                               const TrainingSample& sample) {
  std::filesystem::create_directories(dir);
  save_scene(dir / "scene.json", scene);
  save_depth(dir / "input.dpm", sample.input);
  save_camera(dir / "cam_input.txt", sample.input_cam);
  for (std::size_t k = 0; k < sample.nearby.size(); ++k)
    save_depth(dir / ("nearby_" + std::to_string(k) + ".dpm"), sample.nearby[k]);
  for (std::size_t j = 0; j < sample.action_gt.size(); ++j) {
    save_depth(dir / ("action_" + std::to_string(j) + ".dpm"), sample.action_gt[j]);
    save_camera(dir / ("action_" + std::to_string(j) + "_cam.txt"), sample.action_cams[j]);
  }
}

struct DatasetEntry {
  Scene scene;
  TrainingSample sample;
};

inline DatasetEntry load_dataset_entry(const std::filesystem::path& dir) {
  DatasetEntry e;
  e.scene = load_scene(dir / "scene.json");
  e.sample.input = load_depth(dir / "input.dpm");
  e.sample.input_cam = load_camera(dir / "cam_input.txt");
  for (std::size_t k = 0;; ++k) {
    const std::filesystem::path p = dir / ("nearby_" + std::to_string(k) + ".dpm");
    if (!std::filesystem::exists(p)) break;
    e.sample.nearby.push_back(load_depth(p));
  }
  for (int j = 0; j < kActionViewCount; ++j) {
    e.sample.action_gt.push_back(load_depth(dir / ("action_" + std::to_string(j) + ".dpm")));
    e.sample.action_cams.push_back(
        load_camera(dir / ("action_" + std::to_string(j) + "_cam.txt")));
  }
  e.sample.sphere = bounding_sphere(unproject(e.sample.input, e.sample.input_cam));
  return e;
}

/// Scene subdirectories of a dataset root, sorted by name.
inline std::vector<std::filesystem::path> dataset_entries(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> dirs;
  for (const auto& e : std::filesystem::directory_iterator(root))
    if (e.is_directory() && std::filesystem::exists(e.path() / "scene.json"))
      dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

}  // namespace viewfill::io
