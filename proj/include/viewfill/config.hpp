#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "viewfill/inpaint.hpp"
#include "viewfill/pipeline.hpp"
#include "viewfill/planner.hpp"
#include "viewfill/qnet.hpp"
#include "viewfill/scenegen.hpp"
#include "viewfill/volume.hpp"

namespace viewfill {

/// Flat key=value experiment configuration. Unknown keys are rejected; all
/// values are validated against the target modules' preconditions on load.
struct Config {
  // rendering / action space
  int render_width = 512, render_height = 512;
  int encode_res = 64;
  int splat_radius = 1;
  double distance_scale = 2.0;
  double vfov_deg = 60.0;

  // volume
  int volume_nx = 64, volume_ny = 64, volume_nz = 64;
  int volume_out_factor = 4;
  int diffusion_iters = 200;
  std::string completer = "diffusion";

  // inpainting
  std::string inpainter = "laplacian";
  double inpaint_lambda = 1.0;
  double inpaint_tol = 1e-6;
  int inpaint_max_sweeps = 20000;
  double oracle_sigma = 0.0;

  // progressive loop
  double termination_ratio = 0.05;
  int max_iters = 20;
  double reward_w = 0.7;
  bool recomplete_each_iter = false;
  double dedup_resolution = 0.0;

  // planner training
  double gamma = 0.9;
  double lr = 1e-3;
  double clip_norm = 10.0;
  int batch_size = 16;
  int buffer_capacity = 5000;
  int sync_period = 500;
  double eps_start = 0.9, eps_end = 0.2;
  int eps_decay_steps = 10000;
  int fill_episodes = 200;
  int train_episodes = 300;
  int checkpoint_every = 50;
  int enc_hidden = 256, embed_dim = 128, trunk_dim = 512;

  // dataset
  int n_scenes = 60;
  int train_scenes = 50;
  int m_nearby = 4;
  double jitter_deg = 15.0, jitter_m = 0.3;
  double room_min = 3.0, room_max = 6.0;
  double wall_height_min = 2.2, wall_height_max = 3.0;
  double thickness = 0.1;
  int furniture_min = 3, furniture_max = 8;
  double furn_size_min = 0.3, furn_size_max = 1.2;
  double furn_height_min = 0.3, furn_height_max = 1.5;

  // evaluation
  std::vector<double> thresholds = {0.002, 0.004, 0.006, 0.008, 0.010};
  int eval_gt_points = 20000;

  // misc
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = available parallelism; VIEWFILL_THREADS overrides

  static Config from_string(const std::string& text) {
    Config c;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("config line " + std::to_string(line_no) + ": missing '='");
      c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    c.validate();
    return c;
  }

  static Config load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot open config: " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return from_string(ss.str());
  }

  void set(const std::string& key, const std::string& value) {
    auto as_int = [&] {
      std::size_t used = 0;
      const long v = std::stol(value, &used);
      if (used != value.size()) throw std::invalid_argument("config: bad integer for " + key);
      return static_cast<int>(v);
    };
    auto as_double = [&] {
      std::size_t used = 0;
      const double v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument("config: bad number for " + key);
      return v;
    };
    auto as_bool = [&] {
      if (value == "1" || value == "true") return true;
      if (value == "0" || value == "false") return false;
      throw std::invalid_argument("config: bad boolean for " + key);
    };
    auto as_u64 = [&] {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(value, &used);
      if (used != value.size()) throw std::invalid_argument("config: bad integer for " + key);
      return static_cast<std::uint64_t>(v);
    };

    if (key == "render_width") render_width = as_int();
    else if (key == "render_height") render_height = as_int();
    else if (key == "encode_res") encode_res = as_int();
    else if (key == "splat_radius") splat_radius = as_int();
    else if (key == "distance_scale") distance_scale = as_double();
    else if (key == "vfov_deg") vfov_deg = as_double();
    else if (key == "volume_nx") volume_nx = as_int();
    else if (key == "volume_ny") volume_ny = as_int();
    else if (key == "volume_nz") volume_nz = as_int();
    else if (key == "volume_out_factor") volume_out_factor = as_int();
    else if (key == "diffusion_iters") diffusion_iters = as_int();
    else if (key == "completer") completer = value;
    else if (key == "inpainter") inpainter = value;
    else if (key == "inpaint_lambda") inpaint_lambda = as_double();
    else if (key == "inpaint_tol") inpaint_tol = as_double();
    else if (key == "inpaint_max_sweeps") inpaint_max_sweeps = as_int();
    else if (key == "oracle_sigma") oracle_sigma = as_double();
    else if (key == "termination_ratio") termination_ratio = as_double();
    else if (key == "max_iters") max_iters = as_int();
    else if (key == "reward_w") reward_w = as_double();
    else if (key == "recomplete_each_iter") recomplete_each_iter = as_bool();
    else if (key == "dedup_resolution") dedup_resolution = as_double();
    else if (key == "gamma") gamma = as_double();
    else if (key == "lr") lr = as_double();
    else if (key == "clip_norm") clip_norm = as_double();
    else if (key == "batch_size") batch_size = as_int();
    else if (key == "buffer_capacity") buffer_capacity = as_int();
    else if (key == "sync_period") sync_period = as_int();
    else if (key == "eps_start") eps_start = as_double();
    else if (key == "eps_end") eps_end = as_double();
    else if (key == "eps_decay_steps") eps_decay_steps = as_int();
    else if (key == "fill_episodes") fill_episodes = as_int();
    else if (key == "train_episodes") train_episodes = as_int();
    else if (key == "checkpoint_every") checkpoint_every = as_int();
    else if (key == "enc_hidden") enc_hidden = as_int();
    else if (key == "embed_dim") embed_dim = as_int();
    else if (key == "trunk_dim") trunk_dim = as_int();
    else if (key == "n_scenes") n_scenes = as_int();
    else if (key == "train_scenes") train_scenes = as_int();
    else if (key == "m_nearby") m_nearby = as_int();
    else if (key == "jitter_deg") jitter_deg = as_double();
    else if (key == "jitter_m") jitter_m = as_double();
    else if (key == "room_min") room_min = as_double();
    else if (key == "room_max") room_max = as_double();
    else if (key == "wall_height_min") wall_height_min = as_double();
    else if (key == "wall_height_max") wall_height_max = as_double();
    else if (key == "thickness") thickness = as_double();
    else if (key == "furniture_min") furniture_min = as_int();
    else if (key == "furniture_max") furniture_max = as_int();
    else if (key == "furn_size_min") furn_size_min = as_double();
    else if (key == "furn_size_max") furn_size_max = as_double();
    else if (key == "furn_height_min") furn_height_min = as_double();
    else if (key == "furn_height_max") furn_height_max = as_double();
    else if (key == "thresholds") {
      thresholds.clear();
      std::istringstream ls(value);
      std::string tok;
      while (std::getline(ls, tok, ','))
        thresholds.push_back(std::stod(tok));
      if (thresholds.empty()) throw std::invalid_argument("config: empty thresholds list");
    }
    else if (key == "eval_gt_points") eval_gt_points = as_int();
    else if (key == "seed") seed = as_u64();
    else if (key == "threads") threads = as_int();
    else throw std::invalid_argument("config: unknown key '" + key + "'");
  }

  void validate() const {
    to_pipeline().validate();     // raster/volume/loop settings
    to_scenegen().validate();     // scene ranges
    to_qnet().validate();         // network widths
    completer_from_string(completer);
    inpainter_from_string(inpainter);
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("config: gamma outside [0,1)");
    if (!(lr > 0.0)) throw std::invalid_argument("config: non-positive lr");
    if (batch_size < 1 || buffer_capacity < batch_size)
      throw std::invalid_argument("config: batch size exceeds buffer capacity");
    if (sync_period < 1) throw std::invalid_argument("config: sync_period must be >= 1");
    if (!(eps_start >= 0.0 && eps_start <= 1.0 && eps_end >= 0.0 && eps_end <= 1.0))
      throw std::invalid_argument("config: epsilon outside [0,1]");
    if (eps_decay_steps < 1) throw std::invalid_argument("config: eps_decay_steps must be >= 1");
    if (fill_episodes < 0 || train_episodes < 0 || checkpoint_every < 1)
      throw std::invalid_argument("config: bad episode counts");
    if (n_scenes < 1 || train_scenes < 0 || train_scenes > n_scenes)
      throw std::invalid_argument("config: bad scene split");
    if (m_nearby < 1) throw std::invalid_argument("config: m_nearby must be >= 1");
    if (jitter_deg < 0.0 || jitter_m < 0.0) throw std::invalid_argument("config: negative jitter");
    if (inpaint_lambda < 0.0 || !(inpaint_tol > 0.0) || inpaint_max_sweeps < 1)
      throw std::invalid_argument("config: bad inpaint settings");
    if (oracle_sigma < 0.0) throw std::invalid_argument("config: negative oracle sigma");
    for (double t : thresholds)
      if (!(t > 0.0)) throw std::invalid_argument("config: thresholds must be positive");
    if (eval_gt_points < 1) throw std::invalid_argument("config: eval_gt_points must be >= 1");
    if (threads < 0) throw std::invalid_argument("config: negative thread count");
  }

  PipelineConfig to_pipeline() const {
    PipelineConfig p;
    p.render_width = render_width;
    p.render_height = render_height;
    p.encode_res = encode_res;
    p.splat_radius = splat_radius;
    p.distance_scale = distance_scale;
    p.vfov_deg = vfov_deg;
    p.volume_dims = {volume_nx, volume_ny, volume_nz};
    p.volume_out_factor = volume_out_factor;
    p.diffusion_iters = diffusion_iters;
    p.inpaint.lambda = inpaint_lambda;
    p.inpaint.tol = inpaint_tol;
    p.inpaint.max_sweeps = inpaint_max_sweeps;
    p.inpaint.sigma = oracle_sigma;
    p.termination_ratio = termination_ratio;
    p.max_iters = max_iters;
    p.reward_w = reward_w;
    p.recomplete_each_iter = recomplete_each_iter;
    p.dedup_resolution = dedup_resolution;
    p.seed = seed;
    return p;
  }

  SceneGenParams to_scenegen() const {
    SceneGenParams s;
    s.room_min = room_min;
    s.room_max = room_max;
    s.wall_height_min = wall_height_min;
    s.wall_height_max = wall_height_max;
    s.thickness = thickness;
    s.furniture_min = furniture_min;
    s.furniture_max = furniture_max;
    s.furn_size_min = furn_size_min;
    s.furn_size_max = furn_size_max;
    s.furn_height_min = furn_height_min;
    s.furn_height_max = furn_height_max;
    return s;
  }

  TrainingSampleParams to_sample_params() const {
    TrainingSampleParams t;
    t.m = m_nearby;
    t.jitter_deg = jitter_deg;
    t.jitter_m = jitter_m;
    t.distance_scale = distance_scale;
    t.action_width = render_width;
    t.action_height = render_height;
    t.action_vfov_deg = vfov_deg;
    return t;
  }

  InitialViewParams to_initial_view() const {
    InitialViewParams v;
    v.width = render_width;
    v.height = render_height;
    v.vfov_deg = vfov_deg;
    return v;
  }

  QNetConfig to_qnet() const {
    QNetConfig q;
    q.input_dim = encode_res * encode_res;
    q.views = kActionViewCount;
    q.actions = kActionViewCount;
    q.enc_hidden = enc_hidden;
    q.embed_dim = embed_dim;
    q.trunk_dim = trunk_dim;
    return q;
  }

  EpsilonSchedule to_eps() const { return {eps_start, eps_end, eps_decay_steps}; }

  TrainStepConfig to_train() const {
    return {static_cast<std::size_t>(batch_size), gamma, lr, clip_norm};
  }

  /// Thread count after the VIEWFILL_THREADS environment override;
  /// 0 in the config means available hardware parallelism.
  int effective_threads() const {
    if (const char* env = std::getenv("VIEWFILL_THREADS")) {
      const int v = std::atoi(env);
      if (v > 0) return v;
    }
    if (threads > 0) return threads;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
  }
};

}  // namespace viewfill
