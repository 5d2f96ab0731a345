// Batch experiment driver: dataset generation, planner training, completion
// runs, and evaluation. Every command is reproducible from (config, seed) and
// all outputs are written atomically.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <viewfill/config.hpp>
#include <viewfill/io.hpp>
#include <viewfill/metrics.hpp>
#include <viewfill/parallel.hpp>
#include <viewfill/pipeline.hpp>
#include <viewfill/rng.hpp>
#include <viewfill/scenegen.hpp>

namespace fs = std::filesystem;
using namespace viewfill;

namespace {

std::string scene_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04zu", i);
  return buf;
}

std::vector<fs::path> subdirs_with(const fs::path& root, const std::string& file) {
  if (!fs::is_directory(root))
    throw std::runtime_error("not a directory: " + root.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && fs::exists(e.path() / file)) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// gen-data: procedural scenes -> rendered training/eval samples on disk.

void cmd_gen_data(const Config& cfg, const fs::path& out) {
  fs::create_directories(out);
  const SceneGenParams sp = cfg.to_scenegen();
  const InitialViewParams vp = cfg.to_initial_view();
  const TrainingSampleParams tp = cfg.to_sample_params();

  parallel_for(static_cast<std::size_t>(cfg.n_scenes), cfg.effective_threads(),
               [&](std::size_t i) {
                 const std::uint64_t base = derive_seed(cfg.seed, i);
                 std::string last_err = "unknown";
                 // Scene synthesis and view sampling are rejection loops that can
                 // report failure for unlucky draws; retry with fresh sub-seeds.
                 for (int attempt = 0; attempt < 64; ++attempt) {
                   try {
                     const Scene scene =
                         generate_scene(derive_seed(base, 0x5ce0eULL + attempt), sp);
                     std::mt19937_64 rng(derive_seed(base, 0xca3e1ULL + attempt));
                     const Camera cam = sample_initial_view(scene, rng, vp);
                     const TrainingSample sample = make_training_sample(scene, cam, tp, rng);
                     io::save_dataset_entry(out / scene_name(i), scene, sample);
                     return;
                   } catch (const std::exception& e) {
                     last_err = e.what();
                   }
                 }
                 throw std::runtime_error("gen-data: scene " + std::to_string(i) +
                                          " failed after 64 attempts: " + last_err);
               });
  std::cout << "gen-data: wrote " << cfg.n_scenes << " scenes to " << out.string() << "\n";
}

// ---------------------------------------------------------------------------
// train-planner: replay pre-fill, then eps-greedy episodes with one gradient
// step per collected transition. Single-threaded by contract so that the log
// is bit-reproducible.

void cmd_train_planner(const Config& cfg, const fs::path& dataset, const fs::path& out,
                       const std::string& resume) {
  fs::create_directories(out);
  const std::vector<fs::path> dirs = io::dataset_entries(dataset);
  if (dirs.empty()) throw std::runtime_error("train-planner: no scenes under " + dataset.string());
  const std::size_t n_train = std::min<std::size_t>(cfg.train_scenes, dirs.size());

  std::vector<io::DatasetEntry> train;
  train.reserve(n_train);
  for (std::size_t i = 0; i < n_train; ++i) train.push_back(io::load_dataset_entry(dirs[i]));

  QNetwork net(cfg.to_qnet(), derive_seed(cfg.seed, 0xa11ceULL));
  if (!resume.empty()) io::load_checkpoint(resume, net);
  QNetwork target = net;

  ReplayBuffer buffer(cfg.buffer_capacity);
  const PipelineConfig pcfg = cfg.to_pipeline();
  const Inpainter inp = inpainter_from_string(cfg.inpainter);
  const Completer com = completer_from_string(cfg.completer);
  const EpsilonSchedule sched = cfg.to_eps();
  const TrainStepConfig tcfg = cfg.to_train();
  std::mt19937_64 sample_rng(derive_seed(cfg.seed, 0x7e57ULL));

  std::string log = "step,episode,loss,epsilon,mean_reward,hole_ratio\n";
  std::int64_t step = 0;
  const int total = cfg.fill_episodes + cfg.train_episodes;
  for (int e = 0; e < total; ++e) {
    const bool prefill = e < cfg.fill_episodes;
    const io::DatasetEntry& entry = train[e % n_train];
    std::mt19937_64 ep_rng(derive_seed(cfg.seed, 0xe900dULL + e));
    const double eps = prefill ? 0.0 : sched.value(step);

    EpisodeResult ep = run_episode(entry.sample, net, eps, inp, com, pcfg, ep_rng);

    double reward_sum = 0.0;
    for (const Transition& t : ep.transitions) reward_sum += t.reward;
    const double mean_reward =
        ep.transitions.empty() ? 0.0 : reward_sum / static_cast<double>(ep.transitions.size());
    const double area0 = static_cast<double>(ep.trace.area_initial);
    const double hole_ratio =
        area0 <= 0.0 ? 0.0
                     : (ep.trace.records.empty()
                            ? 1.0
                            : static_cast<double>(ep.trace.records.back().holes_after) / area0);

    const std::size_t n_new = ep.transitions.size();
    for (Transition& t : ep.transitions) buffer.push(std::move(t));
    if (prefill) continue;

    for (std::size_t u = 0; u < n_new; ++u) {
      const double loss = train_step(buffer, net, target, sample_rng, tcfg);
      ++step;
      log += std::to_string(step) + "," + std::to_string(e) + "," + io::fmt_double(loss) + "," +
             io::fmt_double(eps) + "," + io::fmt_double(mean_reward) + "," +
             io::fmt_double(hole_ratio) + "\n";
      if (step % cfg.sync_period == 0) sync_target(net, target);
    }
    const int train_ep = e - cfg.fill_episodes + 1;
    if (train_ep % cfg.checkpoint_every == 0) {
      char buf[48];
      std::snprintf(buf, sizeof buf, "checkpoint_ep%04d.dqn", train_ep);
      io::save_checkpoint(out / buf, net);
    }
  }
  io::save_checkpoint(out / "checkpoint.dqn", net);
  io::write_atomic(out / "train_log.csv", log);
  std::cout << "train-planner: " << step << " train steps, checkpoint at "
            << (out / "checkpoint.dqn").string() << "\n";
}

// ---------------------------------------------------------------------------
// complete: run the progressive loop on one scene directory or on every scene
// of a dataset. Scenes are independent; each gets its own RNG stream keyed by
// scene name so outputs do not depend on the thread count.

void cmd_complete(const Config& cfg, const fs::path& dataset, const fs::path& out,
                  const std::string& policy_name, const std::string& checkpoint) {
  std::optional<QNetwork> net;
  Policy policy;
  if (policy_name == "dqn") {
    if (checkpoint.empty())
      throw std::invalid_argument("complete: --checkpoint is required with --policy dqn");
    net.emplace(cfg.to_qnet(), 0);
    io::load_checkpoint(checkpoint, *net);
    policy = greedy_policy(*net);
  } else if (policy_name == "uniform5") {
    policy = uniform_policy(5);
  } else if (policy_name == "uniform10") {
    policy = uniform_policy(10);
  } else if (policy_name == "random") {
    policy = random_policy();
  } else {
    throw std::invalid_argument("complete: unknown policy '" + policy_name + "'");
  }

  const std::vector<fs::path> dirs = fs::exists(dataset / "scene.json")
                                         ? std::vector<fs::path>{dataset}
                                         : io::dataset_entries(dataset);
  if (dirs.empty()) throw std::runtime_error("complete: no scenes under " + dataset.string());
  fs::create_directories(out);

  const PipelineConfig pcfg = cfg.to_pipeline();
  const Inpainter inp = inpainter_from_string(cfg.inpainter);
  const Completer com = completer_from_string(cfg.completer);

  parallel_for(dirs.size(), cfg.effective_threads(), [&](std::size_t i) {
    const std::string id = dirs[i].filename().string();
    const io::DatasetEntry entry = io::load_dataset_entry(dirs[i]);
    std::mt19937_64 rng(derive_seed(cfg.seed, fnv1a(id)));
    const CompletionResult res = complete_scene(entry.sample.input, entry.sample.input_cam,
                                                policy, inp, com, pcfg, rng, &entry.sample);
    const fs::path dir = out / id;
    fs::create_directories(dir);
    io::save_ply(dir / "cloud.ply", res.cloud);
    io::save_trace(dir / "trace.jsonl", res.trace);
  });
  std::cout << "complete: policy " << policy_name << ", " << dirs.size() << " scene(s) -> "
            << out.string() << "\n";
}

// ---------------------------------------------------------------------------
// evaluate: chamfer distance and completeness of every run against freshly
// sampled ground-truth surface points, in scene-diameter-normalized units.

std::string threshold_label(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", t);
  const double back = std::strtod(buf, nullptr);
  if (std::abs(back - t) <= 1e-12 * std::max(1.0, std::abs(t))) return buf;
  std::snprintf(buf, sizeof buf, "%g", t);
  return buf;
}

void cmd_evaluate(const Config& cfg, const fs::path& runs, const fs::path& dataset,
                  const fs::path& out_csv) {
  const std::vector<fs::path> methods = subdirs_with(runs, "");
  struct Job {
    std::string method, scene;
    fs::path cloud;
  };
  std::vector<Job> jobs;
  for (const fs::path& m : methods)
    for (const fs::path& s : subdirs_with(m, "cloud.ply"))
      jobs.push_back({m.filename().string(), s.filename().string(), s / "cloud.ply"});
  if (jobs.empty()) throw std::runtime_error("evaluate: no <method>/<scene>/cloud.ply under " +
                                             runs.string());

  // Ground truth per scene: one surface sample shared by all methods.
  struct Gt {
    PointCloud cloud;
    double diameter = 0.0;
  };
  std::map<std::string, Gt> gt;
  for (const Job& j : jobs) gt.emplace(j.scene, Gt{});
  {
    std::vector<std::string> ids;
    for (auto& [id, g] : gt) ids.push_back(id);
    parallel_for(ids.size(), cfg.effective_threads(), [&](std::size_t i) {
      const Scene scene = io::load_scene(dataset / ids[i] / "scene.json");
      Gt& g = gt.at(ids[i]);
      g.cloud = sample_surface(scene, static_cast<std::size_t>(cfg.eval_gt_points),
                               derive_seed(cfg.seed ^ 0xe7a1ULL, fnv1a(ids[i])));
      g.diameter = 2.0 * bounding_sphere(g.cloud).radius;
      if (!(g.diameter > 0.0))
        throw std::runtime_error("evaluate: degenerate ground truth for " + ids[i]);
    });
  }

  struct Row {
    double cd = 0.0;
    std::vector<double> comp;
  };
  std::vector<Row> rows(jobs.size());
  parallel_for(jobs.size(), cfg.effective_threads(), [&](std::size_t i) {
    const PointCloud pred = io::load_ply(jobs[i].cloud);
    if (pred.points.empty())
      throw std::runtime_error("evaluate: empty prediction " + jobs[i].cloud.string());
    const Gt& g = gt.at(jobs[i].scene);
    Row r;
    r.cd = chamfer(pred.points, g.cloud.points).symmetric / g.diameter;
    for (double t : cfg.thresholds)
      r.comp.push_back(completeness(pred.points, g.cloud.points, t * g.diameter));
    rows[i] = std::move(r);
  });

  std::string csv = "method,scene,cd";
  for (double t : cfg.thresholds) csv += ",c_" + threshold_label(t);
  csv += "\n";
  std::size_t i = 0;
  while (i < jobs.size()) {
    const std::string& method = jobs[i].method;
    Row mean;
    mean.comp.assign(cfg.thresholds.size(), 0.0);
    std::size_t count = 0;
    for (; i < jobs.size() && jobs[i].method == method; ++i, ++count) {
      csv += method + "," + jobs[i].scene + "," + io::fmt_double(rows[i].cd);
      mean.cd += rows[i].cd;
      for (std::size_t k = 0; k < rows[i].comp.size(); ++k) {
        csv += "," + io::fmt_double(rows[i].comp[k]);
        mean.comp[k] += rows[i].comp[k];
      }
      csv += "\n";
    }
    csv += method + ",mean," + io::fmt_double(mean.cd / static_cast<double>(count));
    for (double c : mean.comp) csv += "," + io::fmt_double(c / static_cast<double>(count));
    csv += "\n";
  }
  if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
  io::write_atomic(out_csv, csv);
  std::cout << "evaluate: " << jobs.size() << " run(s) -> " << out_csv.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"progressive multi-view depth completion"};
  app.require_subcommand(1);

  struct {
    std::string config, out, dataset, runs, policy = "dqn", checkpoint;
    std::uint64_t seed = 0;
  } opt;

  // Each subcommand gets its own --seed option; the callback must consult the
  // option it owns, since only the parsed subcommand's count is meaningful.
  auto common = [&](CLI::App* c, bool needs_out) -> CLI::Option* {
    c->add_option("--config", opt.config, "key=value config file")
        ->required()
        ->check(CLI::ExistingFile);
    if (needs_out) c->add_option("--out", opt.out, "output path")->required();
    return c->add_option("--seed", opt.seed, "override the config seed");
  };
  auto config = [&](const CLI::Option* seed_opt) {
    Config c = Config::load(opt.config);
    if (seed_opt->count() > 0) c.seed = opt.seed;
    return c;
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic scene dataset");
  const CLI::Option* gen_seed = common(gen, true);
  gen->callback([&, gen_seed]() { cmd_gen_data(config(gen_seed), opt.out); });

  CLI::App* train = app.add_subcommand("train-planner", "train the view-planning network");
  const CLI::Option* train_seed = common(train, true);
  train->add_option("--dataset", opt.dataset, "dataset directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  train->add_option("--checkpoint", opt.checkpoint, "resume from this checkpoint");
  train->callback(
      [&, train_seed]() { cmd_train_planner(config(train_seed), opt.dataset, opt.out, opt.checkpoint); });

  CLI::App* complete = app.add_subcommand("complete", "run progressive completion on scenes");
  const CLI::Option* complete_seed = common(complete, true);
  complete->add_option("--dataset", opt.dataset, "dataset directory (or a single scene directory)")
      ->required()
      ->check(CLI::ExistingDirectory);
  complete->add_option("--policy", opt.policy, "dqn|uniform5|uniform10|random")
      ->check(CLI::IsMember({"dqn", "uniform5", "uniform10", "random"}));
  complete->add_option("--checkpoint", opt.checkpoint, "network checkpoint (required for dqn)");
  complete->callback([&, complete_seed]() {
    cmd_complete(config(complete_seed), opt.dataset, opt.out, opt.policy, opt.checkpoint);
  });

  CLI::App* eval = app.add_subcommand("evaluate", "score completion runs against ground truth");
  const CLI::Option* eval_seed = common(eval, true);
  eval->add_option("--runs", opt.runs, "directory of <method>/<scene>/cloud.ply runs")
      ->required()
      ->check(CLI::ExistingDirectory);
  eval->add_option("--dataset", opt.dataset, "ground-truth dataset directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  eval->callback(
      [&, eval_seed]() { cmd_evaluate(config(eval_seed), opt.runs, opt.dataset, opt.out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
