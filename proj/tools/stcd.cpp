// stcd: temporal-coherence video detection pipeline on synthetic data.
// Subcommands cover dataset generation, the two training stages, streaming
// inference, evaluation, threshold sweeps, scheduling ablations, runtime
// benchmarks, the analytic cost model and the built-in verification suite.

#include <cstdlib>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "stcd/checkpoint.hpp"
#include "stcd/config.hpp"
#include "stcd/detector.hpp"
#include "stcd/evalbench.hpp"
#include "stcd/scheduler.hpp"
#include "stcd/selfcheck.hpp"
#include "stcd/synthgen.hpp"
#include "stcd/training.hpp"

namespace fs = std::filesystem;
using namespace stcd;

namespace {

constexpr const char* kVersion = "stcd 1.0.0";

struct RunContext {
  FullConfig cfg;
  std::string subcommand;
  fs::path results_dir;
  std::map<std::string, std::string> input_hashes;
  std::vector<std::string> outputs;

  std::string hash16() const {
    return detail::hex64(config_hash(cfg)).substr(0, 16);
  }

  fs::path out_file(const std::string& stem, const std::string& ext) const {
    return results_dir / (stem + "_" + hash16().substr(0, 8) + ext);
  }
};

std::uint64_t path_checksum(const fs::path& p) {
  if (fs::is_directory(p)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(p))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& f : files) {
      const std::string rel = fs::relative(f, p).string();
      h = fnv1a64(rel.data(), rel.size(), h);
      const std::uint64_t fh = detail::file_checksum(f);
      h = fnv1a64(&fh, sizeof fh, h);
    }
    return h;
  }
  return detail::file_checksum(p);
}

void note_input(RunContext& ctx, const fs::path& p) {
  ctx.input_hashes[p.string()] = detail::hex64(path_checksum(p));
}

void write_manifest(RunContext& ctx) {
  nlohmann::json m;
  m["subcommand"] = ctx.subcommand;
  m["version"] = kVersion;
  m["seed"] = ctx.cfg.seed;
  m["config_hash"] = detail::hex64(config_hash(ctx.cfg));
  nlohmann::json cfg_json;
  std::istringstream echo(echo_config(ctx.cfg));
  std::string line;
  while (std::getline(echo, line)) {
    const auto eq = line.find('=');
    cfg_json[line.substr(0, eq)] = line.substr(eq + 1);
  }
  m["config"] = cfg_json;
  m["inputs"] = ctx.input_hashes;
  m["outputs"] = ctx.outputs;
  const fs::path path = ctx.results_dir / ("manifest_" + ctx.subcommand + "_" +
                                           ctx.hash16().substr(0, 8) + ".json");
  fs::create_directories(ctx.results_dir);
  std::ofstream os(path, std::ios::binary);
  os << m.dump(2) << "\n";
  std::cerr << "manifest: " << path.string() << "\n";
}

GenConfig gen_for(const FullConfig& cfg, const char* purpose) {
  GenConfig g = cfg.gen;
  g.seed = cfg.derive_seed(purpose);
  return g;
}

CheckpointMeta meta_for(const RunContext& ctx, std::uint64_t epoch) {
  return CheckpointMeta{epoch, ctx.cfg.seed, config_hash(ctx.cfg)};
}

// ---------------------------------------------------------------------------

int cmd_gen_data(RunContext& ctx, const fs::path& out) {
  const auto& cfg = ctx.cfg;
  {
    auto stills = gen_stills(gen_for(cfg, "stills_train"), cfg.n_stills_train);
    write_stills(out / "stills_train", stills);
    std::cerr << "wrote " << stills.size() << " training stills\n";
  }
  {
    auto stills = gen_stills(gen_for(cfg, "stills_test"), cfg.n_stills_test);
    write_stills(out / "stills_test", stills);
    std::cerr << "wrote " << stills.size() << " test stills\n";
  }
  {
    GenConfig g = gen_for(cfg, "videos_unlabeled");
    std::vector<VideoSequence> seqs;
    for (int i = 0; i < cfg.n_videos_unlabeled; ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "train_%03d", i);
      seqs.push_back(strip_labels(gen_sequence(g, id)));
    }
    write_sequences(out / "videos_unlabeled", seqs);
    std::cerr << "wrote " << seqs.size() << " unlabeled sequences\n";
  }
  {
    GenConfig g = gen_for(cfg, "videos_test");
    std::vector<VideoSequence> seqs;
    for (int i = 0; i < cfg.n_videos_test; ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "test_%03d", i);
      seqs.push_back(gen_sequence(g, id));
    }
    write_sequences(out / "videos_test", seqs);
    std::cerr << "wrote " << seqs.size() << " labeled test sequences\n";
  }
  ctx.outputs.push_back(out.string());
  return 0;
}

int cmd_train_detector(RunContext& ctx, const fs::path& data, const fs::path& out) {
  note_input(ctx, data);
  auto stills = read_stills(data);
  std::cerr << "training detector on " << stills.size() << " stills\n";
  auto result = train_detector(stills, ctx.cfg.arch, ctx.cfg.det, ctx.cfg.det_train);
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e)
    std::cerr << "  epoch " << e << " loss " << result.epoch_loss[e] << "\n";
  save_checkpoint(out, pack_checkpoint(result.net, meta_for(ctx, static_cast<std::uint64_t>(
                                                                ctx.cfg.det_train.epochs))));
  ctx.outputs.push_back(out.string());
  std::cerr << "checkpoint: " << out.string() << "\n";
  return 0;
}

int cmd_train_stcd(RunContext& ctx, const fs::path& data, const fs::path& det_ckpt,
                   const fs::path& out) {
  note_input(ctx, data);
  note_input(ctx, det_ckpt);
  auto videos = read_sequences(data);
  const auto use = static_cast<std::size_t>(
      std::max<double>(1.0, std::ceil(ctx.cfg.unlabeled_fraction * static_cast<double>(videos.size()))));
  videos.resize(std::min(videos.size(), use));
  std::cerr << "training temporal networks on " << videos.size() << " sequences\n";

  ModelBundle bundle = unpack_checkpoint(load_checkpoint(det_ckpt), ctx.cfg.arch, false);
  auto result = train_stcd(videos, bundle.detector, ctx.cfg.train);
  for (std::size_t e = 0; e < result.epoch_feat_loss.size(); ++e)
    std::cerr << "  epoch " << e << " mimic " << result.epoch_feat_loss[e] << " score "
              << result.epoch_dec_loss[e] << "\n";
  save_checkpoint(out, pack_checkpoint(bundle.detector, result.nets,
                                       meta_for(ctx, static_cast<std::uint64_t>(
                                                         ctx.cfg.train.total_epochs))));
  ctx.outputs.push_back(out.string());
  std::cerr << "checkpoint: " << out.string() << "\n";
  return 0;
}

SchedPolicy policy_from(const FullConfig& cfg) {
  SchedPolicy p;
  p.mode = cfg.mode_enum();
  p.tau = cfg.tau;
  p.theta = cfg.tau;  // the grey/flow statistic threshold rides the same knob
  p.fixed_n = std::max(1, static_cast<int>(std::lround(cfg.tau)));
  p.warp_mode = cfg.warp_mode_enum();
  return p;
}

int cmd_infer(RunContext& ctx, const fs::path& ckpt_path, const fs::path& seq_dir) {
  note_input(ctx, ckpt_path);
  note_input(ctx, seq_dir);
  ModelBundle bundle = unpack_checkpoint(load_checkpoint(ckpt_path), ctx.cfg.arch, true);
  VideoSequence seq = read_sequence(seq_dir);
  auto run = run_sequence(bundle.detector, bundle.temporal, ctx.cfg.det, policy_from(ctx.cfg), seq);

  nlohmann::json out;
  out["seq_id"] = seq.seq_id;
  nlohmann::json frames = nlohmann::json::array();
  for (std::size_t i = 0; i < run.per_frame.size(); ++i) {
    nlohmann::json jf;
    jf["index"] = i;
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& d : run.per_frame[i])
      boxes.push_back({d.box.x0, d.box.y0, d.box.x1, d.box.y1, d.score});
    jf["boxes"] = boxes;
    frames.push_back(jf);
  }
  out["frames"] = frames;

  const fs::path det_path = ctx.out_file("detections_" + seq.seq_id, ".json");
  fs::create_directories(ctx.results_dir);
  std::ofstream os(det_path, std::ios::binary);
  os << out.dump(2) << "\n";
  const fs::path diag_path = ctx.out_file("diagnostics_" + seq.seq_id, ".csv");
  write_text_file(diag_path, diagnostics_csv(run.diags));
  ctx.outputs.push_back(det_path.string());
  ctx.outputs.push_back(diag_path.string());
  std::cerr << "detections: " << det_path.string() << "\ndiagnostics: " << diag_path.string()
            << "\n";
  return 0;
}

int cmd_eval(RunContext& ctx, const fs::path& ckpt_path, const fs::path& data) {
  note_input(ctx, ckpt_path);
  note_input(ctx, data);
  ModelBundle bundle = unpack_checkpoint(load_checkpoint(ckpt_path), ctx.cfg.arch, true);
  auto videos = read_sequences(data);
  EvalResult r = evaluate_sequences(bundle.detector, bundle.temporal, ctx.cfg.det,
                                    policy_from(ctx.cfg), videos, ctx.cfg.iou_thr, ctx.cfg.seed);
  const fs::path path = ctx.out_file("eval_" + r.mode, ".csv");
  write_text_file(path, results_csv({r}));
  ctx.outputs.push_back(path.string());
  std::cerr << "mode " << r.mode << " map " << r.map << " key_fraction " << r.key_fraction
            << " flops/frame " << r.flops_per_frame << "\nresults: " << path.string() << "\n";
  return 0;
}

std::vector<double> auto_tau_list(const RunContext& ctx, const ModelBundle& bundle,
                                  const std::vector<VideoSequence>& videos) {
  // probe pass with an unreachable threshold to observe the score range
  SchedPolicy probe;
  probe.mode = SchedMode::decision_net;
  probe.tau = 1e30;
  probe.warp_mode = ctx.cfg.warp_mode_enum();
  std::vector<double> scores;
  for (const auto& v : videos) {
    auto run = run_sequence(bundle.detector, bundle.temporal, ctx.cfg.det, probe, v);
    for (const auto& d : run.diags)
      if (d.s_i) scores.push_back(*d.s_i);
  }
  require(!scores.empty(), errc::invalid_argument, "no scores observed for the sweep");
  std::sort(scores.begin(), scores.end());
  std::vector<double> taus;
  const int n = ctx.cfg.sweep_points;
  for (int i = 0; i < n; ++i) {
    const double q = static_cast<double>(i) / (n - 1);
    const auto idx = static_cast<std::size_t>(q * (static_cast<double>(scores.size()) - 1));
    double t = scores[idx];
    if (i == 0) t -= 1e-6;      // below the minimum: refresh on every frame
    if (i == n - 1) t += 1e-6;  // above the maximum: first frames only
    taus.push_back(t);
  }
  return taus;
}

int cmd_sweep_tau(RunContext& ctx, const fs::path& ckpt_path, const fs::path& data) {
  note_input(ctx, ckpt_path);
  note_input(ctx, data);
  ModelBundle bundle = unpack_checkpoint(load_checkpoint(ckpt_path), ctx.cfg.arch, true);
  auto videos = read_sequences(data);
  std::vector<double> taus = ctx.cfg.parse_tau_list();
  if (taus.empty()) taus = auto_tau_list(ctx, bundle, videos);
  SchedPolicy pol = policy_from(ctx.cfg);
  auto rows = sweep_tau(bundle.detector, bundle.temporal, ctx.cfg.det, pol, taus, videos,
                        ctx.cfg.iou_thr, ctx.cfg.seed);
  const fs::path path = ctx.out_file("sweep_tau", ".csv");
  write_text_file(path, results_csv(rows));
  ctx.outputs.push_back(path.string());
  for (const auto& r : rows)
    std::cerr << "tau " << r.tau << " key_fraction " << r.key_fraction << " map " << r.map << "\n";
  std::cerr << "results: " << path.string() << "\n";
  return 0;
}

int cmd_ablate(RunContext& ctx, const fs::path& ckpt_path, const fs::path& data) {
  note_input(ctx, ckpt_path);
  note_input(ctx, data);
  ModelBundle bundle = unpack_checkpoint(load_checkpoint(ckpt_path), ctx.cfg.arch, true);
  auto videos = read_sequences(data);
  auto rows = ablate_scheduler(bundle.detector, bundle.temporal, ctx.cfg.det, ctx.cfg.tau, videos,
                               ctx.cfg.iou_thr, ctx.cfg.seed);
  std::vector<EvalResult> results;
  int failures = 0;
  for (const auto& row : rows) {
    results.push_back(row.result);
    std::cerr << "mode " << row.result.mode << " param " << row.result.tau << " key_fraction "
              << row.result.key_fraction << " map " << row.result.map
              << (row.calibrated ? "" : "  [calibration failed]") << "\n";
    failures += row.calibrated ? 0 : 1;
  }
  const fs::path path = ctx.out_file("ablate_scheduler", ".csv");
  write_text_file(path, results_csv(results));
  ctx.outputs.push_back(path.string());
  std::cerr << "results: " << path.string() << "\n";
  return failures == 0 ? 0 : 1;
}

int cmd_bench(RunContext& ctx, const fs::path& ckpt_path, const fs::path& data) {
  note_input(ctx, ckpt_path);
  note_input(ctx, data);
  ModelBundle bundle = unpack_checkpoint(load_checkpoint(ckpt_path), ctx.cfg.arch, true);
  auto videos = read_sequences(data);
  SchedPolicy pol = policy_from(ctx.cfg);
  EvalResult r = evaluate_sequences(bundle.detector, bundle.temporal, ctx.cfg.det, pol, videos,
                                    ctx.cfg.iou_thr, ctx.cfg.seed);
  auto stats = benchmark_runtime(bundle.detector, bundle.temporal, ctx.cfg.det, pol, videos,
                                 ctx.cfg.bench_repeats);
  r.ms_per_frame_mean = stats.ms_per_frame_mean;
  r.ms_per_frame_std = stats.ms_per_frame_std;
  const fs::path path = ctx.out_file("bench_" + r.mode, ".csv");
  write_text_file(path, results_csv({r}));
  ctx.outputs.push_back(path.string());
  std::cerr << "mode " << r.mode << ": " << stats.ms_per_frame_mean << " +- "
            << stats.ms_per_frame_std << " ms/frame over " << stats.frames
            << " frames; model " << r.flops_per_frame << " flops/frame\nresults: "
            << path.string() << "\n";
  return 0;
}

int cmd_flops(RunContext& ctx) {
  const FlopModel m = FlopModel::from(ctx.cfg.arch);
  std::string csv = "component,flops\n";
  csv += "backbone," + std::to_string(m.backbone) + "\n";
  csv += "heads," + std::to_string(m.heads) + "\n";
  csv += "motion," + std::to_string(m.motion) + "\n";
  csv += "decision," + std::to_string(m.decision) + "\n";
  csv += "warp_net," + std::to_string(m.warp_net) + "\n";
  csv += "flow_head," + std::to_string(m.flow_head) + "\n";
  csv += "bilinear_warp," + std::to_string(m.bilinear_warp) + "\n";
  csv += "key_path," + std::to_string(m.key_path()) + "\n";
  csv += "nonkey_path," + std::to_string(m.nonkey_path()) + "\n";
  csv += "framewise," + std::to_string(m.framewise()) + "\n";
  const fs::path path = ctx.out_file("flops", ".csv");
  write_text_file(path, csv);
  ctx.outputs.push_back(path.string());
  std::cerr << csv;
  std::cerr << "nonkey/key ratio: "
            << static_cast<double>(m.nonkey_path()) / static_cast<double>(m.key_path()) << "\n";
  return 0;
}

int cmd_selftest(RunContext& ctx) {
  (void)ctx;
  auto rep = selfcheck::run_selftest();
  std::cerr << "selftest: " << rep.passed << " passed, " << rep.failed << " failed\n";
  for (const auto& f : rep.failures) std::cerr << "  FAILED: " << f << "\n";
  return rep.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"temporal-coherence video detection pipeline (synthetic desk-scale)"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config_file;
  std::string results_dir_flag;
  bool show_keys = false;
  app.add_option("--config", config_file, "key=value config file");
  app.add_option("--results-dir", results_dir_flag, "output root for results and manifests");
  app.add_flag("--config-keys", show_keys, "print every config key with default and doc, then exit");

  struct SubArgs {
    std::vector<std::string> overrides;
    std::string data, out, ckpt, detector, seq;
  };
  std::map<std::string, SubArgs> args;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("overrides", args[sub->get_name()].overrides,
                    "key=value settings applied after the config file");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic datasets");
  gen->add_option("--out", args["gen-data"].out, "dataset root directory")->required();
  add_common(gen);

  CLI::App* td = app.add_subcommand("train-detector", "supervised training on labeled stills");
  td->add_option("--data", args["train-detector"].data, "stills dataset directory")->required();
  td->add_option("--out", args["train-detector"].out, "output checkpoint path")->required();
  add_common(td);

  CLI::App* ts = app.add_subcommand("train-stcd", "semi-supervised temporal training");
  ts->add_option("--data", args["train-stcd"].data, "unlabeled videos directory")->required();
  ts->add_option("--detector", args["train-stcd"].detector, "detector checkpoint")->required();
  ts->add_option("--out", args["train-stcd"].out, "output checkpoint path")->required();
  add_common(ts);

  CLI::App* inf = app.add_subcommand("infer", "stream one sequence through the scheduler");
  inf->add_option("--ckpt", args["infer"].ckpt, "full checkpoint")->required();
  inf->add_option("--seq", args["infer"].seq, "sequence directory")->required();
  add_common(inf);

  CLI::App* ev = app.add_subcommand("eval", "evaluate on labeled test videos");
  ev->add_option("--ckpt", args["eval"].ckpt, "full checkpoint")->required();
  ev->add_option("--data", args["eval"].data, "labeled videos directory")->required();
  add_common(ev);

  CLI::App* sw = app.add_subcommand("sweep-tau", "evaluate across refresh thresholds");
  sw->add_option("--ckpt", args["sweep-tau"].ckpt, "full checkpoint")->required();
  sw->add_option("--data", args["sweep-tau"].data, "labeled videos directory")->required();
  add_common(sw);

  CLI::App* ab = app.add_subcommand("ablate-scheduler", "compare scheduling policies at matched rate");
  ab->add_option("--ckpt", args["ablate-scheduler"].ckpt, "full checkpoint")->required();
  ab->add_option("--data", args["ablate-scheduler"].data, "labeled videos directory")->required();
  add_common(ab);

  CLI::App* be = app.add_subcommand("bench", "wall-clock benchmark of the configured mode");
  be->add_option("--ckpt", args["bench"].ckpt, "full checkpoint")->required();
  be->add_option("--data", args["bench"].data, "labeled videos directory")->required();
  add_common(be);

  CLI::App* fl = app.add_subcommand("flops", "print the analytic per-path cost model");
  add_common(fl);

  CLI::App* st = app.add_subcommand("selftest", "run the built-in verification suites");
  add_common(st);

  CLI11_PARSE(app, argc, argv);

  if (show_keys) {
    std::cout << config_docs();
    return 0;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    RunContext ctx;
    ctx.subcommand = name;
    const fs::path cfg_path(config_file);
    ctx.cfg = parse_config(config_file.empty() ? nullptr : &cfg_path, args[name].overrides);

    if (const char* env = std::getenv("STCD_RESULTS_DIR"); env && *env)
      ctx.results_dir = env;
    else if (!results_dir_flag.empty())
      ctx.results_dir = results_dir_flag;
    else
      ctx.results_dir = ctx.cfg.results_dir;
    if (!config_file.empty()) note_input(ctx, cfg_path);

    int rc = 1;
    const auto& a = args[name];
    if (name == "gen-data") rc = cmd_gen_data(ctx, a.out);
    else if (name == "train-detector") rc = cmd_train_detector(ctx, a.data, a.out);
    else if (name == "train-stcd") rc = cmd_train_stcd(ctx, a.data, a.detector, a.out);
    else if (name == "infer") rc = cmd_infer(ctx, a.ckpt, a.seq);
    else if (name == "eval") rc = cmd_eval(ctx, a.ckpt, a.data);
    else if (name == "sweep-tau") rc = cmd_sweep_tau(ctx, a.ckpt, a.data);
    else if (name == "ablate-scheduler") rc = cmd_ablate(ctx, a.ckpt, a.data);
    else if (name == "bench") rc = cmd_bench(ctx, a.ckpt, a.data);
    else if (name == "flops") rc = cmd_flops(ctx);
    else if (name == "selftest") rc = cmd_selftest(ctx);
    write_manifest(ctx);
    return rc;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
