#include <malloc.h>

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "pushgrasp/config.hpp"
#include "pushgrasp/svg.hpp"

using namespace pushgrasp;

namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "config file of 'key = value' lines")->check(CLI::ExistingFile);
  cmd->add_option("--set", o.overrides, "override one config key (key=value); repeatable");
  cmd->add_option("--seed", o.seed, "seed (overrides config and PUSHGRASP_SEED)");
  cmd->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
}

// Built-in defaults < PUSHGRASP_SEED < config file < --set < dedicated flags.
Config load_config(const CommonOptions& o) {
  Config c;
  if (const char* env = std::getenv("PUSHGRASP_SEED"); env && *env) c.set("seed", env);
  if (!o.config_path.empty()) c.load_file(o.config_path);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error("--set expects key=value, got '" + kv + "'");
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) c.set("seed", std::to_string(*o.seed));
  if (o.jobs) c.set("jobs", std::to_string(*o.jobs));
  c.validate();
  return c;
}

std::uint64_t seed_of(const Config& c) { return static_cast<std::uint64_t>(c.integer("seed")); }
int jobs_of(const Config& c) { return static_cast<int>(c.integer("jobs")); }

// "5.0e-5" style: one decimal, unpadded exponent.
std::string format_lr(double lr) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1e", lr);
  std::string s(buf);
  const auto e = s.find('e');
  std::string exp = s.substr(e + 1);
  const bool neg = exp[0] == '-';
  exp = exp.substr(1);
  while (exp.size() > 1 && exp[0] == '0') exp.erase(0, 1);
  return s.substr(0, e + 1) + (neg ? "-" : "") + exp;
}

Checkpoint load_checkpoint_file(const std::string& path) {
  if (path.empty()) throw Error("a checkpoint path is required");
  return parse_checkpoint(read_file_bytes(path));
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
}

void print_stats(const DatagenStats& st, SampleKind kind) {
  std::printf("scenes visited %zu, skipped %zu\n", st.scenes, st.skipped_total());
  for (const auto& [reason, n] : st.skipped) std::printf("  skipped %s: %zu\n", reason.c_str(), n);
  std::printf("class balance: %zu positive / %zu negative (positive rate %.3f)\n", st.positives, st.negatives,
              st.positive_rate());
  for (const auto& [o, n] : st.outcomes) std::printf("  outcome %s: %zu\n", o.c_str(), n);
  if (kind == SampleKind::grasp && (st.positive_rate() <= 0.1 || st.positive_rate() >= 0.9))
    std::fprintf(stderr, "warning: degenerate class balance for training\n");
}

ProgressCallback progress_printer() {
  return [](const DatagenProgress& p) {
    if (p.scene % 100 == 0) std::fprintf(stderr, "%s\n", format_progress(p).c_str());
  };
}

struct Nets {
  GraspNet<float> grasp;
  std::optional<PushNet<float>> push;
  bool no_gripper_pc = false;
};

Nets load_nets(const std::string& grasp_path, const std::string& push_path, bool need_push) {
  Nets n;
  const Checkpoint g = load_checkpoint_file(grasp_path);
  n.grasp = from_checkpoint<GraspNet<float>>(g);
  n.no_gripper_pc = g.meta.variant == "no_gripper_pc";
  if (need_push) {
    if (push_path.empty()) throw Error("--push-ckpt is required unless --single-grasp is given");
    n.push = from_checkpoint<PushNet<float>>(load_checkpoint_file(push_path));
  }
  return n;
}

std::string describe(const Action& a) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(4);
  const Vec3& t = a.pose.translation;
  if (a.kind == ActionKind::push) {
    o << "push  start (" << t.x() << ", " << t.y() << ") heading " << heading(a.pose) << " score " << a.score
      << " candidate " << a.candidate_index;
  } else {
    o << "grasp at (" << t.x() << ", " << t.y() << ", " << t.z() << ") width " << a.width << " score " << a.score
      << " candidate " << a.candidate_index << " -> " << to_string(a.outcome);
  }
  return o.str();
}

}  // namespace

int main(int argc, char** argv) {
  // Keep freed blocks in the heap: large state buffers are recycled across batches.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  CLI::App app{"pushgrasp: push-grasp synergy pipeline on a planar simulator"};
  app.require_subcommand(1);
  app.footer("Config keys (set with --config FILE or --set key=value):\n" + config_help());

  // gen-data
  CommonOptions gen_o;
  std::string gen_kind, gen_out, gen_ckpt;
  std::optional<long long> gen_n;
  std::optional<int> gen_objects;
  auto* gen = app.add_subcommand("gen-data", "collect a grasp or push dataset");
  gen->add_option("kind", gen_kind, "grasp or push")->required()->check(CLI::IsMember({"grasp", "push"}));
  gen->add_option("--out", gen_out, "output .pgds path")->required();
  gen->add_option("--n", gen_n, "number of samples (default data.<kind>_samples)");
  gen->add_option("--objects", gen_objects, "objects per scene (default scene.objects)");
  gen->add_option("--grasp-ckpt", gen_ckpt, "trained grasp checkpoint (push datasets)");
  add_common(gen, gen_o);

  // train
  CommonOptions tr_o;
  std::string tr_kind, tr_data, tr_out;
  std::optional<int> tr_epochs;
  std::optional<int> tr_objects;
  bool tr_ablate = false;
  auto* trn = app.add_subcommand("train", "train the grasp or push evaluator");
  trn->add_option("kind", tr_kind, "grasp or push")->required()->check(CLI::IsMember({"grasp", "push"}));
  trn->add_option("--data", tr_data, "training .pgds dataset")->required()->check(CLI::ExistingFile);
  trn->add_option("--out", tr_out, "output .pgck checkpoint")->required();
  trn->add_option("--epochs", tr_epochs, "override the epoch count");
  trn->add_option("--objects", tr_objects, "objects per scene used when the dataset was generated");
  trn->add_flag("--no-gripper-pc", tr_ablate, "grasp states without the gripper cloud (ablation)");
  add_common(trn, tr_o);

  // eval
  CommonOptions ev_o;
  std::string ev_g, ev_p, ev_challenge;
  std::optional<int> ev_objects, ev_scenes, ev_max_actions;
  bool ev_single = false, ev_records = false;
  auto* ev = app.add_subcommand("eval", "run an evaluation suite");
  ev->add_option("--grasp-ckpt", ev_g, "grasp checkpoint")->required();
  ev->add_option("--push-ckpt", ev_p, "push checkpoint");
  ev->add_option("--objects", ev_objects, "objects per random scene (default eval.objects)");
  ev->add_option("--scenes", ev_scenes, "number of random scenes (default eval.scenes)");
  ev->add_option("--max-actions", ev_max_actions, "action budget (default eval.max_actions)");
  ev->add_option("--challenge", ev_challenge, "scene file to evaluate instead of random scenes")
      ->check(CLI::ExistingFile);
  ev->add_flag("--single-grasp", ev_single, "grasp-only baseline (pushes disabled)");
  ev->add_flag("--records", ev_records, "also print line-delimited records");
  add_common(ev, ev_o);

  // run-episode
  CommonOptions ep_o;
  std::string ep_g, ep_p, ep_scene, ep_trace, ep_svg;
  std::optional<int> ep_objects;
  std::size_t ep_index = 0;
  bool ep_single = false;
  auto* ep = app.add_subcommand("run-episode", "run one episode and print its actions");
  ep->add_option("--grasp-ckpt", ep_g, "grasp checkpoint")->required();
  ep->add_option("--push-ckpt", ep_p, "push checkpoint");
  ep->add_option("--scene", ep_scene, "scene file (default: a random scene)")->check(CLI::ExistingFile);
  ep->add_option("--index", ep_index, "scene index within the file or random suite");
  ep->add_option("--objects", ep_objects, "objects in the random scene (default eval.objects)");
  ep->add_option("--trace-out", ep_trace, "write the episode trace");
  ep->add_option("--svg-out", ep_svg, "render the episode to SVG");
  ep->add_flag("--single-grasp", ep_single, "grasp-only baseline");
  add_common(ep, ep_o);

  // render
  CommonOptions rd_o;
  std::string rd_scene, rd_trace, rd_out;
  std::size_t rd_index = 0;
  auto* rd = app.add_subcommand("render", "render a scene or an episode trace to SVG");
  auto* rd_scene_opt = rd->add_option("--scene", rd_scene, "scene file")->check(CLI::ExistingFile);
  auto* rd_trace_opt = rd->add_option("--trace", rd_trace, "episode trace file")->check(CLI::ExistingFile);
  rd_scene_opt->excludes(rd_trace_opt);
  rd->add_option("--index", rd_index, "scene index within the file");
  rd->add_option("--out", rd_out, "output .svg path")->required();
  add_common(rd, rd_o);

  // calibrate
  CommonOptions cal_o;
  std::string cal_g;
  std::size_t cal_n = 2000;
  std::optional<int> cal_objects;
  auto* cal = app.add_subcommand("calibrate", "empirical grasp success above score thresholds");
  cal->add_option("--grasp-ckpt", cal_g, "grasp checkpoint")->required();
  cal->add_option("--n", cal_n, "minimum number of scored candidates");
  cal->add_option("--objects", cal_objects, "objects per scene (default scene.objects)");
  add_common(cal, cal_o);

  // gen-scenes
  CommonOptions gs_o;
  std::string gs_out;
  std::optional<int> gs_objects, gs_count;
  auto* gs = app.add_subcommand("gen-scenes", "write random scenes to a scene file");
  gs->add_option("--out", gs_out, "output .scene path")->required();
  gs->add_option("--objects", gs_objects, "objects per scene (default eval.objects)");
  gs->add_option("--count", gs_count, "number of scenes (default eval.scenes)");
  add_common(gs, gs_o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) {
      Config c = load_config(gen_o);
      if (gen_objects) c.set("scene.objects", std::to_string(*gen_objects));
      const PipelineConfig pc = c.pipeline();
      const SampleKind kind = gen_kind == "grasp" ? SampleKind::grasp : SampleKind::push;
      const long long n = gen_n ? *gen_n : c.integer(kind == SampleKind::grasp ? "data.grasp_samples" : "data.push_samples");
      if (n < 1) throw Error("--n must be >= 1");
      DatagenStats st;
      Dataset ds;
      if (kind == SampleKind::grasp) {
        ds = collect_grasp_data(static_cast<std::size_t>(n), seed_of(c), pc, jobs_of(c), &st, progress_printer());
      } else {
        if (gen_ckpt.empty()) throw CLI::RequiredError("--grasp-ckpt");
        const auto net = from_checkpoint<GraspNet<float>>(load_checkpoint_file(gen_ckpt));
        ds = collect_push_data(static_cast<std::size_t>(n), net, seed_of(c), pc, jobs_of(c), &st, progress_printer());
      }
      std::fprintf(stderr, "%s\n", format_progress({st.scenes, ds.size(), st.skipped_total()}).c_str());
      save_dataset(gen_out, ds);
      std::printf("wrote %zu %s samples to %s\n", ds.size(), to_string(kind), gen_out.c_str());
      print_stats(st, kind);
      return 0;
    }

    if (*trn) {
      Config c = load_config(tr_o);
      if (tr_objects) c.set("scene.objects", std::to_string(*tr_objects));
      const SampleKind kind = tr_kind == "grasp" ? SampleKind::grasp : SampleKind::push;
      Dataset ds = load_dataset(tr_data);
      if (ds.kind != kind)
        throw Error(std::string("dataset holds ") + to_string(ds.kind) + " samples but " + to_string(kind) +
                    " training was requested");
      if (tr_ablate && kind != SampleKind::grasp) throw Error("--no-gripper-pc applies to grasp training only");
      TrainConfig tc = c.train(kind);
      if (tr_epochs) tc.epochs = *tr_epochs;
      tc.validate();
      if (tr_ablate) ds = rebuild_grasp_dataset(ds, c.pipeline(), true, jobs_of(c));
      std::printf("training %s evaluator on %zu samples (positive rate %.3f)%s\n", to_string(kind), ds.size(),
                  ds.positive_rate(), tr_ablate ? " without the gripper cloud" : "");
      const auto on_epoch = [](const EpochMetrics& m) {
        std::printf("epoch %d lr %s train_loss %.4f train_acc %.4f val_loss %.4f val_acc %.4f\n", m.epoch,
                    format_lr(m.lr).c_str(), m.train_loss, m.train_accuracy, m.val_loss, m.val_accuracy);
        std::fflush(stdout);
      };
      const auto states = ds.states();
      const auto labels = ds.labels();
      TrainResult res;
      if (kind == SampleKind::grasp) {
        GraspNet<float> net;
        net.init(tc.seed);
        res = train(net, states, labels, tc, c.loss(), on_epoch, tr_ablate ? "no_gripper_pc" : "");
      } else {
        PushNet<float> net;
        net.init(tc.seed);
        res = train(net, states, labels, tc, c.loss(), on_epoch);
      }
      write_file_bytes(tr_out, serialize_checkpoint(res.checkpoint));
      std::printf("wrote checkpoint %s\n", tr_out.c_str());
      return 0;
    }

    if (*ev) {
      Config c = load_config(ev_o);
      if (ev_objects) c.set("eval.objects", std::to_string(*ev_objects));
      if (ev_scenes) c.set("eval.scenes", std::to_string(*ev_scenes));
      if (ev_max_actions) c.set("eval.max_actions", std::to_string(*ev_max_actions));
      c.validate();
      EpisodeConfig ec = c.episode();
      ec.allow_push = !ev_single;
      const Nets nets = load_nets(ev_g, ev_p, ec.allow_push);
      ec.pipeline.no_gripper_pc = nets.no_gripper_pc;
      std::vector<Scene> scenes;
      if (!ev_challenge.empty()) {
        scenes = parse_scenes(read_text(ev_challenge), ec.pipeline.library);
        if (scenes.empty()) throw Error("challenge file holds no scenes");
      } else {
        scenes = random_suite(static_cast<int>(c.integer("eval.objects")), static_cast<int>(c.integer("eval.scenes")),
                              seed_of(c), ec.pipeline);
      }
      const PolicyNets pn{&nets.grasp, nets.push ? &*nets.push : nullptr};
      const auto summary = evaluate_scenes(scenes, pn, ec, seed_of(c), jobs_of(c));
      std::cout << format_summary_table(summary);
      if (ev_records) std::cout << format_summary_records(summary);
      return 0;
    }

    if (*ep) {
      Config c = load_config(ep_o);
      if (ep_objects) c.set("eval.objects", std::to_string(*ep_objects));
      EpisodeConfig ec = c.episode();
      ec.allow_push = !ep_single;
      const Nets nets = load_nets(ep_g, ep_p, ec.allow_push);
      ec.pipeline.no_gripper_pc = nets.no_gripper_pc;
      std::vector<Scene> scenes =
          ep_scene.empty()
              ? random_suite(static_cast<int>(c.integer("eval.objects")), static_cast<int>(ep_index + 1), seed_of(c), ec.pipeline)
              : parse_scenes(read_text(ep_scene), ec.pipeline.library);
      if (ep_index >= scenes.size()) throw Error("scene index out of range");
      const PolicyNets pn{&nets.grasp, nets.push ? &*nets.push : nullptr};
      const auto res = run_episode(scenes[ep_index], pn, ec, derive_seed(seed_of(c), kTagEpisode, ep_index));
      for (std::size_t i = 0; i < res.actions.size(); ++i) std::printf("%2zu %s\n", i + 1, describe(res.actions[i]).c_str());
      std::printf("completed %s, motion number %d, grasps %d/%d, end %s\n", res.completed ? "yes" : "no",
                  res.motion_number, res.grasp_successes, res.grasp_attempts, res.end_reason.c_str());
      if (!ep_trace.empty()) write_text(ep_trace, serialize_trace(res));
      if (!ep_svg.empty()) write_text(ep_svg, render_svg(res.initial, res.actions, ec.pipeline.gripper));
      return 0;
    }

    if (*rd) {
      const Config c = load_config(rd_o);
      const PipelineConfig pc = c.pipeline();
      if (rd_scene.empty() && rd_trace.empty()) throw Error("render needs --scene or --trace");
      std::string svg;
      if (!rd_trace.empty()) {
        const auto tr = parse_trace(read_text(rd_trace), pc.library);
        svg = render_svg(tr.scene, tr.actions, pc.gripper);
      } else {
        const auto scenes = parse_scenes(read_text(rd_scene), pc.library);
        if (rd_index >= scenes.size()) throw Error("scene index out of range");
        svg = render_svg(scenes[rd_index], {}, pc.gripper);
      }
      write_text(rd_out, svg);
      std::printf("wrote %s\n", rd_out.c_str());
      return 0;
    }

    if (*cal) {
      Config c = load_config(cal_o);
      if (cal_objects) c.set("scene.objects", std::to_string(*cal_objects));
      PipelineConfig pc = c.pipeline();
      const Checkpoint ck = load_checkpoint_file(cal_g);
      pc.no_gripper_pc = ck.meta.variant == "no_gripper_pc";
      const auto net = from_checkpoint<GraspNet<float>>(ck);
      const auto rows = calibrate_threshold(net, cal_n, seed_of(c), pc, jobs_of(c));
      std::printf("%-10s %-10s %-10s %s\n", "threshold", "count", "successes", "success_rate");
      for (const auto& r : rows)
        std::printf("%-10.2f %-10zu %-10zu %.4f\n", r.threshold, r.count, r.successes, r.success_rate());
      return 0;
    }

    if (*gs) {
      const Config c = load_config(gs_o);
      const PipelineConfig pc = c.pipeline();
      const int objects = gs_objects ? *gs_objects : static_cast<int>(c.integer("eval.objects"));
      const int count = gs_count ? *gs_count : static_cast<int>(c.integer("eval.scenes"));
      if (objects < 1 || count < 1) throw Error("--objects and --count must be >= 1");
      std::string text;
      for (const auto& s : random_suite(objects, count, seed_of(c), pc)) text += serialize_scene(s);
      write_text(gs_out, text);
      std::printf("wrote %d scenes to %s\n", count, gs_out.c_str());
      return 0;
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
