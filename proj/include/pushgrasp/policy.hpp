#pragma once

#include <iomanip>
#include <sstream>

#include "pushgrasp/datagen.hpp"

namespace pushgrasp {

struct EpisodeConfig {
  int max_actions = 10;
  double grasp_threshold = 0.8;
  bool allow_push = true;
  PipelineConfig pipeline;

  void validate() const {
    if (max_actions < 1) throw Error("max_actions must be >= 1");
    if (!(grasp_threshold > 0 && grasp_threshold < 1)) throw Error("grasp threshold must be in (0, 1)");
    pipeline.validate();
  }
};

enum class ActionKind { push, grasp };

struct Action {
  ActionKind kind = ActionKind::grasp;
  Pose pose;
  double width = 0.0;  // grasps only
  GraspOutcome outcome = GraspOutcome::miss;
  double score = 0.0;
  int candidate_index = 0;
  double stroke = kPushStroke;  // pushes only
};

struct EpisodeResult {
  bool completed = false;
  std::vector<Action> actions;
  int motion_number = 0;
  int grasp_attempts = 0;
  int grasp_successes = 0;
  std::string end_reason;  // success, collision, budget, no_grasp, no_push
  Scene initial;
  Scene final_scene;
};

struct PolicyNets {
  const GraspNet<float>* grasp = nullptr;
  const PushNet<float>* push = nullptr;  // may be null when pushing is disabled
};

/// Grasp when the best grasp clears the threshold, otherwise push along the
/// best-scored push; stops on a successful grasp, a grasp collision, a dead
/// end or the action budget.
inline EpisodeResult run_episode(const Scene& scene, const PolicyNets& nets, const EpisodeConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (!nets.grasp) throw Error("run_episode needs a grasp evaluator");
  if (cfg.allow_push && !nets.push) throw Error("run_episode needs a push evaluator when pushing is enabled");
  const PipelineConfig& pc = cfg.pipeline;
  EpisodeResult res;
  res.initial = scene;
  Scene cur = scene;
  res.end_reason = "budget";
  for (int step = 0; step < cfg.max_actions; ++step) {
    const Observation obs = observe(cur, pc, seed, static_cast<std::uint64_t>(step));
    const auto grasps = grasp_candidates(obs, cur.target_id, pc);
    const auto gscores = score_grasps(*nets.grasp, obs, grasps, pc, derive_seed(seed, static_cast<std::uint64_t>(step)));
    const int gi = argmax_index(gscores);
    if (gi >= 0 && gscores[gi] > cfg.grasp_threshold) {
      const auto& g = grasps[gi];
      Action a;
      a.kind = ActionKind::grasp;
      a.pose = g.pose;
      a.width = g.width;
      a.score = gscores[gi];
      a.candidate_index = gi;
      a.outcome = grasp_oracle(cur, g.pose, g.width, pc.gripper);
      res.actions.push_back(a);
      ++res.grasp_attempts;
      if (a.outcome == GraspOutcome::success) {
        ++res.grasp_successes;
        res.completed = true;
        res.end_reason = "success";
        break;
      }
      if (a.outcome == GraspOutcome::collision) {
        res.end_reason = "collision";
        break;
      }
      continue;  // slip or miss: the scene is unchanged, observe again
    }
    if (!cfg.allow_push) {
      res.end_reason = "no_grasp";
      break;
    }
    const auto pushes = push_candidates(obs, cur.workspace, pc);
    if (pushes.empty()) {
      res.end_reason = "no_push";
      break;
    }
    const auto pscores = score_pushes(*nets.push, obs, pushes, cur.target_id, derive_seed(seed, static_cast<std::uint64_t>(step)));
    std::vector<int> order(pushes.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return pscores[a] > pscores[b]; });
    bool pushed = false;
    for (int k : order) {
      try {
        Scene next = execute_push(cur, push_command(pushes[k], pc), pc.pusher_radius, pc.push_sim);
        Action a;
        a.kind = ActionKind::push;
        a.pose = pushes[k].pose;
        a.score = pscores[k];
        a.candidate_index = k;
        a.stroke = pc.push_stroke;
        res.actions.push_back(a);
        cur = std::move(next);
        pushed = true;
        break;
      } catch (const Error&) {
        // start overlaps an object the cloud missed; take the next-best push
      }
    }
    if (!pushed) {
      res.end_reason = "no_push";
      break;
    }
  }
  res.motion_number = static_cast<int>(res.actions.size());
  res.final_scene = cur;
  return res;
}

/// Grasp-only baseline: no pushes, so a scene without a grasp above the
/// threshold fails at once.
inline EpisodeResult single_grasp_baseline(const Scene& scene, const PolicyNets& nets, EpisodeConfig cfg,
                                           std::uint64_t seed) {
  cfg.allow_push = false;
  return run_episode(scene, nets, cfg, seed);
}

struct SuiteSummary {
  std::vector<EpisodeResult> episodes;
  std::vector<std::uint64_t> scene_seeds;
  double completion_rate = 0.0;
  double grasp_success_rate = 0.0;       // successful / executed grasps
  double mean_motion_completed = 0.0;    // over completed episodes
  double mean_motion_all = 0.0;          // over all episodes
  int failed = 0;
  int total_grasps = 0;
};

inline constexpr std::uint64_t kTagEpisode = 0x657069736f6465ULL;

inline SuiteSummary summarize(std::vector<EpisodeResult> episodes, std::vector<std::uint64_t> seeds) {
  SuiteSummary s;
  s.episodes = std::move(episodes);
  s.scene_seeds = std::move(seeds);
  int completed = 0, attempts = 0, successes = 0;
  double motions_completed = 0.0, motions_all = 0.0;
  for (const auto& e : s.episodes) {
    attempts += e.grasp_attempts;
    successes += e.grasp_successes;
    motions_all += e.motion_number;
    if (e.completed) {
      ++completed;
      motions_completed += e.motion_number;
    }
  }
  const double n = static_cast<double>(s.episodes.size());
  s.completion_rate = n > 0 ? completed / n : 0.0;
  s.grasp_success_rate = attempts > 0 ? static_cast<double>(successes) / attempts : 0.0;
  s.mean_motion_completed = completed > 0 ? motions_completed / completed : 0.0;
  s.mean_motion_all = n > 0 ? motions_all / n : 0.0;
  s.failed = static_cast<int>(s.episodes.size()) - completed;
  s.total_grasps = attempts;
  return s;
}

/// Episodes over the given scenes with per-episode seeds derived from `seed`.
inline SuiteSummary evaluate_scenes(const std::vector<Scene>& scenes, const PolicyNets& nets, const EpisodeConfig& cfg,
                                    std::uint64_t seed, int jobs = 1) {
  auto eps = parallel_map<EpisodeResult>(scenes.size(), jobs, [&](std::size_t i) {
    return run_episode(scenes[i], nets, cfg, derive_seed(seed, kTagEpisode, i));
  });
  std::vector<std::uint64_t> seeds;
  for (const auto& s : scenes) seeds.push_back(s.rng_seed);
  return summarize(std::move(eps), std::move(seeds));
}

/// Random scenes for a suite; scenes the generator cannot place are replaced
/// by the next seed so the suite always has `n_scenes` entries.
inline std::vector<Scene> random_suite(int n_objects, int n_scenes, std::uint64_t seed, const PipelineConfig& pc) {
  std::vector<Scene> scenes;
  for (std::size_t i = 0; scenes.size() < static_cast<std::size_t>(n_scenes); ++i) {
    if (i > static_cast<std::size_t>(n_scenes) * 100 + 100) throw Error("could not generate the requested suite");
    try {
      scenes.push_back(generate_scene(n_objects, pc.library, scene_seed(seed, i), pc.scene_gen, pc.workspace));
    } catch (const Error&) {
    }
  }
  return scenes;
}

inline std::string format_rate(double v) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(1) << 100.0 * v << "%";
  return o.str();
}

/// Aligned text table, one row per episode, then the summary block.
inline std::string format_summary_table(const SuiteSummary& s) {
  std::ostringstream o;
  o << std::left << std::setw(8) << "episode" << std::setw(22) << "scene_seed" << std::setw(11) << "completed"
    << std::setw(9) << "motions" << std::setw(8) << "pushes" << std::setw(8) << "grasps" << std::setw(11)
    << "successes" << "end" << "\n";
  for (std::size_t i = 0; i < s.episodes.size(); ++i) {
    const auto& e = s.episodes[i];
    o << std::left << std::setw(8) << i << std::setw(22) << s.scene_seeds[i] << std::setw(11)
      << (e.completed ? "yes" : "no") << std::setw(9) << e.motion_number << std::setw(8)
      << (e.motion_number - e.grasp_attempts) << std::setw(8) << e.grasp_attempts << std::setw(11)
      << e.grasp_successes << e.end_reason << "\n";
  }
  o << "completion rate        " << format_rate(s.completion_rate) << " (" << (s.episodes.size() - s.failed) << "/"
    << s.episodes.size() << ")\n";
  o << "grasp success rate     " << format_rate(s.grasp_success_rate) << " (of " << s.total_grasps << " grasps)\n";
  o << "mean motion (completed) " << std::fixed << std::setprecision(2) << s.mean_motion_completed << "\n";
  o << "mean motion (all)       " << std::fixed << std::setprecision(2) << s.mean_motion_all << "\n";
  o << "failed episodes        " << s.failed << "\n";
  return o.str();
}

/// Line-delimited key=value records: one per episode plus a summary line.
inline std::string format_summary_records(const SuiteSummary& s) {
  std::ostringstream o;
  for (std::size_t i = 0; i < s.episodes.size(); ++i) {
    const auto& e = s.episodes[i];
    o << "episode=" << i << " scene_seed=" << s.scene_seeds[i] << " completed=" << e.completed
      << " motions=" << e.motion_number << " grasp_attempts=" << e.grasp_attempts
      << " grasp_successes=" << e.grasp_successes << " end=" << e.end_reason << "\n";
  }
  o << "summary episodes=" << s.episodes.size() << " completion_rate=" << format_exact(s.completion_rate)
    << " grasp_success_rate=" << format_exact(s.grasp_success_rate)
    << " mean_motion_completed=" << format_exact(s.mean_motion_completed)
    << " mean_motion_all=" << format_exact(s.mean_motion_all) << " failed=" << s.failed << "\n";
  return o.str();
}

// Episode trace text format: the initial scene block, then
//   actions <n>
//   push <x> <y> <z> <heading> <stroke> <score> <index>
//   grasp <x> <y> <z> <phi> <width> <outcome> <score> <index>
// where phi is the heading of the closing axis.
inline std::string serialize_trace(const EpisodeResult& e) {
  std::ostringstream o;
  o << serialize_scene(e.initial);
  o << "actions " << e.actions.size() << "\n";
  for (const auto& a : e.actions) {
    const Vec3& t = a.pose.translation;
    if (a.kind == ActionKind::push) {
      o << "push " << format_exact(t.x()) << " " << format_exact(t.y()) << " " << format_exact(t.z()) << " "
        << format_exact(heading(a.pose)) << " " << format_exact(a.stroke) << " " << format_exact(a.score) << " "
        << a.candidate_index << "\n";
    } else {
      const Vec3 y = a.pose.y_axis();
      o << "grasp " << format_exact(t.x()) << " " << format_exact(t.y()) << " " << format_exact(t.z()) << " "
        << format_exact(std::atan2(y.y(), y.x())) << " " << format_exact(a.width) << " " << to_string(a.outcome)
        << " " << format_exact(a.score) << " " << a.candidate_index << "\n";
    }
  }
  return o.str();
}

struct EpisodeTrace {
  Scene scene;
  std::vector<Action> actions;
};

inline EpisodeTrace parse_trace(const std::string& text, const std::vector<ShapeSpec>& library) {
  std::istringstream in(text);
  EpisodeTrace tr;
  if (!read_scene(in, library, tr.scene)) throw Error("trace: missing scene block");
  std::string line;
  std::size_t n = 0;
  bool header = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string kw;
    if (!(ls >> kw)) continue;
    if (kw == "actions") {
      std::string v;
      ls >> v;
      n = static_cast<std::size_t>(parse_int(v));
      header = true;
      continue;
    }
    if (!header) throw Error("trace: expected 'actions' line");
    std::vector<std::string> f;
    for (std::string w; ls >> w;) f.push_back(w);
    Action a;
    if (kw == "push") {
      if (f.size() != 7) throw Error("trace: malformed push line");
      a.kind = ActionKind::push;
      a.pose = {rot_z(parse_double(f[3])), Vec3(parse_double(f[0]), parse_double(f[1]), parse_double(f[2]))};
      a.pose.rotation.col(2) = Vec3(0, 0, -1);
      a.pose.rotation.col(1) = a.pose.rotation.col(2).cross(a.pose.rotation.col(0));
      a.stroke = parse_double(f[4]);
      a.score = parse_double(f[5]);
    } else if (kw == "grasp") {
      if (f.size() != 8) throw Error("trace: malformed grasp line");
      a.kind = ActionKind::grasp;
      a.pose = {top_down_rotation(parse_double(f[3])), Vec3(parse_double(f[0]), parse_double(f[1]), parse_double(f[2]))};
      a.width = parse_double(f[4]);
      a.outcome = parse_outcome(f[5]);
      a.score = parse_double(f[6]);
    } else {
      throw Error("trace: unknown action '" + kw + "'");
    }
    a.candidate_index = static_cast<int>(parse_int(f.back()));
    tr.actions.push_back(a);
  }
  if (!header) throw Error("trace: expected 'actions' line");
  if (tr.actions.size() != n) throw Error("trace: action count mismatch");
  return tr;
}

}  // namespace pushgrasp
