#pragma once

#include <functional>
#include <map>
#include <optional>

#include "pushgrasp/pipeline.hpp"

namespace pushgrasp {

struct GraspProvenance {
  std::uint64_t scene_seed = 0;
  std::uint32_t candidate_index = 0;
  GraspOutcome outcome = GraspOutcome::miss;
  bool operator==(const GraspProvenance&) const = default;
};

struct GraspSample {
  StateMatrix state;
  int label = 0;  // 1 iff outcome == success
  GraspProvenance provenance;
};

struct PushProvenance {
  std::uint64_t scene_seed = 0;
  std::uint32_t candidate_index = 0;
  double post_score = 0.0;  // best post-push grasp score (see collect_push_data)
  bool operator==(const PushProvenance&) const = default;
};

struct PushSample {
  StateMatrix state;
  int label = 0;  // 1 iff post_score > threshold
  PushProvenance provenance;
};

enum class SampleKind : std::uint16_t { grasp = 0, push = 1 };

inline const char* to_string(SampleKind k) { return k == SampleKind::grasp ? "grasp" : "push"; }

struct Dataset {
  SampleKind kind = SampleKind::grasp;
  std::vector<GraspSample> grasp;
  std::vector<PushSample> push;

  std::size_t size() const { return kind == SampleKind::grasp ? grasp.size() : push.size(); }
  std::vector<int> labels() const {
    std::vector<int> out;
    if (kind == SampleKind::grasp)
      for (const auto& s : grasp) out.push_back(s.label);
    else
      for (const auto& s : push) out.push_back(s.label);
    return out;
  }
  std::vector<StateMatrix> states() const {
    std::vector<StateMatrix> out;
    if (kind == SampleKind::grasp)
      for (const auto& s : grasp) out.push_back(s.state);
    else
      for (const auto& s : push) out.push_back(s.state);
    return out;
  }
  double positive_rate() const {
    auto l = labels();
    if (l.empty()) return 0.0;
    return static_cast<double>(std::count(l.begin(), l.end(), 1)) / static_cast<double>(l.size());
  }
};

// "PGDS", u16 version, u16 kind, u32 count, then per record a u32 byte
// length followed by the record: a PGST state block, u64 scene seed, u32
// candidate index, and either a u8 outcome (grasp) or an f64 score (push).
inline constexpr std::uint16_t kDatasetVersion = 1;

inline std::vector<char> serialize_dataset(const Dataset& ds) {
  ByteWriter w;
  w.put_bytes("PGDS");
  w.put<std::uint16_t>(kDatasetVersion);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(ds.kind));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.size()));
  auto record = [&](const StateMatrix& st, int label, std::uint64_t seed, std::uint32_t idx, auto&& tail) {
    ByteWriter r;
    write_state(r, st, static_cast<std::uint16_t>(label));
    r.put<std::uint64_t>(seed);
    r.put<std::uint32_t>(idx);
    tail(r);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(r.bytes().size()));
    w.append(r.bytes());
  };
  if (ds.kind == SampleKind::grasp) {
    for (const auto& s : ds.grasp)
      record(s.state, s.label, s.provenance.scene_seed, s.provenance.candidate_index,
             [&](ByteWriter& r) { r.put<std::uint8_t>(static_cast<std::uint8_t>(s.provenance.outcome)); });
  } else {
    for (const auto& s : ds.push)
      record(s.state, s.label, s.provenance.scene_seed, s.provenance.candidate_index,
             [&](ByteWriter& r) { r.put<double>(s.provenance.post_score); });
  }
  return w.bytes();
}

inline Dataset parse_dataset(const std::vector<char>& bytes) {
  ByteReader r(bytes);
  if (r.get_bytes(4) != "PGDS") throw Error("not a dataset file");
  if (r.get<std::uint16_t>() != kDatasetVersion) throw Error("unsupported dataset version");
  Dataset ds;
  auto kind = r.get<std::uint16_t>();
  if (kind > 1) throw Error("unknown dataset kind");
  ds.kind = static_cast<SampleKind>(kind);
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint32_t>();
    const std::string blob = r.get_bytes(len);
    ByteReader rr(blob.data(), blob.size());
    std::uint16_t label = 0;
    StateMatrix st = read_state(rr, label);
    const auto seed = rr.get<std::uint64_t>();
    const auto idx = rr.get<std::uint32_t>();
    if (ds.kind == SampleKind::grasp) {
      auto o = rr.get<std::uint8_t>();
      if (o > 3) throw Error("bad grasp outcome in dataset");
      ds.grasp.push_back({std::move(st), label, {seed, idx, static_cast<GraspOutcome>(o)}});
    } else {
      ds.push.push_back({std::move(st), label, {seed, idx, rr.get<double>()}});
    }
    if (rr.remaining() != 0) throw Error("dataset record length mismatch");
  }
  if (r.remaining() != 0) throw Error("trailing bytes in dataset");
  return ds;
}

inline void save_dataset(const std::string& path, const Dataset& ds) { write_file_bytes(path, serialize_dataset(ds)); }
inline Dataset load_dataset(const std::string& path) { return parse_dataset(read_file_bytes(path)); }

struct DatagenProgress {
  std::size_t scene = 0, kept = 0, skipped = 0;
};

inline std::string format_progress(const DatagenProgress& p) {
  return "scene=" + std::to_string(p.scene) + " kept=" + std::to_string(p.kept) + " skipped=" + std::to_string(p.skipped);
}

struct DatagenStats {
  std::size_t scenes = 0;
  std::map<std::string, std::size_t> skipped;  // reason -> count
  std::size_t positives = 0, negatives = 0;
  std::map<std::string, std::size_t> outcomes;  // grasp datasets only

  std::size_t skipped_total() const {
    std::size_t n = 0;
    for (auto& [k, v] : skipped) n += v;
    return n;
  }
  double positive_rate() const {
    const auto n = positives + negatives;
    return n ? static_cast<double>(positives) / static_cast<double>(n) : 0.0;
  }
};

using ProgressCallback = std::function<void(const DatagenProgress&)>;

inline std::uint64_t scene_seed(std::uint64_t seed, std::size_t index) { return derive_seed(seed, kTagScene, index); }

namespace detail {

template <typename Sample>
struct SceneResult {
  std::optional<Sample> sample;
  std::string skip_reason;
  std::string outcome;
};

/// Visits scenes in index order, `jobs` at a time, until `n_samples` are kept.
template <typename Sample, typename Fn>
std::vector<Sample> collect(std::size_t n_samples, std::uint64_t seed, int jobs, std::size_t max_scenes, Fn&& per_scene,
                            DatagenStats& stats, const ProgressCallback& progress) {
  if (n_samples < 1) throw Error("n_samples must be >= 1");
  std::vector<Sample> out;
  std::size_t scene = 0;
  const std::size_t batch = static_cast<std::size_t>(std::max(1, jobs));
  while (out.size() < n_samples) {
    if (scene >= max_scenes) throw Error("scene budget exhausted before collecting enough samples");
    auto results = parallel_map<SceneResult<Sample>>(batch, jobs, [&](std::size_t k) {
      return per_scene(scene + k, scene_seed(seed, scene + k));
    });
    for (auto& r : results) {
      if (out.size() >= n_samples) break;
      ++stats.scenes;
      if (r.sample) {
        out.push_back(std::move(*r.sample));
        (out.back().label ? stats.positives : stats.negatives) += 1;
        if (!r.outcome.empty()) ++stats.outcomes[r.outcome];
      } else {
        ++stats.skipped[r.skip_reason];
      }
      if (progress) progress({stats.scenes - 1, out.size(), stats.skipped_total()});
      ++scene;
    }
  }
  return out;
}

inline std::optional<Scene> try_generate(std::uint64_t sseed, const PipelineConfig& cfg) {
  try {
    return generate_scene(cfg.n_objects, cfg.library, sseed, cfg.scene_gen, cfg.workspace);
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace detail

struct GraspReplay {
  Scene scene;
  Observation obs;
  std::vector<GraspCandidate> candidates;
};

/// Scene, observation and sampled candidates behind a grasp sample's seed.
inline GraspReplay replay_grasp_scene(std::uint64_t sseed, const PipelineConfig& cfg) {
  GraspReplay r;
  r.scene = generate_scene(cfg.n_objects, cfg.library, sseed, cfg.scene_gen, cfg.workspace);
  r.obs = observe(r.scene, cfg, sseed, 0);
  r.candidates = sampled_grasps(r.obs, cfg);
  return r;
}

/// One sample per scene: a uniformly chosen sampled candidate (no collision
/// pre-filter) labelled by the oracle.
inline Dataset collect_grasp_data(std::size_t n_samples, std::uint64_t seed, const PipelineConfig& cfg, int jobs = 1,
                                  DatagenStats* stats_out = nullptr, const ProgressCallback& progress = {}) {
  cfg.validate();
  DatagenStats stats;
  auto per_scene = [&](std::size_t, std::uint64_t sseed) {
    detail::SceneResult<GraspSample> res;
    GraspReplay rp;
    try {
      rp = replay_grasp_scene(sseed, cfg);
    } catch (const Error&) {
      res.skip_reason = "scene_generation";
      return res;
    }
    if (rp.candidates.empty()) {
      res.skip_reason = "no_candidates";
      return res;
    }
    Rng rng(derive_seed(sseed, kTagPick));
    const std::size_t idx = std::uniform_int_distribution<std::size_t>(0, rp.candidates.size() - 1)(rng);
    const auto& g = rp.candidates[idx];
    const GraspOutcome o = grasp_oracle(rp.scene, g.pose, g.width, cfg.gripper);
    GraspSample s;
    s.state = grasp_state_for(rp.obs, g, cfg, sseed, idx, cfg.no_gripper_pc).rows;
    s.label = o == GraspOutcome::success ? 1 : 0;
    s.provenance = {sseed, static_cast<std::uint32_t>(idx), o};
    res.sample = std::move(s);
    res.outcome = to_string(o);
    return res;
  };
  Dataset ds;
  ds.kind = SampleKind::grasp;
  ds.grasp = detail::collect<GraspSample>(n_samples, seed, jobs, n_samples * 100 + 1000, per_scene, stats, progress);
  if (stats_out) *stats_out = stats;
  return ds;
}

/// Oracle outcome for a stored grasp provenance.
inline GraspOutcome replay_grasp_outcome(const GraspProvenance& p, const PipelineConfig& cfg) {
  GraspReplay rp = replay_grasp_scene(p.scene_seed, cfg);
  if (p.candidate_index >= rp.candidates.size()) throw Error("provenance candidate index out of range");
  const auto& g = rp.candidates[p.candidate_index];
  return grasp_oracle(rp.scene, g.pose, g.width, cfg.gripper);
}

/// The same samples with states rebuilt from provenance (used for the
/// gripper-cloud ablation). Labels are re-derived and must match.
inline Dataset rebuild_grasp_dataset(const Dataset& ds, const PipelineConfig& cfg, bool no_gripper_pc, int jobs = 1) {
  if (ds.kind != SampleKind::grasp) throw Error("rebuild_grasp_dataset needs a grasp dataset");
  Dataset out;
  out.kind = SampleKind::grasp;
  out.grasp = parallel_map<GraspSample>(ds.grasp.size(), jobs, [&](std::size_t i) {
    const auto& src = ds.grasp[i];
    GraspReplay rp = replay_grasp_scene(src.provenance.scene_seed, cfg);
    if (src.provenance.candidate_index >= rp.candidates.size()) throw Error("provenance candidate index out of range");
    const auto& g = rp.candidates[src.provenance.candidate_index];
    const GraspOutcome o = grasp_oracle(rp.scene, g.pose, g.width, cfg.gripper);
    if (o != src.provenance.outcome) throw Error("replayed grasp outcome differs from provenance");
    GraspSample s = src;
    s.state = grasp_state_for(rp.obs, g, cfg, src.provenance.scene_seed, src.provenance.candidate_index, no_gripper_pc).rows;
    return s;
  });
  return out;
}

/// Best grasp score of a scene, stopping early once a candidate clears
/// `threshold`. Returns nullopt when there are no grasp candidates.
template <typename T>
std::optional<double> best_grasp_score(const GraspNet<T>& net, const Scene& scene, const PipelineConfig& cfg,
                                       std::uint64_t seed, std::uint64_t step, const Observation* given = nullptr) {
  Observation local;
  const Observation& obs = given ? *given : (local = observe(scene, cfg, seed, step));
  auto cands = grasp_candidates(obs, scene.target_id, cfg);
  if (cands.empty()) return std::nullopt;
  auto scores = score_grasps(net, obs, cands, cfg, derive_seed(seed, step), cfg.grasp_threshold);
  return *std::max_element(scores.begin(), scores.end());
}

struct PushOutcome {
  Scene after;
  double post_score = 0.0;
};

/// Executes push candidate `index` of the scene's step-0 observation and
/// scores the result with the grasp evaluator. Throws if the start is invalid.
template <typename T>
PushOutcome replay_push(const GraspNet<T>& net, const Scene& scene, const std::vector<PushCandidate>& cands, std::size_t index, const PipelineConfig& cfg,
                        std::uint64_t sseed) {
  PushOutcome out;
  out.after = execute_push(scene, push_command(cands[index], cfg), cfg.pusher_radius, cfg.push_sim);
  auto s = best_grasp_score(net, out.after, cfg, sseed, 1);
  out.post_score = s.value_or(0.0);
  return out;
}

/// Push samples from scenes the grasp evaluator does not already find
/// graspable. The stored post-push score is the maximum over the candidates
/// scored up to (and including) the first chunk holding one above the
/// threshold, which decides the label exactly.
template <typename T>
Dataset collect_push_data(std::size_t n_samples, const GraspNet<T>& grasp_net, std::uint64_t seed,
                          const PipelineConfig& cfg, int jobs = 1, DatagenStats* stats_out = nullptr,
                          const ProgressCallback& progress = {}) {
  cfg.validate();
  DatagenStats stats;
  auto per_scene = [&](std::size_t, std::uint64_t sseed) {
    detail::SceneResult<PushSample> res;
    auto scene = detail::try_generate(sseed, cfg);
    if (!scene) {
      res.skip_reason = "scene_generation";
      return res;
    }
    const Observation obs = observe(*scene, cfg, sseed, 0);
    auto pre = best_grasp_score(grasp_net, *scene, cfg, sseed, 0, &obs);
    if (pre && *pre > cfg.grasp_threshold) {
      res.skip_reason = "directly_graspable";
      return res;
    }
    auto cands = push_candidates(obs, scene->workspace, cfg);
    if (cands.empty()) {
      res.skip_reason = "no_push_candidates";
      return res;
    }
    Rng rng(derive_seed(sseed, kTagPick));
    const std::size_t idx = std::uniform_int_distribution<std::size_t>(0, cands.size() - 1)(rng);
    PushOutcome po;
    try {
      po = replay_push(grasp_net, *scene, cands, idx, cfg, sseed);
    } catch (const Error&) {
      res.skip_reason = "invalid_push_start";
      return res;
    }
    PushSample s;
    s.state = push_state_for(obs, cands[idx], scene->target_id, sseed, idx).rows;
    s.label = po.post_score > cfg.grasp_threshold ? 1 : 0;
    s.provenance = {sseed, static_cast<std::uint32_t>(idx), po.post_score};
    res.sample = std::move(s);
    return res;
  };
  Dataset ds;
  ds.kind = SampleKind::push;
  ds.push = detail::collect<PushSample>(n_samples, seed, jobs, n_samples * 200 + 1000, per_scene, stats, progress);
  if (stats_out) *stats_out = stats;
  return ds;
}

/// Post-push score for a stored push provenance.
template <typename T>
double replay_push_score(const GraspNet<T>& net, const PushProvenance& p, const PipelineConfig& cfg) {
  Scene scene = generate_scene(cfg.n_objects, cfg.library, p.scene_seed, cfg.scene_gen, cfg.workspace);
  const Observation obs = observe(scene, cfg, p.scene_seed, 0);
  auto cands = push_candidates(obs, scene.workspace, cfg);
  if (p.candidate_index >= cands.size()) throw Error("provenance candidate index out of range");
  return replay_push(net, scene, cands, p.candidate_index, cfg, p.scene_seed).post_score;
}

struct CalibrationRow {
  double threshold = 0.0;
  std::size_t count = 0, successes = 0;
  double success_rate() const { return count ? static_cast<double>(successes) / static_cast<double>(count) : 0.0; }
};

struct ScoredCandidate {
  double score = 0.0;
  bool success = false;
};

/// Every candidate of fresh scenes, scored by the evaluator and labelled by
/// the oracle, until at least `n_eval` candidates are collected.
template <typename T>
std::vector<ScoredCandidate> scored_candidates(const GraspNet<T>& net, std::size_t n_eval, std::uint64_t seed,
                                               const PipelineConfig& cfg, int jobs = 1) {
  std::vector<ScoredCandidate> out;
  std::size_t scene = 0;
  const std::size_t batch = static_cast<std::size_t>(std::max(1, jobs));
  while (out.size() < n_eval) {
    if (scene > n_eval * 10 + 1000) throw Error("calibration found too few candidates");
    auto chunk = parallel_map<std::vector<ScoredCandidate>>(batch, jobs, [&](std::size_t k) {
      std::vector<ScoredCandidate> r;
      const std::uint64_t sseed = scene_seed(seed, scene + k);
      GraspReplay rp;
      try {
        rp = replay_grasp_scene(sseed, cfg);
      } catch (const Error&) {
        return r;
      }
      auto scores = score_grasps(net, rp.obs, rp.candidates, cfg, sseed);
      for (std::size_t i = 0; i < rp.candidates.size(); ++i) {
        const auto& g = rp.candidates[i];
        r.push_back({scores[i], grasp_oracle(rp.scene, g.pose, g.width, cfg.gripper) == GraspOutcome::success});
      }
      return r;
    });
    for (auto& r : chunk) {
      if (out.size() >= n_eval) break;  // same scenes for any worker count
      out.insert(out.end(), r.begin(), r.end());
    }
    scene += batch;
  }
  return out;
}

inline std::vector<CalibrationRow> calibration_table(const std::vector<ScoredCandidate>& data,
                                                     const std::vector<double>& thresholds) {
  std::vector<CalibrationRow> rows;
  for (double t : thresholds) {
    CalibrationRow row{t, 0, 0};
    for (const auto& c : data) {
      if (c.score > t || t <= 0.0) {
        ++row.count;
        row.successes += c.success;
      }
    }
    rows.push_back(row);
  }
  return rows;
}

inline const std::vector<double>& default_calibration_thresholds() {
  static const std::vector<double> t{0.0, 0.5, 0.6, 0.7, 0.8, 0.9};
  return t;
}

template <typename T>
std::vector<CalibrationRow> calibrate_threshold(const GraspNet<T>& net, std::size_t n_eval, std::uint64_t seed,
                                                const PipelineConfig& cfg, int jobs = 1) {
  return calibration_table(scored_candidates(net, n_eval, seed, cfg, jobs), default_calibration_thresholds());
}

}  // namespace pushgrasp
