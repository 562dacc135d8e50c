#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <optional>
#include <thread>
#include <vector>

#include "pushgrasp/nets.hpp"

namespace pushgrasp {

/// Everything the data pipelines and the policy share about perception,
/// candidate generation and execution.
struct PipelineConfig {
  std::vector<ShapeSpec> library = default_shape_library();
  GripperSpec gripper;
  SceneGenConfig scene_gen;
  Workspace workspace;
  int n_objects = 10;
  int points_per_object = 512;
  double noise_sigma = 0.002;
  int grasp_candidates = 64;
  GraspSamplerConfig grasp_sampler;
  int grasp_filter_min_points = 3;
  double push_dilation = kPushDilation;
  double push_spacing = kPushSpacing;
  double pusher_radius = 0.008;
  double push_margin = 0.002;
  double push_stroke = kPushStroke;
  PushSimConfig push_sim;
  double grasp_threshold = 0.8;
  bool no_gripper_pc = false;

  void validate() const {
    gripper.validate();
    if (library.empty()) throw Error("shape library is empty");
    if (n_objects < 1) throw Error("n_objects must be >= 1");
    if (points_per_object < 1) throw Error("points_per_object must be >= 1");
    if (noise_sigma < 0) throw Error("noise_sigma must be >= 0");
    if (grasp_candidates < 1) throw Error("grasp_candidates must be >= 1");
    if (grasp_sampler.directions < 1) throw Error("grasp directions must be >= 1");
    if (!(push_dilation > 0) || !(push_spacing > 0)) throw Error("push dilation and spacing must be positive");
    if (!(pusher_radius > 0) || push_margin < 0) throw Error("pusher radius must be positive, margin >= 0");
    if (!(push_stroke > 0)) throw Error("push stroke must be positive");
    if (!(grasp_threshold > 0 && grasp_threshold < 1)) throw Error("grasp threshold must be in (0, 1)");
  }
};

// Seed-derivation tags.
inline constexpr std::uint64_t kTagScene = 0x7363656e65ULL;
inline constexpr std::uint64_t kTagRender = 0x72656e646572ULL;
inline constexpr std::uint64_t kTagState = 0x7374617465ULL;
inline constexpr std::uint64_t kTagPick = 0x7069636bULL;

struct Observation {
  PointCloud cloud;
  PointCloud target;
};

/// Rendered cloud for step `step` of an interaction with `scene`.
inline Observation observe(const Scene& scene, const PipelineConfig& cfg, std::uint64_t seed, std::uint64_t step) {
  Observation obs;
  obs.cloud = render_cloud(scene, cfg.points_per_object, cfg.noise_sigma, derive_seed(seed, kTagRender, step));
  obs.target = obs.cloud.with_id(scene.target_id);
  return obs;
}

/// Raw sampler output for the observed target (what grasp datasets draw from).
inline std::vector<GraspCandidate> sampled_grasps(const Observation& obs, const PipelineConfig& cfg) {
  if (obs.target.empty()) return {};
  return sample_grasps(obs.target, cfg.gripper, cfg.grasp_candidates, cfg.grasp_sampler);
}

/// Sampled grasps that pass the finger-box pre-filter (what the policy scores).
inline std::vector<GraspCandidate> grasp_candidates(const Observation& obs, int target_id, const PipelineConfig& cfg) {
  return filter_grasp_collisions(sampled_grasps(obs, cfg), obs.cloud, target_id, cfg.gripper,
                                 cfg.grasp_filter_min_points);
}

inline std::vector<PushCandidate> push_candidates(const Observation& obs, const Workspace& ws, const PipelineConfig& cfg) {
  if (obs.target.empty()) return {};
  auto c = filter_push_collisions(sample_pushes(obs.target, cfg.push_dilation, cfg.push_spacing), obs.cloud,
                                  cfg.pusher_radius, cfg.push_margin);
  std::erase_if(c, [&](const PushCandidate& p) { return !ws.contains(Vec2(p.start.x(), p.start.y())); });
  return c;
}

inline GraspState grasp_state_for(const Observation& obs, const GraspCandidate& g, const PipelineConfig& cfg,
                                  std::uint64_t seed, std::size_t index, bool no_gripper_pc) {
  return make_grasp_state(obs.cloud, g, cfg.gripper, derive_seed(seed, kTagState, index), no_gripper_pc);
}

inline PushState push_state_for(const Observation& obs, const PushCandidate& p, int target_id, std::uint64_t seed,
                                std::size_t index) {
  return canonicalize_push(obs.cloud, p, target_id, derive_seed(seed, kTagState, index));
}

inline constexpr std::size_t kScoreChunk = 8;

/// Graspable probabilities for candidates in order. With `stop_above` set,
/// scoring stops after the first chunk holding a score above it, so the
/// result may be shorter than `cands`.
template <typename T>
std::vector<double> score_grasps(const GraspNet<T>& net, const Observation& obs, const std::vector<GraspCandidate>& cands,
                                 const PipelineConfig& cfg, std::uint64_t seed,
                                 std::optional<double> stop_above = std::nullopt) {
  std::vector<double> scores;
  std::vector<GraspState> states;
  std::vector<const StateMatrix*> ptrs;
  for (std::size_t s = 0; s < cands.size(); s += kScoreChunk) {
    const std::size_t n = std::min(kScoreChunk, cands.size() - s);
    states.clear();
    ptrs.clear();
    for (std::size_t k = 0; k < n; ++k) states.push_back(grasp_state_for(obs, cands[s + k], cfg, seed, s + k, cfg.no_gripper_pc));
    for (const auto& st : states) ptrs.push_back(&st.rows);
    auto part = batched_inference(net, ptrs);
    scores.insert(scores.end(), part.begin(), part.end());
    if (stop_above && std::any_of(part.begin(), part.end(), [&](double v) { return v > *stop_above; })) break;
  }
  return scores;
}

template <typename T>
std::vector<double> score_pushes(const PushNet<T>& net, const Observation& obs, const std::vector<PushCandidate>& cands,
                                 int target_id, std::uint64_t seed) {
  std::vector<PushState> states;
  states.reserve(cands.size());
  for (std::size_t i = 0; i < cands.size(); ++i) states.push_back(push_state_for(obs, cands[i], target_id, seed, i));
  std::vector<const StateMatrix*> ptrs;
  for (const auto& st : states) ptrs.push_back(&st.rows);
  return batched_inference(net, ptrs);
}

/// Index of the largest score; ties go to the lowest index. -1 when empty.
inline int argmax_index(const std::vector<double>& v) {
  int best = -1;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (best < 0 || v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

inline PushCommand push_command(const PushCandidate& p, const PipelineConfig& cfg) {
  PushCommand c;
  c.pose = p.pose;
  c.stroke = cfg.push_stroke;
  return c;
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads; results are stored by
/// index so the outcome does not depend on scheduling.
template <typename R, typename Fn>
std::vector<R> parallel_map(std::size_t n, int jobs, Fn&& fn) {
  std::vector<R> out(n);
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  std::atomic<std::size_t> next{0};
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          out[i] = fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace pushgrasp
