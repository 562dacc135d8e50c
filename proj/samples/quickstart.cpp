// Walks one cluttered scene through the pipeline pieces: observation,
// grasp and push candidates, the grasp oracle, one simulated push and the
// learned-state shapes. Writes quickstart.svg to the working directory.
#include <cstdio>
#include <fstream>

#include "pushgrasp/svg.hpp"

using namespace pushgrasp;

int main() {
  PipelineConfig pc;
  pc.n_objects = 8;
  const std::uint64_t seed = 2024;
  const Scene scene = generate_scene(pc.n_objects, pc.library, seed, pc.scene_gen, pc.workspace);
  std::printf("scene: %zu objects, target %d (%s)\n", scene.objects.size(), scene.target_id,
              scene.target().shape.name.c_str());

  const Observation obs = observe(scene, pc, seed, 0);
  std::printf("cloud: %zu points, %zu on the target\n", obs.cloud.size(), obs.target.size());

  const auto sampled = sampled_grasps(obs, pc);
  const auto grasps = grasp_candidates(obs, scene.target_id, pc);
  std::printf("grasps: %zu sampled, %zu pass the finger-box filter\n", sampled.size(), grasps.size());
  std::vector<Action> shown;
  for (std::size_t i = 0; i < grasps.size() && i < 3; ++i) {
    const auto o = grasp_oracle(scene, grasps[i].pose, grasps[i].width, pc.gripper);
    std::printf("  grasp %zu width %.3f source score %.2f -> %s\n", i, grasps[i].width, grasps[i].source_score,
                to_string(o));
    Action a;
    a.kind = ActionKind::grasp;
    a.pose = grasps[i].pose;
    a.width = grasps[i].width;
    a.outcome = o;
    shown.push_back(a);
  }

  const auto pushes = push_candidates(obs, scene.workspace, pc);
  std::printf("pushes: %zu collision-free starts\n", pushes.size());
  if (!pushes.empty()) {
    const Scene after = execute_push(scene, push_command(pushes[0], pc), pc.pusher_radius, pc.push_sim);
    const Vec2 d = after.target().center() - scene.target().center();
    std::printf("  push 0 moves the target by %.4f m, max penetration %.2e m\n", d.norm(), max_penetration(after));
    Action a;
    a.kind = ActionKind::push;
    a.pose = pushes[0].pose;
    shown.insert(shown.begin(), a);
  }

  if (!grasps.empty()) {
    const auto gs = grasp_state_for(obs, grasps[0], pc, seed, 0, pc.no_gripper_pc);
    std::printf("grasp state: %ld x %ld\n", static_cast<long>(gs.rows.rows()), static_cast<long>(gs.rows.cols()));
  }
  if (!pushes.empty()) {
    const auto ps = push_state_for(obs, pushes[0], scene.target_id, seed, 0);
    std::printf("push state: %ld x %ld\n", static_cast<long>(ps.rows.rows()), static_cast<long>(ps.rows.cols()));
  }

  std::ofstream("quickstart.svg") << render_svg(scene, shown, pc.gripper);
  std::printf("wrote quickstart.svg\n");
  return 0;
}
