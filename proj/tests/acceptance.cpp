// End-to-end acceptance run: prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails. Artifacts go to --workdir.
#include <malloc.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "pushgrasp/config.hpp"
#include "raster_oracle.hpp"

using namespace pushgrasp;
namespace fs = std::filesystem;

namespace {

double now_s() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

void log(const char* fmt, auto... args) {
  std::printf("  # ");
  std::printf(fmt, args...);
  std::printf("\n");
  std::fflush(stdout);
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<const StateMatrix*> ptrs(const std::vector<StateMatrix>& v) {
  std::vector<const StateMatrix*> p;
  for (const auto& s : v) p.push_back(&s);
  return p;
}

template <typename Net>
double held_out_accuracy(const Net& net, const Dataset& ds) {
  const auto st = ds.states();
  const auto lb = ds.labels();
  return evaluate(net, ptrs(st), lb, LossConfig{}).second;
}

// ---------------------------------------------------------------------------
// Criterion 6

Verdict loss_oracles() {
  double worst = 0.0;
  Eigen::MatrixXd u(3, 2);
  u << 0.5, 0.5, 0.5, 0.5, 0.5, 0.5;
  for (double eps : {0.0, 0.1, 0.5}) {
    LossConfig c;
    c.epsilon = eps;
    worst = std::max(worst, std::abs(grasp_loss(u, std::vector<int>{0, 1, 1}, c) - std::log(2.0)));
  }
  worst = std::max(worst, std::abs(push_loss<double>(std::vector<double>{0.5, 0.5}, std::vector<int>{0, 1}) - std::log(2.0)));
  Eigen::MatrixXd p(1, 2);
  p << 0.9, 0.1;
  const double hand = -(0.95 * std::log(0.9) + 0.05 * std::log(0.1));
  const double got = grasp_loss(p, std::vector<int>{0}, LossConfig{});
  worst = std::max(worst, std::abs(got - hand));
  const bool rounds = std::abs(got - 0.2152) < 5e-5;
  return {worst <= 1e-6 && rounds, fmt("max |loss - hand value| %.2e (<= 1e-6); smoothed example %.6f (~0.2152)", worst, got)};
}

// ---------------------------------------------------------------------------
// Criterion 7

StateMatrix toy_grasp_state(Rng& rng) {
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  StateMatrix s(4, kGraspStateCols);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 3; ++j) s(i, j) = static_cast<float>(u(rng));
    s(i, 3) = static_cast<float>(i % 2);
  }
  return s;
}

StateMatrix toy_push_state(Rng& rng) {
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  StateMatrix s = StateMatrix::Zero(4, kPushStateCols);
  for (int i = 0; i < 4; ++i) {
    s(i, 0) = static_cast<float>(0.5 + u(rng));
    s(i, 1) = static_cast<float>(u(rng));
    s(i, 2) = static_cast<float>(0.03 + u(rng) / 5);
    s(i, 3 + std::min(i, 1 + (i % 2))) = 1.0f;
  }
  s.row(0) << 0.5f, 0.0f, 0.03f, 1.0f, 0.0f, 0.0f;
  return s;
}

template <typename Net>
double gradient_error(Net& net, const std::vector<StateMatrix>& states, const std::vector<int>& labels) {
  const auto p = ptrs(states);
  const LossConfig lc;
  ParamVector<double> grad, tmp;
  net.loss_and_gradient(p, labels, lc, grad);
  auto& w = net.params();
  const double h = 1e-4;
  double worst = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double o = w[i];
    w[i] = o + h;
    const double lp = net.loss_and_gradient(p, labels, lc, tmp);
    w[i] = o - h;
    const double lm = net.loss_and_gradient(p, labels, lc, tmp);
    w[i] = o;
    const double fd = (lp - lm) / (2 * h);
    worst = std::max(worst, std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-6}));
  }
  return worst;
}

Verdict gradient_check() {
  Rng rng(5);
  GraspNet<double> g({8, 8, 16, 8, 8});
  g.init(3);
  const double eg = gradient_error(g, {toy_grasp_state(rng), toy_grasp_state(rng)}, {0, 1});
  PushNet<double> p({8, 8, 8, 4});
  p.init(4);
  const double ep = gradient_error(p, {toy_push_state(rng), toy_push_state(rng)}, {1, 0});
  return {std::max(eg, ep) <= 1e-3,
          fmt("max relative error grasp %.2e over %zu params, push %.2e over %zu params (<= 1e-3)", eg,
              g.params().size(), ep, p.params().size())};
}

// ---------------------------------------------------------------------------
// Criterion 8

Verdict geometry_oracles() {
  Scene sq;
  SimObject box;
  box.id = 1;
  box.shape = make_shape("square", rectangle(0.06, 0.06), 0.04);
  box.pose = {0.5, 0.0, 0.0};
  sq.objects.push_back(box);
  sq.target_id = 1;
  const auto square_starts = sample_pushes(render_cloud(sq, 512, 0.0, 1).with_id(1)).size();

  double dmin = 1e9, dmax = 0.0, ortho = 0.0;
  std::size_t starts = 0;
  PipelineConfig pc;
  pc.n_objects = 8;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const Scene s = generate_scene(8, pc.library, 7000 + seed);
    const Observation obs = observe(s, pc, seed, 0);
    const Polygon2 hull = convex_hull(obs.target.xy());
    for (const auto& p : sample_pushes(obs.target)) {
      const double d = contains(hull, Vec2(p.start.x(), p.start.y())) ? 0.0 : boundary_distance(Vec2(p.start.x(), p.start.y()), hull);
      dmin = std::min(dmin, d);
      dmax = std::max(dmax, d);
      const Rot3& r = p.pose.rotation;
      ortho = std::max({ortho, (r.transpose() * r - Rot3::Identity()).cwiseAbs().maxCoeff(), std::abs(r.determinant() - 1.0)});
      ++starts;
    }
  }

  Rng rng(99);
  const Scene s = generate_scene(10, pc.library, 17);
  const PointCloud cloud = render_cloud(s, 512, 0.002, 17);
  const auto pushes = sample_pushes(cloud.with_id(s.target_id));
  std::uniform_real_distribution<double> a(-kPi, kPi), t(-0.3, 0.3);
  double canon = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Pose m = planar_pose(t(rng), t(rng), a(rng));
    const auto& p = pushes[static_cast<std::size_t>(trial) % pushes.size()];
    PushCandidate q;
    q.pose = m * p.pose;
    q.start = m.apply(p.start);
    const PushState x = canonicalize_push(cloud, p, s.target_id, 42);
    const PushState y = canonicalize_push(transform_cloud(cloud, m), q, s.target_id, 42);
    canon = std::max(canon, static_cast<double>((x.rows - y.rows).cwiseAbs().maxCoeff()));
  }
  const bool pass = square_starts >= 10 && square_starts <= 12 && dmin >= 0.0155 && dmax <= 0.0165 && ortho <= 1e-9 &&
                    canon <= 1e-6;
  return {pass, fmt("square starts %zu (11 +- 1); %zu starts at hull distance [%.5f, %.5f] (within [0.0155, 0.0165]); "
                    "frame error %.1e (<= 1e-9); canonical drift %.1e over 100 motions (<= 1e-6)",
                    square_starts, starts, dmin, dmax, ortho, canon)};
}

// ---------------------------------------------------------------------------
// Criterion 9

Verdict simulator_oracles() {
  auto agreement = raster::compare_on_random_scenes(200);
  const int total = agreement.compared + agreement.ambiguous;
  const bool raster_ok = agreement.disagreements == 0 && agreement.ambiguous * 10 <= total && agreement.compared > 0;

  const auto lib = default_shape_library();
  int pushes = 0, nondeterministic = 0;
  double worst_pen = 0.0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto s = generate_scene(8, lib, seed);
    const auto cloud = render_cloud(s, 256, 0.0, seed);
    const auto cands = filter_push_collisions(sample_pushes(cloud.with_id(s.target_id)), cloud, 0.008);
    for (std::size_t k = 0; k < cands.size(); k += 3) {
      const PushCommand cmd{cands[k].pose, kPushStroke};
      Scene x, y;
      try {
        x = execute_push(s, cmd);
      } catch (const Error&) {
        continue;
      }
      y = execute_push(s, cmd);
      ++pushes;
      nondeterministic += serialize_scene(x) != serialize_scene(y);
      worst_pen = std::max(worst_pen, max_penetration(x));
    }
  }
  const bool push_ok = pushes > 0 && nondeterministic == 0 && worst_pen <= 1e-4;
  std::string detail = fmt("raster agreement %d/%d resolved cases (100%% required), %d of %d below raster resolution "
                           "(<= 10%%); %d pushes, %d non-identical reruns, max penetration %.1e m (<= 1e-4)",
                           agreement.compared - agreement.disagreements, agreement.compared, agreement.ambiguous, total,
                           pushes, nondeterministic, worst_pen);
  if (agreement.disagreements) detail += "; first disagreement: " + agreement.first_disagreement;
  return {raster_ok && push_ok, detail};
}

// ---------------------------------------------------------------------------
// Criterion 10 helpers

struct MiniRun {
  std::vector<char> grasp_data, push_data, grasp_ckpt, push_ckpt;
  std::string table;
};

MiniRun mini_pipeline(std::uint64_t seed, int jobs) {
  PipelineConfig pc;
  pc.n_objects = 6;
  MiniRun r;
  const Dataset gd = collect_grasp_data(300, seed, pc, jobs);
  r.grasp_data = serialize_dataset(gd);
  TrainConfig gt = TrainConfig::grasp_defaults();
  gt.epochs = 2;
  gt.seed = seed;
  GraspNet<float> g;
  g.init(seed);
  const auto gs = gd.states();
  const auto gres = train(g, gs, gd.labels(), gt);
  r.grasp_ckpt = serialize_checkpoint(gres.checkpoint);
  const Dataset pd = collect_push_data(16, g, seed + 1, pc, jobs);
  r.push_data = serialize_dataset(pd);
  TrainConfig pt = TrainConfig::push_defaults();
  pt.epochs = 2;
  pt.seed = seed;
  PushNet<float> p;
  p.init(seed);
  const auto ps = pd.states();
  r.push_ckpt = serialize_checkpoint(train(p, ps, pd.labels(), pt).checkpoint);
  EpisodeConfig ec;
  ec.pipeline = pc;
  ec.max_actions = 3;
  ec.grasp_threshold = 0.5;
  const auto scenes = random_suite(6, 4, seed + 2, pc);
  r.table = format_summary_table(evaluate_scenes(scenes, {&g, &p}, ec, seed + 3, jobs)) +
            format_summary_records(evaluate_scenes(scenes, {&g, &p}, ec, seed + 3, jobs));
  return r;
}

bool file_round_trip(const fs::path& path, const std::vector<char>& bytes, bool is_dataset) {
  write_file_bytes(path.string(), bytes);
  const auto back = read_file_bytes(path.string());
  if (back != bytes) return false;
  const auto reserialized = is_dataset ? serialize_dataset(parse_dataset(back)) : serialize_checkpoint(parse_checkpoint(back));
  return reserialized == bytes;
}

// ---------------------------------------------------------------------------
// Criterion 2: matched suite with at least `min_blocked` scenes where the
// grasp-only policy cannot act at the first observation.

std::vector<Scene> matched_suite(std::vector<Scene> scenes, const GraspNet<float>& g, const EpisodeConfig& ec,
                                 std::uint64_t episode_seed, std::uint64_t scene_seed_base, int min_blocked, int* blocked_out,
                                 int* replaced_out) {
  const PolicyNets nets{&g, nullptr};
  auto blocked_at = [&](const Scene& s, std::size_t pos) {
    return single_grasp_baseline(s, nets, ec, derive_seed(episode_seed, kTagEpisode, pos)).end_reason == "no_grasp";
  };
  std::vector<bool> blocked(scenes.size());
  int n_blocked = 0;
  for (std::size_t i = 0; i < scenes.size(); ++i) n_blocked += blocked[i] = blocked_at(scenes[i], i);
  int replaced = 0;
  std::size_t next = 0;
  for (std::size_t pos = scenes.size(); n_blocked < min_blocked && pos-- > 0;) {
    if (blocked[pos]) continue;
    // Fresh scenes from a disjoint seed stream until one is blocked here.
    for (int tries = 0; tries < 2000; ++tries) {
      Scene cand;
      try {
        cand = generate_scene(ec.pipeline.n_objects, ec.pipeline.library, scene_seed(scene_seed_base, next++),
                              ec.pipeline.scene_gen, ec.pipeline.workspace);
      } catch (const Error&) {
        continue;
      }
      if (blocked_at(cand, pos)) {
        scenes[pos] = cand;
        blocked[pos] = true;
        ++n_blocked;
        ++replaced;
        break;
      }
    }
  }
  *blocked_out = n_blocked;
  *replaced_out = replaced;
  return scenes;
}

}  // namespace

int main(int argc, char** argv) {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  CLI::App app{"acceptance run"};
  std::string workdir = "acceptance_artifacts";
  int jobs = 1;
  app.add_option("--workdir", workdir, "artifact directory");
  app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);
  const fs::path wd(workdir);

  std::map<int, Verdict> v;
  auto report = [&](int id, Verdict r) {
    log("criterion %d evaluated: %s", id, r.pass ? "pass" : "fail");
    v[id] = std::move(r);
  };

  const double t_start = now_s();
  report(6, loss_oracles());
  report(7, gradient_check());
  report(8, geometry_oracles());
  report(9, simulator_oracles());
  log("unit-level criteria took %.0f s", now_s() - t_start);

  // Desk-scale pipeline: 8-object scenes, 4000 + 4000 samples.
  PipelineConfig pc;
  pc.n_objects = 8;
  const std::uint64_t kGraspTrainSeed = 101, kGraspTestSeed = 202, kPushTrainSeed = 303, kPushTestSeed = 404,
                      kEvalSeed = 505, kCalibSeed = 606, kSuiteExtraSeed = 707, kTrainSeed = 11;
  double runtime = 0.0;
  auto timed = [&](const char* what, auto&& f) {
    const double t0 = now_s();
    auto r = f();
    const double dt = now_s() - t0;
    log("%s: %.0f s", what, dt);
    return std::pair{std::move(r), dt};
  };

  auto [grasp_train, t1] = timed("grasp datagen (4000)", [&] { return collect_grasp_data(4000, kGraspTrainSeed, pc, jobs); });
  auto [grasp_test, t2] = timed("grasp held-out datagen (1000)", [&] { return collect_grasp_data(1000, kGraspTestSeed, pc, jobs); });
  runtime += t1 + t2;
  log("grasp positive rate train %.3f held-out %.3f", grasp_train.positive_rate(), grasp_test.positive_rate());

  auto train_grasp = [&](const Dataset& ds, const std::string& variant) {
    TrainConfig tc = TrainConfig::grasp_defaults();
    tc.seed = kTrainSeed;
    GraspNet<float> net;
    net.init(tc.seed);
    const auto st = ds.states();
    const auto res = train(net, st, ds.labels(), tc, {},
                           [&](const EpochMetrics& m) {
                             if (m.epoch % 10 == 0 || m.epoch == tc.epochs)
                               log("  %s epoch %d lr %.1e train acc %.3f val acc %.3f", variant.empty() ? "grasp" : variant.c_str(),
                                   m.epoch, m.lr, m.train_accuracy, m.val_accuracy);
                           },
                           variant);
    return std::pair{std::move(net), res.checkpoint};
  };
  auto [grasp_pair, t3] = timed("grasp training (85 epochs)", [&] { return train_grasp(grasp_train, ""); });
  runtime += t3;
  const GraspNet<float>& gnet = grasp_pair.first;
  const double grasp_acc = held_out_accuracy(gnet, grasp_test);
  log("grasp held-out accuracy %.4f", grasp_acc);

  auto [push_train, t4] = timed("push datagen (4000)", [&] { return collect_push_data(4000, gnet, kPushTrainSeed, pc, jobs); });
  auto [push_test, t5] = timed("push held-out datagen (500)", [&] { return collect_push_data(500, gnet, kPushTestSeed, pc, jobs); });
  runtime += t4 + t5;
  log("push positive rate train %.3f held-out %.3f", push_train.positive_rate(), push_test.positive_rate());

  auto [push_pair, t6] = timed("push training (100 epochs)", [&] {
    TrainConfig tc = TrainConfig::push_defaults();
    tc.seed = kTrainSeed;
    PushNet<float> net;
    net.init(tc.seed);
    const auto st = push_train.states();
    const auto res = train(net, st, push_train.labels(), tc, {}, [&](const EpochMetrics& m) {
      if (m.epoch % 10 == 0) log("  push epoch %d lr %.1e train acc %.3f val acc %.3f", m.epoch, m.lr, m.train_accuracy, m.val_accuracy);
    });
    return std::pair{std::move(net), res.checkpoint};
  });
  runtime += t6;
  const PushNet<float>& pnet = push_pair.first;
  const double push_acc = held_out_accuracy(pnet, push_test);
  log("push held-out accuracy %.4f", push_acc);

  EpisodeConfig ec;
  ec.pipeline = pc;
  const auto eval_scenes = random_suite(8, 30, kEvalSeed, pc);
  auto [full, t7] = timed("evaluation (30 scenes)", [&] { return evaluate_scenes(eval_scenes, {&gnet, &pnet}, ec, kEvalSeed, jobs); });
  runtime += t7;
  {
    std::ofstream(wd / "eval_full.txt") << format_summary_table(full) << format_summary_records(full);
  }
  const bool c1 = full.completion_rate >= 0.9 && full.grasp_success_rate >= 0.9 && full.mean_motion_completed <= 4.0 &&
                  runtime <= 3600.0;
  report(1, {c1, fmt("completion %.1f%% (>= 90%%), grasp success %.1f%% of %d grasps (>= 90%%), mean motion %.2f over "
                     "completed (<= 4.0), pipeline runtime %.0f s (<= 3600 s)",
                     100 * full.completion_rate, 100 * full.grasp_success_rate, full.total_grasps,
                     full.mean_motion_completed, runtime)});
  report(4, {grasp_acc >= 0.85 && push_acc >= 0.70,
             fmt("grasp held-out accuracy %.1f%% on %zu (>= 85%%), push held-out accuracy %.1f%% on %zu (>= 70%%)",
                 100 * grasp_acc, grasp_test.size(), 100 * push_acc, push_test.size())});

  // Criterion 2.
  {
    int blocked = 0, replaced = 0;
    const auto suite = matched_suite(eval_scenes, gnet, ec, kEvalSeed, kSuiteExtraSeed, 3, &blocked, &replaced);
    const auto f = replaced ? evaluate_scenes(suite, {&gnet, &pnet}, ec, kEvalSeed, jobs) : full;
    EpisodeConfig single = ec;
    single.allow_push = false;
    const auto b = evaluate_scenes(suite, {&gnet, nullptr}, single, kEvalSeed, jobs);
    std::ofstream(wd / "eval_matched_full.txt") << format_summary_table(f);
    std::ofstream(wd / "eval_matched_single.txt") << format_summary_table(b);
    report(2, {blocked >= 3 && b.completion_rate < f.completion_rate,
               fmt("single-grasp completion %.1f%% < full policy %.1f%% on %zu matched scenes, %d needing pushes "
                   "(>= 3; %d drawn in)",
                   100 * b.completion_rate, 100 * f.completion_rate, suite.size(), blocked, replaced)});
  }

  // Criterion 5.
  {
    const auto data = scored_candidates(gnet, 2000, kCalibSeed, pc, jobs);
    const auto rows = calibration_table(data, default_calibration_thresholds());
    std::ofstream out(wd / "calibration.txt");
    double r05 = 0, r08 = 0;
    std::size_t n08 = 0;
    for (const auto& r : rows) {
      out << fmt("%.2f %zu %zu %.4f\n", r.threshold, r.count, r.successes, r.success_rate());
      if (r.threshold == 0.5) r05 = r.success_rate();
      if (r.threshold == 0.8) r08 = r.success_rate(), n08 = r.count;
    }
    report(5, {data.size() >= 2000 && n08 > 0 && r08 - r05 >= 0.03,
               fmt("success above 0.8 %.1f%% (%zu cands) vs above 0.5 %.1f%%: +%.1f points (>= 3) on %zu held-out "
                   "candidates",
                   100 * r08, n08, 100 * r05, 100 * (r08 - r05), data.size())});
  }

  // Criterion 3: identical samples, states rebuilt without the gripper cloud.
  {
    const Dataset abl_train = rebuild_grasp_dataset(grasp_train, pc, true, jobs);
    const Dataset abl_test = rebuild_grasp_dataset(grasp_test, pc, true, jobs);
    auto [abl_pair, t8] = timed("ablation training (85 epochs)", [&] { return train_grasp(abl_train, "no_gripper_pc"); });
    (void)t8;
    const double abl_acc = held_out_accuracy(abl_pair.first, abl_test);
    write_file_bytes((wd / "grasp_no_gripper_pc.pgck").string(), serialize_checkpoint(abl_pair.second));
    report(3, {grasp_acc - abl_acc >= 0.05,
               fmt("held-out accuracy full %.1f%% vs no gripper cloud %.1f%%: drop %.1f points (>= 5)", 100 * grasp_acc,
                   100 * abl_acc, 100 * (grasp_acc - abl_acc))});
  }

  // Criterion 10.
  {
    bool files = true;
    files &= file_round_trip(wd / "grasp_train.pgds", serialize_dataset(grasp_train), true);
    files &= file_round_trip(wd / "grasp_test.pgds", serialize_dataset(grasp_test), true);
    files &= file_round_trip(wd / "push_train.pgds", serialize_dataset(push_train), true);
    files &= file_round_trip(wd / "push_test.pgds", serialize_dataset(push_test), true);
    files &= file_round_trip(wd / "grasp.pgck", serialize_checkpoint(grasp_pair.second), false);
    files &= file_round_trip(wd / "push.pgck", serialize_checkpoint(push_pair.second), false);
    // A reloaded checkpoint reproduces the weights it was written from.
    const auto reloaded = from_checkpoint<GraspNet<float>>(parse_checkpoint(serialize_checkpoint(grasp_pair.second)));
    files &= serialize_checkpoint(to_checkpoint(reloaded, grasp_pair.second.meta)) == serialize_checkpoint(grasp_pair.second);
    const MiniRun a = mini_pipeline(31, 1), b = mini_pipeline(31, 1), c = mini_pipeline(31, 2);
    const bool same = a.table == b.table && a.grasp_data == b.grasp_data && a.push_data == b.push_data &&
                      a.grasp_ckpt == b.grasp_ckpt && a.push_ckpt == b.push_ckpt;
    const bool same_jobs = a.table == c.table && a.grasp_data == c.grasp_data && a.push_data == c.push_data;
    report(10, {files && same && same_jobs,
                fmt("dataset/checkpoint files round-trip %s; repeated fixed-seed end-to-end runs %s; 2-worker run %s",
                    files ? "bit-identical" : "DIFFER", same ? "identical" : "DIFFER", same_jobs ? "identical" : "DIFFER")});
  }

  std::printf("\nAcceptance results\n");
  int failed = 0;
  for (const auto& [id, r] : v) {
    std::printf("criterion %2d %s  %s\n", id, r.pass ? "PASS" : "FAIL", r.detail.c_str());
    failed += !r.pass;
  }
  std::printf("%d of %zu criteria passed (total %.0f s)\n", static_cast<int>(v.size()) - failed, v.size(), now_s() - t_start);
  return failed ? 1 : 0;
}
