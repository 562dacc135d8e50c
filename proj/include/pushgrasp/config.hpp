#pragma once

#include <fstream>
#include <map>
#include <sstream>

#include "pushgrasp/policy.hpp"

namespace pushgrasp {

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

/// Every tunable of the pipeline, in help order.
inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"seed", "0", "default seed (PUSHGRASP_SEED overrides this default, flags override both)"},
      {"gripper.finger_length", "0.04", "finger length along the approach axis [m]"},
      {"gripper.finger_thickness", "0.01", "finger thickness along the closing axis [m]"},
      {"gripper.finger_height", "0.03", "finger width along the grasp x-axis [m]"},
      {"gripper.max_opening", "0.10", "maximum finger opening [m]"},
      {"gripper.palm_depth", "0.02", "palm depth behind the finger roots [m]"},
      {"gripper.friction_cone_deg", "20", "friction cone half-angle [deg]"},
      {"workspace.x_min", "0.25", "workspace lower x [m]"},
      {"workspace.y_min", "-0.225", "workspace lower y [m]"},
      {"workspace.width", "0.5", "workspace extent along x [m]"},
      {"workspace.depth", "0.45", "workspace extent along y [m]"},
      {"scene.objects", "10", "objects per generated data scene"},
      {"scene.spread_x", "0.07", "placement spread about the workspace centre along x [m]"},
      {"scene.spread_y", "0.06", "placement spread about the workspace centre along y [m]"},
      {"scene.max_rejections", "10000", "placement attempts before a scene counts as saturated"},
      {"scene.shape_library", "", "shape library file (empty = built-in library)"},
      {"render.points_per_object", "512", "surface samples per object"},
      {"render.noise_sigma", "0.002", "Gaussian point noise [m]"},
      {"grasp.candidates", "64", "maximum grasp candidates per target"},
      {"grasp.directions", "36", "closing directions over 180 deg"},
      {"grasp.width_clearance", "0.01", "opening added to the caliper width [m]"},
      {"grasp.offset_fraction", "0.25", "along-axis offsets as a fraction of the footprint length"},
      {"grasp.filter_min_points", "3", "non-target points in a finger box that reject a candidate"},
      {"grasp.threshold", "0.8", "graspability threshold for executing a grasp and for push labels"},
      {"push.dilation", "0.016", "push contour dilation [m]"},
      {"push.spacing", "0.03", "arc-length spacing of push starts [m]"},
      {"push.pusher_radius", "0.008", "pusher disc radius [m]"},
      {"push.margin", "0.002", "extra clearance required around a push start [m]"},
      {"push.stroke", "0.125", "push stroke length [m]"},
      {"push.step", "0.001", "simulation step along the stroke [m]"},
      {"push.rounds", "32", "object-object resolution rounds per step"},
      {"push.rotation_gain", "1.0", "rotation gain for lever-arm induced turning"},
      {"push.pusher_sides", "16", "polygon sides approximating the pusher disc"},
      {"push.penetration_tolerance", "0.0001", "residual overlap that marks a jammed step [m]"},
      {"data.grasp_samples", "4000", "grasp dataset size"},
      {"data.push_samples", "4000", "push dataset size"},
      {"loss.epsilon", "0.1", "label smoothing for the grasp loss"},
      {"train.grasp.batch_size", "256", "grasp training batch size"},
      {"train.grasp.val_batch_size", "256", "grasp validation batch size"},
      {"train.grasp.lr0", "0.0005", "grasp initial learning rate"},
      {"train.grasp.epochs", "85", "grasp training epochs"},
      {"train.grasp.milestones", "40,55,80", "grasp step-decay milestones (epochs)"},
      {"train.grasp.decay_factor", "0.1", "grasp step-decay factor"},
      {"train.grasp.weight_decay", "0.01", "grasp decoupled weight decay"},
      {"train.grasp.val_fraction", "0.1", "grasp validation split"},
      {"train.push.batch_size", "128", "push training batch size"},
      {"train.push.val_batch_size", "64", "push validation batch size"},
      {"train.push.lr0", "0.0008", "push initial learning rate"},
      {"train.push.epochs", "100", "push training epochs"},
      {"train.push.decay_factor", "0.95", "push plateau decay factor"},
      {"train.push.plateau_min_delta", "0.00001", "validation-loss improvement that resets the plateau"},
      {"train.push.val_fraction", "0.1", "push validation split"},
      {"eval.max_actions", "10", "action budget per episode"},
      {"eval.objects", "15", "objects per random evaluation scene"},
      {"eval.scenes", "30", "episodes per random evaluation suite"},
      {"jobs", "1", "worker threads"},
  };
  return keys;
}

/// One line per key: name, default and description.
inline std::string config_help() {
  std::size_t w = 0;
  for (const auto& k : config_keys()) w = std::max(w, k.name.size());
  std::string out;
  for (const auto& k : config_keys()) {
    out += "  " + k.name + std::string(w + 2 - k.name.size(), ' ') + k.help;
    out += " (default: " + (k.default_value.empty() ? std::string("none") : k.default_value) + ")\n";
  }
  return out;
}

class Config {
 public:
  Config() {
    for (const auto& k : config_keys()) values_[k.name] = k.default_value;
  }

  static bool known(const std::string& key) {
    for (const auto& k : config_keys())
      if (k.name == key) return true;
    return false;
  }

  void set(const std::string& key, const std::string& value) {
    if (!known(key)) throw Error("unknown config key '" + key + "'");
    values_[key] = value;
  }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw Error("unknown config key '" + key + "'");
    return it->second;
  }
  double real(const std::string& key) const { return parse_double(get(key)); }
  long long integer(const std::string& key) const { return parse_int(get(key)); }

  /// "key = value" lines; '#' starts a comment.
  void load_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw Error("config line " + std::to_string(lineno) + ": expected key = value");
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    validate();
  }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    load_text(ss.str());
  }

  std::string dump() const {
    std::string out;
    for (const auto& k : config_keys()) out += k.name + " = " + get(k.name) + "\n";
    return out;
  }

  GripperSpec gripper() const {
    GripperSpec g;
    g.finger_length = real("gripper.finger_length");
    g.finger_thickness = real("gripper.finger_thickness");
    g.finger_height = real("gripper.finger_height");
    g.max_opening = real("gripper.max_opening");
    g.palm_depth = real("gripper.palm_depth");
    g.friction_cone_half_angle = real("gripper.friction_cone_deg") * kPi / 180.0;
    return g;
  }

  PipelineConfig pipeline() const {
    PipelineConfig p;
    const std::string lib = get("scene.shape_library");
    if (!lib.empty()) {
      std::ifstream in(lib);
      if (!in) throw Error("cannot open shape library '" + lib + "'");
      std::stringstream ss;
      ss << in.rdbuf();
      p.library = parse_shape_library(ss.str());
    }
    p.gripper = gripper();
    p.workspace = {real("workspace.x_min"), real("workspace.y_min"), real("workspace.width"), real("workspace.depth")};
    p.scene_gen.spread_x = real("scene.spread_x");
    p.scene_gen.spread_y = real("scene.spread_y");
    p.scene_gen.max_rejections = static_cast<int>(integer("scene.max_rejections"));
    p.n_objects = static_cast<int>(integer("scene.objects"));
    p.points_per_object = static_cast<int>(integer("render.points_per_object"));
    p.noise_sigma = real("render.noise_sigma");
    p.grasp_candidates = static_cast<int>(integer("grasp.candidates"));
    p.grasp_sampler.directions = static_cast<int>(integer("grasp.directions"));
    p.grasp_sampler.width_clearance = real("grasp.width_clearance");
    p.grasp_sampler.offset_fraction = real("grasp.offset_fraction");
    p.grasp_filter_min_points = static_cast<int>(integer("grasp.filter_min_points"));
    p.grasp_threshold = real("grasp.threshold");
    p.push_dilation = real("push.dilation");
    p.push_spacing = real("push.spacing");
    p.pusher_radius = real("push.pusher_radius");
    p.push_margin = real("push.margin");
    p.push_stroke = real("push.stroke");
    p.push_sim.step = real("push.step");
    p.push_sim.resolution_rounds = static_cast<int>(integer("push.rounds"));
    p.push_sim.rotation_gain = real("push.rotation_gain");
    p.push_sim.pusher_sides = static_cast<int>(integer("push.pusher_sides"));
    p.push_sim.penetration_tolerance = real("push.penetration_tolerance");
    p.validate();
    if (!(p.workspace.width > 0 && p.workspace.depth > 0)) throw Error("workspace extents must be positive");
    if (!(p.push_sim.step > 0) || p.push_sim.resolution_rounds < 1 || p.push_sim.pusher_sides < 3)
      throw Error("invalid push simulation settings");
    if (p.scene_gen.max_rejections < 1 || !(p.scene_gen.spread_x > 0 && p.scene_gen.spread_y > 0))
      throw Error("invalid scene generation settings");
    return p;
  }

  LossConfig loss() const {
    LossConfig l;
    l.epsilon = real("loss.epsilon");
    l.validate();
    return l;
  }

  TrainConfig train(SampleKind kind) const {
    if (kind == SampleKind::grasp) {
      TrainConfig t = TrainConfig::grasp_defaults();
      t.batch_size = static_cast<int>(integer("train.grasp.batch_size"));
      t.val_batch_size = static_cast<int>(integer("train.grasp.val_batch_size"));
      t.lr0 = real("train.grasp.lr0");
      t.epochs = static_cast<int>(integer("train.grasp.epochs"));
      t.milestones.clear();
      std::stringstream ms(get("train.grasp.milestones"));
      for (std::string m; std::getline(ms, m, ',');)
        if (!m.empty()) t.milestones.push_back(static_cast<int>(parse_int(m)));
      t.decay_factor = real("train.grasp.decay_factor");
      t.weight_decay = real("train.grasp.weight_decay");
      t.val_fraction = real("train.grasp.val_fraction");
      t.seed = static_cast<std::uint64_t>(integer("seed"));
      t.validate();
      return t;
    }
    TrainConfig t = TrainConfig::push_defaults();
    t.batch_size = static_cast<int>(integer("train.push.batch_size"));
    t.val_batch_size = static_cast<int>(integer("train.push.val_batch_size"));
    t.lr0 = real("train.push.lr0");
    t.epochs = static_cast<int>(integer("train.push.epochs"));
    t.decay_factor = real("train.push.decay_factor");
    t.plateau_min_delta = real("train.push.plateau_min_delta");
    t.val_fraction = real("train.push.val_fraction");
    t.seed = static_cast<std::uint64_t>(integer("seed"));
    t.validate();
    return t;
  }

  EpisodeConfig episode() const {
    EpisodeConfig e;
    e.max_actions = static_cast<int>(integer("eval.max_actions"));
    e.grasp_threshold = real("grasp.threshold");
    e.pipeline = pipeline();
    e.validate();
    return e;
  }

  void validate() const {
    pipeline();
    loss();
    train(SampleKind::grasp);
    train(SampleKind::push);
    episode();
    if (integer("data.grasp_samples") < 1 || integer("data.push_samples") < 1) throw Error("dataset sizes must be >= 1");
    if (integer("eval.objects") < 1 || integer("eval.scenes") < 1) throw Error("eval sizes must be >= 1");
    if (integer("jobs") < 1) throw Error("jobs must be >= 1");
  }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace pushgrasp
