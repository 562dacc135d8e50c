#pragma once

#include <sstream>

#include "pushgrasp/policy.hpp"

namespace pushgrasp {

struct SvgStyle {
  double pixels_per_metre = 1200.0;
  double margin_px = 20.0;
};

namespace detail {

class SvgCanvas {
 public:
  SvgCanvas(const Workspace& ws, const SvgStyle& st) : ws_(ws), st_(st) {}

  // Workspace x to the right, y upward.
  double px(double x) const { return st_.margin_px + (x - ws_.x_min) * st_.pixels_per_metre; }
  double py(double y) const { return st_.margin_px + (ws_.y_max() - y) * st_.pixels_per_metre; }
  double width() const { return 2 * st_.margin_px + ws_.width * st_.pixels_per_metre; }
  double height() const { return 2 * st_.margin_px + ws_.depth * st_.pixels_per_metre; }

  static std::string num(double v) {
    std::ostringstream o;
    o.precision(6);
    o << v;
    return o.str();
  }

  std::string points(const std::vector<Vec2>& pts) const {
    std::string s;
    for (const auto& p : pts) s += num(px(p.x())) + "," + num(py(p.y())) + " ";
    if (!s.empty()) s.pop_back();
    return s;
  }

 private:
  Workspace ws_;
  SvgStyle st_;
};

inline const char* outcome_color(GraspOutcome o) {
  switch (o) {
    case GraspOutcome::success: return "#1a9850";
    case GraspOutcome::collision: return "#d73027";
    case GraspOutcome::slip: return "#fc8d59";
    case GraspOutcome::miss: return "#7570b3";
  }
  return "#000000";
}

}  // namespace detail

/// Top view: workspace rectangle, object footprints (target highlighted),
/// then one glyph per action in order: push arrows over the full stroke and
/// gripper glyphs (two finger rectangles and the palm bar).
inline std::string render_svg(const Scene& scene, const std::vector<Action>& actions, const GripperSpec& gripper = {},
                              const SvgStyle& style = {}) {
  detail::SvgCanvas c(scene.workspace, style);
  using detail::SvgCanvas;
  std::ostringstream o;
  o << R"(<?xml version="1.0" encoding="UTF-8"?>)" << "\n";
  o << R"(<svg xmlns="http://www.w3.org/2000/svg" width=")" << SvgCanvas::num(c.width()) << R"(" height=")"
    << SvgCanvas::num(c.height()) << R"(" viewBox="0 0 )" << SvgCanvas::num(c.width()) << " "
    << SvgCanvas::num(c.height()) << R"(">)" << "\n";
  o << R"(  <defs><marker id="arrow" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="6" markerHeight="6" orient="auto"><path d="M0,0 L10,5 L0,10 z" fill="#2166ac"/></marker></defs>)"
    << "\n";
  const auto& ws = scene.workspace;
  o << R"(  <rect class="workspace" x=")" << SvgCanvas::num(c.px(ws.x_min)) << R"(" y=")"
    << SvgCanvas::num(c.py(ws.y_max())) << R"(" width=")" << SvgCanvas::num(ws.width * style.pixels_per_metre)
    << R"(" height=")" << SvgCanvas::num(ws.depth * style.pixels_per_metre)
    << R"(" fill="#f7f7f7" stroke="#333333" stroke-width="1"/>)" << "\n";
  for (const auto& obj : scene.objects) {
    const bool target = obj.id == scene.target_id;
    o << R"(  <polygon class=")" << (target ? "target" : "object") << R"(" data-id=")" << obj.id << R"(" points=")"
      << c.points(obj.footprint().vertices()) << R"(" fill=")" << (target ? "#fdae61" : "#bababa")
      << R"(" stroke=")" << (target ? "#b35806" : "#4d4d4d") << R"(" stroke-width=")" << (target ? 2 : 1)
      << R"("/>)" << "\n";
  }
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const auto& a = actions[i];
    const Vec2 t(a.pose.translation.x(), a.pose.translation.y());
    if (a.kind == ActionKind::push) {
      const Vec2 d(a.pose.rotation(0, 0), a.pose.rotation(1, 0));
      const Vec2 e = t + d.normalized() * a.stroke;
      o << R"(  <g class="action push" data-order=")" << i << R"(">)";
      o << R"(<circle cx=")" << SvgCanvas::num(c.px(t.x())) << R"(" cy=")" << SvgCanvas::num(c.py(t.y()))
        << R"(" r="4" fill="#2166ac"/>)";
      o << R"(<line x1=")" << SvgCanvas::num(c.px(t.x())) << R"(" y1=")" << SvgCanvas::num(c.py(t.y())) << R"(" x2=")"
        << SvgCanvas::num(c.px(e.x())) << R"(" y2=")" << SvgCanvas::num(c.py(e.y()))
        << R"svg(" stroke="#2166ac" stroke-width="2" marker-end="url(#arrow)"/>)svg";
      o << "</g>\n";
    } else {
      const auto boxes = gripper_boxes(gripper, a.width);
      const Vec2 gx(a.pose.rotation(0, 0), a.pose.rotation(1, 0)), gy(a.pose.rotation(0, 1), a.pose.rotation(1, 1));
      auto rect = [&](const AlignedBox& b) {
        std::vector<Vec2> pts;
        for (auto [x, y] : {std::pair{b.lo.x(), b.lo.y()}, {b.hi.x(), b.lo.y()}, {b.hi.x(), b.hi.y()}, {b.lo.x(), b.hi.y()}})
          pts.push_back(t + gx * x + gy * y);
        return pts;
      };
      const char* col = detail::outcome_color(a.outcome);
      o << R"(  <g class="action grasp" data-order=")" << i << R"(" data-outcome=")" << to_string(a.outcome) << R"(">)";
      for (const AlignedBox* b : {&boxes.finger_pos, &boxes.finger_neg})
        o << R"(<polygon points=")" << c.points(rect(*b)) << R"(" fill="none" stroke=")" << col
          << R"(" stroke-width="2"/>)";
      const Vec2 p0 = t + gy * boxes.palm.lo.y(), p1 = t + gy * boxes.palm.hi.y();
      o << R"(<line x1=")" << SvgCanvas::num(c.px(p0.x())) << R"(" y1=")" << SvgCanvas::num(c.py(p0.y())) << R"(" x2=")"
        << SvgCanvas::num(c.px(p1.x())) << R"(" y2=")" << SvgCanvas::num(c.py(p1.y())) << R"(" stroke=")" << col
        << R"(" stroke-width="1" stroke-dasharray="3,2"/>)";
      o << "</g>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace pushgrasp
