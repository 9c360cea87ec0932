#pragma once

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"
#include "polycbf/sim.hpp"

namespace polycbf {

namespace detail {

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw std::runtime_error("bad number in trace CSV: '" + std::string(s) + "'");
  }
  return v;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace detail

/// Trace CSV column order:
///   t, x0..x{n-1}, u0..u{q-1}, delta, h_0..h_{m-1}, loop_ms
/// The dimensions come from the first record; an empty trace writes
/// the header with no state/input/barrier columns.
inline std::string trace_csv_header(int n, int q, int m) {
  std::string h = "t";
  for (int i = 0; i < n; ++i) h += ",x" + std::to_string(i);
  for (int i = 0; i < q; ++i) h += ",u" + std::to_string(i);
  h += ",delta";
  for (int i = 0; i < m; ++i) h += ",h_" + std::to_string(i);
  h += ",loop_ms";
  return h;
}

inline void write_trace_csv(const Trace& trace, std::ostream& out) {
  int n = 0, q = 0, m = 0;
  if (!trace.records.empty()) {
    const auto& r0 = trace.records.front();
    n = static_cast<int>(r0.state.size());
    q = static_cast<int>(r0.u.size());
    m = static_cast<int>(r0.obstacles.size());
  }
  out << trace_csv_header(n, q, m) << '\n';
  for (const auto& r : trace.records) {
    out << detail::format_double(r.t);
    for (int i = 0; i < n; ++i) out << ',' << detail::format_double(r.state(i));
    for (int i = 0; i < q; ++i) out << ',' << detail::format_double(r.u(i));
    out << ',' << detail::format_double(r.delta);
    for (int i = 0; i < m; ++i) out << ',' << detail::format_double(r.obstacles[static_cast<std::size_t>(i)].h);
    out << ',' << detail::format_double(r.loop_ms) << '\n';
  }
}

inline void write_trace_csv(const Trace& trace, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  write_trace_csv(trace, out);
}

/// Parses a trace CSV back. Branch and z* are not part of the CSV and come
/// back default-initialized.
inline Trace read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty trace CSV");
  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  int n = 0, q = 0, m = 0;
  for (const auto& c : cols) {
    if (c.size() > 1 && c[0] == 'x') ++n;
    if (c.size() > 1 && c[0] == 'u') ++q;
    if (c.rfind("h_", 0) == 0) ++m;
  }
  if (cols.size() != static_cast<std::size_t>(n + q + m + 3)) throw std::runtime_error("unexpected trace CSV header");

  Trace trace;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::size_t start = 0;
    while (start <= line.size()) {
      const auto end = std::min(line.find(',', start), line.size());
      v.push_back(detail::parse_double(std::string_view(line).substr(start, end - start)));
      start = end + 1;
    }
    if (v.size() != cols.size()) throw std::runtime_error("trace CSV row has the wrong number of fields");
    TraceRecord r;
    std::size_t i = 0;
    r.t = v[i++];
    r.state.resize(n);
    for (int k = 0; k < n; ++k) r.state(k) = v[i++];
    r.u.resize(q);
    for (int k = 0; k < q; ++k) r.u(k) = v[i++];
    r.delta = v[i++];
    r.obstacles.resize(static_cast<std::size_t>(m));
    for (int k = 0; k < m; ++k) r.obstacles[static_cast<std::size_t>(k)].h = v[i++];
    r.loop_ms = v[i++];
    trace.records.push_back(std::move(r));
  }
  return trace;
}

inline Trace read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_trace_csv(in);
}

inline nlohmann::json summary_json(const Trace& trace) {
  const auto s = trace.summary();
  nlohmann::json j;
  j["scenario"] = trace.scenario;
  j["records"] = trace.records.size();
  j["min_h"] = s.min_h;
  j["arrival_time"] = s.arrival_time ? nlohmann::json(*s.arrival_time) : nlohmann::json(nullptr);
  j["arrival_tolerance"] = trace.arrival_tolerance;
  j["min_goal_distance"] = s.min_goal_distance;
  j["mean_loop_ms"] = s.mean_loop_ms;
  j["max_loop_ms"] = s.max_loop_ms;
  j["fallback_steps"] = s.fallback_steps;
  return j;
}

inline void write_summary_json(const Trace& trace, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << summary_json(trace).dump(2) << '\n';
}

namespace detail {

struct Viewport {
  double min_x, min_y, max_x, max_y;  // world box
  double ox, oy, size;                // pixel origin and side

  [[nodiscard]] double px(double x) const { return ox + (x - min_x) / (max_x - min_x) * size; }
  [[nodiscard]] double py(double y) const { return oy + size - (y - min_y) / (max_y - min_y) * size; }
  [[nodiscard]] double scale() const { return size / (max_x - min_x); }
};

inline Viewport fit(const std::vector<Vec2>& pts, double ox, double oy, double size) {
  Vec2 lo = pts.front(), hi = pts.front();
  for (const auto& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec2 mid = 0.5 * (lo + hi);
  const double half = 0.55 * std::max((hi - lo).maxCoeff(), 1.0);
  return {mid.x() - half, mid.y() - half, mid.x() + half, mid.y() + half, ox, oy, size};
}

inline std::string svg_polygon(const Viewport& v, const std::vector<Vec2>& pts, const std::string& style) {
  std::ostringstream s;
  s << "<polygon points=\"";
  for (const auto& p : pts) s << v.px(p.x()) << ',' << v.py(p.y()) << ' ';
  s << "\" style=\"" << style << "\"/>\n";
  return s.str();
}

inline std::size_t record_at(const Trace& trace, double t) {
  std::size_t best = 0;
  for (std::size_t i = 0; i < trace.records.size(); ++i) {
    if (std::abs(trace.records[i].t - t) < std::abs(trace.records[best].t - t)) best = i;
  }
  return best;
}

}  // namespace detail

/// Two-panel SVG: workspace (obstacles, trajectory, robot snapshots) on the
/// left and the configuration-obstacle view (CO per obstacle, origin, z*) on
/// the right, both at the requested frame times.
inline void render_svg(const Trace& trace, const ScenarioConfig& cfg, const std::filesystem::path& path,
                       const std::vector<double>& frame_times) {
  if (trace.records.empty()) throw std::runtime_error("cannot render an empty trace");
  const auto model = cfg.robot_model();
  const auto robot = scenario_robot(cfg);
  const auto obstacles = scenario_obstacles(cfg);

  std::vector<std::size_t> frames;
  for (double t : frame_times) frames.push_back(detail::record_at(trace, t));
  if (frames.empty()) frames.push_back(0);

  std::vector<Vec2> world_pts;
  for (const auto& o : obstacles) world_pts.insert(world_pts.end(), o.vertices().begin(), o.vertices().end());
  for (const auto& r : trace.records) world_pts.emplace_back(r.state(0), r.state(1));
  world_pts.push_back(cfg.goal);

  struct Snapshot {
    ConvexPolygon body;
    std::vector<ConvexPolygon> cos;
    std::size_t record;
  };
  std::vector<Snapshot> snaps;
  std::vector<Vec2> md_pts{Vec2::Zero()};
  for (std::size_t f : frames) {
    const auto pose = model.pose_of(trace.records[f].state);
    auto body = transform_robot(robot.shape, robot.base_pose, pose);
    world_pts.insert(world_pts.end(), body.vertices().begin(), body.vertices().end());
    std::vector<ConvexPolygon> cos;
    for (const auto& o : obstacles) {
      cos.push_back(minkowski_difference(o, body));
      md_pts.insert(md_pts.end(), cos.back().vertices().begin(), cos.back().vertices().end());
    }
    snaps.push_back({body, std::move(cos), f});
  }

  constexpr double kPanel = 480.0;
  constexpr double kMargin = 20.0;
  const auto world = detail::fit(world_pts, kMargin, kMargin + 20.0, kPanel);
  const auto md = detail::fit(md_pts, 2.0 * kMargin + kPanel, kMargin + 20.0, kPanel);

  auto out = detail::open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 3.0 * kMargin + 2.0 * kPanel << "\" height=\""
      << 2.0 * kMargin + kPanel + 40.0 << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kMargin << "\" y=\"" << kMargin + 10.0 << "\" font-size=\"14\">workspace: " << trace.scenario
      << "</text>\n";
  out << "<text x=\"" << 2.0 * kMargin + kPanel << "\" y=\"" << kMargin + 10.0
      << "\" font-size=\"14\">configuration obstacles (origin = robot)</text>\n";
  for (const auto* v : {&world, &md}) {
    out << "<rect x=\"" << v->ox << "\" y=\"" << v->oy << "\" width=\"" << kPanel << "\" height=\"" << kPanel
        << "\" fill=\"none\" stroke=\"#999\"/>\n";
  }

  for (const auto& o : obstacles) out << detail::svg_polygon(world, o.vertices(), "fill:#e88;stroke:#a00;fill-opacity:0.6");
  out << "<polyline fill=\"none\" stroke=\"#2a2\" stroke-width=\"1.5\" points=\"";
  for (const auto& r : trace.records) out << world.px(r.state(0)) << ',' << world.py(r.state(1)) << ' ';
  out << "\"/>\n";
  out << "<circle cx=\"" << world.px(cfg.goal.x()) << "\" cy=\"" << world.py(cfg.goal.y())
      << "\" r=\"4\" fill=\"#000\"/>\n";

  out << "<circle cx=\"" << md.px(0.0) << "\" cy=\"" << md.py(0.0) << "\" r=\"4\" fill=\"#000\"/>\n";
  for (const auto& s : snaps) {
    const auto& rec = trace.records[s.record];
    out << detail::svg_polygon(world, s.body.vertices(), "fill:#69f;stroke:#036;fill-opacity:0.5");
    const Vec2 c = s.body.centroid();
    out << "<text x=\"" << world.px(c.x()) << "\" y=\"" << world.py(c.y()) << "\" font-size=\"10\">t="
        << detail::format_double(rec.t) << "</text>\n";
    for (std::size_t i = 0; i < s.cos.size(); ++i) {
      out << detail::svg_polygon(md, s.cos[i].vertices(), "fill:#8d8;stroke:#060;fill-opacity:0.35");
      if (i < rec.obstacles.size()) {
        const Vec2 z = rec.obstacles[i].z_star;
        out << "<line x1=\"" << md.px(0.0) << "\" y1=\"" << md.py(0.0) << "\" x2=\"" << md.px(z.x()) << "\" y2=\""
            << md.py(z.y()) << "\" stroke=\"#c60\"/>\n";
        out << "<circle cx=\"" << md.px(z.x()) << "\" cy=\"" << md.py(z.y()) << "\" r=\"3\" fill=\"#c60\"/>\n";
      }
    }
  }
  out << "</svg>\n";
}

}  // namespace polycbf
