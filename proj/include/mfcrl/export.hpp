#ifndef MFCRL_EXPORT_HPP_
#define MFCRL_EXPORT_HPP_

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mfcrl/config.hpp"
#include "mfcrl/errors.hpp"
#include "mfcrl/pipeline.hpp"
#include "mfcrl/sim.hpp"

namespace mfcrl {

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_number(double v) {
  std::array<char, 32> buf{};
  const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), r.ptr);
}

// ---------------------------------------------------------------------------
// Trajectory CSV.

inline std::string trajectory_csv(const RolloutRecord& r) {
  std::string out = kTrajectoryCsvHeader;
  out += '\n';
  for (const auto& s : r.samples) {
    for (double v : {s.time_s, s.state.x, s.state.y, s.state.heading, s.state.linear_velocity,
                     s.state.angular_velocity}) {
      out += format_number(v);
      out += ',';
    }
    out += s.active_subtask_id;
    out += ',';
    out += format_number(s.position_error_m);
    out += ',';
    out += format_number(s.heading_error_rad);
    out += '\n';
  }
  return out;
}

/// Inverse of trajectory_csv for the sample rows; outcome and counters are
/// not stored in the file and are left at their defaults.
inline RolloutRecord parse_trajectory_csv(std::string_view text, const std::string& origin = "trajectory") {
  RolloutRecord r;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kTrajectoryCsvHeader) {
    throw IoError(origin + ": unexpected CSV header");
  }
  long row = 1;
  auto number = [&](std::string_view field) {
    double v = 0.0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
      throw IoError(origin + ": bad number on row " + std::to_string(row));
    }
    return v;
  };
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    for (std::size_t pos; (pos = rest.find(',')) != std::string_view::npos; rest.remove_prefix(pos + 1)) {
      f.push_back(rest.substr(0, pos));
    }
    f.push_back(rest);
    if (f.size() != 9) throw IoError(origin + ": expected 9 columns on row " + std::to_string(row));
    RolloutSample s;
    s.time_s = number(f[0]);
    s.state = {number(f[1]), number(f[2]), number(f[3]), number(f[4]), number(f[5])};
    s.active_subtask_id = std::string(f[6]);
    s.position_error_m = number(f[7]);
    s.heading_error_rad = number(f[8]);
    r.samples.push_back(std::move(s));
  }
  if (!r.samples.empty()) r.final_state = r.samples.back().state;
  return r;
}

// ---------------------------------------------------------------------------
// Reports.

inline Json to_json(const EmpiricalEstimate& e) {
  return {{"subtask_id", e.subtask_id}, {"successes", e.successes}, {"trials", e.trials},
          {"p_hat", e.p_hat},           {"lower_bound", e.lower_bound}, {"alpha", e.alpha}};
}

inline Json to_json(const std::set<SubtaskId>& s) { return Json(std::vector<SubtaskId>(s.begin(), s.end())); }

inline Json to_json(const std::map<SubtaskId, double>& m) {
  Json j = Json::object();
  for (const auto& [k, v] : m) j[k] = v;
  return j;
}

inline Json to_json(const IterationReport& r) {
  Json j;
  j["iteration"] = r.iteration;
  j["caps"] = to_json(r.caps);
  if (r.synthesis) {
    const auto& s = *r.synthesis;
    Json mu = Json::object();
    for (const auto& [st, c] : s.meta_policy.choice) mu[st] = c;
    j["synthesis"] = {{"path", s.path},
                      {"meta_policy", mu},
                      {"params", to_json(s.params.values)},
                      {"achieved_bound", s.achieved_bound},
                      {"objective", s.objective}};
  } else {
    j["synthesis"] = nullptr;
  }
  Json est = Json::object();
  for (const auto& [c, e] : r.estimates) est[c] = to_json(e);
  j["estimates"] = est;
  Json pre = Json::object();
  for (const auto& [c, e] : r.pre_retrain_estimates) pre[c] = to_json(e);
  j["pre_retrain_estimates"] = pre;
  j["underperformers"] = to_json(r.underperformers);
  j["caps_added"] = to_json(r.caps_added);
  j["trained"] = to_json(r.trained);
  j["retrained"] = to_json(r.retrained);
  j["reused"] = to_json(r.reused);
  if (r.composition_check) {
    const auto& b = *r.composition_check;
    Json subs = Json::array();
    for (const auto& s : b.subtasks) {
      subs.push_back({{"subtask_id", s.subtask_id}, {"required", s.required}, {"p_hat", s.p_hat},
                      {"satisfied", s.satisfied}});
    }
    Json outcomes = Json::object();
    for (const auto& [k, v] : r.composition_outcomes) outcomes[k] = v;
    j["composition_check"] = {{"bound", b.bound},          {"runs", b.runs},
                              {"successes", b.successes},  {"success_rate", b.success_rate},
                              {"tolerance", b.tolerance},  {"violation", b.violation},
                              {"outcomes", outcomes},      {"subtasks", subs}};
  } else {
    j["composition_check"] = nullptr;
  }
  return j;
}

/// Plain-text verification report: one record per subtask.
inline std::string report_text(const IterationReport& r) {
  std::ostringstream o;
  o << "iteration " << r.iteration << '\n';
  if (!r.synthesis) {
    o << "synthesis: infeasible under caps\n";
    return o.str();
  }
  const auto& s = *r.synthesis;
  o << "path:";
  for (const auto& c : s.path) o << ' ' << c;
  o << "\nachieved_bound: " << format_number(s.achieved_bound) << "\nobjective: " << format_number(s.objective)
    << '\n';
  o << "note: entry states are sampled uniformly; the estimates do not bound the worst-case entry state\n";
  for (const auto& [c, e] : r.estimates) {
    const double pc = s.params.values.count(c) ? s.params.values.at(c) : 0.0;
    o << "subtask " << c << " successes " << e.successes << " trials " << e.trials << " p_hat "
      << format_number(e.p_hat) << " lower_bound " << format_number(e.lower_bound) << " p_c " << format_number(pc)
      << ' ' << (r.caps_added.count(c) ? "fail" : "pass") << '\n';
  }
  for (const auto& [c, v] : r.caps_added) o << "cap_added " << c << ' ' << format_number(v) << '\n';
  if (r.composition_check) {
    const auto& b = *r.composition_check;
    o << "composition " << b.successes << '/' << b.runs << " rate " << format_number(b.success_rate) << " bound "
      << format_number(b.bound) << " tolerance " << format_number(b.tolerance) << ' '
      << (b.violation ? "violation" : "ok") << '\n';
  }
  return o.str();
}

// ---------------------------------------------------------------------------
// SVG overlay of trajectories with subtask entry/exit discs.

struct Scene {
  std::vector<Subtask> subtasks;
  TaskSpec task;
  EnvironmentMap environment;
};

inline Scene scene_of(const PipelineConfig& c) { return {c.subtasks, c.task, c.environment}; }

inline std::string render_svg(const Scene& scene, const std::vector<NamedRollout>& rollouts) {
  const Rect& b = scene.environment.bounds;
  const double w = b.max_x - b.min_x;
  const double h = b.max_y - b.min_y;
  const double px = 40.0;  // pixels per metre
  auto X = [&](double x) { return format_number(std::round((x - b.min_x) * px * 100.0) / 100.0); };
  auto Y = [&](double y) { return format_number(std::round((b.max_y - y) * px * 100.0) / 100.0); };
  auto L = [&](double d) { return format_number(std::round(d * px * 100.0) / 100.0); };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << L(w) << "\" height=\"" << L(h) << "\">\n";
  o << "<rect x=\"0\" y=\"0\" width=\"" << L(w) << "\" height=\"" << L(h)
    << "\" fill=\"white\" stroke=\"black\"/>\n";
  for (const auto& ob : scene.environment.obstacles) {
    if (const auto* r = std::get_if<Rect>(&ob)) {
      o << "<rect x=\"" << X(r->min_x) << "\" y=\"" << Y(r->max_y) << "\" width=\"" << L(r->max_x - r->min_x)
        << "\" height=\"" << L(r->max_y - r->min_y) << "\" fill=\"#888\"/>\n";
    } else {
      const auto& c = std::get<Circle>(ob);
      o << "<circle cx=\"" << X(c.x) << "\" cy=\"" << Y(c.y) << "\" r=\"" << L(c.radius) << "\" fill=\"#888\"/>\n";
    }
  }
  auto disc = [&](const PoseRegion& r, const char* colour, const char* dash, const std::string& label) {
    o << "<circle cx=\"" << X(r.center_x) << "\" cy=\"" << Y(r.center_y) << "\" r=\"" << L(r.position_radius)
      << "\" fill=\"none\" stroke=\"" << colour << "\"" << dash << "/>\n";
    const double ex = r.center_x + r.position_radius * std::cos(r.heading);
    const double ey = r.center_y + r.position_radius * std::sin(r.heading);
    o << "<line x1=\"" << X(r.center_x) << "\" y1=\"" << Y(r.center_y) << "\" x2=\"" << X(ex) << "\" y2=\""
      << Y(ey) << "\" stroke=\"" << colour << "\"/>\n";
    if (!label.empty()) {
      o << "<text x=\"" << X(r.center_x) << "\" y=\"" << Y(r.center_y) << "\" font-size=\"12\" fill=\"" << colour
        << "\">" << label << "</text>\n";
    }
  };
  disc(scene.task.target, "#c90", "", "target");
  for (const auto& s : scene.subtasks) {
    disc(s.entry, "#36c", " stroke-dasharray=\"6 4\"", "");
    disc(s.exit, "#393", "", s.id);
  }
  static constexpr std::array<const char*, 6> kColours{"#d33", "#639", "#069", "#c60", "#390", "#333"};
  for (std::size_t i = 0; i < rollouts.size(); ++i) {
    o << "<polyline fill=\"none\" stroke=\"" << kColours[i % kColours.size()] << "\" stroke-width=\"2\" points=\"";
    bool first = true;
    for (const auto& s : rollouts[i].record.samples) {
      o << (first ? "" : " ") << X(s.state.x) << ',' << Y(s.state.y);
      first = false;
    }
    o << "\"><title>" << rollouts[i].name << "</title></polyline>\n";
  }
  o << "</svg>\n";
  return o.str();
}

// ---------------------------------------------------------------------------

inline void write_text_file(const std::filesystem::path& p, const std::string& text) {
  std::error_code ec;
  std::filesystem::create_directories(p.parent_path(), ec);
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + p.string() + "' for writing");
  f << text;
  if (!f) throw IoError("failed writing '" + p.string() + "'");
}

inline constexpr const char* kOverlaySvg = "plots/trajectories.svg";

/// Replaces the reports, trajectories and plots of `output_dir` with the
/// per-iteration reports (JSON and text), one CSV per rollout, a single SVG
/// overlay when there is at least one rollout, and run.json.
/// Returns the written paths relative to `output_dir`, run.json last.
inline std::vector<std::string> export_results(const std::vector<IterationReport>& reports,
                                               const std::vector<NamedRollout>& rollouts, const Scene& scene,
                                               const std::string& status, const std::string& output_dir) {
  const std::filesystem::path root(output_dir);
  // Drop artefacts of earlier runs; stored policies are kept.
  for (const char* sub : {"reports", "trajectories", "plots"}) {
    std::error_code ec;
    std::filesystem::remove_all(root / sub, ec);
    if (ec) throw IoError("cannot clear '" + (root / sub).string() + "': " + ec.message());
  }
  std::vector<std::string> manifest;
  auto emit = [&](const std::string& rel, const std::string& text) {
    write_text_file(root / rel, text);
    manifest.push_back(rel);
  };
  for (const auto& r : reports) {
    const std::string tag = iteration_tag(r.iteration);
    emit("reports/" + tag + ".json", to_json(r).dump(2) + "\n");
    emit("reports/" + tag + ".txt", report_text(r));
  }
  for (const auto& r : rollouts) emit("trajectories/" + r.name + ".csv", trajectory_csv(r.record));
  if (!rollouts.empty()) emit(kOverlaySvg, render_svg(scene, rollouts));
  Json meta;
  meta["status"] = status;
  meta["iterations"] = reports.size();
  meta["files"] = manifest;
  manifest.push_back("run.json");
  write_text_file(root / "run.json", meta.dump(2) + "\n");
  return manifest;
}

/// Re-renders the overlay from every CSV in `<output_dir>/trajectories`.
inline std::string replot(const Scene& scene, const std::string& output_dir) {
  const std::filesystem::path dir = std::filesystem::path(output_dir) / "trajectories";
  if (!std::filesystem::is_directory(dir)) throw IoError("no trajectories under '" + dir.string() + "'");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<NamedRollout> rollouts;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    rollouts.push_back({f.stem().string(), parse_trajectory_csv(ss.str(), f.string())});
  }
  const auto out = std::filesystem::path(output_dir) / kOverlaySvg;
  write_text_file(out, render_svg(scene, rollouts));
  return out.string();
}

}  // namespace mfcrl

#endif  // MFCRL_EXPORT_HPP_
