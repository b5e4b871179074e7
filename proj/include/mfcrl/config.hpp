#ifndef MFCRL_CONFIG_HPP_
#define MFCRL_CONFIG_HPP_

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>  // vendored nlohmann/json

#include "mfcrl/errors.hpp"
#include "mfcrl/hlm.hpp"
#include "mfcrl/learner.hpp"
#include "mfcrl/policy.hpp"
#include "mfcrl/sim.hpp"
#include "mfcrl/synthesis.hpp"

namespace mfcrl {

using Json = nlohmann::ordered_json;

/// How the policy of one subtask is produced.
struct ControllerSpec {
  std::string learner{learner_kind::kTileQ};
  double fault_rate = 0.0;

  friend bool operator==(const ControllerSpec&, const ControllerSpec&) = default;
};

struct PipelineConfig {
  TaskSpec task;
  std::vector<Subtask> subtasks;
  std::map<SubtaskId, ControllerSpec> controllers;  // missing entries use the defaults
  EnvironmentMap environment;
  FidelityConfig fidelity_low = FidelityConfig::low();
  FidelityConfig fidelity_high = FidelityConfig::high();
  RewardWeights reward;
  TrainBudget budget{200'000, 5'000, 0};
  TrainBudget retrain_budget{200'000, 5'000, 0};
  long n_verify = 100;
  long n_composition_runs = 200;
  double alpha = 0.05;
  bool gate_on_lower_bound = false;
  int max_outer_iterations = 5;
  std::string output_dir = "out";
  std::uint64_t seed = 0;

  [[nodiscard]] ControllerSpec controller(const SubtaskId& id) const {
    auto it = controllers.find(id);
    return it == controllers.end() ? ControllerSpec{} : it->second;
  }

  [[nodiscard]] const Subtask& subtask(const SubtaskId& id) const {
    for (const auto& s : subtasks) {
      if (s.id == id) return s;
    }
    throw InvalidArgument("unknown subtask '" + id + "'");
  }

  [[nodiscard]] std::map<SubtaskId, Subtask> subtask_map() const {
    std::map<SubtaskId, Subtask> m;
    for (const auto& s : subtasks) m.emplace(s.id, s);
    return m;
  }

  /// Checks every nested invariant plus composability, compatibility and
  /// goal reachability. All failures surface as ConfigError.
  void validate() const {
    try {
      task.validate();
      if (subtasks.empty()) throw InvalidArgument("at least one subtask is required");
      std::set<SubtaskId> ids;
      for (const auto& s : subtasks) {
        s.validate();
        if (!ids.insert(s.id).second) throw InvalidArgument("duplicate subtask id '" + s.id + "'");
      }
      for (const auto& [id, c] : controllers) {
        if (!ids.count(id)) throw InvalidArgument("controller for unknown subtask '" + id + "'");
        if (c.learner != learner_kind::kTileQ && c.learner != learner_kind::kGotoPose) {
          throw InvalidArgument("subtask '" + id + "' has unknown learner '" + c.learner + "'");
        }
        if (!(c.fault_rate >= 0.0 && c.fault_rate <= 1.0)) {
          throw InvalidArgument("subtask '" + id + "' fault_rate must lie in [0, 1]");
        }
      }
      environment.validate();
      fidelity_low.validate();
      fidelity_high.validate();
      reward.validate();
      if (budget.max_steps < 0 || retrain_budget.max_steps < 0) {
        throw InvalidArgument("training budgets must be non-negative");
      }
      if (n_verify < 1) throw InvalidArgument("n_verify must be at least 1");
      if (n_composition_runs < 1) throw InvalidArgument("n_composition_runs must be at least 1");
      if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
      if (max_outer_iterations < 1) throw InvalidArgument("max_outer_iterations must be at least 1");
      if (output_dir.empty()) throw InvalidArgument("output_dir must be non-empty");
      if (!check_composable(subtasks)) throw InvalidArgument("subtasks are not composable");
      if (!check_compatible(subtasks, task)) throw InvalidArgument("subtasks are not compatible with the task");
      enumerate_paths(build_hlm(subtasks, task));
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
};

namespace detail {

/// Reads one JSON object, remembering which keys were consumed so that
/// leftovers can be reported as unknown.
class ConfigObject {
 public:
  ConfigObject(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  [[nodiscard]] bool has(const std::string& key) const { return j_.contains(key); }

  const Json& at(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError(path_ + ": missing required key '" + key + "'");
    seen_.insert(key);
    return j_.at(key);
  }

  [[nodiscard]] std::string child_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  double number(const std::string& key) {
    const Json& v = at(key);
    if (!v.is_number()) throw ConfigError(child_path(key) + ": expected a number");
    return v.get<double>();
  }
  double number(const std::string& key, double def) { return has(key) ? number(key) : def; }

  long integer(const std::string& key, long def) {
    if (!has(key)) return def;
    const Json& v = at(key);
    if (!v.is_number_integer()) throw ConfigError(child_path(key) + ": expected an integer");
    return v.get<long>();
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t def) {
    if (!has(key)) return def;
    const Json& v = at(key);
    if (!v.is_number_unsigned()) throw ConfigError(child_path(key) + ": expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool def) {
    if (!has(key)) return def;
    const Json& v = at(key);
    if (!v.is_boolean()) throw ConfigError(child_path(key) + ": expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key) {
    const Json& v = at(key);
    if (!v.is_string()) throw ConfigError(child_path(key) + ": expected a string");
    return v.get<std::string>();
  }
  std::string string(const std::string& key, const std::string& def) { return has(key) ? string(key) : def; }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(child_path(k) + ": unknown key");
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline PoseRegion parse_region(const Json& j, const std::string& path) {
  ConfigObject o(j, path);
  PoseRegion r;
  r.center_x = o.number("center_x");
  r.center_y = o.number("center_y");
  r.position_radius = o.number("position_radius");
  r.heading = o.number("heading", 0.0);
  r.heading_tolerance = o.number("heading_tolerance", kPi);
  o.finish();
  return r;
}

inline Rect parse_rect(ConfigObject& o) {
  return {o.number("min_x"), o.number("min_y"), o.number("max_x"), o.number("max_y")};
}

inline FidelityConfig parse_fidelity(const Json& j, const std::string& path, FidelityConfig c) {
  ConfigObject o(j, path);
  c.dt_physics = o.number("dt_physics", c.dt_physics);
  c.policy_period = o.number("policy_period", c.policy_period);
  c.actuation_latency = o.number("actuation_latency", c.actuation_latency);
  c.position_noise_sigma = o.number("position_noise_sigma", c.position_noise_sigma);
  c.heading_noise_sigma = o.number("heading_noise_sigma", c.heading_noise_sigma);
  c.velocity_noise_sigma = o.number("velocity_noise_sigma", c.velocity_noise_sigma);
  c.actuator_time_constant = o.number("actuator_time_constant", c.actuator_time_constant);
  c.seed = o.unsigned_integer("seed", c.seed);
  o.finish();
  return c;
}

inline TrainBudget parse_budget(const Json& j, const std::string& path, TrainBudget b) {
  ConfigObject o(j, path);
  b.max_steps = o.integer("max_steps", b.max_steps);
  b.eval_interval = o.integer("eval_interval", b.eval_interval);
  o.finish();
  return b;
}

inline EnvironmentMap parse_environment(const Json& j, const std::string& path) {
  ConfigObject o(j, path);
  EnvironmentMap env;
  if (o.has("bounds")) {
    ConfigObject b(o.at("bounds"), o.child_path("bounds"));
    env.bounds = parse_rect(b);
    b.finish();
  }
  if (o.has("obstacles")) {
    const Json& list = o.at("obstacles");
    if (!list.is_array()) throw ConfigError(o.child_path("obstacles") + ": expected an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      ConfigObject ob(list[i], o.child_path("obstacles") + "[" + std::to_string(i) + "]");
      const std::string type = ob.string("type");
      if (type == "rect") {
        env.obstacles.emplace_back(parse_rect(ob));
      } else if (type == "circle") {
        env.obstacles.emplace_back(Circle{ob.number("x"), ob.number("y"), ob.number("radius")});
      } else {
        throw ConfigError(o.child_path("obstacles") + ": unknown obstacle type '" + type + "'");
      }
      ob.finish();
    }
  }
  env.robot_radius = o.number("robot_radius", env.robot_radius);
  if (o.has("action_limits")) {
    ConfigObject a(o.at("action_limits"), o.child_path("action_limits"));
    env.limits.v_min = a.number("v_min", env.limits.v_min);
    env.limits.v_max = a.number("v_max", env.limits.v_max);
    env.limits.w_min = a.number("w_min", env.limits.w_min);
    env.limits.w_max = a.number("w_max", env.limits.w_max);
    a.finish();
  }
  o.finish();
  return env;
}

}  // namespace detail

/// Parses a pipeline config from JSON text. Every key except `task` and
/// `subtasks` is optional; unknown keys are errors. The result is validated.
inline PipelineConfig parse_config(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  PipelineConfig c;
  detail::ConfigObject o(root, "");
  {
    detail::ConfigObject t(o.at("task"), "task");
    detail::ConfigObject p(t.at("initial_pose"), "task.initial_pose");
    c.task.initial_pose = {p.number("x"), p.number("y"), p.number("heading", 0.0)};
    p.finish();
    c.task.target = detail::parse_region(t.at("target"), "task.target");
    c.task.min_success_probability = t.number("min_success_probability", c.task.min_success_probability);
    t.finish();
  }
  const Json& list = o.at("subtasks");
  if (!list.is_array()) throw ConfigError("subtasks: expected an array");
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string path = "subtasks[" + std::to_string(i) + "]";
    detail::ConfigObject s(list[i], path);
    Subtask st;
    st.id = s.string("id");
    st.entry = detail::parse_region(s.at("entry"), path + ".entry");
    st.exit = detail::parse_region(s.at("exit"), path + ".exit");
    st.timeout = s.number("timeout", st.timeout);
    ControllerSpec ctl;
    ctl.learner = s.string("learner", ctl.learner);
    ctl.fault_rate = s.number("fault_rate", ctl.fault_rate);
    s.finish();
    if (!(ctl == ControllerSpec{})) c.controllers[st.id] = ctl;
    c.subtasks.push_back(std::move(st));
  }
  if (o.has("environment")) c.environment = detail::parse_environment(o.at("environment"), "environment");
  if (o.has("fidelity_low")) c.fidelity_low = detail::parse_fidelity(o.at("fidelity_low"), "fidelity_low", c.fidelity_low);
  if (o.has("fidelity_high")) {
    c.fidelity_high = detail::parse_fidelity(o.at("fidelity_high"), "fidelity_high", c.fidelity_high);
  }
  if (o.has("reward")) {
    detail::ConfigObject r(o.at("reward"), "reward");
    c.reward.success_reward = r.number("success_reward", c.reward.success_reward);
    c.reward.collision_reward = r.number("collision_reward", c.reward.collision_reward);
    c.reward.w_distance = r.number("w_distance", c.reward.w_distance);
    c.reward.w_heading = r.number("w_heading", c.reward.w_heading);
    c.reward.w_heading_change = r.number("w_heading_change", c.reward.w_heading_change);
    r.finish();
  }
  if (o.has("budget")) c.budget = detail::parse_budget(o.at("budget"), "budget", c.budget);
  if (o.has("retrain_budget")) {
    c.retrain_budget = detail::parse_budget(o.at("retrain_budget"), "retrain_budget", c.retrain_budget);
  }
  c.n_verify = o.integer("n_verify", c.n_verify);
  c.n_composition_runs = o.integer("n_composition_runs", c.n_composition_runs);
  c.alpha = o.number("alpha", c.alpha);
  c.gate_on_lower_bound = o.boolean("gate_on_lower_bound", c.gate_on_lower_bound);
  c.max_outer_iterations = static_cast<int>(o.integer("max_outer_iterations", c.max_outer_iterations));
  c.output_dir = o.string("output_dir", c.output_dir);
  c.seed = o.unsigned_integer("seed", c.seed);
  o.finish();
  c.validate();
  return c;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

}  // namespace mfcrl

#endif  // MFCRL_CONFIG_HPP_
