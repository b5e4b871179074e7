#ifndef MFCRL_SIM_HPP_
#define MFCRL_SIM_HPP_

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <deque>
#include <string>
#include <variant>
#include <vector>

#include "mfcrl/errors.hpp"
#include "mfcrl/geometry.hpp"
#include "mfcrl/hlm.hpp"
#include "mfcrl/random.hpp"

namespace mfcrl {

// ---------------------------------------------------------------------------
// Robot and world description.

struct RobotState {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double linear_velocity = 0.0;
  double angular_velocity = 0.0;

  [[nodiscard]] Pose2 pose() const { return {x, y, heading}; }
  friend bool operator==(const RobotState&, const RobotState&) = default;
};

struct Action {
  double v_cmd = 0.0;
  double w_cmd = 0.0;
  friend bool operator==(const Action&, const Action&) = default;
};

struct ActionLimits {
  double v_min = 0.0;
  double v_max = 2.0;
  double w_min = -1.0;
  double w_max = 1.0;

  [[nodiscard]] bool admits(const Action& a) const {
    return a.v_cmd >= v_min && a.v_cmd <= v_max && a.w_cmd >= w_min && a.w_cmd <= w_max;
  }
  [[nodiscard]] Action clamp(const Action& a) const {
    return {std::clamp(a.v_cmd, v_min, v_max), std::clamp(a.w_cmd, w_min, w_max)};
  }
  void validate() const {
    if (!(v_min <= v_max) || !(w_min <= w_max)) throw InvalidArgument("action limits are inverted");
  }
  friend bool operator==(const ActionLimits&, const ActionLimits&) = default;
};

/// Goal-relative observation. (goal_dx, goal_dy) is the goal position minus
/// the robot position, expressed in the goal's frame (x along the goal
/// heading). relative_heading is robot heading minus goal heading;
/// bearing_to_goal is the direction of the goal location measured from the
/// robot heading. Angles are wrapped to (-pi, pi].
struct Observation {
  double goal_dx = 0.0;
  double goal_dy = 0.0;
  double relative_heading = 0.0;
  double bearing_to_goal = 0.0;
  double linear_velocity = 0.0;
  double angular_velocity = 0.0;
  friend bool operator==(const Observation&, const Observation&) = default;
};

struct Rect {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;
};

struct Circle {
  double x = 0.0;
  double y = 0.0;
  double radius = 0.0;
};

using Obstacle = std::variant<Rect, Circle>;

struct EnvironmentMap {
  Rect bounds{-50.0, -50.0, 50.0, 50.0};
  std::vector<Obstacle> obstacles;
  double robot_radius = 0.5;
  ActionLimits limits;

  void validate() const {
    if (!(bounds.min_x < bounds.max_x && bounds.min_y < bounds.max_y)) {
      throw InvalidArgument("environment bounds are empty");
    }
    if (!(robot_radius > 0.0)) throw InvalidArgument("robot_radius must be positive");
    limits.validate();
    for (const auto& o : obstacles) {
      const bool inside = std::visit(
          [&](const auto& ob) {
            using T = std::decay_t<decltype(ob)>;
            if constexpr (std::is_same_v<T, Rect>) {
              return ob.min_x <= ob.max_x && ob.min_y <= ob.max_y && ob.min_x >= bounds.min_x &&
                     ob.max_x <= bounds.max_x && ob.min_y >= bounds.min_y && ob.max_y <= bounds.max_y;
            } else {
              return ob.radius > 0.0 && ob.x - ob.radius >= bounds.min_x &&
                     ob.x + ob.radius <= bounds.max_x && ob.y - ob.radius >= bounds.min_y &&
                     ob.y + ob.radius <= bounds.max_y;
            }
          },
          o);
      if (!inside) throw InvalidArgument("obstacle is malformed or outside the bounds");
    }
  }

  /// True iff the robot disc centred at (x, y) overlaps an obstacle or leaves
  /// the bounds. Tangential contact is not a collision.
  [[nodiscard]] bool disc_collides(double x, double y) const {
    const double r = robot_radius;
    if (x - r < bounds.min_x || x + r > bounds.max_x || y - r < bounds.min_y || y + r > bounds.max_y) {
      return true;
    }
    for (const auto& o : obstacles) {
      const bool hit = std::visit(
          [&](const auto& ob) {
            using T = std::decay_t<decltype(ob)>;
            if constexpr (std::is_same_v<T, Rect>) {
              const double dx = std::max({ob.min_x - x, 0.0, x - ob.max_x});
              const double dy = std::max({ob.min_y - y, 0.0, y - ob.max_y});
              return dx * dx + dy * dy < r * r;
            } else {
              return std::hypot(x - ob.x, y - ob.y) < r + ob.radius;
            }
          },
          o);
      if (hit) return true;
    }
    return false;
  }
};

/// One rung of the fidelity ladder. The low-fidelity simulator is the
/// degenerate configuration: no noise, no latency, one decision per physics
/// step.
struct FidelityConfig {
  double dt_physics = 0.05;
  double policy_period = 0.05;
  double actuation_latency = 0.0;
  double position_noise_sigma = 0.0;
  double heading_noise_sigma = 0.0;
  double velocity_noise_sigma = 0.0;
  double actuator_time_constant = 0.0;
  std::uint64_t seed = 0;

  [[nodiscard]] long ticks_per_decision() const { return std::lround(policy_period / dt_physics); }
  [[nodiscard]] long latency_ticks() const { return std::lround(actuation_latency / dt_physics); }

  [[nodiscard]] bool is_degenerate() const {
    return position_noise_sigma == 0.0 && heading_noise_sigma == 0.0 && velocity_noise_sigma == 0.0 &&
           latency_ticks() == 0 && ticks_per_decision() == 1;
  }

  void validate() const {
    constexpr double kTol = 1e-9;
    if (!(dt_physics > 0.0)) throw InvalidArgument("dt_physics must be positive");
    const long k = ticks_per_decision();
    if (k < 1 || std::abs(static_cast<double>(k) * dt_physics - policy_period) > kTol) {
      throw InvalidArgument("policy_period must be a positive integer multiple of dt_physics");
    }
    const long l = latency_ticks();
    if (l < 0 || std::abs(static_cast<double>(l) * dt_physics - actuation_latency) > kTol) {
      throw InvalidArgument("actuation_latency must be a non-negative integer multiple of dt_physics");
    }
    if (position_noise_sigma < 0.0 || heading_noise_sigma < 0.0 || velocity_noise_sigma < 0.0) {
      throw InvalidArgument("noise sigmas must be non-negative");
    }
    if (actuator_time_constant < 0.0) throw InvalidArgument("actuator_time_constant must be >= 0");
  }

  static FidelityConfig low() { return {}; }
  static FidelityConfig high() {
    FidelityConfig c;
    c.policy_period = 0.1;
    c.actuation_latency = 0.05;
    c.position_noise_sigma = 0.05;
    c.heading_noise_sigma = 0.02;
    c.velocity_noise_sigma = 0.02;
    c.actuator_time_constant = 0.2;
    return c;
  }
};

// ---------------------------------------------------------------------------
// Dynamics and sensing.

struct StepResult {
  RobotState state;
  bool collided = false;
  bool clamped = false;
};

/// Advances one physics step: first-order actuator lag, then a unicycle Euler
/// update using the lagged velocities and the pre-step heading. On collision
/// the pre-step pose is returned with zero velocities.
inline StepResult step(const RobotState& s, const Action& action, const EnvironmentMap& env,
                       const FidelityConfig& cfg) {
  StepResult out;
  const Action a = env.limits.clamp(action);
  out.clamped = !(a == action);
  const double dt = cfg.dt_physics;
  RobotState n = s;
  if (cfg.actuator_time_constant > 0.0) {
    const double gain = std::min(1.0, dt / cfg.actuator_time_constant);
    n.linear_velocity = s.linear_velocity + gain * (a.v_cmd - s.linear_velocity);
    n.angular_velocity = s.angular_velocity + gain * (a.w_cmd - s.angular_velocity);
  } else {
    n.linear_velocity = a.v_cmd;
    n.angular_velocity = a.w_cmd;
  }
  n.x = s.x + n.linear_velocity * std::cos(s.heading) * dt;
  n.y = s.y + n.linear_velocity * std::sin(s.heading) * dt;
  n.heading = wrap_angle(s.heading + n.angular_velocity * dt);
  if (env.disc_collides(n.x, n.y)) {
    out.collided = true;
    out.state = s;
    out.state.linear_velocity = 0.0;
    out.state.angular_velocity = 0.0;
  } else {
    out.state = n;
  }
  return out;
}

inline double gaussian(Rng& rng) {
  // Box-Muller on our own uniform source, for cross-platform reproducibility.
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

inline Observation observe_exact(const RobotState& s, const PoseRegion& goal) {
  const double ex = goal.center_x - s.x;
  const double ey = goal.center_y - s.y;
  const double c = std::cos(goal.heading);
  const double sn = std::sin(goal.heading);
  Observation o;
  o.goal_dx = c * ex + sn * ey;
  o.goal_dy = -sn * ex + c * ey;
  o.relative_heading = wrap_angle(s.heading - goal.heading);
  o.bearing_to_goal = wrap_angle(std::atan2(ey, ex) - s.heading);
  o.linear_velocity = s.linear_velocity;
  o.angular_velocity = s.angular_velocity;
  return o;
}

/// Noisy observation: zero-mean Gaussian noise is added to the true state
/// (positions in the world frame) before the goal-frame transform. Fields
/// with a zero sigma draw nothing from `rng`.
inline Observation observe(const RobotState& s, const PoseRegion& goal, const FidelityConfig& cfg, Rng& rng) {
  RobotState m = s;
  if (cfg.position_noise_sigma > 0.0) {
    m.x += cfg.position_noise_sigma * gaussian(rng);
    m.y += cfg.position_noise_sigma * gaussian(rng);
  }
  if (cfg.heading_noise_sigma > 0.0) m.heading = wrap_angle(m.heading + cfg.heading_noise_sigma * gaussian(rng));
  if (cfg.velocity_noise_sigma > 0.0) {
    m.linear_velocity += cfg.velocity_noise_sigma * gaussian(rng);
    m.angular_velocity += cfg.velocity_noise_sigma * gaussian(rng);
  }
  return observe_exact(m, goal);
}

/// Area-uniform position over the entry disc, uniform heading over the entry
/// interval, zero velocities.
inline RobotState sample_entry_state(const Subtask& subtask, Rng& rng) {
  const PoseRegion& e = subtask.entry;
  const double r = e.position_radius * std::sqrt(uniform01(rng));
  const double phi = kTwoPi * uniform01(rng);
  RobotState s;
  s.x = e.center_x + r * std::cos(phi);
  s.y = e.center_y + r * std::sin(phi);
  s.heading = wrap_angle(e.heading + e.heading_tolerance * (2.0 * uniform01(rng) - 1.0));
  return s;
}

// ---------------------------------------------------------------------------
// Episodes.

enum class EpisodeOutcome { Success, Collision, Timeout };
enum class StepOutcome { Continue, Success, Collision };

inline const char* to_string(EpisodeOutcome o) {
  switch (o) {
    case EpisodeOutcome::Success: return "success";
    case EpisodeOutcome::Collision: return "collision";
    case EpisodeOutcome::Timeout: return "timeout";
  }
  return "?";
}

struct RolloutSample {
  double time_s = 0.0;
  RobotState state;
  SubtaskId active_subtask_id;
  double position_error_m = 0.0;
  double heading_error_rad = 0.0;
  friend bool operator==(const RolloutSample&, const RolloutSample&) = default;
};

struct RolloutRecord {
  EpisodeOutcome outcome = EpisodeOutcome::Timeout;
  std::vector<RolloutSample> samples;
  RobotState final_state;
  long physics_steps = 0;
  long decisions = 0;
  long clamp_events = 0;
  friend bool operator==(const RolloutRecord&, const RolloutRecord&) = default;
};

inline constexpr const char* kTrajectoryCsvHeader =
    "time_s,x_m,y_m,heading_rad,v_mps,w_radps,active_subtask_id,position_error_m,heading_error_rad";

/// Anything that maps observations to actions. Agents may additionally
/// provide `observe_step(prev, cur, StepOutcome)` (called after each physics
/// step) and `finish(EpisodeOutcome, const Observation&)`.
template <class A>
concept EpisodeAgent = requires(A& a, const Observation& o) {
  { a.decide(o) } -> std::convertible_to<Action>;
};

struct EpisodeOptions {
  bool record = true;
  double time_offset = 0.0;
};

namespace detail {

inline RolloutSample make_sample(double t, const RobotState& s, const Subtask& subtask) {
  return {t, s, subtask.id, subtask.exit.distance_to_center(s.x, s.y),
          angular_distance(s.heading, subtask.exit.heading)};
}

inline long max_ticks(const Subtask& subtask, const FidelityConfig& cfg) {
  return static_cast<long>(std::ceil(subtask.timeout / cfg.dt_physics - 1e-9));
}

template <class Agent>
void notify_step(Agent& agent, const RobotState& prev, const RobotState& cur, StepOutcome o) {
  if constexpr (requires { agent.observe_step(prev, cur, o); }) agent.observe_step(prev, cur, o);
}

template <class Agent>
void notify_finish(Agent& agent, EpisodeOutcome o, const Observation& last) {
  if constexpr (requires { agent.finish(o, last); }) agent.finish(o, last);
}

inline void check_start(const Subtask& subtask, const RobotState& start) {
  if (!subtask.entry.contains(start.pose())) {
    throw StartOutsideEntry("start pose is outside the entry region of '" + subtask.id + "'");
  }
}

}  // namespace detail

/// Dynamics-only loop: perfect observation, decide, step, repeat. This is
/// the low-fidelity simulator.
template <EpisodeAgent Agent>
RolloutRecord simulate_synchronous(Agent& agent, const Subtask& subtask, const RobotState& start,
                                   const EnvironmentMap& env, const FidelityConfig& cfg,
                                   const EpisodeOptions& opts = {}) {
  detail::check_start(subtask, start);
  RolloutRecord rec;
  RobotState s = start;
  if (opts.record) rec.samples.push_back(detail::make_sample(opts.time_offset, s, subtask));
  if (subtask.exit.contains(s.pose())) {
    rec.outcome = EpisodeOutcome::Success;
    rec.final_state = s;
    detail::notify_finish(agent, rec.outcome, observe_exact(s, subtask.exit));
    return rec;
  }
  const long limit = detail::max_ticks(subtask, cfg);
  for (long tick = 0; tick < limit; ++tick) {
    const Action a = agent.decide(observe_exact(s, subtask.exit));
    ++rec.decisions;
    const StepResult r = step(s, a, env, cfg);
    ++rec.physics_steps;
    rec.clamp_events += r.clamped ? 1 : 0;
    const StepOutcome so = r.collided                              ? StepOutcome::Collision
                           : subtask.exit.contains(r.state.pose()) ? StepOutcome::Success
                                                                   : StepOutcome::Continue;
    detail::notify_step(agent, s, r.state, so);
    s = r.state;
    if (opts.record) {
      rec.samples.push_back(
          detail::make_sample(opts.time_offset + static_cast<double>(tick + 1) * cfg.dt_physics, s, subtask));
    }
    if (so != StepOutcome::Continue) {
      rec.outcome = so == StepOutcome::Success ? EpisodeOutcome::Success : EpisodeOutcome::Collision;
      rec.final_state = s;
      detail::notify_finish(agent, rec.outcome, observe_exact(s, subtask.exit));
      return rec;
    }
  }
  rec.outcome = EpisodeOutcome::Timeout;
  rec.final_state = s;
  detail::notify_finish(agent, rec.outcome, observe_exact(s, subtask.exit));
  return rec;
}

/// Software-in-the-loop harness on simulated time. Every policy_period the
/// latest (noisy) observation goes to the agent and its command is queued
/// for delivery after actuation_latency; until then the previously applied
/// command is held. Physics advances every dt_physics.
template <EpisodeAgent Agent>
RolloutRecord simulate_event_driven(Agent& agent, const Subtask& subtask, const RobotState& start,
                                    const EnvironmentMap& env, const FidelityConfig& cfg,
                                    std::uint64_t seed, const EpisodeOptions& opts = {}) {
  detail::check_start(subtask, start);
  Rng noise(derive_seed(cfg.seed, seed));
  RolloutRecord rec;
  RobotState s = start;
  if (opts.record) rec.samples.push_back(detail::make_sample(opts.time_offset, s, subtask));
  if (subtask.exit.contains(s.pose())) {
    rec.outcome = EpisodeOutcome::Success;
    rec.final_state = s;
    detail::notify_finish(agent, rec.outcome, observe(s, subtask.exit, cfg, noise));
    return rec;
  }
  const long per_decision = cfg.ticks_per_decision();
  const long latency = cfg.latency_ticks();
  const long limit = detail::max_ticks(subtask, cfg);
  std::deque<std::pair<long, Action>> in_flight;
  Action applied = env.limits.clamp({start.linear_velocity, start.angular_velocity});
  for (long tick = 0; tick < limit; ++tick) {
    if (tick % per_decision == 0) {
      in_flight.emplace_back(tick + latency, agent.decide(observe(s, subtask.exit, cfg, noise)));
      ++rec.decisions;
    }
    while (!in_flight.empty() && in_flight.front().first <= tick) {
      applied = in_flight.front().second;
      in_flight.pop_front();
    }
    const StepResult r = step(s, applied, env, cfg);
    ++rec.physics_steps;
    rec.clamp_events += r.clamped ? 1 : 0;
    const StepOutcome so = r.collided                              ? StepOutcome::Collision
                           : subtask.exit.contains(r.state.pose()) ? StepOutcome::Success
                                                                   : StepOutcome::Continue;
    detail::notify_step(agent, s, r.state, so);
    s = r.state;
    if (opts.record) {
      rec.samples.push_back(
          detail::make_sample(opts.time_offset + static_cast<double>(tick + 1) * cfg.dt_physics, s, subtask));
    }
    if (so != StepOutcome::Continue) {
      rec.outcome = so == StepOutcome::Success ? EpisodeOutcome::Success : EpisodeOutcome::Collision;
      rec.final_state = s;
      detail::notify_finish(agent, rec.outcome, observe(s, subtask.exit, cfg, noise));
      return rec;
    }
  }
  rec.outcome = EpisodeOutcome::Timeout;
  rec.final_state = s;
  detail::notify_finish(agent, rec.outcome, observe(s, subtask.exit, cfg, noise));
  return rec;
}

/// Runs one episode, using the synchronous loop for degenerate (low
/// fidelity) configurations and the event-driven harness otherwise.
template <EpisodeAgent Agent>
RolloutRecord simulate_episode(Agent& agent, const Subtask& subtask, const RobotState& start,
                               const EnvironmentMap& env, const FidelityConfig& cfg, std::uint64_t seed,
                               const EpisodeOptions& opts = {}) {
  cfg.validate();
  if (cfg.is_degenerate()) return simulate_synchronous(agent, subtask, start, env, cfg, opts);
  return simulate_event_driven(agent, subtask, start, env, cfg, seed, opts);
}

}  // namespace mfcrl

#endif  // MFCRL_SIM_HPP_
