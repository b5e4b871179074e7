#ifndef MFCRL_LEARNER_HPP_
#define MFCRL_LEARNER_HPP_

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mfcrl/errors.hpp"
#include "mfcrl/policy.hpp"
#include "mfcrl/random.hpp"
#include "mfcrl/sim.hpp"

namespace mfcrl {

struct RewardWeights {
  double success_reward = 5.0;
  double collision_reward = -20.0;
  // Per physics step. Kept small so that the accumulated step penalty over an
  // episode stays below the collision penalty; otherwise crashing early is the
  // return-maximizing behaviour.
  double w_distance = 0.01;
  double w_heading = 0.01;
  double w_heading_change = 0.01;

  void validate() const {
    if (!(success_reward > 0.0)) throw InvalidArgument("success_reward must be positive");
    if (!(collision_reward < 0.0)) throw InvalidArgument("collision_reward must be negative");
    if (w_distance < 0.0 || w_heading < 0.0 || w_heading_change < 0.0) {
      throw InvalidArgument("reward weights must be non-negative");
    }
  }
};

/// Terminal rewards on success/collision; otherwise a penalty linear in the
/// distance to the exit center, the heading error to the exit heading and
/// the heading change over the step.
inline double reward(const RobotState& prev, const RobotState& cur, StepOutcome outcome, const Subtask& subtask,
                     const RewardWeights& w) {
  switch (outcome) {
    case StepOutcome::Success: return w.success_reward;
    case StepOutcome::Collision: return w.collision_reward;
    case StepOutcome::Continue: break;
  }
  const double dist = subtask.exit.distance_to_center(cur.x, cur.y);
  const double heading_err = angular_distance(cur.heading, subtask.exit.heading);
  const double heading_change = angular_distance(cur.heading, prev.heading);
  return -(w.w_distance * dist + w.w_heading * heading_err + w.w_heading_change * heading_change);
}

struct TrainBudget {
  long max_steps = 200'000;
  long eval_interval = 5'000;
  std::uint64_t seed = 0;
};

/// Hyper-parameters of the reference learner: tile-coded SARSA(lambda) with
/// replacing traces, epsilon-greedy macro-actions during training and a
/// greedy per-decision action at evaluation time.
struct LearnerSettings {
  double step_size = 0.2;  // divided by the number of tilings
  double discount = 0.98;
  double epsilon_start = 0.3;
  double epsilon_end = 0.02;
  double trace_decay = 0.9;
  int action_repeat = 4;  // decisions per learning step (macro-action length)
  int eval_episodes = 100;
};

/// Successes out of `episodes` greedy rollouts from sampled entry states.
inline int evaluate_successes(const PolicyHandle& policy, const Subtask& subtask, const EnvironmentMap& env,
                              const FidelityConfig& cfg, int episodes, std::uint64_t seed) {
  int wins = 0;
  for (int i = 0; i < episodes; ++i) {
    const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(i));
    Rng rng(derive_seed(s, "start"));
    const RobotState start = sample_entry_state(subtask, rng);
    const auto rec = run_episode(policy, subtask, start, env, cfg, s, {.record = false});
    wins += rec.outcome == EpisodeOutcome::Success ? 1 : 0;
  }
  return wins;
}

/// One evaluation checkpoint of a training run.
struct Checkpoint {
  long steps = 0;
  int wins = 0;
  bool kept = false;  // became the best snapshot
};

namespace detail {

class SarsaLambdaAgent {
 public:
  SarsaLambdaAgent(PolicyHandle& policy, const Subtask& subtask, const RewardWeights& weights,
                   const LearnerSettings& settings, Rng& rng)
      : layout_(TileLayout::read(policy.parameters)),
        weights_(std::span<double>(policy.parameters).subspan(TileLayout::kHeaderSize)),
        limits_(policy.limits),
        subtask_(subtask),
        reward_weights_(weights),
        settings_(settings),
        rng_(rng),
        q_(static_cast<std::size_t>(layout_.actions())),
        tiles_(static_cast<std::size_t>(layout_.tilings)) {}

  void set_epsilon(double eps) { epsilon_ = eps; }
  void set_step_allowance(long n) { allowance_ = n; }
  [[nodiscard]] long steps_taken() const { return steps_; }

  Action decide(const Observation& obs) {
    if (active_ && repeat_left_ > 0 && steps_ < allowance_) {
      --repeat_left_;
      ++steps_;
      return layout_.action(prev_action_, limits_);
    }
    layout_.active_tiles(obs, tiles_);
    values();
    int a = argmax(q_);
    if (uniform01(rng_) < epsilon_) a = static_cast<int>(rng_() % static_cast<std::uint64_t>(layout_.actions()));
    if (active_) learn(settings_.discount * q_[static_cast<std::size_t>(a)]);
    active_ = steps_ < allowance_;
    if (active_) {
      ++steps_;
      prev_action_ = a;
      pending_reward_ = 0.0;
      repeat_left_ = settings_.action_repeat - 1;
      for (std::size_t t : tiles_) mark(t + static_cast<std::size_t>(a));
    } else {
      traces_.clear();
    }
    return layout_.action(a, limits_);
  }

  void observe_step(const RobotState& prev, const RobotState& cur, StepOutcome o) {
    pending_reward_ += reward(prev, cur, o, subtask_, reward_weights_);
  }

  void finish(EpisodeOutcome outcome, const Observation& last) {
    if (!active_) return;
    if (outcome == EpisodeOutcome::Timeout) {
      // Truncated, not terminal: bootstrap from the greedy value of the last state.
      layout_.active_tiles(last, tiles_);
      values();
      learn(settings_.discount * *std::max_element(q_.begin(), q_.end()));
    } else {
      learn(0.0);
    }
    active_ = false;
    traces_.clear();
  }

 private:
  void values() {
    std::fill(q_.begin(), q_.end(), 0.0);
    for (std::size_t off : tiles_) {
      for (int a = 0; a < layout_.actions(); ++a) {
        q_[static_cast<std::size_t>(a)] += weights_[off + static_cast<std::size_t>(a)];
      }
    }
  }

  // Replacing trace on one weight.
  void mark(std::size_t index) {
    for (auto& [i, z] : traces_) {
      if (i == index) {
        z = 1.0;
        return;
      }
    }
    traces_.emplace_back(index, 1.0);
  }

  // TD update toward pending_reward_ + next_value for the marked (state, action).
  void learn(double next_value) {
    double current = 0.0;
    for (const auto& [i, z] : traces_) {
      if (z == 1.0) current += weights_[i];
    }
    const double delta = pending_reward_ + next_value - current;
    const double step = settings_.step_size / layout_.tilings;
    const double decay = settings_.discount * settings_.trace_decay;
    std::size_t keep = 0;
    for (auto& [i, z] : traces_) {
      weights_[i] += step * delta * z;
      z *= decay;
      if (z >= kTraceFloor) traces_[keep++] = {i, z};
    }
    traces_.resize(keep);
  }

  static constexpr double kTraceFloor = 1e-3;

  TileLayout layout_;
  std::span<double> weights_;
  ActionLimits limits_;
  const Subtask& subtask_;
  const RewardWeights& reward_weights_;
  const LearnerSettings& settings_;
  Rng& rng_;
  std::vector<double> q_;
  std::vector<std::size_t> tiles_;
  std::vector<std::pair<std::size_t, double>> traces_;
  bool active_ = false;
  int prev_action_ = 0;
  int repeat_left_ = 0;
  double pending_reward_ = 0.0;
  double epsilon_ = 0.0;
  long steps_ = 0;
  long allowance_ = 0;
};

}  // namespace detail

/// Trains a subtask policy. Episodes start from sampled entry states; after
/// every `eval_interval` learning steps the greedy policy is evaluated on a
/// fixed set of starts and the best snapshot so far is kept (later snapshots
/// win ties). Evaluation rollouts do not count against `max_steps`.
/// Scripted kinds have nothing to learn and are returned unchanged. When
/// `trace` is given, every checkpoint (including the initial one) is
/// appended to it.
inline PolicyHandle train_subtask_policy(const Subtask& subtask, const EnvironmentMap& env,
                                         const FidelityConfig& cfg, const RewardWeights& weights,
                                         const TrainBudget& budget,
                                         const std::optional<PolicyHandle>& initial = std::nullopt,
                                         const LearnerSettings& settings = {},
                                         std::vector<Checkpoint>* trace = nullptr) {
  subtask.validate();
  env.validate();
  cfg.validate();
  weights.validate();
  if (budget.max_steps < 0) throw InvalidArgument("max_steps must be non-negative");
  PolicyHandle policy = initial ? *initial : make_tile_q_policy(env.limits);
  if (budget.max_steps == 0 || policy.learner_kind != learner_kind::kTileQ) return policy;

  const long interval = budget.eval_interval > 0 ? budget.eval_interval : budget.max_steps;
  const std::uint64_t eval_seed = derive_seed(budget.seed, "eval");
  Rng rng(derive_seed(budget.seed, "train"));

  PolicyHandle best = policy;
  int best_wins = evaluate_successes(policy, subtask, env, cfg, settings.eval_episodes, eval_seed);
  if (trace) trace->push_back({0, best_wins, true});
  if (best_wins == settings.eval_episodes) return best;

  long steps = 0;
  long next_eval = interval;
  std::uint64_t episode = 0;
  while (steps < budget.max_steps) {
    detail::SarsaLambdaAgent agent(policy, subtask, weights, settings, rng);
    const double frac = static_cast<double>(steps) / static_cast<double>(budget.max_steps);
    agent.set_epsilon(settings.epsilon_start + (settings.epsilon_end - settings.epsilon_start) * frac);
    agent.set_step_allowance(std::min(budget.max_steps, next_eval) - steps);
    const std::uint64_t ep_seed = derive_seed(budget.seed, "episode", episode++);
    Rng start_rng(ep_seed);
    const RobotState start = sample_entry_state(subtask, start_rng);
    simulate_episode(agent, subtask, start, env, cfg, ep_seed, {.record = false});
    steps += agent.steps_taken();
    if (steps >= next_eval || steps >= budget.max_steps) {
      const int wins = evaluate_successes(policy, subtask, env, cfg, settings.eval_episodes, eval_seed);
      const bool keep = wins >= best_wins;
      if (keep) {
        best_wins = wins;
        best = policy;
      }
      if (trace) trace->push_back({steps, wins, keep});
      next_eval += interval;
    }
  }
  return best;
}

}  // namespace mfcrl

#endif  // MFCRL_LEARNER_HPP_
