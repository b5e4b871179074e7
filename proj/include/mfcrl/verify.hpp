#ifndef MFCRL_VERIFY_HPP_
#define MFCRL_VERIFY_HPP_

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "mfcrl/errors.hpp"
#include "mfcrl/hlm.hpp"
#include "mfcrl/policy.hpp"
#include "mfcrl/random.hpp"
#include "mfcrl/sim.hpp"

namespace mfcrl {

struct EmpiricalEstimate {
  SubtaskId subtask_id;
  long successes = 0;
  long trials = 0;
  double p_hat = 0.0;
  double lower_bound = 0.0;
  double alpha = 0.05;

  friend bool operator==(const EmpiricalEstimate&, const EmpiricalEstimate&) = default;
};

/// One-sided exact (Clopper-Pearson) lower confidence bound on a binomial
/// success probability at confidence 1 - alpha.
inline double lower_confidence_bound(long successes, long trials, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidAlpha("alpha must lie in (0, 1)");
  if (trials < 1 || successes < 0 || successes > trials) {
    throw InvalidArgument("need 0 <= successes <= trials and trials >= 1");
  }
  if (successes == 0) return 0.0;
  if (successes == trials) return std::pow(alpha, 1.0 / static_cast<double>(trials));
  return boost::math::ibeta_inv(static_cast<double>(successes), static_cast<double>(trials - successes + 1),
                                alpha);
}

/// Monte-Carlo estimate from `n_trials` episodes started uniformly in the
/// entry region. Every trial has its own seed stream derived from `seed`.
inline EmpiricalEstimate estimate_success_probability(const PolicyHandle& policy, const Subtask& subtask,
                                                      const EnvironmentMap& env, const FidelityConfig& cfg,
                                                      long n_trials, double alpha, std::uint64_t seed) {
  if (n_trials < 1) throw InvalidArgument("n_trials must be at least 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidAlpha("alpha must lie in (0, 1)");
  EmpiricalEstimate e;
  e.subtask_id = subtask.id;
  e.trials = n_trials;
  e.alpha = alpha;
  for (long i = 0; i < n_trials; ++i) {
    const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(i));
    Rng start_rng(derive_seed(s, "start"));
    const RobotState start = sample_entry_state(subtask, start_rng);
    const auto rec = run_episode(policy, subtask, start, env, cfg, s, {.record = false});
    e.successes += rec.outcome == EpisodeOutcome::Success ? 1 : 0;
  }
  e.p_hat = static_cast<double>(e.successes) / static_cast<double>(e.trials);
  e.lower_bound = lower_confidence_bound(e.successes, e.trials, alpha);
  return e;
}

// ---------------------------------------------------------------------------
// Composition.

enum class CompositionOutcome { Success, SubtaskTimeout, Collision, NoSubtaskAvailable };

inline const char* to_string(CompositionOutcome o) {
  switch (o) {
    case CompositionOutcome::Success: return "success";
    case CompositionOutcome::SubtaskTimeout: return "subtask_timeout";
    case CompositionOutcome::Collision: return "collision";
    case CompositionOutcome::NoSubtaskAvailable: return "no_subtask_available";
  }
  return "?";
}

struct CompositionResult {
  CompositionOutcome outcome = CompositionOutcome::NoSubtaskAvailable;
  std::vector<std::pair<StateId, SubtaskId>> high_level_trace;
  StateId final_state;
  RolloutRecord rollout;
};

/// Executes the composition selected by `mu` from the task's initial pose.
/// Each subtask policy runs until it reaches its exit region (advance to the
/// successor state, carrying the true robot state over), collides or times
/// out (both end in the fail state).
inline CompositionResult execute_composition(const Hlm& hlm, const MetaPolicy& mu,
                                             const std::map<SubtaskId, PolicyHandle>& policies,
                                             const std::map<SubtaskId, Subtask>& subtasks, const TaskSpec& task,
                                             const EnvironmentMap& env, const FidelityConfig& cfg, std::uint64_t seed,
                                             bool record = true) {
  mu.validate_for(hlm);
  // A deterministic meta-policy that revisits a state before resolving would loop forever.
  {
    std::set<StateId> seen;
    for (StateId s = hlm.initial; s != hlm.goal && mu.choice.count(s);) {
      if (!seen.insert(s).second) throw InvalidArgument("meta-policy cycles through '" + s + "'");
      s = hlm.successor.at(mu.choice.at(s));
    }
  }

  CompositionResult out;
  RobotState state;
  state.x = task.initial_pose.x;
  state.y = task.initial_pose.y;
  state.heading = wrap_angle(task.initial_pose.heading);
  StateId s = hlm.initial;
  double clock = 0.0;
  std::uint64_t segment = 0;
  auto finish = [&](CompositionOutcome o, const StateId& at) {
    out.outcome = o;
    out.final_state = at;
    out.rollout.final_state = state;
  };

  for (;;) {
    if (s == hlm.goal) {
      finish(CompositionOutcome::Success, s);
      out.rollout.outcome = EpisodeOutcome::Success;
      return out;
    }
    if (hlm.available_from(s).empty()) {
      finish(CompositionOutcome::NoSubtaskAvailable, s);
      return out;
    }
    auto pick = mu.choice.find(s);
    if (pick == mu.choice.end()) throw UnmappedState("meta-policy does not map '" + s + "'");
    const SubtaskId& c = pick->second;
    auto pol = policies.find(c);
    if (pol == policies.end()) throw MissingPolicy("no policy for subtask '" + c + "'");
    auto st = subtasks.find(c);
    if (st == subtasks.end()) throw InvalidArgument("unknown subtask '" + c + "'");
    out.high_level_trace.emplace_back(s, c);

    const auto seg = run_episode(pol->second, st->second, state, env, cfg, derive_seed(seed, segment++),
                                 {.record = record, .time_offset = clock});
    auto& samples = out.rollout.samples;
    // Consecutive segments share their boundary sample; keep the first copy.
    const std::size_t skip = samples.empty() || seg.samples.empty() ? 0 : 1;
    samples.insert(samples.end(), seg.samples.begin() + static_cast<std::ptrdiff_t>(skip), seg.samples.end());
    out.rollout.physics_steps += seg.physics_steps;
    out.rollout.decisions += seg.decisions;
    out.rollout.clamp_events += seg.clamp_events;
    out.rollout.outcome = seg.outcome;
    clock += static_cast<double>(seg.physics_steps) * cfg.dt_physics;
    state = seg.final_state;

    if (seg.outcome == EpisodeOutcome::Collision) {
      finish(CompositionOutcome::Collision, hlm.fail);
      return out;
    }
    if (seg.outcome == EpisodeOutcome::Timeout) {
      finish(CompositionOutcome::SubtaskTimeout, hlm.fail);
      return out;
    }
    s = hlm.successor.at(c);
  }
}

struct SubtaskCheck {
  SubtaskId subtask_id;
  double required = 0.0;  // p_c
  double p_hat = 0.0;
  bool satisfied = false;
};

struct BoundCheckReport {
  double bound = 0.0;
  long runs = 0;
  long successes = 0;
  double success_rate = 0.0;
  double tolerance = 0.0;  // 3 binomial standard deviations at the bound
  bool violation = false;
  std::vector<SubtaskCheck> subtasks;
};

/// Compares the observed composition success rate with the HLM guarantee:
/// a violation is flagged when the rate falls more than three binomial
/// standard deviations below the bound.
inline BoundCheckReport check_bound(const Hlm& hlm, const MetaPolicy& mu, const ParamVector& params,
                                    const std::map<SubtaskId, EmpiricalEstimate>& estimates, long n_full_runs,
                                    long observed_successes) {
  if (n_full_runs < 1 || observed_successes < 0 || observed_successes > n_full_runs) {
    throw InvalidArgument("need 0 <= observed_successes <= n_full_runs and n_full_runs >= 1");
  }
  BoundCheckReport r;
  r.bound = reach_probability(hlm, mu, params);
  r.runs = n_full_runs;
  r.successes = observed_successes;
  r.success_rate = static_cast<double>(observed_successes) / static_cast<double>(n_full_runs);
  r.tolerance = 3.0 * std::sqrt(r.bound * (1.0 - r.bound) / static_cast<double>(n_full_runs));
  r.violation = r.success_rate < r.bound - r.tolerance;
  for (const auto& [s, c] : mu.choice) {
    auto it = estimates.find(c);
    if (it == estimates.end()) throw MissingEstimate("no estimate for subtask '" + c + "'");
    const double required = params.at(c);
    r.subtasks.push_back({c, required, it->second.p_hat, it->second.p_hat >= required});
  }
  return r;
}

}  // namespace mfcrl

#endif  // MFCRL_VERIFY_HPP_
