#ifndef MFCRL_HLM_HPP_
#define MFCRL_HLM_HPP_

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mfcrl/errors.hpp"
#include "mfcrl/geometry.hpp"

namespace mfcrl {

using SubtaskId = std::string;
using StateId = std::string;

struct Subtask {
  SubtaskId id;
  PoseRegion entry;
  PoseRegion exit;
  double timeout = 30.0;  // seconds

  void validate() const {
    if (id.empty()) throw InvalidArgument("subtask id must be non-empty");
    entry.validate();
    exit.validate();
    if (!(timeout > 0.0) || !std::isfinite(timeout)) {
      throw InvalidArgument("subtask '" + id + "' timeout must be positive and finite");
    }
  }
};

struct TaskSpec {
  Pose2 initial_pose;
  PoseRegion target;
  double min_success_probability = 0.95;

  void validate() const {
    target.validate();
    if (!(min_success_probability >= 0.0 && min_success_probability <= 1.0)) {
      throw InvalidArgument("min_success_probability must lie in [0, 1]");
    }
  }
};

/// The high-level model: a parametric MDP over equivalence classes of robot
/// states. Transition probabilities are not stored; from state s, choosing
/// subtask c moves to successor(c) with probability p_c and to `fail`
/// otherwise.
struct Hlm {
  std::vector<StateId> states;
  StateId initial;
  StateId goal;
  StateId fail;
  std::map<StateId, std::vector<SubtaskId>> available;
  std::map<SubtaskId, StateId> successor;

  [[nodiscard]] bool has_state(const StateId& s) const {
    return std::find(states.begin(), states.end(), s) != states.end();
  }

  [[nodiscard]] const std::vector<SubtaskId>& available_from(const StateId& s) const {
    static const std::vector<SubtaskId> kNone;
    auto it = available.find(s);
    return it == available.end() ? kNone : it->second;
  }

  [[nodiscard]] std::vector<SubtaskId> subtask_ids() const {
    std::vector<SubtaskId> out;
    for (const auto& [c, _] : successor) out.push_back(c);
    return out;
  }

  void validate() const {
    if (goal == fail) throw InvalidArgument("goal and fail states must differ");
    for (const auto* s : {&initial, &goal, &fail}) {
      if (!has_state(*s)) throw InvalidArgument("state '" + *s + "' is not in the state set");
    }
    std::set<SubtaskId> listed;
    for (const auto& [s, cs] : available) {
      if (!has_state(s)) throw InvalidArgument("availability for unknown state '" + s + "'");
      if ((s == goal || s == fail) && !cs.empty()) {
        throw InvalidArgument("no subtask may be available from goal or fail");
      }
      for (const auto& c : cs) listed.insert(c);
    }
    for (const auto& c : listed) {
      if (!successor.count(c)) throw InvalidArgument("subtask '" + c + "' has no successor");
    }
    for (const auto& [c, s] : successor) {
      if (!has_state(s)) throw InvalidArgument("successor of '" + c + "' is unknown");
      if (s == fail) throw InvalidArgument("successor of '" + c + "' is the fail state");
      if (!listed.count(c)) throw InvalidArgument("subtask '" + c + "' is never available");
    }
  }
};

/// Deterministic meta-policy: high-level state -> subtask.
struct MetaPolicy {
  std::map<StateId, SubtaskId> choice;

  void validate_for(const Hlm& hlm) const {
    for (const auto& [s, c] : choice) {
      if (s == hlm.goal || s == hlm.fail) {
        throw InvalidArgument("meta-policy must not map goal or fail");
      }
      const auto& avail = hlm.available_from(s);
      if (std::find(avail.begin(), avail.end(), c) == avail.end()) {
        throw InvalidArgument("meta-policy picks '" + c + "' which is unavailable in '" + s + "'");
      }
    }
  }
};

/// Per-subtask success-probability parameters p_c.
struct ParamVector {
  std::map<SubtaskId, double> values;

  [[nodiscard]] double at(const SubtaskId& c) const {
    auto it = values.find(c);
    if (it == values.end()) throw IncompleteParams("no parameter for subtask '" + c + "'");
    return it->second;
  }

  void validate_for(const Hlm& hlm) const {
    for (const auto& c : hlm.subtask_ids()) {
      const double p = at(c);
      if (!(p >= 0.0 && p <= 1.0)) {
        throw InvalidArgument("parameter for '" + c + "' must lie in [0, 1]");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Composability and compatibility.

inline bool check_composable(const std::vector<Subtask>& subtasks) {
  if (subtasks.empty()) throw InvalidArgument("subtask list is empty");
  for (const auto& c : subtasks) c.validate();
  for (const auto& ci : subtasks) {
    for (const auto& cj : subtasks) {
      if (!region_contains(ci.exit, cj.entry) && !regions_disjoint(ci.exit, cj.entry)) {
        return false;
      }
    }
  }
  return true;
}

inline bool check_compatible(const std::vector<Subtask>& subtasks, const TaskSpec& task) {
  for (const auto& c : subtasks) c.validate();
  task.validate();
  const bool starts = std::any_of(subtasks.begin(), subtasks.end(),
                                  [&](const Subtask& c) { return c.entry.contains(task.initial_pose); });
  const bool finishes = std::any_of(subtasks.begin(), subtasks.end(),
                                    [&](const Subtask& c) { return regions_equal(c.exit, task.target); });
  const bool separated = std::all_of(subtasks.begin(), subtasks.end(), [&](const Subtask& c) {
    return regions_equal(c.exit, task.target) || regions_disjoint(c.exit, task.target);
  });
  return starts && finishes && separated;
}

// ---------------------------------------------------------------------------
// HLM construction.

inline constexpr const char* kGoalState = "goal";
inline constexpr const char* kFailState = "fail";

namespace detail {

// Canonical name of a high-level state: its sorted availability signature.
inline StateId signature_name(const std::set<SubtaskId>& sig) {
  std::string out = "{";
  bool first = true;
  for (const auto& c : sig) {
    if (!first) out += ",";
    out += c;
    first = false;
  }
  return out + "}";
}

}  // namespace detail

/// Builds the high-level model. High-level states are availability
/// signatures {c : region subset of entry_c}; targets collapse into `goal`.
/// State ids are the signature strings, so the result does not depend on the
/// order of `subtasks`.
inline Hlm build_hlm(const std::vector<Subtask>& subtasks, const TaskSpec& task) {
  if (subtasks.empty()) throw InvalidArgument("subtask list is empty");
  task.validate();
  {
    std::set<SubtaskId> ids;
    for (const auto& c : subtasks) {
      c.validate();
      if (!ids.insert(c.id).second) throw InvalidArgument("duplicate subtask id '" + c.id + "'");
    }
  }

  Hlm hlm;
  hlm.goal = kGoalState;
  hlm.fail = kFailState;
  std::set<StateId> states{hlm.goal, hlm.fail};

  if (task.target.contains(task.initial_pose)) {
    hlm.initial = hlm.goal;
  } else {
    std::set<SubtaskId> sig;
    for (const auto& c : subtasks) {
      if (c.entry.contains(task.initial_pose)) sig.insert(c.id);
    }
    hlm.initial = detail::signature_name(sig);
    states.insert(hlm.initial);
    hlm.available[hlm.initial] = {sig.begin(), sig.end()};
  }

  for (const auto& c : subtasks) {
    if (regions_equal(c.exit, task.target)) {
      hlm.successor[c.id] = hlm.goal;
      continue;
    }
    if (!regions_disjoint(c.exit, task.target)) {
      throw AmbiguousSuccessor("exit of '" + c.id + "' partially overlaps the target");
    }
    std::set<SubtaskId> sig;
    for (const auto& other : subtasks) {
      if (region_contains(c.exit, other.entry)) {
        sig.insert(other.id);
      } else if (!regions_disjoint(c.exit, other.entry)) {
        throw AmbiguousSuccessor("exit of '" + c.id + "' straddles the entry of '" + other.id + "'");
      }
    }
    const StateId s = detail::signature_name(sig);
    states.insert(s);
    hlm.available[s] = {sig.begin(), sig.end()};
    hlm.successor[c.id] = s;
  }

  hlm.states.assign(states.begin(), states.end());
  // Drop subtasks that are never available anywhere: they cannot be chosen.
  std::set<SubtaskId> listed;
  for (const auto& [s, cs] : hlm.available) listed.insert(cs.begin(), cs.end());
  for (auto it = hlm.successor.begin(); it != hlm.successor.end();) {
    it = listed.count(it->first) ? std::next(it) : hlm.successor.erase(it);
  }
  hlm.validate();
  return hlm;
}

// ---------------------------------------------------------------------------
// Reachability.

/// Probability of reaching `goal` from `initial` in the Markov chain induced
/// by `mu` and `params`. States that cannot reach the goal along
/// positive-probability edges are fixed to zero first; the remaining linear
/// system is then solved by Gaussian elimination.
inline double reach_probability(const Hlm& hlm, const MetaPolicy& mu, const ParamVector& params) {
  mu.validate_for(hlm);
  const std::size_t n = hlm.states.size();
  std::map<StateId, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) index[hlm.states[i]] = i;

  // next[i] = (successor index, probability) or nullopt for absorbing/unmapped.
  std::vector<std::optional<std::pair<std::size_t, double>>> next(n);
  for (const auto& [s, c] : mu.choice) {
    const double p = params.at(c);
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("parameter for '" + c + "' outside [0, 1]");
    next[index.at(s)] = std::make_pair(index.at(hlm.successor.at(c)), p);
  }
  const std::size_t g = index.at(hlm.goal);

  // Backward reachability to goal over edges with p > 0.
  std::vector<bool> can_reach(n, false);
  can_reach[g] = true;
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (!can_reach[i] && next[i] && next[i]->second > 0.0 && can_reach[next[i]->first]) {
        can_reach[i] = true;
        changed = true;
      }
    }
  }

  std::vector<std::size_t> unknown;
  std::vector<std::size_t> slot(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (i != g && can_reach[i]) {
      slot[i] = unknown.size();
      unknown.push_back(i);
    }
  }
  if (!can_reach[index.at(hlm.initial)]) return 0.0;
  if (index.at(hlm.initial) == g) return 1.0;

  // (I - A) x = b with x_i = p_i * x_next(i).
  const std::size_t m = unknown.size();
  std::vector<std::vector<double>> a(m, std::vector<double>(m + 1, 0.0));
  for (std::size_t r = 0; r < m; ++r) {
    const auto [to, p] = *next[unknown[r]];
    a[r][r] = 1.0;
    if (to == g) {
      a[r][m] += p;
    } else if (slot[to] < n) {
      a[r][slot[to]] -= p;
    }
  }
  for (std::size_t col = 0; col < m; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < m; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    }
    std::swap(a[col], a[pivot]);
    const double d = a[col][col];
    for (std::size_t k = col; k <= m; ++k) a[col][k] /= d;
    for (std::size_t r = 0; r < m; ++r) {
      if (r == col || a[r][col] == 0.0) continue;
      const double f = a[r][col];
      for (std::size_t k = col; k <= m; ++k) a[r][k] -= f * a[col][k];
    }
  }
  const double x = a[slot[index.at(hlm.initial)]][m];
  return std::clamp(x, 0.0, 1.0);
}

}  // namespace mfcrl

#endif  // MFCRL_HLM_HPP_
