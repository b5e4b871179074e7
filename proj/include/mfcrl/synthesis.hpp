#ifndef MFCRL_SYNTHESIS_HPP_
#define MFCRL_SYNTHESIS_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "mfcrl/errors.hpp"
#include "mfcrl/hlm.hpp"

namespace mfcrl {

using SubtaskPath = std::vector<SubtaskId>;

struct SynthesisProblem {
  Hlm hlm;
  double min_success_probability = 0.95;
  std::map<SubtaskId, double> caps;  // missing entries mean 1.0

  [[nodiscard]] double cap(const SubtaskId& c) const {
    auto it = caps.find(c);
    return it == caps.end() ? 1.0 : it->second;
  }

  void validate() const {
    hlm.validate();
    if (!(min_success_probability >= 0.0 && min_success_probability <= 1.0)) {
      throw InvalidArgument("min_success_probability must lie in [0, 1]");
    }
    for (const auto& [c, v] : caps) {
      if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("cap for '" + c + "' outside [0, 1]");
    }
  }
};

struct SynthesisResult {
  MetaPolicy meta_policy;
  ParamVector params;
  SubtaskPath path;  // subtasks in execution order
  double achieved_bound = 0.0;
  double objective = 0.0;
};

/// All simple initial-to-goal paths of the availability graph, as subtask
/// sequences in lexicographic order.
inline std::vector<SubtaskPath> enumerate_paths(const Hlm& hlm) {
  hlm.validate();
  std::vector<SubtaskPath> out;
  if (hlm.initial == hlm.goal) {
    out.emplace_back();
    return out;
  }
  std::set<StateId> on_stack{hlm.initial};
  SubtaskPath current;
  std::function<void(const StateId&)> dfs = [&](const StateId& s) {
    for (const auto& c : hlm.available_from(s)) {
      const StateId& nxt = hlm.successor.at(c);
      if (nxt == hlm.goal) {
        current.push_back(c);
        out.push_back(current);
        current.pop_back();
        continue;
      }
      if (on_stack.count(nxt)) continue;
      on_stack.insert(nxt);
      current.push_back(c);
      dfs(nxt);
      current.pop_back();
      on_stack.erase(nxt);
    }
  };
  dfs(hlm.initial);
  if (out.empty()) throw NoPath("goal is unreachable from '" + hlm.initial + "'");
  std::sort(out.begin(), out.end());
  return out;
}

/// Minimizes sum(p) subject to prod(p) >= target and 0 <= p_i <= caps[i].
/// At the optimum the product constraint is active and every uncapped entry
/// shares one value t; entries whose cap falls below t are pinned to the cap
/// until no more move (water filling).
inline std::vector<double> allocate_path_probs(std::size_t n, double target,
                                               const std::vector<double>& caps) {
  if (n == 0) throw InvalidArgument("path must contain at least one subtask");
  if (!(target > 0.0 && target <= 1.0)) throw InvalidArgument("target must lie in (0, 1]");
  std::vector<double> cap = caps.empty() ? std::vector<double>(n, 1.0) : caps;
  if (cap.size() != n) throw InvalidArgument("caps size must match n");
  for (double c : cap) {
    if (!(c >= 0.0 && c <= 1.0)) throw InvalidArgument("caps must lie in [0, 1]");
  }
  const double cap_product = std::accumulate(cap.begin(), cap.end(), 1.0, std::multiplies<>());
  if (cap_product < target) {
    throw Infeasible("product of caps " + std::to_string(cap_product) + " is below target " +
                     std::to_string(target));
  }

  std::vector<bool> pinned(n, false);
  std::vector<double> p(n);
  for (;;) {
    double pinned_product = 1.0;
    std::size_t free_count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (pinned[i]) {
        pinned_product *= cap[i];
      } else {
        ++free_count;
      }
    }
    if (free_count == 0) return cap;
    double t = std::pow(target / pinned_product, 1.0 / static_cast<double>(free_count));
    // Round t up until the product is not below target in floating point.
    auto product_with = [&](double v) {
      double prod = pinned_product;
      for (std::size_t k = 0; k < free_count; ++k) prod *= v;
      return prod;
    };
    while (product_with(t) < target) t = std::nextafter(t, 2.0);

    bool moved = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (!pinned[i] && cap[i] < t) {
        pinned[i] = true;
        moved = true;
      }
    }
    if (moved) continue;
    for (std::size_t i = 0; i < n; ++i) p[i] = pinned[i] ? cap[i] : std::min(t, 1.0);
    return p;
  }
}

namespace detail {

// Realizes a path as a meta-policy by walking it from the initial state.
inline MetaPolicy policy_for_path(const Hlm& hlm, const SubtaskPath& path) {
  MetaPolicy mu;
  StateId s = hlm.initial;
  for (const auto& c : path) {
    mu.choice[s] = c;
    s = hlm.successor.at(c);
  }
  return mu;
}

inline SynthesisResult make_result(const SynthesisProblem& problem, const SubtaskPath& path,
                                   const std::vector<double>& values) {
  SynthesisResult r;
  r.path = path;
  r.meta_policy = policy_for_path(problem.hlm, path);
  for (const auto& c : problem.hlm.subtask_ids()) r.params.values[c] = 0.0;
  for (std::size_t i = 0; i < path.size(); ++i) r.params.values[path[i]] = values[i];
  r.objective = std::accumulate(values.begin(), values.end(), 0.0);
  r.achieved_bound = reach_probability(problem.hlm, r.meta_policy, r.params);
  return r;
}

// Candidate order for tie-breaking: fewer subtasks first, then lexicographic.
inline bool path_precedes(const SubtaskPath& a, const SubtaskPath& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

inline constexpr double kObjectiveTieEps = 1e-12;

}  // namespace detail

/// Chooses the meta-policy and minimal specification values. Every simple
/// path is solved exactly by allocate_path_probs; the cheapest feasible path
/// wins, ties going to fewer subtasks and then lexicographic order. Subtasks
/// off the chosen path get p_c = 0.
inline SynthesisResult synthesize(const SynthesisProblem& problem) {
  problem.validate();
  auto paths = enumerate_paths(problem.hlm);
  std::stable_sort(paths.begin(), paths.end(), detail::path_precedes);

  const double target = problem.min_success_probability;
  std::optional<SynthesisResult> best;
  for (const auto& path : paths) {
    std::vector<double> values(path.size(), 0.0);
    if (target > 0.0 && !path.empty()) {
      std::vector<double> caps;
      for (const auto& c : path) caps.push_back(problem.cap(c));
      try {
        values = allocate_path_probs(path.size(), target, caps);
      } catch (const Infeasible&) {
        continue;
      }
    }
    const double objective = std::accumulate(values.begin(), values.end(), 0.0);
    if (!best || objective < best->objective - detail::kObjectiveTieEps) {
      best = detail::make_result(problem, path, values);
    }
  }
  if (!best) throw Infeasible("no initial-to-goal path is feasible under the current caps");
  return *best;
}

/// Exhaustive reference solver. Enumerates every deterministic meta-policy,
/// follows the induced chain from the initial state and, when it reaches the
/// goal, scans the parameter grid for the cheapest assignment meeting the
/// target. The grid scan keeps, per achievable grid sum, the largest product
/// reachable so far, which makes it exact over the grid.
inline SynthesisResult brute_force_synthesize(const SynthesisProblem& problem, double grid_step) {
  problem.validate();
  if (!(grid_step > 0.0 && grid_step <= 0.1)) throw InvalidArgument("grid_step must lie in (0, 0.1]");
  const Hlm& hlm = problem.hlm;
  const long steps = std::lround(1.0 / grid_step);
  const double target = problem.min_success_probability;
  constexpr double kSlack = 1e-12;

  std::vector<StateId> deciders;
  for (const auto& s : hlm.states) {
    if (!hlm.available_from(s).empty()) deciders.push_back(s);
  }

  std::map<SubtaskPath, std::optional<std::vector<double>>> solved;
  auto grid_solve = [&](const SubtaskPath& path) -> std::optional<std::vector<double>> {
    const std::size_t n = path.size();
    if (n == 0) return std::vector<double>{};
    if (target <= 0.0) return std::vector<double>(n, 0.0);
    std::vector<long> cap_units(n);
    for (std::size_t i = 0; i < n; ++i) {
      cap_units[i] = static_cast<long>(std::floor(problem.cap(path[i]) * steps + 1e-9));
    }
    // frontier[k] = best product with grid sum k, plus the assignment achieving it.
    struct Entry {
      double product;
      std::vector<long> units;
    };
    std::map<long, Entry> frontier{{0, Entry{1.0, {}}}};
    for (std::size_t i = 0; i < n; ++i) {
      std::map<long, Entry> next;
      for (const auto& [sum, e] : frontier) {
        // Smaller grid values leave the product below target for good.
        const long first = std::max(0L, static_cast<long>(std::floor(target * steps / e.product)) - 1);
        for (long u = first; u <= cap_units[i]; ++u) {
          const double prod = e.product * (static_cast<double>(u) / steps);
          if (prod < target - kSlack) continue;
          auto it = next.find(sum + u);
          if (it == next.end() || prod > it->second.product) {
            Entry ne{prod, e.units};
            ne.units.push_back(u);
            next[sum + u] = std::move(ne);
          }
        }
      }
      frontier = std::move(next);
    }
    for (const auto& [sum, e] : frontier) {
      if (e.product >= target - kSlack) {
        std::vector<double> values;
        for (long u : e.units) values.push_back(static_cast<double>(u) / steps);
        return values;
      }
    }
    return std::nullopt;
  };

  std::optional<SynthesisResult> best;
  std::vector<std::size_t> pick(deciders.size(), 0);
  for (;;) {
    MetaPolicy mu;
    for (std::size_t i = 0; i < deciders.size(); ++i) {
      mu.choice[deciders[i]] = hlm.available_from(deciders[i])[pick[i]];
    }
    SubtaskPath path;
    std::set<StateId> seen;
    StateId s = hlm.initial;
    while (s != hlm.goal && !seen.count(s) && mu.choice.count(s)) {
      seen.insert(s);
      path.push_back(mu.choice.at(s));
      s = hlm.successor.at(path.back());
    }
    if (s == hlm.goal) {
      if (!solved.count(path)) solved[path] = grid_solve(path);
      if (const auto& values = solved.at(path)) {
        const double obj = std::accumulate(values->begin(), values->end(), 0.0);
        const bool better =
            !best || obj < best->objective - detail::kObjectiveTieEps ||
            (std::abs(obj - best->objective) <= detail::kObjectiveTieEps &&
             detail::path_precedes(path, best->path));
        if (better) best = detail::make_result(problem, path, *values);
      }
    }
    // Odometer over the per-state choices.
    std::size_t k = 0;
    while (k < deciders.size()) {
      if (++pick[k] < hlm.available_from(deciders[k]).size()) break;
      pick[k++] = 0;
    }
    if (k == deciders.size()) break;
  }
  if (solved.empty()) throw NoPath("goal is unreachable from '" + hlm.initial + "'");
  if (!best) throw Infeasible("no meta-policy is feasible under the current caps");
  return *best;
}

}  // namespace mfcrl

#endif  // MFCRL_SYNTHESIS_HPP_
