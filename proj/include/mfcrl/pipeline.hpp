#ifndef MFCRL_PIPELINE_HPP_
#define MFCRL_PIPELINE_HPP_

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mfcrl/config.hpp"
#include "mfcrl/errors.hpp"
#include "mfcrl/hlm.hpp"
#include "mfcrl/learner.hpp"
#include "mfcrl/policy.hpp"
#include "mfcrl/random.hpp"
#include "mfcrl/synthesis.hpp"
#include "mfcrl/verify.hpp"

namespace mfcrl {

/// Subtasks whose gate value (p_hat, or the lower confidence bound when
/// `gate_on_lower_bound`) falls below their specification p_c. Subtasks with
/// p_c = 0 carry no requirement and are never returned.
inline std::set<SubtaskId> identify_underperformers(const std::map<SubtaskId, EmpiricalEstimate>& estimates,
                                                    const ParamVector& params, bool gate_on_lower_bound) {
  std::set<SubtaskId> out;
  for (const auto& [c, p] : params.values) {
    if (p <= 0.0) continue;
    auto it = estimates.find(c);
    if (it == estimates.end()) throw MissingEstimate("no estimate for subtask '" + c + "'");
    const double gate = gate_on_lower_bound ? it->second.lower_bound : it->second.p_hat;
    if (gate < p) out.insert(c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Policy store: one binary file per subtask plus an index of fingerprints.
// A stored policy is reused when the fingerprint of the subtask definition
// and controller still matches; the environment is deliberately excluded so
// that policies carry over when the world changes and are re-verified there.

inline std::string fingerprint(const Subtask& s, const ControllerSpec& c, const ActionLimits& lim) {
  auto region = [](const PoseRegion& r) {
    return Json::array({r.center_x, r.center_y, r.position_radius, r.heading, r.heading_tolerance});
  };
  const Json j = {{"entry", region(s.entry)},
                  {"exit", region(s.exit)},
                  {"timeout", s.timeout},
                  {"learner", c.learner},
                  {"fault_rate", c.fault_rate},
                  {"limits", Json::array({lim.v_min, lim.v_max, lim.w_min, lim.w_max})}};
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

class PolicyStore {
 public:
  explicit PolicyStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    const auto index = dir_ / "index.json";
    if (!std::filesystem::exists(index)) return;
    std::ifstream f(index);
    try {
      const Json j = Json::parse(f);
      for (const auto& [id, fp] : j.items()) index_[id] = fp.get<std::string>();
    } catch (const Json::exception& e) {
      throw IoError("corrupt policy index '" + index.string() + "': " + e.what());
    }
  }

  [[nodiscard]] std::filesystem::path file(const SubtaskId& id) const { return dir_ / (id + ".pol"); }

  [[nodiscard]] std::optional<PolicyHandle> load(const SubtaskId& id, const std::string& fp) const {
    auto it = index_.find(id);
    if (it == index_.end() || it->second != fp || !std::filesystem::exists(file(id))) return std::nullopt;
    return load_policy(file(id).string());
  }

  void save(const SubtaskId& id, const std::string& fp, const PolicyHandle& p) {
    std::filesystem::create_directories(dir_);
    save_policy(p, file(id).string());
    index_[id] = fp;
    Json j = Json::object();
    for (const auto& [k, v] : index_) j[k] = v;
    std::ofstream f(dir_ / "index.json", std::ios::trunc);
    f << j.dump(2) << '\n';
    if (!f) throw IoError("failed writing '" + (dir_ / "index.json").string() + "'");
  }

 private:
  std::filesystem::path dir_;
  std::map<SubtaskId, std::string> index_;
};

// ---------------------------------------------------------------------------
// Seeds. Every stochastic step draws from its own named stream.

inline std::uint64_t train_seed(const PipelineConfig& c, const SubtaskId& id) {
  return derive_seed(c.seed, "train/" + id);
}
inline std::uint64_t retrain_seed(const PipelineConfig& c, const SubtaskId& id, int iteration) {
  return derive_seed(c.seed, "retrain/" + id, static_cast<std::uint64_t>(iteration));
}
inline std::uint64_t verify_seed(const PipelineConfig& c, const SubtaskId& id) {
  return derive_seed(c.seed, "verify/" + id);
}
inline std::uint64_t compose_seed(const PipelineConfig& c, int iteration) {
  return derive_seed(c.seed, "compose", static_cast<std::uint64_t>(iteration));
}

inline PolicyHandle fresh_policy(const PipelineConfig& c, const SubtaskId& id) {
  const ControllerSpec ctl = c.controller(id);
  PolicyHandle p = ctl.learner == learner_kind::kGotoPose ? make_goto_pose_policy(c.environment.limits)
                                                          : make_tile_q_policy(c.environment.limits);
  p.fault_rate = ctl.fault_rate;
  return p;
}

/// Trains (or, for scripted controllers, instantiates) the policy of one
/// subtask in the low-fidelity simulator.
inline PolicyHandle train_for_config(const PipelineConfig& c, const SubtaskId& id, const TrainBudget& budget,
                                     std::uint64_t seed, const std::optional<PolicyHandle>& initial = std::nullopt) {
  const TrainBudget b{budget.max_steps, budget.eval_interval, seed};
  return train_subtask_policy(c.subtask(id), c.environment, c.fidelity_low, c.reward, b,
                              initial ? initial : std::optional<PolicyHandle>(fresh_policy(c, id)));
}

inline EmpiricalEstimate estimate_for_config(const PipelineConfig& c, const SubtaskId& id, const PolicyHandle& p,
                                             const FidelityConfig& fidelity) {
  return estimate_success_probability(p, c.subtask(id), c.environment, fidelity, c.n_verify, c.alpha,
                                      verify_seed(c, id));
}

struct CompositionBatch {
  long runs = 0;
  long successes = 0;
  std::map<std::string, long> outcomes;  // outcome name -> count
  CompositionResult first;               // recorded trajectory of run 0
};

/// Runs `n` independent compositions; only the first is recorded.
inline CompositionBatch run_compositions(const PipelineConfig& c, const Hlm& hlm, const MetaPolicy& mu,
                                         const std::map<SubtaskId, PolicyHandle>& policies,
                                         const FidelityConfig& fidelity, long n, std::uint64_t seed) {
  const auto subtasks = c.subtask_map();
  CompositionBatch b;
  b.runs = n;
  for (long i = 0; i < n; ++i) {
    auto r = execute_composition(hlm, mu, policies, subtasks, c.task, c.environment, fidelity,
                                 derive_seed(seed, static_cast<std::uint64_t>(i)), i == 0);
    b.successes += r.outcome == CompositionOutcome::Success ? 1 : 0;
    ++b.outcomes[to_string(r.outcome)];
    if (i == 0) b.first = std::move(r);
  }
  return b;
}

// ---------------------------------------------------------------------------
// The outer loop.

enum class PipelineStatus { OverallSuccess, Infeasible, IterationLimit, BoundViolation };

inline const char* to_string(PipelineStatus s) {
  switch (s) {
    case PipelineStatus::OverallSuccess: return "overall_success";
    case PipelineStatus::Infeasible: return "infeasible";
    case PipelineStatus::IterationLimit: return "iteration_limit";
    case PipelineStatus::BoundViolation: return "bound_violation";
  }
  return "?";
}

inline int exit_code(PipelineStatus s) {
  switch (s) {
    case PipelineStatus::OverallSuccess: return 0;
    case PipelineStatus::Infeasible: return 2;
    case PipelineStatus::IterationLimit: return 3;
    case PipelineStatus::BoundViolation: return 5;
  }
  return 1;
}

struct IterationReport {
  int iteration = 0;
  std::map<SubtaskId, double> caps;       // caps in force when synthesizing
  std::optional<SynthesisResult> synthesis;  // empty when infeasible
  std::map<SubtaskId, EmpiricalEstimate> estimates;  // final, for on-path subtasks
  std::map<SubtaskId, EmpiricalEstimate> pre_retrain_estimates;
  std::set<SubtaskId> underperformers;
  std::map<SubtaskId, double> caps_added;
  std::set<SubtaskId> trained;
  std::set<SubtaskId> retrained;
  std::set<SubtaskId> reused;
  std::optional<BoundCheckReport> composition_check;
  std::map<std::string, long> composition_outcomes;
};

struct NamedRollout {
  std::string name;
  RolloutRecord record;
};

struct PipelineResult {
  PipelineStatus status = PipelineStatus::IterationLimit;
  std::vector<IterationReport> reports;
  std::vector<NamedRollout> rollouts;
};

inline std::string iteration_tag(int iteration) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "iteration_%03d", iteration);
  return buf;
}

/// Synthesize, train or reuse, verify, retrain, cap and re-synthesize until
/// every subtask on the chosen path meets its specification; then check the
/// composition in high fidelity. Policies persist under
/// `<output_dir>/policies`. Progress lines go to `log` when given.
inline PipelineResult run_pipeline(const PipelineConfig& config, std::ostream* log = nullptr) {
  config.validate();
  const Hlm hlm = build_hlm(config.subtasks, config.task);
  PolicyStore store(std::filesystem::path(config.output_dir) / "policies");
  std::map<SubtaskId, PolicyHandle> policies;
  std::map<SubtaskId, EmpiricalEstimate> cache;
  std::map<SubtaskId, double> caps;
  PipelineResult result;
  auto note = [&](const std::string& line) {
    if (log) *log << line << '\n';
  };
  auto fp = [&](const SubtaskId& id) {
    return fingerprint(config.subtask(id), config.controller(id), config.environment.limits);
  };

  for (int it = 1; it <= config.max_outer_iterations; ++it) {
    IterationReport rep;
    rep.iteration = it;
    rep.caps = caps;
    try {
      rep.synthesis = synthesize({hlm, config.task.min_success_probability, caps});
    } catch (const Infeasible& e) {
      note("iteration " + std::to_string(it) + ": " + e.what());
      result.reports.push_back(std::move(rep));
      result.status = PipelineStatus::Infeasible;
      return result;
    }
    const SynthesisResult& syn = *rep.synthesis;
    std::string path_text;
    for (const auto& c : syn.path) path_text += (path_text.empty() ? "" : " -> ") + c;
    note("iteration " + std::to_string(it) + ": path " + (path_text.empty() ? "(empty)" : path_text));

    for (const auto& c : syn.path) {
      if (policies.count(c)) {
        rep.reused.insert(c);
      } else if (auto stored = store.load(c, fp(c))) {
        policies[c] = *stored;
        rep.reused.insert(c);
      } else {
        note("  training " + c);
        policies[c] = train_for_config(config, c, config.budget, train_seed(config, c));
        store.save(c, fp(c), policies[c]);
        rep.trained.insert(c);
      }
      if (!cache.count(c)) cache[c] = estimate_for_config(config, c, policies[c], config.fidelity_low);
      rep.estimates[c] = cache[c];
    }

    rep.underperformers = identify_underperformers(rep.estimates, syn.params, config.gate_on_lower_bound);
    for (const auto& c : rep.underperformers) {
      note("  retraining " + c);
      rep.pre_retrain_estimates[c] = rep.estimates[c];
      const PolicyHandle updated =
          train_for_config(config, c, config.retrain_budget, retrain_seed(config, c, it), policies[c]);
      if (!(updated == policies[c])) {
        policies[c] = updated;
        store.save(c, fp(c), updated);
        cache[c] = estimate_for_config(config, c, updated, config.fidelity_low);
      }
      rep.estimates[c] = cache[c];
      rep.retrained.insert(c);
      rep.reused.erase(c);
    }

    const auto failing = identify_underperformers(rep.estimates, syn.params, config.gate_on_lower_bound);
    if (!failing.empty()) {
      for (const auto& c : failing) {
        const double cap = std::min(caps.count(c) ? caps[c] : 1.0, rep.estimates[c].p_hat);
        caps[c] = cap;
        rep.caps_added[c] = cap;
        note("  cap " + c + " <= " + std::to_string(cap));
      }
      result.reports.push_back(std::move(rep));
      continue;
    }

    const auto batch = run_compositions(config, hlm, syn.meta_policy, policies, config.fidelity_high,
                                        config.n_composition_runs, compose_seed(config, it));
    rep.composition_check =
        check_bound(hlm, syn.meta_policy, syn.params, rep.estimates, batch.runs, batch.successes);
    rep.composition_outcomes = batch.outcomes;
    result.rollouts.push_back({iteration_tag(it) + "_composition", batch.first.rollout});
    note("  composition " + std::to_string(batch.successes) + "/" + std::to_string(batch.runs) + " vs bound " +
         std::to_string(rep.composition_check->bound));
    result.status = rep.composition_check->violation ? PipelineStatus::BoundViolation
                                                     : PipelineStatus::OverallSuccess;
    result.reports.push_back(std::move(rep));
    return result;
  }
  result.status = PipelineStatus::IterationLimit;
  return result;
}

}  // namespace mfcrl

#endif  // MFCRL_PIPELINE_HPP_
