#ifndef MFCRL_TESTS_SUPPORT_HPP_
#define MFCRL_TESTS_SUPPORT_HPP_

// Builders and independent oracles shared by the unit and acceptance tests.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mfcrl/mfcrl.hpp"

namespace mfcrl::testing {

inline PoseRegion region(double x, double y, double r, double heading, double tol) {
  return {x, y, r, heading, tol};
}

// ---------------------------------------------------------------------------
// Scenarios.

/// Straight-ahead subtask: entry 10 m behind the exit, headings aligned.
inline Subtask straight_subtask(const std::string& id = "c0") {
  return {id, region(0, 0, 3, 0, 0.5), region(10, 0, 1, 0, 0.4), 30};
}

inline EnvironmentMap straight_env() {
  EnvironmentMap env;
  env.bounds = {-10, -10, 25, 10};
  return env;
}

/// Two chained subtasks: (0,0) -> (10,0) -> (20,0).
inline std::vector<Subtask> chain_subtasks() {
  return {{"c0", region(0, 0, 3, 0, 0.5), region(10, 0, 1, 0, 0.4), 30},
          {"c1", region(10, 0, 3, 0, 0.5), region(20, 0, 1, 0, 0.4), 30}};
}

inline TaskSpec chain_task(double p = 0.95) { return {{0, 0, 0}, region(20, 0, 1, 0, 0.4), p}; }

inline EnvironmentMap chain_env() {
  EnvironmentMap env;
  env.bounds = {-10, -10, 30, 10};
  return env;
}

/// Two routes from (0,0) to (20,0): c0 c1 via (10,6), c2 c3 via (10,-6).
inline std::vector<Subtask> diamond_subtasks() {
  const auto start = region(0, 0, 3, 0, 0.5);
  const auto target = region(20, 0, 1, 0, 0.4);
  return {{"c0", start, region(10, 6, 1, 0, 0.4), 30},
          {"c1", region(10, 6, 3, 0, 0.5), target, 30},
          {"c2", start, region(10, -6, 1, 0, 0.4), 30},
          {"c3", region(10, -6, 3, 0, 0.5), target, 30}};
}

inline TaskSpec diamond_task(double p = 0.95) { return {{0, 0, 0}, region(20, 0, 1, 0, 0.4), p}; }

inline EnvironmentMap diamond_env(bool blocked) {
  EnvironmentMap env;
  env.bounds = {-10, -15, 30, 15};
  if (blocked) env.obstacles.emplace_back(Rect{4.5, 1.5, 5.5, 15});
  return env;
}

/// Pipeline config over scripted go-to-pose controllers.
inline PipelineConfig scripted_config(std::vector<Subtask> subtasks, TaskSpec task, EnvironmentMap env,
                                      const std::string& out_dir) {
  PipelineConfig c;
  c.task = task;
  c.subtasks = std::move(subtasks);
  for (const auto& s : c.subtasks) c.controllers[s.id] = {std::string(learner_kind::kGotoPose), 0.0};
  c.environment = std::move(env);
  c.n_composition_runs = 100;
  c.output_dir = out_dir;
  c.seed = 5;
  return c;
}

// ---------------------------------------------------------------------------
// Random HLMs built directly from the graph description.

struct RandomHlmOptions {
  int max_inner_states = 6;  // plus goal and fail
  int max_subtasks = 10;
};

inline Hlm random_hlm(Rng& rng, const RandomHlmOptions& o = {}) {
  auto below = [&](int n) { return static_cast<int>(rng() % static_cast<std::uint64_t>(n)); };
  const int inner = 1 + below(o.max_inner_states);
  const int m = 1 + below(o.max_subtasks);
  Hlm h;
  h.goal = "goal";
  h.fail = "fail";
  std::vector<StateId> inner_ids;
  for (int i = 0; i < inner; ++i) inner_ids.push_back("s" + std::to_string(i));
  h.initial = inner_ids[0];
  h.states = inner_ids;
  h.states.push_back(h.goal);
  h.states.push_back(h.fail);
  std::sort(h.states.begin(), h.states.end());
  for (int j = 0; j < m; ++j) {
    const SubtaskId c = "c" + std::to_string(j);
    std::set<int> sources{below(inner)};
    if (below(3) == 0) sources.insert(below(inner));
    for (int s : sources) h.available[inner_ids[static_cast<std::size_t>(s)]].push_back(c);
    const int to = below(inner + 1);
    h.successor[c] = to == inner ? h.goal : inner_ids[static_cast<std::size_t>(to)];
  }
  for (auto& [s, cs] : h.available) std::sort(cs.begin(), cs.end());
  h.validate();
  return h;
}

inline MetaPolicy random_meta_policy(const Hlm& h, Rng& rng) {
  MetaPolicy mu;
  for (const auto& [s, cs] : h.available) {
    if (!cs.empty()) mu.choice[s] = cs[rng() % cs.size()];
  }
  return mu;
}

inline ParamVector random_params(const Hlm& h, Rng& rng) {
  ParamVector p;
  for (const auto& c : h.subtask_ids()) p.values[c] = uniform01(rng);
  return p;
}

/// Oracle: product of p_c along the unique trajectory of a deterministic
/// meta-policy; 0 if it never reaches the goal.
inline double path_product(const Hlm& h, const MetaPolicy& mu, const ParamVector& p) {
  std::set<StateId> seen;
  double prod = 1.0;
  for (StateId s = h.initial; s != h.goal;) {
    if (!seen.insert(s).second || !mu.choice.count(s)) return 0.0;
    const SubtaskId& c = mu.choice.at(s);
    prod *= p.values.at(c);
    s = h.successor.at(c);
  }
  return prod;
}

// ---------------------------------------------------------------------------
// Statistics oracles.

/// P(X >= k) for X ~ Binomial(n, p), summed in log space.
inline double binomial_upper_tail(long k, long n, double p) {
  if (k <= 0) return 1.0;
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  double total = 0.0;
  for (long i = k; i <= n; ++i) {
    const double lc = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0);
    total += std::exp(lc + i * std::log(p) + (n - i) * std::log1p(-p));
  }
  return total;
}

/// Clopper-Pearson lower bound by bisection: the p with P(X >= k | p) = alpha.
inline double clopper_pearson_lower_bisection(long k, long n, double alpha) {
  if (k == 0) return 0.0;
  double lo = 0.0;
  double hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (binomial_upper_tail(k, n, mid) < alpha ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Files.

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

/// Relative path -> contents for every regular file under `root`.
inline std::map<std::string, std::string> snapshot_tree(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  if (!std::filesystem::exists(root)) return out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[std::filesystem::relative(e.path(), root).generic_string()] = read_file(e.path());
  }
  return out;
}

inline std::filesystem::path fresh_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("mfcrl_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace mfcrl::testing

#endif  // MFCRL_TESTS_SUPPORT_HPP_
