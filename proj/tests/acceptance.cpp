// Acceptance runner: prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <chrono>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <sstream>

#include "support.hpp"

namespace {

using namespace mfcrl;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Outcome of one criterion: pass flag plus a one-line summary.
struct Verdict {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

fs::path source(const std::string& rel) { return fs::path(MFCRL_SOURCE_DIR) / rel; }

PipelineConfig shipped(const std::string& name, const fs::path& out) {
  auto c = load_config(source("configs/" + name).string());
  c.output_dir = out.string();
  return c;
}

void a1(Verdict& v) {
  const auto t0 = Clock::now();
  Rng rng(2024);
  int compared = 0;
  int infeasible = 0;
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto h = testing::random_hlm(rng);
    SynthesisProblem prob{h, 0.5 + 0.49 * uniform01(rng), {}};
    for (const auto& c : h.subtask_ids()) {
      if (uniform01(rng) < 0.5) prob.caps[c] = 0.8 + 0.2 * uniform01(rng);
    }
    std::optional<SynthesisResult> a;
    std::optional<SynthesisResult> b;
    std::string ea;
    std::string eb;
    try {
      a = synthesize(prob);
    } catch (const Error& e) {
      ea = typeid(e).name();
    }
    try {
      b = brute_force_synthesize(prob, 1e-3);
    } catch (const Error& e) {
      eb = typeid(e).name();
    }
    v.require(ea == eb, "instance " + std::to_string(t) + " outcome differs");
    if (!a || !b) {
      ++infeasible;
      continue;
    }
    ++compared;
    const double gap = std::abs(a->objective - b->objective);
    worst = std::max(worst, gap / static_cast<double>(std::max<std::size_t>(1, b->path.size())));
    v.require(gap <= static_cast<double>(b->path.size()) * 1e-3 + 1e-12, "instance " + std::to_string(t));
  }
  const double secs = seconds_since(t0);
  v.require(secs < 60.0, "runtime");
  v.require(compared >= 30, "too few feasible instances");
  v.detail << compared << " compared, " << infeasible << " without solution, worst gap/len " << worst << ", "
           << secs << " s";
}

void a2(Verdict& v) {
  const auto p = allocate_path_probs(3, 0.95, {});
  v.require(p.size() == 3 && std::abs(p[0] - p[1]) <= 1e-9 && std::abs(p[1] - p[2]) <= 1e-9, "equal split");
  v.require(std::abs(p[0] * p[1] * p[2] - 0.95) <= 1e-9, "product");
  v.require(std::abs(p[0] - 0.983048) <= 1e-6, "value");
  const auto q = allocate_path_probs(2, 0.90, {1.0, 0.92});
  v.require(std::abs(q[0] - 0.90 / 0.92) <= 1e-9 && std::abs(q[1] - 0.92) <= 1e-9, "capped case");
  v.detail << "p = " << format_number(p[0]) << " x3, capped (" << format_number(q[0]) << ", " << format_number(q[1])
           << ")";
}

void a3(Verdict& v) {
  const auto t0 = Clock::now();
  const auto c = shipped("straight.json", testing::fresh_dir("a3"));
  const TrainBudget budget{200000, 5000, 0};
  const auto p = train_for_config(c, "c0", budget, train_seed(c, "c0"));
  const auto e = estimate_for_config(c, "c0", p, c.fidelity_low);
  const double secs = seconds_since(t0);
  v.require(e.trials == 100, "trials");
  v.require(e.p_hat >= 0.95, "p_hat");
  v.require(secs < 600.0, "runtime");
  v.detail << "p_hat " << format_number(e.p_hat) << " over " << e.trials << " rollouts, " << secs << " s";
}

void a4(Verdict& v) {
  auto c = testing::scripted_config(testing::chain_subtasks(), testing::chain_task(0.8), testing::chain_env(),
                                    testing::fresh_dir("a4").string());
  for (auto& [id, ctl] : c.controllers) ctl.fault_rate = 0.05;
  c.n_composition_runs = 1000;
  const auto r = run_pipeline(c);
  v.require(r.status == PipelineStatus::OverallSuccess, "status");
  const auto& rep = r.reports.back();
  v.require(rep.composition_check.has_value(), "no composition check");
  if (!rep.composition_check) return;
  const auto& ok = *rep.composition_check;
  v.require(ok.runs == 1000 && !ok.violation, "bound violated with healthy controllers");

  // Degrade one controller after verification and run the same check.
  const Hlm hlm = build_hlm(c.subtasks, c.task);
  const auto& syn = *rep.synthesis;
  std::map<SubtaskId, PolicyHandle> policies;
  for (const auto& id : syn.path) policies[id] = fresh_policy(c, id);
  policies["c1"].fault_rate = 0.5;
  const auto batch = run_compositions(c, hlm, syn.meta_policy, policies, c.fidelity_high, 1000, 99);
  const auto bad = check_bound(hlm, syn.meta_policy, syn.params, rep.estimates, batch.runs, batch.successes);
  v.require(bad.violation, "degraded controller not flagged");
  v.detail << "healthy " << ok.successes << "/1000 vs bound " << format_number(ok.bound) << "; degraded "
           << bad.successes << "/1000 flagged";
}

void a5(Verdict& v) {
  const auto dir = testing::fresh_dir("a5");
  const auto open = run_pipeline(shipped("diamond_open.json", dir));
  v.require(open.status == PipelineStatus::OverallSuccess, "open scenario");
  const auto before = testing::snapshot_tree(dir / "policies");
  const auto blocked = run_pipeline(shipped("diamond_blocked.json", dir));
  v.require(blocked.status == PipelineStatus::OverallSuccess, "blocked scenario status");
  v.require(blocked.reports.size() <= 3, "iterations");
  v.require(!blocked.reports.empty(), "no reports");
  if (blocked.reports.empty()) return;
  const auto& first = blocked.reports.front();
  v.require(first.caps_added.size() == 1 && first.caps_added.count("c0") && first.caps_added.at("c0") <= 0.05,
            "caps_added");
  const auto& last = blocked.reports.back();
  v.require(last.synthesis && last.synthesis->path == SubtaskPath{"c2", "c3"}, "alternate route");
  std::set<SubtaskId> reused;
  for (const auto& r : blocked.reports) reused.insert(r.reused.begin(), r.reused.end());
  const auto after = testing::snapshot_tree(dir / "policies");
  for (const auto& id : reused) {
    const auto f = id + ".pol";
    v.require(before.count(f) && after.count(f) && before.at(f) == after.at(f), "policy bytes of " + id);
  }
  v.detail << "caps_added {c0: " << (first.caps_added.count("c0") ? format_number(first.caps_added.at("c0")) : "-")
           << "}, final path c2 c3, " << reused.size() << " reused, " << blocked.reports.size() << " iterations";
}

void a6(Verdict& v) {
  std::map<SubtaskId, EmpiricalEstimate> est;
  const std::vector<double> p_hat{1.00, 0.98, 1.00, 1.00, 0.90, 0.97};
  const std::vector<double> spec{1.00, 0.98, 1.00, 1.00, 0.95, 0.97};
  ParamVector p;
  for (std::size_t i = 0; i < p_hat.size(); ++i) {
    const SubtaskId c = "c" + std::to_string(i);
    const long k = std::lround(p_hat[i] * 100);
    est[c] = {c, k, 100, p_hat[i], lower_confidence_bound(k, 100, 0.05), 0.05};
    p.values[c] = spec[i];
  }
  const auto u = identify_underperformers(est, p, false);
  v.require(u == std::set<SubtaskId>{"c4"}, "set");
  v.detail << "underperformers {";
  for (const auto& c : u) v.detail << c;
  v.detail << "}";
}

void a7(Verdict& v) {
  FidelityConfig hi = FidelityConfig::high();
  hi.policy_period = hi.dt_physics;
  hi.actuation_latency = 0.0;
  hi.position_noise_sigma = hi.heading_noise_sigma = hi.velocity_noise_sigma = 0.0;
  hi.actuator_time_constant = 0.0;
  hi.seed = 12345;
  const FidelityConfig lo = FidelityConfig::low();
  const auto sub = testing::straight_subtask();
  auto env = testing::straight_env();
  env.obstacles.emplace_back(Circle{5.0, 2.5, 1.0});
  int identical = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(derive_seed(777, seed));
    auto tile = make_tile_q_policy(env.limits);
    for (std::size_t i = TileLayout::kHeaderSize; i < tile.parameters.size(); ++i) {
      tile.parameters[i] = uniform01(rng) - 0.5;
    }
    const PolicyHandle policy = seed % 2 ? tile : make_goto_pose_policy(env.limits);
    const auto start = sample_entry_state(sub, rng);
    PolicyAgent a(policy, seed);
    PolicyAgent b(policy, seed);
    const auto x = simulate_event_driven(a, sub, start, env, hi, seed);
    const auto y = simulate_synchronous(b, sub, start, env, lo);
    identical += x == y ? 1 : 0;
  }
  v.require(identical == 50, "mismatch");
  v.detail << identical << "/50 rollouts bit-identical";
}

void a8(Verdict& v) {
  const double b = lower_confidence_bound(100, 100, 0.05);
  v.require(std::abs(b - std::pow(0.05, 0.01)) <= 1e-9, "closed form");
  for (long n = 1; n <= 200; ++n) {
    for (long k = 1; k <= n; ++k) {
      if (!(lower_confidence_bound(k, n, 0.05) > lower_confidence_bound(k - 1, n, 0.05))) {
        v.require(false, "monotone at " + std::to_string(k) + "/" + std::to_string(n));
      }
    }
  }
  v.detail << "LCB(100,100) = " << format_number(b) << ", monotone for n <= 200";
}

std::map<std::string, std::uint64_t> artefact_hashes(const fs::path& dir) {
  std::map<std::string, std::uint64_t> out;
  for (const auto& [rel, bytes] : testing::snapshot_tree(dir)) {
    if (rel.rfind("reports/", 0) == 0 || rel.rfind("trajectories/", 0) == 0) out[rel] = fnv1a(bytes);
  }
  return out;
}

void a9(Verdict& v) {
  std::map<std::string, std::uint64_t> hashes[2];
  for (int i = 0; i < 2; ++i) {
    const auto dir = testing::fresh_dir("a9_" + std::to_string(i));
    const std::string cmd = std::string("\"") + MFCRL_CLI_PATH + "\" run --config \"" +
                            source("configs/chain.json").string() + "\" --out \"" + dir.string() + "\" > \"" +
                            (dir / "log.txt").string() + "\" 2>&1";
    const int rc = std::system(cmd.c_str());
    v.require(rc == 0, "cli exit status of run " + std::to_string(i));
    hashes[i] = artefact_hashes(dir);
  }
  v.require(!hashes[0].empty(), "no artefacts");
  v.require(hashes[0] == hashes[1], "hashes differ");
  v.detail << hashes[0].size() << " report and trajectory files hash-identical";
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<void(Verdict&)>>> criteria{
      {"A1", a1}, {"A2", a2}, {"A3", a3}, {"A4", a4}, {"A5", a5},
      {"A6", a6}, {"A7", a7}, {"A8", a8}, {"A9", a9}};
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      check(v);
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    failures += v.pass ? 0 : 1;
    std::cout << name << ' ' << (v.pass ? "PASS" : "FAIL") << ": " << v.detail.str() << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
