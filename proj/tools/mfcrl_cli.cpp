// Command-line front end for the pipeline.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mfcrl/mfcrl.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitInfeasible = 2;
constexpr int kExitConfig = 4;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string fidelity;
  std::optional<std::string> out;
  std::string subtask;
};

mfcrl::PipelineConfig load(const Options& o) {
  auto c = mfcrl::load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.output_dir = *o.out;
  c.validate();
  return c;
}

const mfcrl::FidelityConfig& fidelity(const mfcrl::PipelineConfig& c, const std::string& name) {
  return name == "high" ? c.fidelity_high : c.fidelity_low;
}

void require_subtask(const mfcrl::PipelineConfig& c, const std::string& id) {
  for (const auto& s : c.subtasks) {
    if (s.id == id) return;
  }
  throw mfcrl::ConfigError("unknown subtask '" + id + "'");
}

std::string num(double v) { return mfcrl::format_number(v); }

void print_estimate(const mfcrl::EmpiricalEstimate& e, const std::string& fidelity_name) {
  std::cout << "subtask " << e.subtask_id << " fidelity " << fidelity_name << " successes " << e.successes
            << " trials " << e.trials << " p_hat " << num(e.p_hat) << " lower_bound " << num(e.lower_bound)
            << " alpha " << num(e.alpha) << '\n';
}

int cmd_validate(const Options& o) {
  const auto c = load(o);
  const auto hlm = mfcrl::build_hlm(c.subtasks, c.task);
  std::cout << "config ok: " << c.subtasks.size() << " subtasks, composable, compatible\n";
  std::cout << "high-level states:";
  for (const auto& s : hlm.states) std::cout << ' ' << s;
  std::cout << "\ninitial " << hlm.initial << " goal " << hlm.goal << " fail " << hlm.fail << '\n';
  for (const auto& [s, cs] : hlm.available) {
    for (const auto& id : cs) std::cout << "  " << s << " --" << id << "--> " << hlm.successor.at(id) << '\n';
  }
  return kExitOk;
}

int cmd_synthesize(const Options& o) {
  const auto c = load(o);
  const auto hlm = mfcrl::build_hlm(c.subtasks, c.task);
  const auto r = mfcrl::synthesize({hlm, c.task.min_success_probability, {}});
  std::cout << "path:";
  for (const auto& id : r.path) std::cout << ' ' << id;
  std::cout << "\nmeta-policy:\n";
  for (const auto& [s, id] : r.meta_policy.choice) std::cout << "  " << s << " -> " << id << '\n';
  std::cout << "subtask p_c\n";
  for (const auto& [id, p] : r.params.values) std::cout << id << ' ' << num(p) << '\n';
  std::cout << "achieved_bound " << num(r.achieved_bound) << " objective " << num(r.objective) << '\n';
  return kExitOk;
}

int cmd_train(const Options& o) {
  const auto c = load(o);
  require_subtask(c, o.subtask);
  mfcrl::PolicyStore store(std::filesystem::path(c.output_dir) / "policies");
  const auto p = mfcrl::train_for_config(c, o.subtask, c.budget, mfcrl::train_seed(c, o.subtask));
  store.save(o.subtask, mfcrl::fingerprint(c.subtask(o.subtask), c.controller(o.subtask), c.environment.limits),
             p);
  std::cout << "saved " << store.file(o.subtask).string() << '\n';
  print_estimate(mfcrl::estimate_for_config(c, o.subtask, p, fidelity(c, o.fidelity)), o.fidelity);
  return kExitOk;
}

int cmd_verify(const Options& o) {
  const auto c = load(o);
  require_subtask(c, o.subtask);
  mfcrl::PolicyStore store(std::filesystem::path(c.output_dir) / "policies");
  const auto p =
      store.load(o.subtask, mfcrl::fingerprint(c.subtask(o.subtask), c.controller(o.subtask), c.environment.limits));
  if (!p) {
    std::cerr << "no stored policy for '" << o.subtask << "' matching the current config; run 'train' first\n";
    return kExitRuntime;
  }
  print_estimate(mfcrl::estimate_for_config(c, o.subtask, *p, fidelity(c, o.fidelity)), o.fidelity);
  return kExitOk;
}

int cmd_run(const Options& o) {
  const auto c = load(o);
  const auto r = mfcrl::run_pipeline(c, &std::cout);
  const auto files = mfcrl::export_results(r.reports, r.rollouts, mfcrl::scene_of(c), mfcrl::to_string(r.status),
                                           c.output_dir);
  for (const auto& f : files) std::cout << "wrote " << (std::filesystem::path(c.output_dir) / f).string() << '\n';
  std::cout << "status " << mfcrl::to_string(r.status) << '\n';
  return mfcrl::exit_code(r.status);
}

int cmd_compose(const Options& o) {
  const auto c = load(o);
  const auto hlm = mfcrl::build_hlm(c.subtasks, c.task);
  const auto syn = mfcrl::synthesize({hlm, c.task.min_success_probability, {}});
  mfcrl::PolicyStore store(std::filesystem::path(c.output_dir) / "policies");
  std::map<mfcrl::SubtaskId, mfcrl::PolicyHandle> policies;
  for (const auto& id : syn.path) {
    const auto fp = mfcrl::fingerprint(c.subtask(id), c.controller(id), c.environment.limits);
    if (auto p = store.load(id, fp)) {
      policies[id] = *p;
    } else {
      std::cout << "training " << id << '\n';
      policies[id] = mfcrl::train_for_config(c, id, c.budget, mfcrl::train_seed(c, id));
      store.save(id, fp, policies[id]);
    }
  }
  const auto r = mfcrl::execute_composition(hlm, syn.meta_policy, policies, c.subtask_map(), c.task, c.environment,
                                            fidelity(c, o.fidelity), mfcrl::compose_seed(c, 0));
  std::cout << "outcome " << mfcrl::to_string(r.outcome) << "\ntrace:";
  for (const auto& [s, id] : r.high_level_trace) std::cout << " (" << s << ", " << id << ')';
  std::cout << '\n';
  const std::filesystem::path root(c.output_dir);
  const std::vector<mfcrl::NamedRollout> rollouts{{"compose", r.rollout}};
  mfcrl::write_text_file(root / "trajectories" / "compose.csv", mfcrl::trajectory_csv(r.rollout));
  mfcrl::write_text_file(root / "plots" / "compose.svg", mfcrl::render_svg(mfcrl::scene_of(c), rollouts));
  std::cout << "wrote " << (root / "trajectories" / "compose.csv").string() << "\nwrote "
            << (root / "plots" / "compose.svg").string() << '\n';
  return kExitOk;
}

int cmd_plot(const Options& o) {
  const auto c = load(o);
  std::cout << "wrote " << mfcrl::replot(mfcrl::scene_of(c), c.output_dir) << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compositional RL verification pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  o.fidelity = "low";
  app.add_option("--config", o.config, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "Override the config seed");
  app.add_option("--fidelity", o.fidelity, "Simulator fidelity for train/verify/compose")
      ->check(CLI::IsMember({"low", "high"}));
  app.add_option("--out", o.out, "Override the output directory");

  auto* validate = app.add_subcommand("validate", "Check the config, composability and compatibility");
  auto* synth = app.add_subcommand("synthesize", "Print the meta-policy and p_c table");
  auto* train = app.add_subcommand("train", "Train one subtask policy");
  train->add_option("subtask", o.subtask, "Subtask id")->required();
  auto* verify = app.add_subcommand("verify", "Estimate one subtask's success probability");
  verify->add_option("subtask", o.subtask, "Subtask id")->required();
  auto* run = app.add_subcommand("run", "Run the full pipeline");
  auto* compose = app.add_subcommand("compose", "Execute the composition once and export its trajectory");
  auto* plot = app.add_subcommand("plot", "Re-render the SVG overlay from trajectory CSVs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*validate) return cmd_validate(o);
    if (*synth) return cmd_synthesize(o);
    if (*train) return cmd_train(o);
    if (*verify) return cmd_verify(o);
    if (*run) return cmd_run(o);
    if (*compose) return cmd_compose(o);
    if (*plot) return cmd_plot(o);
  } catch (const mfcrl::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return kExitConfig;
  } catch (const mfcrl::Infeasible& e) {
    std::cerr << e.what() << '\n';
    return kExitInfeasible;
  } catch (const mfcrl::Error& e) {
    std::cerr << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}
