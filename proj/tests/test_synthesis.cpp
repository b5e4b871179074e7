#include <numeric>

#include <gtest/gtest.h>

#include "support.hpp"

namespace mfcrl {
namespace {

double product(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 1.0, std::multiplies<>()); }

Hlm chain_hlm() { return build_hlm(testing::chain_subtasks(), testing::chain_task()); }
Hlm diamond_hlm() { return build_hlm(testing::diamond_subtasks(), testing::diamond_task()); }

// ---------------------------------------------------------------------------
// Path enumeration.

TEST(EnumeratePaths, SingleSubtask) {
  const auto target = testing::region(10, 0, 1, 0, 0.4);
  const auto h = build_hlm({{"c0", testing::region(0, 0, 3, 0, 0.5), target, 30}}, {{0, 0, 0}, target, 0.9});
  EXPECT_EQ(enumerate_paths(h), (std::vector<SubtaskPath>{{"c0"}}));
}

TEST(EnumeratePaths, Diamond) {
  EXPECT_EQ(enumerate_paths(diamond_hlm()), (std::vector<SubtaskPath>{{"c0", "c1"}, {"c2", "c3"}}));
}

TEST(EnumeratePaths, NoPath) {
  Hlm h;
  h.states = {"a", "b", "fail", "goal"};
  h.initial = "a";
  h.goal = "goal";
  h.fail = "fail";
  h.available = {{"a", {"x"}}, {"b", {"y"}}};
  h.successor = {{"x", "b"}, {"y", "a"}};
  EXPECT_THROW(enumerate_paths(h), NoPath);
}

// ---------------------------------------------------------------------------
// Allocation.

TEST(Allocate, EqualSplitWithoutCaps) {
  const auto p = allocate_path_probs(3, 0.95, {});
  ASSERT_EQ(p.size(), 3u);
  EXPECT_NEAR(p[0], 0.983048, 1e-6);
  EXPECT_NEAR(p[0], p[1], 1e-9);
  EXPECT_NEAR(p[1], p[2], 1e-9);
  EXPECT_NEAR(product(p), 0.95, 1e-9);
}

TEST(Allocate, OneCapBinds) {
  const auto p = allocate_path_probs(2, 0.90, {1.0, 0.92});
  EXPECT_NEAR(p[0], 0.90 / 0.92, 1e-9);
  EXPECT_NEAR(p[1], 0.92, 1e-9);
}

TEST(Allocate, InfeasibleCaps) { EXPECT_THROW(allocate_path_probs(2, 0.90, {0.5, 0.5}), Infeasible); }

TEST(Allocate, ProductAndCapBoundsOnRandomInstances) {
  Rng rng(5);
  int feasible = 0;
  for (int t = 0; t < 2000; ++t) {
    const std::size_t n = 1 + rng() % 8;
    const double target = 0.3 + 0.7 * uniform01(rng);
    std::vector<double> caps(n);
    for (auto& c : caps) c = uniform01(rng) < 0.5 ? 1.0 : 0.8 + 0.2 * uniform01(rng);
    if (product(caps) < target) {
      EXPECT_THROW(allocate_path_probs(n, target, caps), Infeasible);
      continue;
    }
    ++feasible;
    const auto p = allocate_path_probs(n, target, caps);
    EXPECT_GE(product(p), target - 1e-12);
    EXPECT_LE(product(p), target + 1e-9);
    for (std::size_t i = 0; i < n; ++i) EXPECT_LE(p[i], caps[i] + 1e-12);
  }
  EXPECT_GT(feasible, 500);
}

// ---------------------------------------------------------------------------
// Synthesis.

TEST(Synthesize, TwoSubtaskPath) {
  const auto r = synthesize({chain_hlm(), 0.95, {}});
  EXPECT_EQ(r.path, (SubtaskPath{"c0", "c1"}));
  EXPECT_NEAR(r.params.at("c0"), 0.974679, 1e-6);
  EXPECT_NEAR(r.params.at("c1"), 0.974679, 1e-6);
  EXPECT_NEAR(r.objective, 1.949359, 1e-6);
  EXPECT_GE(r.achieved_bound, 0.95 - 1e-9);
}

TEST(Synthesize, CappedRouteSwitches) {
  const auto h = diamond_hlm();
  EXPECT_EQ(synthesize({h, 0.95, {{"c3", 0.0}}}).path, (SubtaskPath{"c0", "c1"}));
  const auto r = synthesize({h, 0.95, {{"c0", 0.0}}});
  EXPECT_EQ(r.path, (SubtaskPath{"c2", "c3"}));
  EXPECT_EQ(r.params.at("c0"), 0.0);
  EXPECT_EQ(r.params.at("c1"), 0.0);
  EXPECT_EQ(r.meta_policy.choice.at(h.initial), "c2");
}

TEST(Synthesize, ZeroTargetPicksShortestPath) {
  // A direct subtask beside a two-step route: with a vacuous target all
  // objectives are 0 and the shorter path wins.
  auto s = testing::chain_subtasks();
  s.push_back({"d", testing::region(0, 0, 3, 0, 0.5), testing::region(20, 0, 1, 0, 0.4), 30});
  const auto h = build_hlm(s, testing::chain_task(0.0));
  const auto r = synthesize({h, 0.0, {}});
  EXPECT_EQ(r.path, SubtaskPath{"d"});
  for (const auto& [c, v] : r.params.values) EXPECT_EQ(v, 0.0);
}

TEST(Synthesize, InfeasibleUnderCaps) {
  EXPECT_THROW(synthesize({diamond_hlm(), 0.95, {{"c0", 0.0}, {"c2", 0.5}}}), Infeasible);
}

TEST(Synthesize, CapsTightenObjective) {
  Rng rng(8);
  for (int t = 0; t < 200; ++t) {
    const auto h = testing::random_hlm(rng);
    SynthesisProblem prob{h, 0.5 + 0.45 * uniform01(rng), {}};
    for (const auto& c : h.subtask_ids()) {
      if (uniform01(rng) < 0.3) prob.caps[c] = 0.85 + 0.15 * uniform01(rng);
    }
    double before = 0;
    try {
      before = synthesize(prob).objective;
    } catch (const NoPath&) {
      continue;
    } catch (const Infeasible&) {
      continue;
    }
    auto tighter = prob;
    const auto ids = h.subtask_ids();
    const auto& c = ids[rng() % ids.size()];
    tighter.caps[c] = tighter.cap(c) * uniform01(rng);
    try {
      EXPECT_GE(synthesize(tighter).objective, before - 1e-12);
    } catch (const Infeasible&) {
    }
  }
}

TEST(Synthesize, BoundMeetsTarget) {
  Rng rng(13);
  for (int t = 0; t < 300; ++t) {
    const auto h = testing::random_hlm(rng);
    SynthesisProblem prob{h, uniform01(rng), {}};
    for (const auto& c : h.subtask_ids()) prob.caps[c] = 0.7 + 0.3 * uniform01(rng);
    try {
      const auto r = synthesize(prob);
      EXPECT_GE(reach_probability(h, r.meta_policy, r.params), prob.min_success_probability - 1e-9);
      for (const auto& [c, v] : r.params.values) {
        EXPECT_LE(v, prob.cap(c) + 1e-12);
        if (std::find(r.path.begin(), r.path.end(), c) == r.path.end()) {
          EXPECT_EQ(v, 0.0);
        }
      }
    } catch (const NoPath&) {
    } catch (const Infeasible&) {
    }
  }
}

// ---------------------------------------------------------------------------
// Brute-force oracle.

TEST(BruteForce, TwoSubtaskPath) {
  const auto exact = synthesize({chain_hlm(), 0.95, {}});
  const auto grid = brute_force_synthesize({chain_hlm(), 0.95, {}}, 1e-3);
  EXPECT_NEAR(grid.objective, exact.objective, 2 * 1e-3);
}

TEST(BruteForce, SingleSubtaskOnGrid) {
  const auto target = testing::region(10, 0, 1, 0, 0.4);
  const auto h = build_hlm({{"c0", testing::region(0, 0, 3, 0, 0.5), target, 30}}, {{0, 0, 0}, target, 0.95});
  EXPECT_NEAR(brute_force_synthesize({h, 0.95, {}}, 1e-2).params.at("c0"), 0.95, 1e-12);
}

TEST(BruteForce, InfeasibleAgrees) {
  const SynthesisProblem p{diamond_hlm(), 0.95, {{"c0", 0.0}, {"c2", 0.5}}};
  EXPECT_THROW(brute_force_synthesize(p, 1e-2), Infeasible);
  EXPECT_THROW(synthesize(p), Infeasible);
}

TEST(BruteForce, MatchesSynthesizeOnRandomHlms) {
  Rng rng(34);
  int compared = 0;
  for (int t = 0; t < 40; ++t) {
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
    ASSERT_EQ(ea, eb);
    if (!a) continue;
    ++compared;
    EXPECT_NEAR(a->objective, b->objective, static_cast<double>(b->path.size()) * 1e-3 + 1e-12);
    EXPECT_GE(b->achieved_bound, prob.min_success_probability - 1e-9);
  }
  EXPECT_GT(compared, 10);
}

}  // namespace
}  // namespace mfcrl
