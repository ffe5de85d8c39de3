#include "support.hpp"

#include <gtest/gtest.h>

using namespace predictable;
using testing_support::load_world;

namespace {

// s0 -a-> s1 -a-> goal; b loops on s0/s1. One reward per step.
TabularMDP chain(double discount, double step_reward = -1.0) {
    TabularMDP mdp({"s0", "s1", "goal"}, {"a", "b"}, discount, {2});
    mdp.set_outcomes(0, 0, {{1, 1.0, step_reward}});
    mdp.set_outcomes(0, 1, {{0, 1.0, step_reward}});
    mdp.set_outcomes(1, 0, {{2, 1.0, step_reward}});
    mdp.set_outcomes(1, 1, {{1, 1.0, step_reward}});
    return mdp;
}

} // namespace

TEST(TabularMdp, RejectsBadConstruction) {
    EXPECT_THROW(TabularMDP({}, {"a"}, 0.9, {}), Error);
    EXPECT_THROW(TabularMDP({"s"}, {"a"}, 0.0, {}), Error);
    EXPECT_THROW(TabularMDP({"s"}, {"a"}, 1.5, {}), Error);
    EXPECT_THROW(TabularMDP({"s"}, {"a"}, 1.0, {}), Error); // no terminal
    EXPECT_THROW(TabularMDP({"s"}, {"a"}, 1.0, {3}), Error);
}

TEST(TabularMdp, TerminalsAreZeroRewardSelfLoops) {
    TabularMDP mdp = chain(1.0);
    ASSERT_EQ(mdp.outcomes(2, 1).size(), 1u);
    EXPECT_EQ(mdp.outcomes(2, 1)[0].next, 2u);
    EXPECT_EQ(mdp.outcomes(2, 1)[0].reward, 0.0);
    EXPECT_THROW(mdp.set_outcomes(2, 0, {{0, 1.0, 0.0}}), Error);
    EXPECT_NO_THROW(mdp.validate());
}

TEST(TabularMdp, ValidateCatchesBadDistributions) {
    TabularMDP mdp = chain(1.0);
    mdp.set_outcomes(0, 0, {{1, 0.5, -1.0}, {0, 0.4, -1.0}});
    EXPECT_THROW(mdp.validate(), Error);
    EXPECT_THROW(mdp.set_outcomes(0, 0, {{7, 1.0, 0.0}}), Error);
    EXPECT_THROW(mdp.set_outcomes(0, 0, {{1, -0.1, 0.0}}), Error);
}

TEST(TabularMdp, ExpectedRewardAndProbability) {
    TabularMDP mdp = chain(0.9);
    mdp.set_outcomes(0, 0, {{1, 0.25, 4.0}, {0, 0.75, 0.0}, {2, 0.0, 9.0}});
    EXPECT_DOUBLE_EQ(mdp.expected_reward(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(mdp.probability(0, 0, 1), 0.25);
    EXPECT_EQ(mdp.outcomes(0, 0).size(), 2u); // zero-probability outcome dropped
    EXPECT_DOUBLE_EQ(mdp.reward(0, 0, 1), 4.0);
}

TEST(TabularMdp, WithRewardsKeepsDynamics) {
    const TabularMDP mdp = chain(1.0);
    const TabularMDP other = mdp.with_rewards([](StateId s, ActionId, StateId) { return -static_cast<double>(s) - 2; }, 0.5);
    EXPECT_EQ(other.discount(), 0.5);
    EXPECT_EQ(other.terminals(), mdp.terminals());
    EXPECT_DOUBLE_EQ(other.reward(1, 0, 2), -3.0);
    EXPECT_DOUBLE_EQ(other.probability(1, 0, 2), 1.0);
    EXPECT_EQ(other.reward(2, 0, 2), 0.0);
}

TEST(Policy, BaselinesFromActionSets) {
    const ActionSets psi{{0, 2}, {1}, {0, 1, 2, 3}};
    const auto uniform = stochastic_baseline(psi, 4);
    EXPECT_DOUBLE_EQ(uniform.prob(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(uniform.prob(0, 1), 0.0);
    EXPECT_DOUBLE_EQ(uniform.prob(2, 3), 0.25);
    EXPECT_NO_THROW(uniform.validate());

    const auto biased = biased_baseline(psi, {3, 2, 1, 0}, 4);
    EXPECT_TRUE(biased.is_deterministic());
    EXPECT_EQ(biased.support(0), std::vector<ActionId>{2});
    EXPECT_EQ(biased.support(1), std::vector<ActionId>{1});
    EXPECT_EQ(biased.support(2), std::vector<ActionId>{3});

    EXPECT_THROW(stochastic_baseline({{0}, {}}, 2), Error);
    EXPECT_THROW(biased_baseline(psi, {0, 1, 2}, 4), Error);
    EXPECT_THROW(biased_baseline(psi, {0, 1, 1, 2}, 4), Error);
}

TEST(ValueIteration, CorridorValues) {
    const auto world = load_world("corridor.grid");
    const auto vf = value_iteration(world.mdp);
    // 0.96 for the last move (+1 - 0.04), then 0.04 less per extra step.
    EXPECT_NEAR(vf.values[world.state_at({1, 1}).value()], 0.88, 1e-12);
    EXPECT_NEAR(vf.values[world.state_at({2, 1}).value()], 0.92, 1e-12);
    EXPECT_NEAR(vf.values[world.state_at({3, 1}).value()], 0.96, 1e-12);
    EXPECT_EQ(vf.values[world.state_at({4, 1}).value()], 0.0);
    EXPECT_LE(vf.residual, 1e-9);
}

TEST(ValueIteration, ValuesAreMaxOfQ) {
    const auto world = load_world("m8.grid");
    const auto vf = value_iteration(world.mdp);
    for (StateId s = 0; s < vf.num_states(); ++s)
        if (!world.mdp.is_terminal(s)) {
            EXPECT_EQ(vf.values[s], vf.max_q(s));
        }
    EXPECT_EQ(vf.residuals.size(), vf.iterations);
    EXPECT_EQ(vf.residuals.back(), vf.residual);
}

TEST(ValueIteration, DiscountedStoppingRule) {
    const TabularMDP mdp = chain(0.9);
    const SolverOptions opts{0.01};
    EXPECT_DOUBLE_EQ(stopping_threshold(0.9, opts), 0.1 / 0.9 * 0.01);
    const auto vf = value_iteration(mdp, opts);
    EXPECT_LE(vf.residual, stopping_threshold(0.9, opts));
    EXPECT_NEAR(vf.values[0], -1.9, 1e-12);
}

TEST(ValueIteration, ReportsNonConvergence) {
    const auto world = load_world("room3x3.grid");
    SolverOptions opts;
    opts.max_iters = 2;
    try {
        value_iteration(world.mdp, opts);
        FAIL() << "expected ConvergenceError";
    } catch (const ConvergenceError& e) {
        EXPECT_EQ(e.code(), Errc::not_converged);
    }
}

TEST(ValueIteration, RejectsBadOptions) {
    EXPECT_THROW(value_iteration(chain(1.0), SolverOptions{0.0}), Error);
    EXPECT_THROW(value_iteration(chain(1.0), SolverOptions{1e-3, -1.0}), Error);
}

TEST(NearOptimal, TwoEpsilonBand) {
    ValueFunction vf;
    vf.num_actions = 3;
    vf.values = {1.0};
    vf.q = {1.0, 1.0 - 0.002, 1.0 - 0.0021};
    TabularMDP mdp({"s"}, {"a", "b", "c"}, 0.5, {});
    for (ActionId a = 0; a < 3; ++a) mdp.set_outcomes(0, a, {{0, 1.0, 0.0}});
    EXPECT_EQ(near_optimal_actions(vf, mdp, 1e-3)[0], (std::vector<ActionId>{0, 1}));
    EXPECT_EQ(near_optimal_actions(vf, mdp, 0.0)[0], (std::vector<ActionId>{0}));
    EXPECT_EQ(greedy_actions(vf)[0], (std::vector<ActionId>{0}));
}

TEST(Softmax, ShiftInvariantAndStable) {
    ValueFunction vf;
    vf.num_actions = 2;
    vf.values = {0.0, 0.0};
    vf.q = {0.0, std::log(3.0), 1000.0, 1000.0 + std::log(3.0)};
    const auto pi = softmax_policy(vf, 1.0);
    EXPECT_NEAR(pi.prob(0, 1), 0.75, 1e-12);
    EXPECT_NEAR(pi.prob(1, 1), 0.75, 1e-12);
    EXPECT_THROW(softmax_policy(vf, 0.0), Error);
}

TEST(CheckProper, FindsLoops) {
    const TabularMDP mdp = chain(1.0);
    const auto go = StochasticPolicy::deterministic({0, 0, 0}, 2);
    const auto stay = StochasticPolicy::deterministic({0, 1, 0}, 2);
    EXPECT_EQ(check_proper(mdp, go), (std::vector<bool>{true, true, true}));
    EXPECT_EQ(check_proper(mdp, stay), (std::vector<bool>{false, false, true}));

    StochasticPolicy mixed(3, 2);
    mixed.set(0, 0, 0.5);
    mixed.set(0, 1, 0.5);
    mixed.set(1, 0, 0.01);
    mixed.set(1, 1, 0.99);
    mixed.set(2, 0, 1.0);
    EXPECT_EQ(check_proper(mdp, mixed), (std::vector<bool>{true, true, true}));
}

TEST(PolicyEvaluation, MatchesClosedForm) {
    const TabularMDP mdp = chain(1.0);
    StochasticPolicy pi(3, 2);
    pi.set(0, 0, 1.0);
    pi.set(1, 0, 0.5);
    pi.set(1, 1, 0.5);
    pi.set(2, 0, 1.0);
    const auto vf = policy_evaluation(mdp, pi);
    // From s1 the number of steps is geometric with mean 2.
    EXPECT_NEAR(vf.values[1], -2.0, 1e-8);
    EXPECT_NEAR(vf.values[0], -3.0, 1e-8);
}

TEST(PolicyEvaluation, RewardOverride) {
    const TabularMDP mdp = chain(1.0);
    const auto pi = StochasticPolicy::deterministic({0, 0, 0}, 2);
    const auto vf = policy_evaluation(mdp, pi, RewardFn([](StateId, ActionId, StateId) { return -0.5; }));
    EXPECT_NEAR(vf.values[0], -1.0, 1e-12);
}

TEST(PolicyEvaluation, ImproperPolicyDiverges) {
    const TabularMDP mdp = chain(1.0);
    try {
        policy_evaluation(mdp, StochasticPolicy::deterministic({0, 1, 0}, 2));
        FAIL() << "expected DivergenceError";
    } catch (const DivergenceError& e) {
        EXPECT_EQ(e.code(), Errc::diverged);
        EXPECT_EQ(e.improper_states(), (std::vector<std::size_t>{0, 1}));
    }
}

TEST(PolicyEvaluation, DiscountedLoopIsFinite) {
    const TabularMDP mdp = chain(0.5);
    const auto vf = policy_evaluation(mdp, StochasticPolicy::deterministic({1, 1, 0}, 2));
    EXPECT_NEAR(vf.values[0], -2.0, 1e-9);
}
