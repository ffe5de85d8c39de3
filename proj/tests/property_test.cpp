// Invariants checked over randomly generated small MDPs. Every case is seeded,
// so failures reproduce; the seed is printed on failure.

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace predictable;
using testing_support::RandomMdpGen;

namespace {

constexpr int kCases = 40;

/// Probability of ever reaching a terminal, by fixed-point iteration.
std::vector<double> absorption(const TabularMDP& mdp, const StochasticPolicy& pi) {
    std::vector<double> h(mdp.num_states(), 0.0);
    for (StateId s = 0; s < h.size(); ++s)
        if (mdp.is_terminal(s)) h[s] = 1.0;
    for (int it = 0; it < 200000; ++it) {
        double delta = 0.0;
        for (StateId s = 0; s < h.size(); ++s) {
            if (mdp.is_terminal(s)) continue;
            double v = 0.0;
            for (ActionId a = 0; a < mdp.num_actions(); ++a)
                for (const Outcome& o : mdp.outcomes(s, a)) v += pi.prob(s, a) * o.probability * h[o.next];
            delta = std::max(delta, std::abs(v - h[s]));
            h[s] = v;
        }
        if (delta < 1e-15) break;
    }
    return h;
}

PredictabilityProblem random_problem(RandomMdpGen& gen, bool undiscounted, TypeKind type) {
    TabularMDP mdp = gen(undiscounted);
    const auto obs = solve_observer(mdp, ObserverSpec{});
    return make_problem(mdp, obs.policy, type, mdp.discount());
}

} // namespace

TEST(Properties, DiscountedResidualContracts) {
    for (int seed = 0; seed < kCases; ++seed) {
        RandomMdpGen gen(seed);
        const TabularMDP mdp = gen(false);
        const auto vf = value_iteration(mdp, SolverOptions{1e-6});
        for (std::size_t k = 1; k < vf.residuals.size(); ++k)
            ASSERT_LE(vf.residuals[k], mdp.discount() * vf.residuals[k - 1] + 1e-12) << "seed " << seed;
    }
}

TEST(Properties, ValueIterationIsEpsilonAccurate) {
    for (int seed = 0; seed < kCases; ++seed) {
        RandomMdpGen gen(100 + seed);
        const TabularMDP mdp = gen(false);
        const double eps = 1e-3;
        const auto vf = value_iteration(mdp, SolverOptions{eps});
        const auto bf = brute_force_optimal(mdp);
        for (StateId s = 0; s < mdp.num_states(); ++s) ASSERT_NEAR(vf.values[s], bf.values[s], eps) << "seed " << seed;

        // Picking inside the ε-optimal sets loses at most O(ε/(1-γ)).
        const auto psi = near_optimal_actions(vf, mdp, eps);
        std::vector<ActionId> choice;
        for (const auto& set : psi) choice.push_back(set.front());
        const auto v = exact_policy_value(mdp, choice);
        for (StateId s = 0; s < mdp.num_states(); ++s)
            ASSERT_GE(v[s], bf.values[s] - 4 * eps / (1 - mdp.discount())) << "seed " << seed;
    }
}

TEST(Properties, UndiscountedMatchesBruteForce) {
    for (int seed = 0; seed < kCases; ++seed) {
        RandomMdpGen gen(200 + seed);
        const TabularMDP mdp = gen(true);
        const auto vf = value_iteration(mdp, SolverOptions{1e-3, 1e-12});
        const auto bf = brute_force_optimal(mdp);
        for (StateId s = 0; s < mdp.num_states(); ++s) ASSERT_NEAR(vf.values[s], bf.values[s], 1e-6) << "seed " << seed;
    }
}

TEST(Properties, GreedyInsideNearOptimal) {
    for (int seed = 0; seed < kCases; ++seed) {
        RandomMdpGen gen(300 + seed);
        const TabularMDP mdp = gen(seed % 2 == 0);
        const auto vf = value_iteration(mdp);
        const auto greedy = greedy_actions(vf);
        const auto psi = near_optimal_actions(vf, mdp, 1e-3);
        for (StateId s = 0; s < mdp.num_states(); ++s) {
            ASSERT_FALSE(greedy[s].empty());
            for (ActionId a : greedy[s])
                ASSERT_NE(std::find(psi[s].begin(), psi[s].end(), a), psi[s].end()) << "seed " << seed;
        }
    }
}

TEST(Properties, SoftmaxInvariants) {
    for (int seed = 0; seed < kCases; ++seed) {
        RandomMdpGen gen(400 + seed);
        const TabularMDP mdp = gen(false);
        auto vf = value_iteration(mdp);
        const double tau = gen.real(0.05, 5.0);
        const auto pi = softmax_policy(vf, tau);
        ASSERT_NO_THROW(pi.validate());
        // Adding a per-state constant to q leaves the policy unchanged.
        auto shifted = vf;
        for (StateId s = 0; s < vf.num_states(); ++s)
            for (ActionId a = 0; a < vf.num_actions; ++a) shifted.q[s * vf.num_actions + a] += 1000.0 * (s + 1);
        const auto pi2 = softmax_policy(shifted, tau);
        for (StateId s = 0; s < vf.num_states(); ++s)
            for (ActionId a = 0; a < vf.num_actions; ++a) ASSERT_NEAR(pi.prob(s, a), pi2.prob(s, a), 1e-9);
        // Order preserving: a higher q never gets less probability.
        for (StateId s = 0; s < vf.num_states(); ++s)
            for (ActionId a = 0; a < vf.num_actions; ++a)
                for (ActionId b = 0; b < vf.num_actions; ++b)
                    if (vf.q_value(s, a) > vf.q_value(s, b)) {
                        ASSERT_GE(pi.prob(s, a), pi.prob(s, b));
                    }
    }
}

TEST(Properties, CheckProperMatchesAbsorption) {
    for (int seed = 0; seed < kCases; ++seed) {
        RandomMdpGen gen(500 + seed);
        const TabularMDP mdp = gen(true);
        const auto pi = gen.policy(mdp.num_states(), mdp.num_actions());
        const auto proper = check_proper(mdp, pi);
        const auto h = absorption(mdp, pi);
        const auto freq = termination_frequency(mdp, pi, 200, 5000, seed);
        for (StateId s = 0; s < mdp.num_states(); ++s) {
            if (proper[s]) {
                ASSERT_NEAR(h[s], 1.0, 1e-9) << "seed " << seed << " state " << s;
                ASSERT_EQ(freq[s], 1.0) << "seed " << seed << " state " << s;
            } else {
                ASSERT_LT(h[s], 1.0 - 1e-9) << "seed " << seed << " state " << s;
            }
        }
    }
}

TEST(Properties, EvaluationMatchesLinearSolve) {
    for (int seed = 0; seed < kCases; ++seed) {
        RandomMdpGen gen(600 + seed);
        const TabularMDP mdp = gen(seed % 2 == 1);
        std::vector<ActionId> choice(mdp.num_states());
        for (auto& a : choice) a = gen.rng.below(mdp.num_actions());
        const auto exact = exact_policy_value(mdp, choice);
        const auto pi = StochasticPolicy::deterministic(choice, mdp.num_actions());
        const auto proper = check_proper(mdp, pi);
        if (mdp.discount() == 1.0 && std::find(proper.begin(), proper.end(), false) != proper.end()) {
            ASSERT_THROW(policy_evaluation(mdp, pi), DivergenceError);
            continue;
        }
        const auto vf = policy_evaluation(mdp, pi);
        for (StateId s = 0; s < mdp.num_states(); ++s) ASSERT_NEAR(vf.values[s], exact[s], 1e-6) << "seed " << seed;
    }
}

TEST(Properties, InducedRewardsAreErrorProbabilities) {
    for (int seed = 0; seed < kCases; ++seed) {
        RandomMdpGen gen(700 + seed);
        const TypeKind type = seed % 2 ? TypeKind::state : TypeKind::action;
        const auto p = random_problem(gen, seed % 3 == 0, type);
        const auto table = pred_table(p);
        for (StateId s = 0; s < p.base.num_states(); ++s) {
            if (p.base.is_terminal(s)) continue;
            double total = 0.0;
            for (double x : table[s].pred) total += x;
            ASSERT_NEAR(total, 1.0, 1e-12);
        }
        const TabularMDP induced = induce_problem(p);
        for (StateId s = 0; s < induced.num_states(); ++s)
            for (ActionId a = 0; a < induced.num_actions(); ++a)
                for (const Outcome& o : induced.outcomes(s, a)) {
                    ASSERT_GE(o.reward, -1.0);
                    ASSERT_LE(o.reward, 0.0);
                }
    }
}

TEST(Properties, PredictableIsOptimalForInducedProblem) {
    for (int seed = 0; seed < kCases; ++seed) {
        RandomMdpGen gen(800 + seed);
        const bool undiscounted = seed % 2 == 0;
        const auto p = random_problem(gen, undiscounted, seed % 4 < 2 ? TypeKind::action : TypeKind::state);
        SolverOptions opts{1e-4, 1e-12};
        const auto sol = solve_predictable(p, opts);
        const auto bf = brute_force_optimal(sol.induced);
        const auto v = policy_evaluation(sol.induced, sol.policy).values;
        const double slack = undiscounted ? 1e-6 : 4 * opts.epsilon / (1 - p.discount);
        for (StateId s = 0; s < v.size(); ++s) ASSERT_GE(v[s], bf.values[s] - slack) << "seed " << seed;
        // ...and never worse for the observer than the observer's own policy.
        const auto base = policy_evaluation(sol.induced, p.observer).values;
        for (StateId s = 0; s < v.size(); ++s) ASSERT_GE(v[s], base[s] - slack) << "seed " << seed;
    }
}

TEST(Properties, ObserverDependsOnlyOnRewardOrdering) {
    // Scaling rewards by a power of two scales every iterate exactly, so with
    // ε and η scaled alike the observer and the predictable policy coincide.
    for (int seed = 0; seed < kCases; ++seed) {
        RandomMdpGen gen(900 + seed);
        const TabularMDP mdp = gen(seed % 2 == 0);
        const TabularMDP scaled = mdp.with_rewards(
            [&](StateId s, ActionId a, StateId n) { return 4.0 * mdp.reward(s, a, n); });
        const SolverOptions opts{1e-3, 1e-9}, opts4{4e-3, 4e-9};
        const auto o1 = solve_observer(mdp, ObserverSpec{}, opts);
        const auto o4 = solve_observer(scaled, ObserverSpec{}, opts4);
        ASSERT_EQ(o1.psi, o4.psi) << "seed " << seed;
        const auto s1 = solve_predictable(make_problem(mdp, o1.policy, TypeKind::action, mdp.discount()), opts);
        const auto s4 = solve_predictable(make_problem(scaled, o4.policy, TypeKind::action, mdp.discount()), opts);
        ASSERT_EQ(s1.action_sets, s4.action_sets) << "seed " << seed;
    }
}

TEST(Properties, MonteCarloAgreesWithExactErrors) {
    for (int seed = 0; seed < 10; ++seed) {
        RandomMdpGen gen(1000 + seed);
        const auto p = random_problem(gen, true, seed % 2 ? TypeKind::state : TypeKind::action);
        const double exact = expected_errors(p, p.observer, 0);
        const auto mc = monte_carlo_errors(p, p.observer, 0, 20000, default_horizon(p.base, 1.0), seed);
        ASSERT_NEAR(mc.weighted.mean, exact, 4 * mc.weighted.std_error + 1e-9) << "seed " << seed;
        ASSERT_NEAR(mc.sampled.mean, exact, 4 * mc.sampled.std_error + 1e-9) << "seed " << seed;
    }
}

TEST(Properties, DeterministicDynamicsMakeKindsCoincide) {
    for (int seed = 0; seed < kCases; ++seed) {
        RandomMdpGen gen(1100 + seed);
        TabularMDP mdp = gen(true);
        const std::size_t n = mdp.num_states();
        if (mdp.num_actions() >= n) continue;
        // Deterministic dynamics where every action leads somewhere different.
        TabularMDP det(mdp.state_names(), mdp.action_names(), 1.0, mdp.terminals());
        for (StateId s = 0; s + 1 < n; ++s)
            for (ActionId a = 0; a < mdp.num_actions(); ++a)
                det.set_outcomes(s, a, {{(s + a + 1) % n, 1.0, mdp.expected_reward(s, a)}});
        det.validate();
        const auto obs = solve_observer(det, ObserverSpec{});
        const auto ia = induce_problem(make_problem(det, obs.policy, TypeKind::action, 1.0));
        const auto is = induce_problem(make_problem(det, obs.policy, TypeKind::state, 1.0));
        for (StateId s = 0; s < n; ++s)
            for (ActionId a = 0; a < det.num_actions(); ++a)
                ASSERT_EQ(ia.expected_reward(s, a), is.expected_reward(s, a)) << "seed " << seed;
    }
}
