#pragma once

#include "predictable/error.hpp"
#include "predictable/mdp.hpp"
#include "predictable/policy.hpp"
#include "predictable/solver.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <vector>

namespace predictable {

struct BruteForceResult {
    /// Per-state optimum over all deterministic stationary policies; -inf
    /// where no policy terminates (discount 1).
    std::vector<double> values;
    /// A policy attaining `values` in every state.
    std::vector<ActionId> policy;
    std::size_t policies_evaluated = 0;
};

/// Exact value of a deterministic policy. With discount 1, states that do not
/// terminate with probability one get -inf.
inline std::vector<double> exact_policy_value(const TabularMDP& mdp, const std::vector<ActionId>& choice) {
    const std::size_t n = mdp.num_states();
    const auto pi = StochasticPolicy::deterministic(choice, mdp.num_actions());
    std::vector<bool> solvable(n, true);
    if (mdp.discount() == 1.0) solvable = check_proper(mdp, pi);

    std::vector<std::ptrdiff_t> row(n, -1);
    std::ptrdiff_t m = 0;
    for (StateId s = 0; s < n; ++s)
        if (solvable[s] && !mdp.is_terminal(s)) row[s] = m++;

    std::vector<double> v(n, -std::numeric_limits<double>::infinity());
    for (StateId s = 0; s < n; ++s)
        if (mdp.is_terminal(s)) v[s] = 0.0;
    if (m == 0) return v;

    // (I - γP) v = r over the solvable transient states; their successors are
    // solvable or terminal (value 0).
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(m, m);
    Eigen::VectorXd b(m);
    for (StateId s = 0; s < n; ++s) {
        if (row[s] < 0) continue;
        const ActionId a = choice[s];
        b(row[s]) = mdp.expected_reward(s, a);
        for (const Outcome& o : mdp.outcomes(s, a))
            if (row[o.next] >= 0) A(row[s], row[o.next]) -= mdp.discount() * o.probability;
    }
    const Eigen::VectorXd x = A.partialPivLu().solve(b);
    for (StateId s = 0; s < n; ++s)
        if (row[s] >= 0) v[s] = x(row[s]);
    return v;
}

/// Enumerates every deterministic stationary policy (actions of terminal
/// states are irrelevant and fixed to 0). Rejects instances with more than
/// `max_policies` candidates.
inline BruteForceResult brute_force_optimal(const TabularMDP& mdp, std::size_t max_policies = 1'000'000) {
    std::vector<StateId> free;
    for (StateId s = 0; s < mdp.num_states(); ++s)
        if (!mdp.is_terminal(s)) free.push_back(s);
    const std::size_t k = mdp.num_actions();
    double count = std::pow(static_cast<double>(k), static_cast<double>(free.size()));
    if (count > static_cast<double>(max_policies))
        throw Error(Errc::too_large, "brute force needs " + std::to_string(k) + "^" + std::to_string(free.size()) +
                                         " policies, bound is " + std::to_string(max_policies));

    auto visit = [&](auto&& fn) {
        std::vector<ActionId> choice(mdp.num_states(), 0);
        while (true) {
            fn(choice);
            std::size_t i = 0;
            for (; i < free.size(); ++i) {
                if (++choice[free[i]] < k) break;
                choice[free[i]] = 0;
            }
            if (i == free.size()) break;
        }
    };

    BruteForceResult out;
    out.values.assign(mdp.num_states(), -std::numeric_limits<double>::infinity());
    visit([&](const std::vector<ActionId>& choice) {
        const auto v = exact_policy_value(mdp, choice);
        for (StateId s = 0; s < v.size(); ++s) out.values[s] = std::max(out.values[s], v[s]);
        ++out.policies_evaluated;
    });
    bool found = false;
    visit([&](const std::vector<ActionId>& choice) {
        if (found) return;
        const auto v = exact_policy_value(mdp, choice);
        for (StateId s = 0; s < v.size(); ++s) {
            if (std::isinf(out.values[s])) continue;
            if (v[s] < out.values[s] - 1e-9) return;
        }
        out.policy = choice;
        found = true;
    });
    return out;
}

} // namespace predictable
