#pragma once

#include "predictable/error.hpp"
#include "predictable/mdp.hpp"
#include "predictable/policy.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <vector>

namespace predictable {

/// Result of value iteration or policy evaluation.
struct ValueFunction {
    std::vector<double> values;
    std::vector<double> q; ///< row-major |S| x |A|
    std::size_t num_actions = 0;
    double residual = 0.0;
    std::size_t iterations = 0;
    std::vector<double> residuals; ///< residual of every sweep, in order

    double q_value(StateId s, ActionId a) const { return q.at(s * num_actions + a); }
    std::size_t num_states() const noexcept { return values.size(); }

    double max_q(StateId s) const {
        double best = -std::numeric_limits<double>::infinity();
        for (ActionId a = 0; a < num_actions; ++a) best = std::max(best, q_value(s, a));
        return best;
    }
};

struct SolverOptions {
    double epsilon = 1e-3;
    /// Residual threshold used when the discount is 1.
    double eta = 1e-9;
    std::size_t max_iters = 1'000'000;
};

namespace detail {

inline double backup(const TabularMDP& mdp, StateId s, ActionId a, const std::vector<double>& v) {
    double future = 0.0;
    for (const Outcome& o : mdp.outcomes(s, a)) future += o.probability * v[o.next];
    return mdp.expected_reward(s, a) + mdp.discount() * future;
}

inline std::vector<double> q_table(const TabularMDP& mdp, const std::vector<double>& v) {
    std::vector<double> q(mdp.num_states() * mdp.num_actions(), 0.0);
    for (StateId s = 0; s < mdp.num_states(); ++s) {
        if (mdp.is_terminal(s)) continue;
        for (ActionId a = 0; a < mdp.num_actions(); ++a) q[s * mdp.num_actions() + a] = backup(mdp, s, a, v);
    }
    return q;
}

} // namespace detail

/// Residual at which value iteration stops: ((1-γ)/γ)·ε when discounted,
/// η otherwise.
inline double stopping_threshold(double discount, const SolverOptions& opts) {
    return discount < 1.0 ? (1.0 - discount) / discount * opts.epsilon : opts.eta;
}

/**
 * Synchronous value iteration from V = 0, sweeping states in index order.
 *
 * `q` is derived from the last iterate V_k and `values` holds max_a q, i.e. the
 * backup V_{k+1}, so the two are consistent exactly. Terminal states keep
 * value 0.
 */
inline ValueFunction value_iteration(const TabularMDP& mdp, const SolverOptions& opts = {}) {
    if (!(opts.epsilon > 0.0) || !(opts.eta > 0.0))
        throw Error(Errc::invalid_input, "epsilon and eta must be positive");
    if (mdp.discount() == 1.0 && !mdp.has_terminals())
        throw Error(Errc::invalid_input, "undiscounted problems need terminal states");

    const double threshold = stopping_threshold(mdp.discount(), opts);
    const std::size_t n = mdp.num_states();
    std::vector<double> v(n, 0.0), next(n, 0.0);

    ValueFunction out;
    out.num_actions = mdp.num_actions();
    bool converged = false;
    for (std::size_t k = 1; k <= opts.max_iters; ++k) {
        double residual = 0.0;
        for (StateId s = 0; s < n; ++s) {
            if (mdp.is_terminal(s)) {
                next[s] = 0.0;
                continue;
            }
            double best = -std::numeric_limits<double>::infinity();
            for (ActionId a = 0; a < mdp.num_actions(); ++a) best = std::max(best, detail::backup(mdp, s, a, v));
            next[s] = best;
            residual = std::max(residual, std::abs(best - v[s]));
        }
        v.swap(next);
        out.residuals.push_back(residual);
        out.residual = residual;
        out.iterations = k;
        if (!std::isfinite(residual)) break;
        if (residual <= threshold) {
            converged = true;
            break;
        }
    }
    if (!converged) throw ConvergenceError(out.residual, out.iterations);

    out.q = detail::q_table(mdp, v);
    out.values.assign(n, 0.0);
    for (StateId s = 0; s < n; ++s)
        if (!mdp.is_terminal(s)) out.values[s] = out.max_q(s);
    return out;
}

/// ψ(s) = { a : q(s,a) ≥ max q(s,·) − 2ε }, with a 1e-12 slack so exact ties
/// survive different summation orders.
inline ActionSets near_optimal_actions(const ValueFunction& vf, const TabularMDP& mdp, double epsilon) {
    if (!(epsilon >= 0.0)) throw Error(Errc::invalid_input, "epsilon must be non-negative");
    if (vf.num_states() != mdp.num_states() || vf.num_actions != mdp.num_actions())
        throw Error(Errc::invalid_input, "value function does not match the MDP");
    constexpr double slack = 1e-12;
    ActionSets psi(mdp.num_states());
    for (StateId s = 0; s < mdp.num_states(); ++s) {
        const double cut = vf.max_q(s) - 2.0 * epsilon - slack;
        for (ActionId a = 0; a < mdp.num_actions(); ++a)
            if (vf.q_value(s, a) >= cut) psi[s].push_back(a);
    }
    return psi;
}

/// Greedy maximisers of q (exact ties within 1e-12 all kept).
inline ActionSets greedy_actions(const ValueFunction& vf) {
    ActionSets out(vf.num_states());
    for (StateId s = 0; s < vf.num_states(); ++s) {
        const double best = vf.max_q(s);
        for (ActionId a = 0; a < vf.num_actions; ++a)
            if (vf.q_value(s, a) >= best - 1e-12) out[s].push_back(a);
    }
    return out;
}

/// Boltzmann policy π(a|s) ∝ exp(q(s,a)/τ), evaluated with the row maximum
/// subtracted.
inline StochasticPolicy softmax_policy(const ValueFunction& vf, double tau) {
    if (!(tau > 0.0)) throw Error(Errc::invalid_input, "temperature must be positive");
    StochasticPolicy pi(vf.num_states(), vf.num_actions);
    std::vector<double> w(vf.num_actions);
    for (StateId s = 0; s < vf.num_states(); ++s) {
        const double m = vf.max_q(s);
        double total = 0.0;
        for (ActionId a = 0; a < vf.num_actions; ++a) {
            w[a] = std::exp((vf.q_value(s, a) - m) / tau);
            total += w[a];
        }
        for (ActionId a = 0; a < vf.num_actions; ++a) pi.set(s, a, w[a] / total);
    }
    return pi;
}

/// Per-state verdict: true iff the chain induced by π reaches a terminal
/// with probability one from that state.
inline std::vector<bool> check_proper(const TabularMDP& mdp, const StochasticPolicy& pi) {
    const std::size_t n = mdp.num_states();
    if (pi.num_states() != n || pi.num_actions() != mdp.num_actions())
        throw Error(Errc::invalid_input, "policy does not match the MDP");

    std::vector<std::vector<StateId>> succ(n), pred(n);
    for (StateId s = 0; s < n; ++s) {
        if (mdp.is_terminal(s)) continue;
        for (ActionId a = 0; a < mdp.num_actions(); ++a) {
            if (pi.prob(s, a) <= 0.0) continue;
            for (const Outcome& o : mdp.outcomes(s, a)) {
                succ[s].push_back(o.next);
                pred[o.next].push_back(s);
            }
        }
    }

    // States that can reach a terminal at all.
    std::vector<bool> reaches(n, false);
    std::deque<StateId> queue;
    for (StateId s = 0; s < n; ++s)
        if (mdp.is_terminal(s)) {
            reaches[s] = true;
            queue.push_back(s);
        }
    while (!queue.empty()) {
        StateId t = queue.front();
        queue.pop_front();
        for (StateId p : pred[t])
            if (!reaches[p]) {
                reaches[p] = true;
                queue.push_back(p);
            }
    }

    // A state is improper iff it can reach a state that cannot reach a terminal.
    std::vector<bool> proper(n, true);
    for (StateId s = 0; s < n; ++s)
        if (!reaches[s]) {
            proper[s] = false;
            queue.push_back(s);
        }
    while (!queue.empty()) {
        StateId t = queue.front();
        queue.pop_front();
        for (StateId p : pred[t])
            if (proper[p]) {
                proper[p] = false;
                queue.push_back(p);
            }
    }
    return proper;
}

struct EvaluationOptions {
    double tolerance = 1e-9;
    /// Values below this are taken as -infinity (improper policy).
    double divergence_floor = -1e6;
    std::size_t max_iters = 10'000'000;
};

/**
 * Iterative evaluation of π, optionally under a different reward on the same
 * dynamics. For discount 1 the policy must be proper; otherwise a
 * DivergenceError lists the improper states. The iteration stops once the
 * residual guarantees an error below `tolerance`.
 */
inline ValueFunction policy_evaluation(const TabularMDP& mdp, const StochasticPolicy& pi,
                                       const std::optional<RewardFn>& reward_override = std::nullopt,
                                       const EvaluationOptions& opts = {}) {
    pi.validate();
    if (pi.num_states() != mdp.num_states() || pi.num_actions() != mdp.num_actions())
        throw Error(Errc::invalid_input, "policy does not match the MDP");

    const TabularMDP* model = &mdp;
    TabularMDP overridden;
    if (reward_override) {
        overridden = mdp.with_rewards(*reward_override);
        model = &overridden;
    }

    const std::size_t n = model->num_states();
    const double gamma = model->discount();
    if (gamma == 1.0) {
        auto proper = check_proper(*model, pi);
        std::vector<std::size_t> bad;
        for (StateId s = 0; s < n; ++s)
            if (!proper[s]) bad.push_back(s);
        if (!bad.empty()) throw DivergenceError(std::move(bad));
    }

    const double threshold = gamma < 1.0 ? opts.tolerance * (1.0 - gamma) : opts.tolerance;
    std::vector<double> v(n, 0.0), next(n, 0.0);
    ValueFunction out;
    out.num_actions = model->num_actions();
    bool converged = false;
    for (std::size_t k = 1; k <= opts.max_iters; ++k) {
        double residual = 0.0;
        bool sunk = false;
        for (StateId s = 0; s < n; ++s) {
            if (model->is_terminal(s)) {
                next[s] = 0.0;
                continue;
            }
            double total = 0.0;
            for (ActionId a = 0; a < model->num_actions(); ++a) {
                const double p = pi.prob(s, a);
                if (p > 0.0) total += p * detail::backup(*model, s, a, v);
            }
            next[s] = total;
            residual = std::max(residual, std::abs(total - v[s]));
            sunk = sunk || total < opts.divergence_floor;
        }
        v.swap(next);
        out.residuals.push_back(residual);
        out.residual = residual;
        out.iterations = k;
        if (sunk) {
            std::vector<std::size_t> bad;
            for (StateId s = 0; s < n; ++s)
                if (v[s] < opts.divergence_floor) bad.push_back(s);
            throw DivergenceError(std::move(bad));
        }
        if (residual <= threshold) {
            converged = true;
            break;
        }
    }
    if (!converged) throw ConvergenceError(out.residual, out.iterations);
    out.values = std::move(v);
    out.q = detail::q_table(*model, out.values);
    return out;
}

} // namespace predictable
