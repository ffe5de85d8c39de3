#pragma once

#include "predictable/mdp.hpp"
#include "predictable/policy.hpp"
#include "predictable/predictability.hpp"
#include "predictable/rng.hpp"
#include "predictable/solver.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace predictable {

struct TrajectoryStep {
    StateId state;
    ActionId action;
    StateId next;
    double base_reward;
    double pred_reward;
};

struct Trajectory {
    std::vector<TrajectoryStep> steps;
    std::uint64_t seed = 0;
    std::string rng_algorithm{kRngAlgorithm};
    bool terminated = false;

    std::size_t length() const noexcept { return steps.size(); }
};

/// Horizon used when none is given: 50·|S| for SSPs, otherwise the number of
/// steps after which γ^t drops below 1e-6.
inline std::size_t default_horizon(const TabularMDP& mdp, double discount) {
    if (discount >= 1.0) return 50 * mdp.num_states();
    return static_cast<std::size_t>(std::ceil(std::log(1e-6) / std::log(discount)));
}

/// Samples one step: action from π, then successor from T.
inline std::pair<ActionId, const Outcome*> sample_step(const TabularMDP& mdp, const StochasticPolicy& pi, StateId s,
                                                      Rng& rng) {
    const ActionId a = rng.categorical(pi.row(s));
    auto outs = mdp.outcomes(s, a);
    std::size_t pick = 0;
    if (outs.size() > 1) {
        std::vector<double> w;
        w.reserve(outs.size());
        for (const Outcome& o : outs) w.push_back(o.probability);
        pick = rng.categorical(w);
    }
    return {a, &outs[pick]};
}

/// Rolls π out from `s0` until a terminal state or `max_steps`. When
/// `induced` is given its reward is recorded next to the base reward.
inline Trajectory simulate(const TabularMDP& mdp, const StochasticPolicy& pi, StateId s0, std::uint64_t seed,
                           std::size_t max_steps, const RewardFn* induced = nullptr) {
    Trajectory traj;
    traj.seed = seed;
    Rng rng(seed);
    StateId s = s0;
    while (!mdp.is_terminal(s) && traj.steps.size() < max_steps) {
        auto [a, out] = sample_step(mdp, pi, s, rng);
        traj.steps.push_back(TrajectoryStep{s, a, out->next, out->reward, induced ? (*induced)(s, a, out->next) : 0.0});
        s = out->next;
    }
    traj.terminated = mdp.is_terminal(s);
    return traj;
}

/// −V^π(s0) under the predictability reward: expected (discounted) number of
/// observer prediction errors. Throws DivergenceError for improper π when γ=1.
inline double expected_errors(const PredictabilityProblem& problem, const StochasticPolicy& pi, StateId s0) {
    const TabularMDP induced = induce_problem(problem);
    return -policy_evaluation(induced, pi).values.at(s0);
}

/// Expected number of steps to reach a terminal, or nullopt for problems
/// without terminal states.
inline std::optional<double> expected_steps(const TabularMDP& mdp, const StochasticPolicy& pi, StateId s0) {
    if (!mdp.has_terminals()) return std::nullopt;
    const TabularMDP counting =
        mdp.with_rewards([](StateId, ActionId, StateId) { return -1.0; }, 1.0);
    return -policy_evaluation(counting, pi).values.at(s0);
}

struct MeanEstimate {
    double mean = 0.0;
    double std_error = 0.0;
};

struct MonteCarloErrors {
    /// Σ γ^t (1 − pred(θ_t|s_t)): the expectation of the observer's error.
    MeanEstimate weighted;
    /// Σ γ^t [sampled guess ≠ θ_t], the guess drawn uniformly from the argmax.
    MeanEstimate sampled;
    MeanEstimate steps;
    std::size_t rollouts = 0;
    std::size_t truncated = 0; ///< rollouts cut by the horizon
    std::size_t horizon = 0;
    double termination_frequency = 0.0;
};

namespace detail {

struct Accumulator {
    double sum = 0.0;
    double sum_sq = 0.0;
    void add(double x) {
        sum += x;
        sum_sq += x * x;
    }
    MeanEstimate finish(std::size_t n) const {
        MeanEstimate e;
        if (n == 0) return e;
        e.mean = sum / static_cast<double>(n);
        if (n > 1) {
            const double var = std::max(0.0, (sum_sq - sum * e.mean) / static_cast<double>(n - 1));
            e.std_error = std::sqrt(var / static_cast<double>(n));
        }
        return e;
    }
};

} // namespace detail

/**
 * Monte Carlo count of observer errors along rollouts of π. Rollout i uses
 * seed derive_seed(seed, i), so any split of the rollouts gives the same
 * numbers. Draw order per step: action, successor, observer guess.
 */
inline MonteCarloErrors monte_carlo_errors(const PredictabilityProblem& problem, const StochasticPolicy& pi, StateId s0,
                                           std::size_t n_rollouts, std::size_t horizon, std::uint64_t seed) {
    problem.validate();
    const auto table = pred_table(problem);
    const TabularMDP& mdp = problem.base;
    const double gamma = problem.discount;

    detail::Accumulator weighted, sampled, steps;
    MonteCarloErrors out;
    out.rollouts = n_rollouts;
    out.horizon = horizon;
    std::size_t terminated = 0;
    for (std::size_t i = 0; i < n_rollouts; ++i) {
        Rng rng(derive_seed(seed, i));
        StateId s = s0;
        double w = 1.0, err_w = 0.0, err_s = 0.0;
        std::size_t t = 0;
        for (; t < horizon && !mdp.is_terminal(s); ++t) {
            auto [a, o] = sample_step(mdp, pi, s, rng);
            const std::size_t theta = realized_type(problem.type, s, a, o->next);
            const PredDistribution& pred = table[s];
            err_w += w * (1.0 - pred(theta));
            const std::size_t guess = pred.argmax[rng.below(pred.argmax.size())];
            if (guess != theta) err_s += w;
            w *= gamma;
            s = o->next;
        }
        if (mdp.is_terminal(s)) ++terminated;
        else ++out.truncated;
        weighted.add(err_w);
        sampled.add(err_s);
        steps.add(static_cast<double>(t));
    }
    out.weighted = weighted.finish(n_rollouts);
    out.sampled = sampled.finish(n_rollouts);
    out.steps = steps.finish(n_rollouts);
    out.termination_frequency = n_rollouts ? static_cast<double>(terminated) / static_cast<double>(n_rollouts) : 0.0;
    return out;
}

/// Fraction of rollouts from every start state that end in a terminal within
/// `horizon` steps.
inline std::vector<double> termination_frequency(const TabularMDP& mdp, const StochasticPolicy& pi,
                                                 std::size_t n_rollouts, std::size_t horizon, std::uint64_t seed) {
    std::vector<double> freq(mdp.num_states(), 0.0);
    for (StateId s0 = 0; s0 < mdp.num_states(); ++s0) {
        std::size_t hits = 0;
        for (std::size_t i = 0; i < n_rollouts; ++i) {
            Rng rng(derive_seed(derive_seed(seed, s0), i));
            StateId s = s0;
            for (std::size_t t = 0; t < horizon && !mdp.is_terminal(s); ++t) s = sample_step(mdp, pi, s, rng).second->next;
            hits += mdp.is_terminal(s);
        }
        freq[s0] = static_cast<double>(hits) / static_cast<double>(n_rollouts);
    }
    return freq;
}

} // namespace predictable
