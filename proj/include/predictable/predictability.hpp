#pragma once

#include "predictable/error.hpp"
#include "predictable/mdp.hpp"
#include "predictable/policy.hpp"
#include "predictable/solver.hpp"

#include <algorithm>
#include <memory>
#include <string_view>
#include <vector>

namespace predictable {

/// What the observer tries to predict: the next action or the next state.
enum class TypeKind { action, state };

constexpr std::string_view to_string(TypeKind kind) noexcept { return kind == TypeKind::action ? "action" : "state"; }

/// φ(s, a, s'): the realised type of a transition.
constexpr std::size_t realized_type(TypeKind kind, StateId /*s*/, ActionId a, StateId next) noexcept {
    return kind == TypeKind::action ? a : next;
}

struct PredictabilityProblem {
    TabularMDP base;
    StochasticPolicy observer;
    TypeKind type = TypeKind::action;
    double tie_tolerance = 1e-9;
    double discount = 1.0;

    void validate() const {
        base.validate();
        observer.validate();
        if (observer.num_states() != base.num_states() || observer.num_actions() != base.num_actions())
            throw Error(Errc::invalid_input, "observer policy does not match the base MDP");
        if (!(discount > 0.0 && discount <= 1.0)) throw Error(Errc::invalid_input, "discount must lie in (0,1]");
        if (discount == 1.0 && !base.has_terminals())
            throw Error(Errc::invalid_input, "discount 1 requires terminal states");
        if (!(tie_tolerance >= 0.0)) throw Error(Errc::invalid_input, "tie tolerance must be non-negative");
    }
};

/// Uniform distribution over the (near-)maximisers of a belief.
struct PredDistribution {
    std::vector<double> pred;
    std::vector<std::size_t> argmax; ///< sorted

    double operator()(std::size_t type) const { return pred.at(type); }
};

/// Observer belief over the next action: π_obs(·|s).
inline std::vector<double> action_belief(const PredictabilityProblem& problem, StateId s) {
    auto row = problem.observer.row(s);
    return {row.begin(), row.end()};
}

/// Observer belief over the next state: Σ_a π_obs(a|s) T(s, a, ·).
inline std::vector<double> state_belief(const PredictabilityProblem& problem, StateId s) {
    std::vector<double> b(problem.base.num_states(), 0.0);
    for (ActionId a = 0; a < problem.base.num_actions(); ++a) {
        const double p = problem.observer.prob(s, a);
        if (p <= 0.0) continue;
        for (const Outcome& o : problem.base.outcomes(s, a)) b[o.next] += p * o.probability;
    }
    return b;
}

inline std::vector<double> belief(const PredictabilityProblem& problem, StateId s) {
    return problem.type == TypeKind::action ? action_belief(problem, s) : state_belief(problem, s);
}

/// pred(θ) = 1/|argmax b| on {θ : b(θ) ≥ max b − tie_tolerance}, 0 elsewhere.
inline PredDistribution pred_distribution(const std::vector<double>& belief, double tie_tolerance) {
    if (belief.empty()) throw Error(Errc::invalid_input, "empty belief");
    const double top = *std::max_element(belief.begin(), belief.end());
    PredDistribution out;
    out.pred.assign(belief.size(), 0.0);
    for (std::size_t t = 0; t < belief.size(); ++t)
        if (belief[t] >= top - tie_tolerance) out.argmax.push_back(t);
    const double share = 1.0 / static_cast<double>(out.argmax.size());
    for (std::size_t t : out.argmax) out.pred[t] = share;
    return out;
}

/// pred(·|s) for every state (terminal states get an empty distribution).
inline std::vector<PredDistribution> pred_table(const PredictabilityProblem& problem) {
    std::vector<PredDistribution> table(problem.base.num_states());
    for (StateId s = 0; s < problem.base.num_states(); ++s)
        if (!problem.base.is_terminal(s)) table[s] = pred_distribution(belief(problem, s), problem.tie_tolerance);
    return table;
}

/**
 * R(s, a, s') = pred(φ(s, a, s') | s) − 1.
 *
 * The returned callable owns a precomputed pred table and can outlive
 * `problem`. Terminal self-loops yield 0.
 */
inline RewardFn pred_reward(const PredictabilityProblem& problem) {
    auto table = std::make_shared<const std::vector<PredDistribution>>(pred_table(problem));
    auto terminal = std::make_shared<const std::vector<bool>>([&] {
        std::vector<bool> t(problem.base.num_states());
        for (StateId s = 0; s < t.size(); ++s) t[s] = problem.base.is_terminal(s);
        return t;
    }());
    const TypeKind kind = problem.type;
    return [table, terminal, kind](StateId s, ActionId a, StateId next) {
        if ((*terminal)[s]) return 0.0;
        return (*table)[s](realized_type(kind, s, a, next)) - 1.0;
    };
}

/// The pOAMDP as a plain MDP: base dynamics, predictability reward.
inline TabularMDP induce_problem(const PredictabilityProblem& problem) {
    problem.validate();
    return problem.base.with_rewards(pred_reward(problem), problem.discount);
}

struct PredictableSolution {
    TabularMDP induced;
    ValueFunction values;
    ActionSets action_sets;   ///< ε-optimal actions of the induced problem
    StochasticPolicy policy;  ///< lowest-index member of each set
};

inline PredictableSolution solve_predictable(const PredictabilityProblem& problem, const SolverOptions& opts = {}) {
    PredictableSolution out;
    out.induced = induce_problem(problem);
    out.values = value_iteration(out.induced, opts);
    out.action_sets = near_optimal_actions(out.values, out.induced, opts.epsilon);
    std::vector<ActionId> choice(out.action_sets.size());
    for (StateId s = 0; s < choice.size(); ++s) choice[s] = out.action_sets[s].front();
    out.policy = StochasticPolicy::deterministic(choice, out.induced.num_actions());
    return out;
}

// ---------------------------------------------------------------------------
// Observer models

enum class ObserverKind { stochastic, biased, softmax };

constexpr std::string_view to_string(ObserverKind kind) noexcept {
    switch (kind) {
    case ObserverKind::stochastic: return "stochastic";
    case ObserverKind::biased: return "biased";
    case ObserverKind::softmax: return "softmax";
    }
    return "?";
}

struct ObserverSpec {
    ObserverKind kind = ObserverKind::stochastic;
    std::vector<ActionId> order; ///< biased only
    double tau = 1.0;            ///< softmax only
};

/// The observer's own solution of the base MDP and the policy it expects.
struct ObserverModel {
    ValueFunction values;
    ActionSets psi;
    StochasticPolicy policy;
};

inline ObserverModel solve_observer(const TabularMDP& base, const ObserverSpec& spec, const SolverOptions& opts = {}) {
    ObserverModel out;
    out.values = value_iteration(base, opts);
    out.psi = near_optimal_actions(out.values, base, opts.epsilon);
    switch (spec.kind) {
    case ObserverKind::stochastic: out.policy = stochastic_baseline(out.psi, base.num_actions()); break;
    case ObserverKind::biased: out.policy = biased_baseline(out.psi, spec.order, base.num_actions()); break;
    case ObserverKind::softmax: out.policy = softmax_policy(out.values, spec.tau); break;
    }
    return out;
}

inline PredictabilityProblem make_problem(const TabularMDP& base, StochasticPolicy observer, TypeKind type,
                                          double discount, double tie_tolerance = 1e-9) {
    PredictabilityProblem p{base, std::move(observer), type, tie_tolerance, discount};
    p.validate();
    return p;
}

} // namespace predictable
