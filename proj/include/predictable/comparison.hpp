#pragma once

#include "predictable/domains.hpp"
#include "predictable/io.hpp"
#include "predictable/predictability.hpp"
#include "predictable/simulate.hpp"

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace predictable {

/// The four policies compared in the maze study.
enum class PolicyKind { mdp_s, mdp_b, pred_action, pred_state };

inline constexpr std::array<PolicyKind, 4> kPolicyKinds{PolicyKind::mdp_s, PolicyKind::mdp_b, PolicyKind::pred_action,
                                                        PolicyKind::pred_state};

constexpr std::string_view to_string(PolicyKind kind) noexcept {
    switch (kind) {
    case PolicyKind::mdp_s: return "mdp-s";
    case PolicyKind::mdp_b: return "mdp-b";
    case PolicyKind::pred_action: return "pred-action";
    case PolicyKind::pred_state: return "pred-state";
    }
    return "?";
}

inline std::optional<PolicyKind> parse_policy_kind(std::string_view name) {
    for (PolicyKind k : kPolicyKinds)
        if (to_string(k) == name) return k;
    return std::nullopt;
}

/// Parses "up,right,down,left" style orders.
inline std::vector<ActionId> parse_action_order(std::string_view text) {
    std::vector<ActionId> order;
    while (!text.empty()) {
        const auto comma = text.find(',');
        const auto name = text.substr(0, comma);
        const auto a = parse_move(name);
        if (!a) throw Error(Errc::invalid_input, "unknown action \"" + std::string(name) + "\"");
        order.push_back(*a);
        text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    }
    check_action_order(order, kMoveNames.size());
    return order;
}

inline std::string format_action_order(const std::vector<ActionId>& order) {
    std::string out;
    for (ActionId a : order) {
        if (!out.empty()) out += ',';
        out += kMoveNames.at(a);
    }
    return out;
}

/**
 * Everything the study needs for one grid: the observer's solution of the
 * base problem and the two predictable policies. The observer is the
 * stochastic baseline (uniform over ε-optimal actions).
 */
struct PreparedGrid {
    std::string id;
    GridMDP world;
    ObserverModel observer;
    PredictableSolution pred_action;
    PredictableSolution pred_state;
    double epsilon = 1e-3;

    StochasticPolicy policy(PolicyKind kind, const std::vector<ActionId>& bias = {}) const {
        switch (kind) {
        case PolicyKind::mdp_s: return observer.policy;
        case PolicyKind::mdp_b: return biased_baseline(observer.psi, bias, world.mdp.num_actions());
        case PolicyKind::pred_action: return pred_action.policy;
        case PolicyKind::pred_state: return pred_state.policy;
        }
        throw Error(Errc::invalid_input, "unknown policy kind");
    }

    PredictabilityProblem problem(TypeKind type) const {
        return make_problem(world.mdp, observer.policy, type, world.mdp.discount());
    }
};

inline PreparedGrid prepare_grid(std::string id, const GridSpec& grid, const SolverOptions& opts = {},
                                 double gamma = 0.99) {
    PreparedGrid out;
    out.id = std::move(id);
    out.world = build_grid_mdp(grid, gamma);
    out.epsilon = opts.epsilon;
    out.observer = solve_observer(out.world.mdp, ObserverSpec{}, opts);
    const double discount = out.world.mdp.discount();
    out.pred_action = solve_predictable(make_problem(out.world.mdp, out.observer.policy, TypeKind::action, discount), opts);
    out.pred_state = solve_predictable(make_problem(out.world.mdp, out.observer.policy, TypeKind::state, discount), opts);
    return out;
}

/// One line of the comparison table. Error counts are against the
/// action-type observer; `*_state` columns use the state-type observer.
struct ComparisonRow {
    std::string policy;
    std::string maze;
    double expected_errors = 0.0;
    double expected_errors_state = 0.0;
    std::optional<double> mean_steps;
    bool steps_constant = false;
    MeanEstimate mc_errors;
    MeanEstimate mc_steps;
    std::size_t rollouts = 0;
};

/// Exact and sampled statistics of `pi` started at the grid's start state.
inline ComparisonRow compare_policy(const PreparedGrid& g, std::string label, const StochasticPolicy& pi,
                                    std::size_t rollouts, std::uint64_t seed) {
    ComparisonRow row;
    row.policy = std::move(label);
    row.maze = g.id;
    const auto action_problem = g.problem(TypeKind::action);
    row.expected_errors = expected_errors(action_problem, pi, g.world.start);
    row.expected_errors_state = expected_errors(g.problem(TypeKind::state), pi, g.world.start);
    row.mean_steps = expected_steps(g.world.mdp, pi, g.world.start);
    row.rollouts = rollouts;
    if (rollouts > 0) {
        const auto mc = monte_carlo_errors(action_problem, pi, g.world.start, rollouts,
                                           default_horizon(g.world.mdp, g.world.mdp.discount()), seed);
        row.mc_errors = mc.weighted;
        row.mc_steps = mc.steps;
        row.steps_constant = rollouts > 1 && mc.steps.std_error == 0.0;
    }
    return row;
}

/// Rows for the four study policies on one grid.
inline std::vector<ComparisonRow> compare_grid(const PreparedGrid& g, const std::vector<ActionId>& bias,
                                               std::size_t rollouts, std::uint64_t seed) {
    std::vector<ComparisonRow> rows;
    for (std::size_t i = 0; i < kPolicyKinds.size(); ++i) {
        const PolicyKind k = kPolicyKinds[i];
        rows.push_back(compare_policy(g, std::string(to_string(k)), g.policy(k, bias), rollouts, derive_seed(seed, i)));
    }
    return rows;
}

/// Appends one "⊕" row per policy holding the column sums over its grids.
/// Standard errors combine in quadrature (rollouts are independent).
inline std::vector<ComparisonRow> with_aggregates(std::vector<ComparisonRow> rows) {
    std::vector<std::string> order;
    std::map<std::string, ComparisonRow> sums;
    std::map<std::string, std::pair<double, double>> var;
    for (const auto& r : rows) {
        auto [it, fresh] = sums.try_emplace(r.policy);
        ComparisonRow& s = it->second;
        if (fresh) {
            order.push_back(r.policy);
            s.policy = r.policy;
            s.maze = "⊕";
            s.mean_steps = 0.0;
            s.steps_constant = true;
        }
        s.expected_errors += r.expected_errors;
        s.expected_errors_state += r.expected_errors_state;
        if (s.mean_steps && r.mean_steps) *s.mean_steps += *r.mean_steps;
        else s.mean_steps.reset();
        s.steps_constant = s.steps_constant && r.steps_constant;
        s.mc_errors.mean += r.mc_errors.mean;
        s.mc_steps.mean += r.mc_steps.mean;
        s.rollouts += r.rollouts;
        var[r.policy].first += r.mc_errors.std_error * r.mc_errors.std_error;
        var[r.policy].second += r.mc_steps.std_error * r.mc_steps.std_error;
    }
    for (const auto& p : order) {
        ComparisonRow s = sums[p];
        s.mc_errors.std_error = std::sqrt(var[p].first);
        s.mc_steps.std_error = std::sqrt(var[p].second);
        rows.push_back(std::move(s));
    }
    return rows;
}

inline std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
    std::string out = "policy,maze,#Err.p,#Err.p_state,#steps,steps_constant,mc_err,mc_stderr,mc_steps,rollouts\n";
    for (const auto& r : rows) {
        out += csv_field(r.policy) + ',' + csv_field(r.maze) + ',' + csv_number(r.expected_errors) + ',' +
               csv_number(r.expected_errors_state) + ',' + (r.mean_steps ? csv_number(*r.mean_steps) : "") + ',' +
               (r.steps_constant ? "true" : "false") + ',';
        // Monte Carlo columns stay empty when no rollouts were run.
        if (r.rollouts)
            out += csv_number(r.mc_errors.mean) + ',' + csv_number(r.mc_errors.std_error) + ',' +
                   csv_number(r.mc_steps.mean);
        else
            out += ",,";
        out += ',' + std::to_string(r.rollouts) + '\n';
    }
    return out;
}

inline json to_json(const ComparisonRow& r) {
    return json{{"policy", r.policy},
                {"maze", r.maze},
                {"expected_errors", r.expected_errors},
                {"expected_errors_state", r.expected_errors_state},
                {"mean_steps", r.mean_steps ? json(*r.mean_steps) : json(nullptr)},
                {"steps_constant", r.steps_constant},
                {"mc_errors", r.mc_errors.mean},
                {"mc_stderr", r.mc_errors.std_error},
                {"mc_steps", r.mc_steps.mean},
                {"rollouts", r.rollouts}};
}

} // namespace predictable
