#pragma once

#include "predictable/error.hpp"
#include "predictable/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace predictable {

/// Per-state set of actions, kept sorted by action index.
using ActionSets = std::vector<std::vector<ActionId>>;

/// A distribution over actions for every state, stored row-major.
class StochasticPolicy {
public:
    StochasticPolicy() = default;
    StochasticPolicy(std::size_t num_states, std::size_t num_actions)
        : num_states_(num_states), num_actions_(num_actions), dist_(num_states * num_actions, 0.0) {}

    std::size_t num_states() const noexcept { return num_states_; }
    std::size_t num_actions() const noexcept { return num_actions_; }

    double prob(StateId s, ActionId a) const { return dist_.at(s * num_actions_ + a); }
    void set(StateId s, ActionId a, double p) { dist_.at(s * num_actions_ + a) = p; }

    std::span<const double> row(StateId s) const {
        return std::span<const double>(dist_).subspan(s * num_actions_, num_actions_);
    }

    /// Actions with positive probability in `s`.
    std::vector<ActionId> support(StateId s) const {
        std::vector<ActionId> out;
        for (ActionId a = 0; a < num_actions_; ++a)
            if (prob(s, a) > 0.0) out.push_back(a);
        return out;
    }

    bool is_deterministic() const {
        for (StateId s = 0; s < num_states_; ++s)
            if (support(s).size() != 1) return false;
        return true;
    }

    void validate() const {
        for (StateId s = 0; s < num_states_; ++s) {
            double total = 0.0;
            for (double p : row(s)) {
                if (!(p >= 0.0)) throw Error(Errc::invalid_input, "negative action probability");
                total += p;
            }
            if (std::abs(total - 1.0) > 1e-12)
                throw Error(Errc::invalid_input, "policy row " + std::to_string(s) + " sums to " + std::to_string(total));
        }
    }

    static StochasticPolicy deterministic(const std::vector<ActionId>& choice, std::size_t num_actions) {
        StochasticPolicy pi(choice.size(), num_actions);
        for (StateId s = 0; s < choice.size(); ++s) {
            if (choice[s] >= num_actions) throw Error(Errc::invalid_input, "action index out of range");
            pi.set(s, choice[s], 1.0);
        }
        return pi;
    }

    friend bool operator==(const StochasticPolicy&, const StochasticPolicy&) = default;

private:
    std::size_t num_states_ = 0;
    std::size_t num_actions_ = 0;
    std::vector<double> dist_;
};

/// Uniform over each ψ(s). Rejects empty sets.
inline StochasticPolicy stochastic_baseline(const ActionSets& psi, std::size_t num_actions) {
    StochasticPolicy pi(psi.size(), num_actions);
    for (StateId s = 0; s < psi.size(); ++s) {
        if (psi[s].empty())
            throw Error(Errc::invalid_input, "empty action set in state " + std::to_string(s));
        const double p = 1.0 / static_cast<double>(psi[s].size());
        for (ActionId a : psi[s]) {
            if (a >= num_actions) throw Error(Errc::invalid_input, "action index out of range");
            pi.set(s, a, p);
        }
    }
    return pi;
}

/// Throws unless `order` is a permutation of 0..num_actions-1.
inline void check_action_order(const std::vector<ActionId>& order, std::size_t num_actions) {
    if (order.size() != num_actions)
        throw Error(Errc::invalid_input, "action order must rank all " + std::to_string(num_actions) + " actions");
    std::vector<bool> seen(num_actions, false);
    for (ActionId a : order) {
        if (a >= num_actions || seen[a]) throw Error(Errc::invalid_input, "action order is not a permutation");
        seen[a] = true;
    }
}

/// Deterministic policy taking the first member of ψ(s) according to `order`
/// (order[0] is the most preferred action).
inline StochasticPolicy biased_baseline(const ActionSets& psi, const std::vector<ActionId>& order,
                                        std::size_t num_actions) {
    check_action_order(order, num_actions);
    std::vector<ActionId> choice(psi.size());
    for (StateId s = 0; s < psi.size(); ++s) {
        if (psi[s].empty())
            throw Error(Errc::invalid_input, "empty action set in state " + std::to_string(s));
        auto it = std::find_if(order.begin(), order.end(), [&](ActionId a) {
            return std::find(psi[s].begin(), psi[s].end(), a) != psi[s].end();
        });
        choice[s] = *it;
    }
    return StochasticPolicy::deterministic(choice, num_actions);
}

} // namespace predictable
