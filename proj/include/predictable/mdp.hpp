#pragma once

#include "predictable/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace predictable {

using StateId = std::size_t;
using ActionId = std::size_t;

/// One possible result of taking an action: the successor, its probability and
/// the reward attached to that particular transition.
struct Outcome {
    StateId next;
    double probability;
    double reward;
};

/// Reward as a function of a transition (s, a, s').
using RewardFn = std::function<double(StateId, ActionId, StateId)>;

/**
 * Explicit finite MDP / SSP.
 *
 * Every (state, action) pair owns a list of outcomes. Terminal states are
 * absorbing: all their actions self-loop with probability one and reward zero,
 * and the class enforces this itself. Expected rewards per (state, action) are
 * cached so solvers only touch the outcome lists for the expectation over
 * successor values.
 */
class TabularMDP {
public:
    TabularMDP() = default;

    TabularMDP(std::vector<std::string> state_names, std::vector<std::string> action_names,
               double discount, const std::vector<StateId>& terminals)
        : state_names_(std::move(state_names)), action_names_(std::move(action_names)),
          discount_(discount), terminal_(state_names_.size(), false),
          outcomes_(state_names_.size() * action_names_.size()),
          expected_reward_(state_names_.size() * action_names_.size(), 0.0) {
        if (state_names_.empty() || action_names_.empty())
            throw Error(Errc::invalid_input, "an MDP needs at least one state and one action");
        if (!(discount_ > 0.0 && discount_ <= 1.0))
            throw Error(Errc::invalid_input, "discount must lie in (0, 1]");
        for (StateId t : terminals) {
            if (t >= state_names_.size())
                throw Error(Errc::invalid_input, "terminal state index out of range");
            terminal_[t] = true;
        }
        if (discount_ == 1.0 && terminals.empty())
            throw Error(Errc::invalid_input, "discount 1 requires at least one terminal state");
        for (StateId t : terminals)
            for (ActionId a = 0; a < num_actions(); ++a)
                outcomes_[index(t, a)] = {Outcome{t, 1.0, 0.0}};
    }

    std::size_t num_states() const noexcept { return state_names_.size(); }
    std::size_t num_actions() const noexcept { return action_names_.size(); }
    double discount() const noexcept { return discount_; }

    bool is_terminal(StateId s) const { return terminal_.at(s); }
    bool has_terminals() const noexcept {
        return std::find(terminal_.begin(), terminal_.end(), true) != terminal_.end();
    }
    std::vector<StateId> terminals() const {
        std::vector<StateId> out;
        for (StateId s = 0; s < num_states(); ++s)
            if (terminal_[s]) out.push_back(s);
        return out;
    }

    const std::string& state_name(StateId s) const { return state_names_.at(s); }
    const std::string& action_name(ActionId a) const { return action_names_.at(a); }
    const std::vector<std::string>& state_names() const noexcept { return state_names_; }
    const std::vector<std::string>& action_names() const noexcept { return action_names_; }

    std::span<const Outcome> outcomes(StateId s, ActionId a) const { return outcomes_.at(index(s, a)); }
    double expected_reward(StateId s, ActionId a) const { return expected_reward_.at(index(s, a)); }

    /// Probability of landing in `next`; linear in the outcome count.
    double probability(StateId s, ActionId a, StateId next) const {
        double p = 0.0;
        for (const Outcome& o : outcomes(s, a))
            if (o.next == next) p += o.probability;
        return p;
    }

    /// Replaces the outcomes of a non-terminal pair. Outcomes with the same
    /// successor are merged only if they carry the same reward.
    void set_outcomes(StateId s, ActionId a, std::vector<Outcome> outs) {
        if (s >= num_states() || a >= num_actions())
            throw Error(Errc::invalid_input, "state or action index out of range");
        if (terminal_[s])
            throw Error(Errc::invalid_input, "terminal state " + state_names_[s] + " is absorbing");
        for (const Outcome& o : outs) {
            if (o.next >= num_states())
                throw Error(Errc::invalid_input, "successor index out of range");
            if (!(o.probability >= 0.0) || !std::isfinite(o.reward))
                throw Error(Errc::invalid_input, "outcome needs a non-negative probability and finite reward");
        }
        std::erase_if(outs, [](const Outcome& o) { return o.probability == 0.0; });
        double r = 0.0;
        for (const Outcome& o : outs) r += o.probability * o.reward;
        expected_reward_[index(s, a)] = r;
        outcomes_[index(s, a)] = std::move(outs);
    }

    /// Throws unless every distribution sums to one within 1e-12 and every
    /// terminal state is a zero-reward self-loop.
    void validate() const {
        for (StateId s = 0; s < num_states(); ++s) {
            for (ActionId a = 0; a < num_actions(); ++a) {
                const auto& outs = outcomes_[index(s, a)];
                double total = 0.0;
                for (const Outcome& o : outs) total += o.probability;
                if (std::abs(total - 1.0) > 1e-12)
                    throw Error(Errc::invalid_input, "transition (" + state_names_[s] + ", " +
                                                         action_names_[a] + ") sums to " +
                                                         std::to_string(total));
                if (terminal_[s] && (outs.size() != 1 || outs[0].next != s || outs[0].reward != 0.0))
                    throw Error(Errc::invalid_input, "terminal " + state_names_[s] + " must self-loop with reward 0");
            }
        }
    }

    /// Same dynamics, rewards recomputed from `reward` on every non-terminal
    /// transition. Terminal self-loops keep reward 0.
    TabularMDP with_rewards(const RewardFn& reward, double discount) const {
        TabularMDP out(state_names_, action_names_, discount, terminals());
        for (StateId s = 0; s < num_states(); ++s) {
            if (terminal_[s]) continue;
            for (ActionId a = 0; a < num_actions(); ++a) {
                std::vector<Outcome> outs(outcomes_[index(s, a)].begin(), outcomes_[index(s, a)].end());
                for (Outcome& o : outs) o.reward = reward(s, a, o.next);
                out.set_outcomes(s, a, std::move(outs));
            }
        }
        return out;
    }

    TabularMDP with_rewards(const RewardFn& reward) const { return with_rewards(reward, discount_); }

    /// Reward of a specific transition, or 0 when it is impossible.
    double reward(StateId s, ActionId a, StateId next) const {
        for (const Outcome& o : outcomes(s, a))
            if (o.next == next) return o.reward;
        return 0.0;
    }

private:
    std::size_t index(StateId s, ActionId a) const { return s * action_names_.size() + a; }

    std::vector<std::string> state_names_;
    std::vector<std::string> action_names_;
    double discount_ = 1.0;
    std::vector<bool> terminal_;
    std::vector<std::vector<Outcome>> outcomes_;
    std::vector<double> expected_reward_;
};

} // namespace predictable
