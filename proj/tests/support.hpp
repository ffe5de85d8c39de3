#pragma once

#include "predictable/predictable.hpp"

#include <filesystem>
#include <string>

namespace testing_support {

using namespace predictable;

inline std::filesystem::path fixture(const std::string& name) {
    return std::filesystem::path(PREDICTABLE_FIXTURES) / name;
}

inline GridMDP load_world(const std::string& name, double gamma = 0.99) {
    return build_grid_mdp(load_grid(fixture(name)), gamma);
}

/// Maze fixtures shipped with the repository.
inline const std::vector<std::string>& maze_fixtures() {
    static const std::vector<std::string> names{"corridor.grid",      "room2x2.grid",  "room3x3.grid",
                                                "slip_corridor.grid", "m8.grid",       "room_vs_corridor.grid",
                                                "corridor_room.grid"};
    return names;
}

inline const std::vector<std::string>& firefighter_fixtures() {
    static const std::vector<std::string> names{"ff_corridor.grid", "ff_room_corridor.grid"};
    return names;
}

/// Random small MDPs for property tests.
///
/// Undiscounted instances are SSPs: the last state is terminal, action 0
/// always makes progress towards it, and every reward is strictly negative,
/// so improper policies have value -inf and value iteration converges.
struct RandomMdpGen {
    Rng rng;
    explicit RandomMdpGen(std::uint64_t seed) : rng(seed) {}

    std::size_t between(std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }
    double real(double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

    TabularMDP operator()(bool undiscounted) {
        const std::size_t n = between(2, 6);
        const std::size_t k = between(2, 3);
        std::vector<std::string> states, actions;
        for (std::size_t s = 0; s < n; ++s) states.push_back("s" + std::to_string(s));
        for (std::size_t a = 0; a < k; ++a) actions.push_back("a" + std::to_string(a));
        const double gamma = undiscounted ? 1.0 : real(0.5, 0.95);
        std::vector<StateId> terminals;
        if (undiscounted) terminals.push_back(n - 1);
        TabularMDP mdp(states, actions, gamma, terminals);
        for (StateId s = 0; s < n; ++s) {
            if (mdp.is_terminal(s)) continue;
            for (ActionId a = 0; a < k; ++a) {
                const std::size_t fan = between(1, std::min<std::size_t>(3, n));
                std::vector<double> w(fan);
                double total = 0.0;
                for (double& x : w) total += (x = real(0.1, 1.0));
                std::vector<Outcome> outs;
                double acc = 0.0;
                for (std::size_t i = 0; i < fan; ++i) {
                    StateId next = rng.below(n);
                    if (undiscounted && a == 0 && i == 0) next = s + 1;
                    const double p = i + 1 == fan ? 1.0 - acc : w[i] / total;
                    acc += p;
                    const double r = undiscounted ? -real(0.1, 2.0) : real(-1.0, 1.0);
                    outs.push_back(Outcome{next, p, r});
                }
                // Same successor twice would need the same reward; merge instead.
                std::vector<Outcome> merged;
                for (const Outcome& o : outs) {
                    auto it = std::find_if(merged.begin(), merged.end(), [&](const Outcome& m) { return m.next == o.next; });
                    if (it == merged.end()) merged.push_back(o);
                    else it->probability += o.probability;
                }
                mdp.set_outcomes(s, a, std::move(merged));
            }
        }
        mdp.validate();
        return mdp;
    }

    StochasticPolicy policy(std::size_t n, std::size_t k) {
        StochasticPolicy pi(n, k);
        for (StateId s = 0; s < n; ++s) {
            std::vector<double> w(k);
            double total = 0.0;
            for (double& x : w) total += (x = rng.below(3) == 0 ? 0.0 : real(0.1, 1.0));
            if (total == 0.0) {
                w[0] = total = 1.0;
            }
            double acc = 0.0;
            for (ActionId a = 0; a < k; ++a) {
                const double p = a + 1 == k ? 1.0 - acc : w[a] / total;
                pi.set(s, a, std::max(0.0, p));
                acc += w[a] / total;
            }
        }
        return pi;
    }
};

} // namespace testing_support
