#pragma once

#include "predictable/error.hpp"
#include "predictable/grid.hpp"
#include "predictable/mdp.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace predictable {

/// Action indices shared by both grid domains, in the order used for
/// deterministic tie-breaking.
enum Move : ActionId { up = 0, down = 1, left = 2, right = 3 };

inline constexpr std::array<const char*, 4> kMoveNames{"up", "down", "left", "right"};

inline std::vector<std::string> move_names() { return {kMoveNames.begin(), kMoveNames.end()}; }

inline std::optional<ActionId> parse_move(std::string_view name) {
    for (ActionId a = 0; a < kMoveNames.size(); ++a)
        if (name == kMoveNames[a]) return a;
    return std::nullopt;
}

inline Coord step(Coord c, ActionId a, int distance = 1) {
    switch (a) {
    case up: return {c.x, c.y + distance};
    case down: return {c.x, c.y - distance};
    case left: return {c.x - distance, c.y};
    default: return {c.x + distance, c.y};
    }
}

namespace reward {
inline constexpr double move = -0.04;
inline constexpr double wall_hit = -1.0;
inline constexpr double goal = 1.0;
inline constexpr double fire_with_water = 1.0;
} // namespace reward

/// A grid-world MDP together with the mapping between states and cells.
struct GridMDP {
    GridSpec grid;
    TabularMDP mdp;
    std::vector<Coord> coords;
    std::vector<bool> water; ///< tank flag per state (always false for mazes)
    StateId start = 0;

    /// State at `c` (and tank flag `w` for firefighter grids), if any.
    std::optional<StateId> state_at(Coord c, bool w = false) const {
        for (StateId s = 0; s < coords.size(); ++s)
            if (coords[s] == c && water[s] == w) return s;
        return std::nullopt;
    }
};

/// Where a move from `from` lands: a list of (cell, probability), or nothing
/// when the first cell is blocked (a wall hit).
struct MoveResult {
    bool wall_hit = false;
    std::vector<std::pair<Coord, double>> landings;
};

/**
 * Grid movement rule shared by both domains. On a slippery cell the agent
 * moves two cells with probability p, provided the second cell is open and
 * the first one is not a terminal (terminals absorb the move). Otherwise the
 * one-cell move happens with probability one.
 */
inline MoveResult resolve_move(const GridSpec& grid, Coord from, ActionId a) {
    MoveResult out;
    const Coord one = step(from, a, 1);
    if (grid.blocked(one)) {
        out.wall_hit = true;
        return out;
    }
    const Coord two = step(from, a, 2);
    const double p = grid.slip_probability;
    const bool can_slip = grid.at(from) == Cell::slippery && grid.at(one) != Cell::terminal && !grid.blocked(two);
    if (can_slip && p > 0.0) {
        if (p < 1.0) out.landings.emplace_back(one, 1.0 - p);
        out.landings.emplace_back(two, p);
    } else {
        out.landings.emplace_back(one, 1.0);
    }
    return out;
}

/// Maze SSP: states are the open cells in reading order (top row first),
/// terminals absorb, γ = 1.
inline GridMDP build_maze_mdp(const GridSpec& grid) {
    if (grid.kind != GridKind::maze) throw Error(Errc::invalid_input, "grid is not a maze");
    GridMDP out;
    out.grid = grid;
    std::vector<std::string> names;
    std::vector<StateId> terminals;
    std::vector<std::vector<StateId>> index(static_cast<std::size_t>(grid.height),
                                            std::vector<StateId>(static_cast<std::size_t>(grid.width), SIZE_MAX));
    for (int y = grid.height - 1; y >= 0; --y)
        for (int x = 0; x < grid.width; ++x) {
            const Coord c{x, y};
            if (grid.blocked(c)) continue;
            index[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] = out.coords.size();
            if (grid.at(c) == Cell::terminal) terminals.push_back(out.coords.size());
            out.coords.push_back(c);
            names.push_back(cell_label(c));
        }
    out.water.assign(out.coords.size(), false);
    out.mdp = TabularMDP(names, move_names(), 1.0, terminals);
    auto id = [&](Coord c) { return index[static_cast<std::size_t>(c.y)][static_cast<std::size_t>(c.x)]; };

    for (StateId s = 0; s < out.coords.size(); ++s) {
        if (out.mdp.is_terminal(s)) continue;
        for (ActionId a = 0; a < 4; ++a) {
            const MoveResult move = resolve_move(grid, out.coords[s], a);
            if (move.wall_hit) {
                out.mdp.set_outcomes(s, a, {Outcome{s, 1.0, reward::wall_hit}});
                continue;
            }
            std::vector<Outcome> outs;
            for (const auto& [cell, p] : move.landings) {
                const double r = reward::move + (grid.at(cell) == Cell::terminal ? reward::goal : 0.0);
                outs.push_back(Outcome{id(cell), p, r});
            }
            out.mdp.set_outcomes(s, a, std::move(outs));
        }
    }
    out.start = id(grid.start);
    out.mdp.validate();
    return out;
}

/**
 * Firefighter MDP over (cell, tank) states, no terminals. Landing on a fire
 * empties the tank (reward +1 if it was full), landing on a water source
 * fills it. A wall hit leaves the agent and its tank unchanged. The start
 * state has an empty tank.
 */
inline GridMDP build_firefighter_mdp(const GridSpec& grid, double gamma) {
    if (grid.kind != GridKind::firefighter) throw Error(Errc::invalid_input, "grid is not a firefighter grid");
    if (!(gamma > 0.0 && gamma < 1.0))
        throw Error(Errc::invalid_input, "firefighter problems have no terminals and need a discount in (0,1)");
    GridMDP out;
    out.grid = grid;
    std::vector<std::string> names;
    std::vector<std::vector<StateId>> index(static_cast<std::size_t>(grid.height),
                                            std::vector<StateId>(static_cast<std::size_t>(grid.width), SIZE_MAX));
    for (int y = grid.height - 1; y >= 0; --y)
        for (int x = 0; x < grid.width; ++x) {
            const Coord c{x, y};
            if (grid.blocked(c)) continue;
            index[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] = out.coords.size();
            for (bool w : {false, true}) {
                out.coords.push_back(c);
                out.water.push_back(w);
                names.push_back(cell_label(c) + (w ? "+w" : "-w"));
            }
        }
    out.mdp = TabularMDP(names, move_names(), gamma, {});
    auto id = [&](Coord c, bool w) {
        return index[static_cast<std::size_t>(c.y)][static_cast<std::size_t>(c.x)] + (w ? 1 : 0);
    };

    for (StateId s = 0; s < out.coords.size(); ++s) {
        const bool w = out.water[s];
        for (ActionId a = 0; a < 4; ++a) {
            const MoveResult move = resolve_move(grid, out.coords[s], a);
            if (move.wall_hit) {
                out.mdp.set_outcomes(s, a, {Outcome{s, 1.0, reward::wall_hit}});
                continue;
            }
            std::vector<Outcome> outs;
            for (const auto& [cell, p] : move.landings) {
                double r = reward::move;
                bool tank = w;
                if (grid.at(cell) == Cell::fire) {
                    if (w) r += reward::fire_with_water;
                    tank = false;
                } else if (grid.at(cell) == Cell::water) {
                    tank = true;
                }
                outs.push_back(Outcome{id(cell, tank), p, r});
            }
            out.mdp.set_outcomes(s, a, std::move(outs));
        }
    }
    out.start = id(grid.start, false);
    out.mdp.validate();
    return out;
}

/// Builds the domain matching the grid kind; `gamma` only applies to
/// firefighter grids (mazes are undiscounted SSPs).
inline GridMDP build_grid_mdp(const GridSpec& grid, double gamma = 0.99) {
    return grid.kind == GridKind::maze ? build_maze_mdp(grid) : build_firefighter_mdp(grid, gamma);
}

} // namespace predictable
