#pragma once

#include "predictable/domains.hpp"
#include "predictable/grid.hpp"
#include "predictable/policy.hpp"

#include <algorithm>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

namespace predictable {

/**
 * Monospace arrow diagram. Each open cell is four slots (up, down, left,
 * right); a slot shows the arrow when the action is in the cell's set and a
 * filler otherwise ('.' normal, '~' slippery, 'f' fire, 'w' water). Walls are
 * "####", terminals "[GG]". Firefighter grids show the layer selected by
 * `water`. Rows are printed top first, labelled like the maze figures.
 */
inline std::string render_policy(const GridMDP& world, const ActionSets& sets,
                                 const std::optional<std::vector<double>>& values = std::nullopt, bool water = false) {
    static constexpr const char* arrows[4] = {"↑", "↓", "←", "→"};
    const GridSpec& grid = world.grid;
    std::string out;
    auto header = [&] {
        out += "   ";
        for (int x = 0; x < grid.width; ++x) {
            out += "  ";
            out += x < 26 ? static_cast<char>('A' + x) : '?';
            out += "  ";
        }
        out += '\n';
    };
    header();
    for (int y = grid.height - 1; y >= 0; --y) {
        char label[16];
        std::snprintf(label, sizeof label, "%2d ", y);
        out += label;
        for (int x = 0; x < grid.width; ++x) {
            const Coord c{x, y};
            const Cell cell = grid.at(c);
            if (cell == Cell::wall) {
                out += "####";
            } else if (cell == Cell::terminal) {
                out += "[GG]";
            } else {
                const char filler = cell == Cell::slippery ? '~'
                                    : cell == Cell::fire  ? 'f'
                                    : cell == Cell::water ? 'w'
                                                          : '.';
                const auto s = world.state_at(c, grid.kind == GridKind::firefighter && water);
                for (ActionId a = 0; a < 4; ++a) {
                    const bool shown = s && *s < sets.size() &&
                                       std::find(sets[*s].begin(), sets[*s].end(), a) != sets[*s].end();
                    if (shown) out += arrows[a];
                    else out += filler;
                }
            }
            out += ' ';
        }
        out += '\n';
    }
    if (values) {
        out += '\n';
        for (int y = grid.height - 1; y >= 0; --y) {
            char label[16];
            std::snprintf(label, sizeof label, "%2d ", y);
            out += label;
            for (int x = 0; x < grid.width; ++x) {
                const auto s = world.state_at({x, y}, grid.kind == GridKind::firefighter && water);
                char buf[32];
                if (!s) std::snprintf(buf, sizeof buf, "%8s", "#");
                else std::snprintf(buf, sizeof buf, "%8.3f", (*values)[*s]);
                out += buf;
            }
            out += '\n';
        }
    }
    return out;
}

} // namespace predictable
