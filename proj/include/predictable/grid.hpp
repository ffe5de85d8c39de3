#pragma once

#include "predictable/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace predictable {

enum class Cell : char {
    wall = '#',
    normal = '.',
    slippery = '~',
    terminal = 'G',
    fire = 'F',
    water = 'W',
};

enum class GridKind { maze, firefighter };

constexpr std::string_view to_string(GridKind kind) noexcept {
    return kind == GridKind::maze ? "maze" : "firefighter";
}

/// Cell coordinates; y grows upwards, so the last text row is y = 0.
struct Coord {
    int x = 0;
    int y = 0;
    friend bool operator==(const Coord&, const Coord&) = default;
};

/// Column letter + row number ("B2"), the labelling used by the maze figures.
inline std::string cell_label(Coord c) {
    if (c.x >= 0 && c.x < 26) return std::string(1, static_cast<char>('A' + c.x)) + std::to_string(c.y);
    return "(" + std::to_string(c.x) + "," + std::to_string(c.y) + ")";
}

/**
 * Parsed grid-world layout.
 *
 * Text format, one character per cell, top row first:
 *
 *     kind=maze p=0.5
 *     #####
 *     #S.G#
 *     #####
 *
 * '#' wall, '.' normal, '~' slippery, 'G' terminal, 'F' fire, 'W' water and
 * 'S' the start (a normal cell). The header line is optional and defaults to
 * `kind=maze p=0.5`. Cells outside the grid behave like walls.
 */
struct GridSpec {
    GridKind kind = GridKind::maze;
    double slip_probability = 0.5;
    int width = 0;
    int height = 0;
    std::vector<Cell> cells; ///< row-major, y = 0 first
    Coord start;

    bool inside(Coord c) const { return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height; }

    Cell at(Coord c) const {
        if (!inside(c)) return Cell::wall;
        return cells[static_cast<std::size_t>(c.y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(c.x)];
    }

    bool blocked(Coord c) const { return at(c) == Cell::wall; }

    std::size_t count(Cell kind) const {
        std::size_t n = 0;
        for (Cell c : cells) n += (c == kind);
        return n;
    }

    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

namespace detail {

inline std::string shortest_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline void parse_header(std::string_view line, std::size_t lineno, GridSpec& grid) {
    std::size_t pos = 0;
    while (pos < line.size()) {
        while (pos < line.size() && line[pos] == ' ') ++pos;
        if (pos >= line.size()) break;
        std::size_t end = line.find(' ', pos);
        if (end == std::string_view::npos) end = line.size();
        std::string_view token = line.substr(pos, end - pos);
        const std::size_t column = pos + 1;
        const std::size_t eq = token.find('=');
        if (eq == std::string_view::npos) throw ParseError(lineno, column, "expected key=value in header");
        std::string_view key = token.substr(0, eq);
        std::string_view value = token.substr(eq + 1);
        if (key == "kind") {
            if (value == "maze") grid.kind = GridKind::maze;
            else if (value == "firefighter") grid.kind = GridKind::firefighter;
            else throw ParseError(lineno, column + eq + 1, "unknown grid kind '" + std::string(value) + "'");
        } else if (key == "p") {
            double p = 0.0;
            auto res = std::from_chars(value.data(), value.data() + value.size(), p);
            if (res.ec != std::errc() || res.ptr != value.data() + value.size() || !(p >= 0.0 && p <= 1.0))
                throw ParseError(lineno, column + eq + 1, "slip probability must be a real in [0,1]");
            grid.slip_probability = p;
        } else {
            throw ParseError(lineno, column, "unknown header key '" + std::string(key) + "'");
        }
        pos = end;
    }
}

} // namespace detail

/// Parses a grid document; errors carry the 1-based line and column.
inline GridSpec parse_grid(std::string_view text) {
    GridSpec grid;
    std::vector<std::pair<std::size_t, std::string>> rows;
    std::size_t lineno = 0;
    std::size_t pos = 0;
    bool header_allowed = true;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) {
            if (end == text.size()) break;
            continue;
        }
        if (header_allowed && line.starts_with("kind=")) {
            detail::parse_header(line, lineno, grid);
            header_allowed = false;
            continue;
        }
        header_allowed = false;
        rows.emplace_back(lineno, std::string(line));
        if (end == text.size()) break;
    }
    if (rows.empty()) throw ParseError(lineno == 0 ? 1 : lineno, 1, "grid has no rows");

    const std::size_t width = rows.front().second.size();
    grid.width = static_cast<int>(width);
    grid.height = static_cast<int>(rows.size());
    grid.cells.assign(width * rows.size(), Cell::wall);
    std::optional<Coord> start;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& [ln, row] = rows[r];
        if (row.size() != width)
            throw ParseError(ln, std::min(row.size(), width) + 1,
                             "ragged row: expected " + std::to_string(width) + " cells, found " + std::to_string(row.size()));
        const int y = grid.height - 1 - static_cast<int>(r);
        for (std::size_t x = 0; x < width; ++x) {
            Cell cell;
            switch (row[x]) {
            case '#': cell = Cell::wall; break;
            case '.': cell = Cell::normal; break;
            case '~': cell = Cell::slippery; break;
            case 'G': cell = Cell::terminal; break;
            case 'F': cell = Cell::fire; break;
            case 'W': cell = Cell::water; break;
            case 'S':
                if (start) throw ParseError(ln, x + 1, "multiple start cells");
                start = Coord{static_cast<int>(x), y};
                cell = Cell::normal;
                break;
            default: throw ParseError(ln, x + 1, std::string("unknown cell character '") + row[x] + "'");
            }
            grid.cells[static_cast<std::size_t>(y) * width + x] = cell;
        }
    }
    if (!start) throw ParseError(rows.front().first, 1, "grid has no start cell 'S'");
    grid.start = *start;

    const std::size_t first = rows.front().first;
    if (grid.kind == GridKind::maze) {
        if (grid.count(Cell::terminal) == 0) throw ParseError(first, 1, "maze needs at least one terminal 'G'");
        if (grid.count(Cell::fire) + grid.count(Cell::water) != 0)
            throw ParseError(first, 1, "fires and water sources only exist in firefighter grids");
    } else {
        if (grid.count(Cell::fire) == 0 || grid.count(Cell::water) == 0)
            throw ParseError(first, 1, "firefighter grid needs at least one fire 'F' and one water source 'W'");
        if (grid.count(Cell::terminal) != 0) throw ParseError(first, 1, "firefighter grids have no terminal cells");
    }
    return grid;
}

/// Inverse of parse_grid; always writes the header line.
inline std::string render_grid(const GridSpec& grid) {
    std::string out = "kind=" + std::string(to_string(grid.kind)) + " p=" + detail::shortest_double(grid.slip_probability) + "\n";
    for (int y = grid.height - 1; y >= 0; --y) {
        for (int x = 0; x < grid.width; ++x) {
            const Coord c{x, y};
            out += c == grid.start ? 'S' : static_cast<char>(grid.at(c));
        }
        out += '\n';
    }
    return out;
}

/// 64-bit FNV-1a, used for content hashes in artifact provenance.
inline std::uint64_t fnv1a(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = digits[v & 0xF];
    return out;
}

inline std::string grid_hash(const GridSpec& grid) { return hex64(fnv1a(render_grid(grid))); }

} // namespace predictable
