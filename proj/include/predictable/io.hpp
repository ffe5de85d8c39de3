#pragma once

#include "predictable/error.hpp"
#include "predictable/grid.hpp"
#include "predictable/mdp.hpp"
#include "predictable/policy.hpp"
#include "predictable/predictability.hpp"
#include "predictable/simulate.hpp"
#include "predictable/solver.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace predictable {

using json = nlohmann::json;

/// Version of every JSON artifact layout written by this library.
inline constexpr int kSchemaVersion = 1;

inline std::string read_file(const std::filesystem::path& path, Errc missing = Errc::io_error) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(missing, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes through a temporary file and a rename so readers never observe a
/// half-written artifact.
inline void write_file(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
        out << content;
        if (!out) throw Error(Errc::io_error, "short write to " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

inline GridSpec load_grid(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error(Errc::grid_not_found, "grid file not found: " + path.string());
    return parse_grid(read_file(path, Errc::grid_not_found));
}

// ---------------------------------------------------------------------------
// Artifact layouts. All arrays are indexed by state (and action), and names
// are carried alongside so a file is self-describing.

inline json header(std::string_view kind, const TabularMDP& mdp) {
    return json{{"schema_version", kSchemaVersion},
                {"kind", kind},
                {"states", mdp.state_names()},
                {"actions", mdp.action_names()}};
}

inline json to_json(const ValueFunction& vf, const TabularMDP& mdp) {
    json j = header("value_function", mdp);
    j["values"] = vf.values;
    json q = json::array();
    for (StateId s = 0; s < vf.num_states(); ++s) {
        json row = json::array();
        for (ActionId a = 0; a < vf.num_actions; ++a) row.push_back(vf.q_value(s, a));
        q.push_back(std::move(row));
    }
    j["q"] = std::move(q);
    j["residual"] = vf.residual;
    j["iterations"] = vf.iterations;
    return j;
}

inline json to_json(const StochasticPolicy& pi, const TabularMDP& mdp) {
    json j = header("policy", mdp);
    json dist = json::array();
    for (StateId s = 0; s < pi.num_states(); ++s) {
        auto row = pi.row(s);
        dist.push_back(std::vector<double>(row.begin(), row.end()));
    }
    j["dist"] = std::move(dist);
    return j;
}

inline json action_sets_to_json(const ActionSets& sets, const TabularMDP& mdp) {
    json j = header("action_sets", mdp);
    json out = json::array();
    for (const auto& set : sets) {
        json names = json::array();
        for (ActionId a : set) names.push_back(mdp.action_name(a));
        out.push_back(std::move(names));
    }
    j["sets"] = std::move(out);
    return j;
}

namespace detail {

inline void expect_layout(const json& j, std::string_view kind, const TabularMDP& mdp) {
    if (!j.is_object()) throw SchemaError("$", "expected an object");
    if (j.value("kind", std::string{}) != kind) throw SchemaError("kind", "expected \"" + std::string(kind) + "\"");
    if (j.value("schema_version", 0) != kSchemaVersion) throw SchemaError("schema_version", "unsupported version");
    if (j.at("states") != json(mdp.state_names())) throw SchemaError("states", "state names do not match the model");
    if (j.at("actions") != json(mdp.action_names())) throw SchemaError("actions", "action names do not match the model");
}

} // namespace detail

inline StochasticPolicy policy_from_json(const json& j, const TabularMDP& mdp) {
    detail::expect_layout(j, "policy", mdp);
    const json& dist = j.at("dist");
    if (!dist.is_array() || dist.size() != mdp.num_states()) throw SchemaError("dist", "expected one row per state");
    StochasticPolicy pi(mdp.num_states(), mdp.num_actions());
    for (StateId s = 0; s < mdp.num_states(); ++s) {
        if (!dist[s].is_array() || dist[s].size() != mdp.num_actions())
            throw SchemaError("dist[" + std::to_string(s) + "]", "expected one probability per action");
        for (ActionId a = 0; a < mdp.num_actions(); ++a) pi.set(s, a, dist[s][a].get<double>());
    }
    pi.validate();
    return pi;
}

inline ValueFunction value_function_from_json(const json& j, const TabularMDP& mdp) {
    detail::expect_layout(j, "value_function", mdp);
    ValueFunction vf;
    vf.num_actions = mdp.num_actions();
    vf.values = j.at("values").get<std::vector<double>>();
    for (const auto& row : j.at("q"))
        for (const auto& v : row) vf.q.push_back(v.get<double>());
    vf.residual = j.at("residual").get<double>();
    vf.iterations = j.at("iterations").get<std::size_t>();
    if (vf.values.size() != mdp.num_states() || vf.q.size() != mdp.num_states() * mdp.num_actions())
        throw SchemaError("values", "size does not match the model");
    return vf;
}

inline json to_json(const TabularMDP& mdp) {
    json j = header("mdp", mdp);
    j["discount"] = mdp.discount();
    j["terminals"] = mdp.terminals();
    json transitions = json::array();
    for (StateId s = 0; s < mdp.num_states(); ++s) {
        json per_action = json::array();
        for (ActionId a = 0; a < mdp.num_actions(); ++a) {
            json outs = json::array();
            for (const Outcome& o : mdp.outcomes(s, a))
                outs.push_back({{"next", o.next}, {"p", o.probability}, {"r", o.reward}});
            per_action.push_back(std::move(outs));
        }
        transitions.push_back(std::move(per_action));
    }
    j["transitions"] = std::move(transitions);
    return j;
}

inline json pred_table_to_json(const PredictabilityProblem& problem) {
    json j = header("pred_distribution", problem.base);
    j["type"] = to_string(problem.type);
    j["tie_tolerance"] = problem.tie_tolerance;
    const auto table = pred_table(problem);
    json rows = json::array();
    for (StateId s = 0; s < table.size(); ++s) {
        if (problem.base.is_terminal(s)) {
            rows.push_back(nullptr);
            continue;
        }
        json names = json::array();
        for (std::size_t t : table[s].argmax)
            names.push_back(problem.type == TypeKind::action ? problem.base.action_name(t) : problem.base.state_name(t));
        rows.push_back({{"argmax", std::move(names)}, {"pred", 1.0 / static_cast<double>(table[s].argmax.size())}});
    }
    j["rows"] = std::move(rows);
    return j;
}

/// One JSON-lines record per trajectory.
inline json to_json(const Trajectory& traj, const TabularMDP& mdp) {
    json steps = json::array();
    for (const TrajectoryStep& st : traj.steps)
        steps.push_back({{"state", mdp.state_name(st.state)},
                         {"action", mdp.action_name(st.action)},
                         {"next", mdp.state_name(st.next)},
                         {"base_reward", st.base_reward},
                         {"pred_reward", st.pred_reward}});
    return json{{"seed", traj.seed},
                {"rng", traj.rng_algorithm},
                {"terminated", traj.terminated},
                {"length", traj.length()},
                {"steps", std::move(steps)}};
}

/// Where an artifact came from.
struct Provenance {
    std::string grid_hash;
    std::string observer;
    std::string phi;
    double gamma = 1.0;
    double epsilon = 1e-3;
    double eta = 1e-9;
    std::string config_hash;
};

inline json to_json(const Provenance& p) {
    return json{{"schema_version", kSchemaVersion}, {"grid_hash", p.grid_hash}, {"observer", p.observer},
                {"phi", p.phi},                     {"gamma", p.gamma},         {"epsilon", p.epsilon},
                {"eta", p.eta},                     {"config_hash", p.config_hash}};
}

inline Provenance provenance_from_json(const json& j) {
    Provenance p;
    p.grid_hash = j.at("grid_hash").get<std::string>();
    p.observer = j.at("observer").get<std::string>();
    p.phi = j.at("phi").get<std::string>();
    p.gamma = j.at("gamma").get<double>();
    p.epsilon = j.at("epsilon").get<double>();
    p.eta = j.at("eta").get<double>();
    p.config_hash = j.at("config_hash").get<std::string>();
    return p;
}

/// RFC 4180 quoting for a single CSV field.
inline std::string csv_field(std::string_view value) {
    if (value.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(value);
    std::string out = "\"";
    for (char c : value) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::string csv_number(double v) {
    if (!std::isfinite(v)) return "";
    return detail::shortest_double(v);
}

} // namespace predictable
