#pragma once

#include "predictable/comparison.hpp"
#include "predictable/domains.hpp"
#include "predictable/io.hpp"
#include "predictable/rng.hpp"
#include "predictable/simulate.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace predictable::experiment {

struct Block {
    PolicyKind policy = PolicyKind::mdp_s;
    std::string maze;
    std::vector<ActionId> bias; ///< mdp-b only

    bool operator==(const Block&) const = default;
};

/// A maze forced to a fixed 1-based position within every policy's run of
/// blocks.
struct Constraint {
    std::string maze;
    std::size_t position = 1;

    bool operator==(const Constraint&) const = default;
};

/// Default bias orders: the four rotations of up, right, down, left.
inline std::vector<std::vector<ActionId>> default_bias_orders() {
    return {{up, right, down, left}, {right, down, left, up}, {down, left, up, right}, {left, up, right, down}};
}

struct ExperimentPlan {
    std::uint64_t seed = 0;
    double epsilon = 1e-3;
    double gamma = 0.99;          ///< firefighter mazes only
    std::size_t max_steps = 0;    ///< 0: default horizon of each maze
    bool layout_visible = true;
    bool feedback = true;
    std::int64_t inter_step_delay_ms = 0;
    std::map<std::string, GridSpec> mazes;
    std::vector<std::vector<ActionId>> bias_orders = default_bias_orders();
    std::vector<Block> blocks;
    std::vector<Constraint> constraints;

    bool operator==(const ExperimentPlan&) const = default;
};

namespace detail {

inline std::string path_of(std::string_view base, std::size_t i) { return std::string(base) + "[" + std::to_string(i) + "]"; }

inline std::vector<ActionId> order_from_json(const json& j, const std::string& field) {
    if (!j.is_array()) throw SchemaError(field, "expected an array of action names");
    std::vector<ActionId> order;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto a = j[i].is_string() ? parse_move(j[i].get<std::string>()) : std::nullopt;
        if (!a) throw SchemaError(path_of(field, i), "expected one of up, down, left, right");
        order.push_back(*a);
    }
    try {
        check_action_order(order, kMoveNames.size());
    } catch (const Error& e) {
        throw SchemaError(field, e.what());
    }
    return order;
}

inline json order_to_json(const std::vector<ActionId>& order) {
    json out = json::array();
    for (ActionId a : order) out.push_back(kMoveNames.at(a));
    return out;
}

template <class T>
T field_or(const json& j, const char* name, T fallback) {
    if (!j.contains(name)) return fallback;
    try {
        return j.at(name).get<T>();
    } catch (const json::exception&) {
        throw SchemaError(name, "wrong type");
    }
}

} // namespace detail

/**
 * Checks the plan invariants: every (policy, maze) pair of the plan's
 * policies and mazes appears exactly once, mdp-b blocks carry a bias order,
 * and pinned mazes sit at their position in every policy's run of blocks.
 */
inline void validate_plan(const ExperimentPlan& plan) {
    if (plan.mazes.empty()) throw SchemaError("mazes", "at least one maze is required");
    if (plan.blocks.empty()) throw SchemaError("blocks", "at least one block is required");
    if (!(plan.epsilon > 0.0)) throw SchemaError("epsilon", "must be positive");
    if (!(plan.gamma > 0.0 && plan.gamma < 1.0)) throw SchemaError("gamma", "must lie in (0,1)");
    if (plan.inter_step_delay_ms < 0) throw SchemaError("inter_step_delay_ms", "must be non-negative");
    for (std::size_t i = 0; i < plan.bias_orders.size(); ++i) {
        try {
            check_action_order(plan.bias_orders[i], kMoveNames.size());
        } catch (const Error& e) {
            throw SchemaError(detail::path_of("bias_orders", i), e.what());
        }
    }

    std::set<std::pair<PolicyKind, std::string>> seen;
    std::set<PolicyKind> policies;
    std::set<std::string> mazes;
    for (std::size_t i = 0; i < plan.blocks.size(); ++i) {
        const Block& b = plan.blocks[i];
        const auto where = detail::path_of("blocks", i);
        if (!plan.mazes.count(b.maze)) throw SchemaError(where + ".maze", "unknown maze \"" + b.maze + "\"");
        if (!seen.emplace(b.policy, b.maze).second)
            throw SchemaError(where, "duplicate (" + std::string(to_string(b.policy)) + ", " + b.maze + ") block");
        if (b.policy == PolicyKind::mdp_b) {
            if (b.bias.empty()) throw SchemaError(where + ".bias", "mdp-b blocks need a bias order");
            try {
                check_action_order(b.bias, kMoveNames.size());
            } catch (const Error& e) {
                throw SchemaError(where + ".bias", e.what());
            }
        } else if (!b.bias.empty()) {
            throw SchemaError(where + ".bias", "only mdp-b blocks take a bias order");
        }
        policies.insert(b.policy);
        mazes.insert(b.maze);
    }
    for (PolicyKind p : policies)
        for (const auto& m : mazes)
            if (!seen.count({p, m}))
                throw SchemaError("blocks", "missing (" + std::string(to_string(p)) + ", " + m + ") block");

    for (std::size_t i = 0; i < plan.constraints.size(); ++i) {
        const Constraint& c = plan.constraints[i];
        const auto where = detail::path_of("constraints", i);
        if (!mazes.count(c.maze)) throw SchemaError(where + ".maze", "maze \"" + c.maze + "\" is not in any block");
        if (c.position < 1 || c.position > mazes.size())
            throw SchemaError(where + ".position", "must lie in 1.." + std::to_string(mazes.size()));
        for (PolicyKind p : policies) {
            std::size_t pos = 0;
            for (const Block& b : plan.blocks) {
                if (b.policy != p) continue;
                ++pos;
                if (b.maze == c.maze && pos != c.position)
                    throw SchemaError(where, "maze \"" + c.maze + "\" is at position " + std::to_string(pos) +
                                                 " for " + std::string(to_string(p)));
            }
        }
    }
}

/**
 * Reads a plan. Mazes are given as a path (relative to `base_dir`), as
 * {"path": ...} or inline as {"grid": "<grid text>"}.
 */
inline ExperimentPlan plan_from_json(const json& j, const std::filesystem::path& base_dir = {}) {
    if (!j.is_object()) throw SchemaError("$", "expected an object");
    if (detail::field_or<int>(j, "schema_version", kSchemaVersion) != kSchemaVersion)
        throw SchemaError("schema_version", "unsupported version");
    ExperimentPlan plan;
    plan.seed = detail::field_or<std::uint64_t>(j, "seed", 0);
    plan.epsilon = detail::field_or<double>(j, "epsilon", plan.epsilon);
    plan.gamma = detail::field_or<double>(j, "gamma", plan.gamma);
    plan.max_steps = detail::field_or<std::size_t>(j, "max_steps", 0);
    plan.layout_visible = detail::field_or<bool>(j, "layout_visible", true);
    plan.feedback = detail::field_or<bool>(j, "feedback", true);
    plan.inter_step_delay_ms = detail::field_or<std::int64_t>(j, "inter_step_delay_ms", 0);

    if (!j.contains("mazes") || !j["mazes"].is_object()) throw SchemaError("mazes", "expected an object of mazes");
    for (const auto& [id, value] : j["mazes"].items()) {
        const std::string where = "mazes." + id;
        try {
            if (value.is_string()) {
                plan.mazes.emplace(id, load_grid(base_dir / value.get<std::string>()));
            } else if (value.is_object() && value.contains("grid")) {
                plan.mazes.emplace(id, parse_grid(value["grid"].get<std::string>()));
            } else if (value.is_object() && value.contains("path")) {
                plan.mazes.emplace(id, load_grid(base_dir / value["path"].get<std::string>()));
            } else {
                throw SchemaError(where, "expected a path or {\"grid\": ...}");
            }
        } catch (const SchemaError&) {
            throw;
        } catch (const std::exception& e) {
            throw SchemaError(where, e.what());
        }
    }

    if (j.contains("bias_orders")) {
        const json& orders = j["bias_orders"];
        if (!orders.is_array() || orders.empty()) throw SchemaError("bias_orders", "expected a non-empty array");
        plan.bias_orders.clear();
        for (std::size_t i = 0; i < orders.size(); ++i)
            plan.bias_orders.push_back(detail::order_from_json(orders[i], detail::path_of("bias_orders", i)));
    }

    if (!j.contains("blocks") || !j["blocks"].is_array()) throw SchemaError("blocks", "expected an array of blocks");
    for (std::size_t i = 0; i < j["blocks"].size(); ++i) {
        const json& b = j["blocks"][i];
        const auto where = detail::path_of("blocks", i);
        if (!b.is_object()) throw SchemaError(where, "expected an object");
        Block block;
        const auto kind = b.contains("policy") && b["policy"].is_string()
                              ? parse_policy_kind(b["policy"].get<std::string>())
                              : std::nullopt;
        if (!kind) throw SchemaError(where + ".policy", "expected one of mdp-s, mdp-b, pred-action, pred-state");
        block.policy = *kind;
        if (!b.contains("maze") || !b["maze"].is_string()) throw SchemaError(where + ".maze", "expected a maze id");
        block.maze = b["maze"].get<std::string>();
        if (b.contains("bias")) block.bias = detail::order_from_json(b["bias"], where + ".bias");
        plan.blocks.push_back(std::move(block));
    }

    if (j.contains("constraints")) {
        const json& cs = j["constraints"];
        if (!cs.is_array()) throw SchemaError("constraints", "expected an array");
        for (std::size_t i = 0; i < cs.size(); ++i) {
            const auto where = detail::path_of("constraints", i);
            const json& c = cs[i];
            if (!c.is_object() || !c.contains("maze") || !c["maze"].is_string())
                throw SchemaError(where + ".maze", "expected a maze id");
            if (!c.contains("position") || !c["position"].is_number_integer() || c["position"].get<std::int64_t>() < 1)
                throw SchemaError(where + ".position", "expected a positive integer");
            plan.constraints.push_back({c["maze"].get<std::string>(), c["position"].get<std::size_t>()});
        }
    }
    validate_plan(plan);
    return plan;
}

/// Self-contained form: grids are embedded as text.
inline json plan_to_json(const ExperimentPlan& plan) {
    json mazes = json::object();
    for (const auto& [id, grid] : plan.mazes) mazes[id] = {{"grid", render_grid(grid)}};
    json orders = json::array();
    for (const auto& o : plan.bias_orders) orders.push_back(detail::order_to_json(o));
    json blocks = json::array();
    for (const Block& b : plan.blocks) {
        json jb{{"policy", to_string(b.policy)}, {"maze", b.maze}};
        if (!b.bias.empty()) jb["bias"] = detail::order_to_json(b.bias);
        blocks.push_back(std::move(jb));
    }
    json constraints = json::array();
    for (const Constraint& c : plan.constraints) constraints.push_back({{"maze", c.maze}, {"position", c.position}});
    return json{{"schema_version", kSchemaVersion},
                {"seed", plan.seed},
                {"epsilon", plan.epsilon},
                {"gamma", plan.gamma},
                {"max_steps", plan.max_steps},
                {"layout_visible", plan.layout_visible},
                {"feedback", plan.feedback},
                {"inter_step_delay_ms", plan.inter_step_delay_ms},
                {"mazes", std::move(mazes)},
                {"bias_orders", std::move(orders)},
                {"blocks", std::move(blocks)},
                {"constraints", std::move(constraints)}};
}

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

/**
 * Random block order: policies in random order, each followed by all mazes
 * in random order with pinned mazes at their positions. Every mdp-b block
 * draws its bias from `plan.bias_orders`. Blocks already in `plan` are
 * replaced.
 */
inline ExperimentPlan generate_plan(ExperimentPlan plan, std::vector<PolicyKind> policies) {
    if (policies.empty()) throw SchemaError("policies", "at least one policy is required");
    if (plan.mazes.empty()) throw SchemaError("mazes", "at least one maze is required");
    if (plan.bias_orders.empty()) throw SchemaError("bias_orders", "at least one order is required");
    std::vector<std::string> ids;
    for (const auto& [id, grid] : plan.mazes) ids.push_back(id);

    std::vector<std::optional<std::string>> pinned(ids.size());
    for (const Constraint& c : plan.constraints) {
        if (!plan.mazes.count(c.maze)) throw SchemaError("constraints", "unknown maze \"" + c.maze + "\"");
        if (c.position < 1 || c.position > ids.size() || pinned[c.position - 1])
            throw SchemaError("constraints", "position " + std::to_string(c.position) + " is unavailable");
        pinned[c.position - 1] = c.maze;
    }

    Rng rng(derive_seed(plan.seed, 0x706c616eULL));
    shuffle(policies, rng);
    plan.blocks.clear();
    for (PolicyKind p : policies) {
        std::vector<std::string> free;
        for (const auto& id : ids)
            if (std::none_of(pinned.begin(), pinned.end(), [&](const auto& m) { return m == id; })) free.push_back(id);
        shuffle(free, rng);
        auto next = free.begin();
        for (std::size_t pos = 0; pos < ids.size(); ++pos) {
            Block b{p, pinned[pos] ? *pinned[pos] : *next++, {}};
            if (p == PolicyKind::mdp_b) b.bias = plan.bias_orders[rng.below(plan.bias_orders.size())];
            plan.blocks.push_back(std::move(b));
        }
    }
    validate_plan(plan);
    return plan;
}

// ---------------------------------------------------------------------------
// Sessions

/// One pre-sampled trajectory: states s_0..s_L and actions a_0..a_{L-1}.
struct BlockRun {
    Block block;
    std::string label;
    std::uint64_t seed = 0;
    std::vector<StateId> states;
    std::vector<ActionId> actions;
    bool terminated = false;

    std::size_t length() const noexcept { return actions.size(); }
};

struct StepRecord {
    std::size_t block = 0;
    std::size_t step = 0;
    std::string maze;
    PolicyKind policy = PolicyKind::mdp_s;
    std::string state;
    ActionId predicted = 0;
    ActionId actual = 0;
    bool correct = false;
    std::int64_t response_ms = 0;
    std::int64_t server_ms = 0; ///< time between showing the step and receiving the prediction
    bool flagged = false;       ///< client time outside the server bracket
};

struct SessionRecord {
    std::string id;
    std::string participant;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> labels; ///< policy id -> participant-facing label
    std::vector<BlockRun> blocks;
    std::vector<StepRecord> steps;
    std::optional<json> questionnaire;
    std::size_t block = 0; ///< cursor
    std::size_t step = 0;

    bool complete() const noexcept { return block >= blocks.size(); }
};

inline json to_json(const StepRecord& r) {
    return json{{"block", r.block},
                {"step", r.step},
                {"maze", r.maze},
                {"policy", to_string(r.policy)},
                {"state", r.state},
                {"predicted", kMoveNames.at(r.predicted)},
                {"actual", kMoveNames.at(r.actual)},
                {"correct", r.correct},
                {"response_ms", r.response_ms},
                {"server_ms", r.server_ms},
                {"flagged", r.flagged}};
}

/// Per-(policy, maze) results over completed blocks.
struct ResultRow {
    std::string policy;
    std::string maze;
    std::size_t trajectories = 0;
    std::size_t errors = 0;
    std::size_t steps = 0;
    std::int64_t response_ms_total = 0;
    std::size_t flagged = 0;
    double err_h = 0.0;        ///< mean errors per trajectory
    double mean_steps = 0.0;   ///< mean trajectory length
    double mean_response_ms = 0.0;
};

/// Rows sorted by policy then maze, followed by one "⊕" row per policy with
/// the sums of #Err.h and #steps and the step-weighted mean response time.
inline std::vector<ResultRow> summarize(const std::vector<SessionRecord>& sessions) {
    std::map<std::pair<PolicyKind, std::string>, ResultRow> rows;
    for (const SessionRecord& s : sessions) {
        std::vector<std::size_t> seen(s.blocks.size(), 0), errors(s.blocks.size(), 0), flagged(s.blocks.size(), 0);
        std::vector<std::int64_t> time(s.blocks.size(), 0);
        for (const StepRecord& r : s.steps) {
            ++seen[r.block];
            errors[r.block] += !r.correct;
            flagged[r.block] += r.flagged;
            time[r.block] += r.response_ms;
        }
        for (std::size_t b = 0; b < s.blocks.size(); ++b) {
            const BlockRun& run = s.blocks[b];
            if (seen[b] != run.length()) continue; // unfinished block
            ResultRow& row = rows[{run.block.policy, run.block.maze}];
            row.policy = to_string(run.block.policy);
            row.maze = run.block.maze;
            ++row.trajectories;
            row.errors += errors[b];
            row.steps += run.length();
            row.response_ms_total += time[b];
            row.flagged += flagged[b];
        }
    }
    std::vector<ResultRow> out;
    std::map<PolicyKind, ResultRow> totals;
    for (auto& [key, row] : rows) {
        const double n = static_cast<double>(row.trajectories);
        row.err_h = static_cast<double>(row.errors) / n;
        row.mean_steps = static_cast<double>(row.steps) / n;
        row.mean_response_ms = row.steps ? static_cast<double>(row.response_ms_total) / static_cast<double>(row.steps) : 0.0;
        ResultRow& t = totals[key.first];
        t.policy = row.policy;
        t.maze = "⊕";
        t.trajectories += row.trajectories;
        t.errors += row.errors;
        t.steps += row.steps;
        t.response_ms_total += row.response_ms_total;
        t.flagged += row.flagged;
        t.err_h += row.err_h;
        t.mean_steps += row.mean_steps;
        out.push_back(row);
    }
    for (auto& [kind, t] : totals) {
        t.mean_response_ms = t.steps ? static_cast<double>(t.response_ms_total) / static_cast<double>(t.steps) : 0.0;
        out.push_back(t);
    }
    return out;
}

inline std::string results_csv(const std::vector<ResultRow>& rows) {
    std::string out = "policy,maze,#Err.h,#steps,mean_response_ms,trajectories,predictions,flagged\n";
    for (const ResultRow& r : rows)
        out += csv_field(r.policy) + ',' + csv_field(r.maze) + ',' + csv_number(r.err_h) + ',' +
               csv_number(r.mean_steps) + ',' + csv_number(r.mean_response_ms) + ',' + std::to_string(r.trajectories) +
               ',' + std::to_string(r.steps) + ',' + std::to_string(r.flagged) + '\n';
    return out;
}

inline json results_json(const std::vector<ResultRow>& rows, const std::vector<SessionRecord>& sessions) {
    json jr = json::array();
    for (const ResultRow& r : rows)
        jr.push_back({{"policy", r.policy},
                      {"maze", r.maze},
                      {"err_h", r.err_h},
                      {"steps", r.mean_steps},
                      {"mean_response_ms", r.mean_response_ms},
                      {"trajectories", r.trajectories},
                      {"predictions", r.steps},
                      {"flagged", r.flagged}});
    json log = json::array();
    for (const SessionRecord& s : sessions)
        for (const StepRecord& r : s.steps) {
            json e = to_json(r);
            e["session"] = s.id;
            e["participant"] = s.participant;
            log.push_back(std::move(e));
        }
    json questionnaires = json::array();
    for (const SessionRecord& s : sessions)
        if (s.questionnaire)
            questionnaires.push_back({{"session", s.id}, {"participant", s.participant}, {"answers", *s.questionnaire}});
    return json{{"schema_version", kSchemaVersion},
                {"rows", std::move(jr)},
                {"steps", std::move(log)},
                {"questionnaires", std::move(questionnaires)}};
}

/// Append-only JSON-lines file, flushed after every record.
class EventLog {
public:
    EventLog() = default;
    explicit EventLog(const std::filesystem::path& path) : path_(path) {
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        out_.open(path, std::ios::app | std::ios::binary);
        if (!out_) throw Error(Errc::io_error, "cannot open log " + path.string());
    }

    void append(const json& event) {
        if (!out_.is_open()) return;
        std::lock_guard lock(mutex_);
        out_ << event.dump() << '\n';
        out_.flush();
        if (!out_) throw Error(Errc::io_error, "cannot write log " + path_.string());
    }

    void flush() {
        std::lock_guard lock(mutex_);
        if (out_.is_open()) out_.flush();
    }

    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::mutex mutex_;
};

/**
 * Rebuilds sessions from a log. Correctness is recomputed from the stored
 * trajectory, so summaries of the result match the live ones exactly.
 */
inline std::vector<SessionRecord> replay_log(std::istream& in) {
    std::vector<SessionRecord> sessions;
    std::map<std::string, std::size_t> index;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json e;
        try {
            e = json::parse(line);
        } catch (const json::exception& ex) {
            throw ParseError(lineno, 1, ex.what());
        }
        const std::string kind = e.value("event", "");
        const std::string id = e.value("session", "");
        if (kind == "session_created") {
            SessionRecord s;
            s.id = id;
            s.participant = e.at("participant").get<std::string>();
            s.seed = e.at("seed").get<std::uint64_t>();
            s.labels = e.at("labels").get<std::map<std::string, std::string>>();
            for (const json& b : e.at("blocks")) {
                BlockRun run;
                run.block.policy = parse_policy_kind(b.at("policy").get<std::string>()).value();
                run.block.maze = b.at("maze").get<std::string>();
                if (b.contains("bias")) run.block.bias = detail::order_from_json(b["bias"], "bias");
                run.label = b.at("label").get<std::string>();
                run.seed = b.at("seed").get<std::uint64_t>();
                run.states = b.at("states").get<std::vector<StateId>>();
                run.actions = b.at("actions").get<std::vector<ActionId>>();
                run.terminated = b.at("terminated").get<bool>();
                s.blocks.push_back(std::move(run));
            }
            index[id] = sessions.size();
            sessions.push_back(std::move(s));
        } else if (kind == "prediction") {
            SessionRecord& s = sessions.at(index.at(id));
            StepRecord r;
            r.block = e.at("block").get<std::size_t>();
            r.step = e.at("step").get<std::size_t>();
            const BlockRun& run = s.blocks.at(r.block);
            r.maze = run.block.maze;
            r.policy = run.block.policy;
            r.state = e.at("state").get<std::string>();
            r.predicted = parse_move(e.at("predicted").get<std::string>()).value();
            r.actual = run.actions.at(r.step);
            r.correct = r.predicted == r.actual;
            r.response_ms = e.at("response_ms").get<std::int64_t>();
            r.server_ms = e.at("server_ms").get<std::int64_t>();
            r.flagged = e.at("flagged").get<bool>();
            s.block = r.block;
            s.step = r.step + 1;
            s.steps.push_back(std::move(r));
            if (s.step == run.length()) {
                ++s.block;
                s.step = 0;
            }
        } else if (kind == "questionnaire") {
            sessions.at(index.at(id)).questionnaire = e.at("answers");
        } else {
            throw ParseError(lineno, 1, "unknown event \"" + kind + "\"");
        }
    }
    return sessions;
}

inline std::vector<SessionRecord> replay_log(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io_error, "cannot open log " + path.string());
    return replay_log(in);
}

/**
 * Thread-safe session store for one plan. Each session has its own lock, so
 * predictions within a session are serialised while sessions run in
 * parallel.
 */
class SessionStore {
public:
    using Clock = std::chrono::steady_clock;

    explicit SessionStore(ExperimentPlan plan, std::shared_ptr<EventLog> log = nullptr,
                          std::function<Clock::time_point()> clock = [] { return Clock::now(); })
        : plan_(std::move(plan)), log_(std::move(log)), clock_(std::move(clock)) {
        validate_plan(plan_);
        const SolverOptions opts{plan_.epsilon};
        for (const auto& [id, grid] : plan_.mazes) grids_.emplace(id, prepare_grid(id, grid, opts, plan_.gamma));
        if (log_ && std::filesystem::exists(log_->path()) && std::filesystem::file_size(log_->path()) > 0)
            for (auto& s : replay_log(log_->path())) adopt(std::move(s));
    }

    const ExperimentPlan& plan() const noexcept { return plan_; }
    const PreparedGrid& grid(const std::string& id) const { return grids_.at(id); }

    /// Seed used for a participant when the request does not give one.
    std::uint64_t participant_seed(std::string_view participant) const {
        return derive_seed(plan_.seed, fnv1a(participant));
    }

    /// Samples every block's trajectory and returns the first view.
    json create(const std::string& participant, std::optional<std::uint64_t> seed = std::nullopt) {
        if (participant.empty()) throw SchemaError("participant", "must not be empty");
        auto slot = std::make_shared<Slot>();
        SessionRecord& s = slot->record;
        s.participant = participant;
        s.seed = seed.value_or(participant_seed(participant));
        s.id = new_id();
        assign_labels(s);
        for (std::size_t b = 0; b < plan_.blocks.size(); ++b) {
            const Block& block = plan_.blocks[b];
            const PreparedGrid& g = grids_.at(block.maze);
            const StochasticPolicy pi = g.policy(block.policy, block.bias);
            const std::size_t horizon =
                plan_.max_steps ? plan_.max_steps : default_horizon(g.world.mdp, g.world.mdp.discount());
            BlockRun run;
            run.block = block;
            run.label = s.labels.at(std::string(to_string(block.policy)));
            run.seed = derive_seed(s.seed, b);
            const Trajectory traj = simulate(g.world.mdp, pi, g.world.start, run.seed, horizon);
            run.states.push_back(g.world.start);
            for (const auto& st : traj.steps) {
                run.actions.push_back(st.action);
                run.states.push_back(st.next);
            }
            run.terminated = traj.terminated;
            s.blocks.push_back(std::move(run));
        }
        skip_empty_blocks(s);
        slot->shown = clock_();
        if (log_) log_->append(created_event(s));
        json view = view_of(s);
        std::lock_guard lock(mutex_);
        sessions_.emplace(s.id, std::move(slot));
        order_.push_back(s.id);
        return view;
    }

    json current(const std::string& id) {
        auto slot = find(id);
        std::lock_guard lock(slot->mutex);
        return view_of(slot->record);
    }

    /**
     * Records a prediction for the current step. `block`/`step`, when given,
     * must name the current step (conflict otherwise), which rejects stale
     * or duplicated submissions.
     */
    json predict(const std::string& id, std::string_view action, std::int64_t response_ms,
                 std::optional<std::size_t> block = std::nullopt, std::optional<std::size_t> step = std::nullopt) {
        const auto predicted = parse_move(action);
        if (!predicted) throw SchemaError("action", "expected one of up, down, left, right");
        if (response_ms <= 0) throw SchemaError("response_ms", "must be a positive integer");
        auto slot = find(id);
        std::lock_guard lock(slot->mutex);
        SessionRecord& s = slot->record;
        if (s.complete()) throw Error(Errc::conflict, "session is complete");
        if ((block && *block != s.block) || (step && *step != s.step))
            throw Error(Errc::conflict, "prediction is for block " + std::to_string(block.value_or(s.block)) +
                                            " step " + std::to_string(step.value_or(s.step)) +
                                            ", current is block " + std::to_string(s.block) + " step " +
                                            std::to_string(s.step));
        const auto now = clock_();
        const BlockRun& run = s.blocks[s.block];
        const PreparedGrid& g = grids_.at(run.block.maze);
        StepRecord r;
        r.block = s.block;
        r.step = s.step;
        r.maze = run.block.maze;
        r.policy = run.block.policy;
        r.state = g.world.mdp.state_name(run.states[s.step]);
        r.predicted = *predicted;
        r.actual = run.actions[s.step];
        r.correct = r.predicted == r.actual;
        r.response_ms = response_ms;
        const auto server_us = std::chrono::duration_cast<std::chrono::microseconds>(now - slot->shown).count();
        r.server_ms = (server_us + 999) / 1000;
        r.flagged = response_ms > r.server_ms;

        if (log_) {
            json e = to_json(r);
            e["event"] = "prediction";
            e["session"] = s.id;
            log_->append(e);
        }
        s.steps.push_back(r);
        const ActionId actual = r.actual;
        const StateId next = run.states[s.step + 1];
        bool block_done = false;
        if (++s.step == run.length()) {
            ++s.block;
            s.step = 0;
            block_done = true;
            skip_empty_blocks(s);
        }
        slot->shown = now;

        json out{{"accepted", true}, {"block_finished", block_done}};
        if (plan_.feedback) {
            out["correct"] = r.correct;
            out["actual"] = kMoveNames.at(actual);
            out["moved_to"] = position_json(g, next);
        }
        out["next"] = view_of(s);
        return out;
    }

    /// Stores the questionnaire verbatim; `ranking` must order every label.
    json questionnaire(const std::string& id, const json& answers) {
        auto slot = find(id);
        std::lock_guard lock(slot->mutex);
        SessionRecord& s = slot->record;
        if (!s.complete()) throw Error(Errc::conflict, "session is not complete");
        if (s.questionnaire) throw Error(Errc::conflict, "questionnaire already submitted");
        if (!answers.is_object()) throw SchemaError("$", "expected an object");
        if (!answers.contains("ranking") || !answers["ranking"].is_array())
            throw SchemaError("ranking", "expected an array of agent labels");
        std::vector<std::string> ranking;
        for (const auto& v : answers["ranking"]) {
            if (!v.is_string()) throw SchemaError("ranking", "expected an array of agent labels");
            ranking.push_back(v.get<std::string>());
        }
        std::vector<std::string> labels;
        for (const auto& [policy, label] : s.labels) labels.push_back(label);
        std::sort(ranking.begin(), ranking.end());
        std::sort(labels.begin(), labels.end());
        if (ranking != labels) throw SchemaError("ranking", "must be a permutation of the session's agent labels");
        if (log_) log_->append({{"event", "questionnaire"}, {"session", s.id}, {"answers", answers}});
        s.questionnaire = answers;
        return {{"session", s.id}, {"status", "done"}};
    }

    /// Snapshot of every session, in creation order.
    std::vector<SessionRecord> records() const {
        std::vector<std::shared_ptr<Slot>> slots;
        {
            std::lock_guard lock(mutex_);
            for (const auto& id : order_) slots.push_back(sessions_.at(id));
        }
        std::vector<SessionRecord> out;
        for (const auto& slot : slots) {
            std::lock_guard lock(slot->mutex);
            out.push_back(slot->record);
        }
        return out;
    }

    SessionRecord record(const std::string& id) const {
        auto slot = find(id);
        std::lock_guard lock(slot->mutex);
        return slot->record;
    }

    void flush() {
        if (log_) log_->flush();
    }

private:
    struct Slot {
        std::mutex mutex;
        SessionRecord record;
        Clock::time_point shown{};
    };

    std::shared_ptr<Slot> find(const std::string& id) const {
        std::lock_guard lock(mutex_);
        auto it = sessions_.find(id);
        if (it == sessions_.end()) throw Error(Errc::not_found, "unknown session \"" + id + "\"");
        return it->second;
    }

    void adopt(SessionRecord s) {
        auto slot = std::make_shared<Slot>();
        slot->record = std::move(s);
        slot->shown = clock_();
        const std::string id = slot->record.id;
        order_.push_back(id);
        sessions_.emplace(id, std::move(slot));
    }

    std::string new_id() {
        std::lock_guard lock(mutex_);
        for (;;) {
            std::string id = hex64(derive_seed(id_entropy_(), ++counter_));
            if (!sessions_.count(id)) return id;
        }
    }

    /// Hidden labels A, B, C, ... shuffled per session.
    void assign_labels(SessionRecord& s) const {
        std::vector<std::string> policies;
        for (const Block& b : plan_.blocks) {
            const std::string p(to_string(b.policy));
            if (std::find(policies.begin(), policies.end(), p) == policies.end()) policies.push_back(p);
        }
        std::vector<std::string> labels;
        for (std::size_t i = 0; i < policies.size(); ++i) labels.push_back(std::string(1, static_cast<char>('A' + i)));
        Rng rng(derive_seed(s.seed, 0x6c6162656cULL));
        shuffle(labels, rng);
        for (std::size_t i = 0; i < policies.size(); ++i) s.labels[policies[i]] = labels[i];
    }

    static void skip_empty_blocks(SessionRecord& s) {
        while (!s.complete() && s.blocks[s.block].length() == 0) ++s.block;
    }

    static json position_json(const PreparedGrid& g, StateId state) {
        const Coord c = g.world.coords[state];
        json p{{"x", c.x}, {"y", c.y}, {"cell", cell_label(c)}};
        if (g.world.grid.kind == GridKind::firefighter) p["water"] = static_cast<bool>(g.world.water[state]);
        return p;
    }

    /// What the participant may see: never the upcoming action.
    json view_of(const SessionRecord& s) const {
        std::vector<std::string> labels;
        for (const auto& [policy, label] : s.labels) labels.push_back(label);
        std::sort(labels.begin(), labels.end());
        json v{{"session", s.id},
               {"participant", s.participant},
               {"blocks", s.blocks.size()},
               {"labels", labels},
               {"feedback", plan_.feedback},
               {"inter_step_delay_ms", plan_.inter_step_delay_ms}};
        if (s.complete()) {
            v["status"] = s.questionnaire ? "done" : "questionnaire";
            return v;
        }
        const BlockRun& run = s.blocks[s.block];
        const PreparedGrid& g = grids_.at(run.block.maze);
        v["status"] = "active";
        v["block"] = s.block;
        v["step"] = s.step;
        v["maze"] = run.block.maze;
        v["agent"] = run.label;
        v["progress"] = "maze " + std::to_string(s.block + 1) + " of " + std::to_string(s.blocks.size());
        v["position"] = position_json(g, run.states[s.step]);
        v["width"] = g.world.grid.width;
        v["height"] = g.world.grid.height;
        if (plan_.layout_visible) {
            json rows = json::array();
            const std::string text = render_grid(g.world.grid);
            std::size_t begin = text.find('\n') + 1;
            while (begin < text.size()) {
                const auto end = text.find('\n', begin);
                std::string row = text.substr(begin, end - begin);
                std::replace(row.begin(), row.end(), 'S', '.');
                rows.push_back(std::move(row));
                begin = end == std::string::npos ? text.size() : end + 1;
            }
            v["layout"] = std::move(rows);
        }
        return v;
    }

    json created_event(const SessionRecord& s) const {
        json blocks = json::array();
        for (const BlockRun& run : s.blocks) {
            json b{{"policy", to_string(run.block.policy)}, {"maze", run.block.maze},   {"label", run.label},
                   {"seed", run.seed},                      {"states", run.states},     {"actions", run.actions},
                   {"terminated", run.terminated}};
            if (!run.block.bias.empty()) b["bias"] = detail::order_to_json(run.block.bias);
            blocks.push_back(std::move(b));
        }
        return json{{"event", "session_created"}, {"session", s.id},          {"participant", s.participant},
                    {"seed", s.seed},             {"labels", s.labels},       {"rng", kRngAlgorithm},
                    {"blocks", std::move(blocks)}};
    }

    ExperimentPlan plan_;
    std::map<std::string, PreparedGrid> grids_;
    std::shared_ptr<EventLog> log_;
    std::function<Clock::time_point()> clock_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Slot>> sessions_;
    std::vector<std::string> order_;
    std::random_device id_entropy_;
    std::uint64_t counter_ = 0;
};

} // namespace predictable::experiment
