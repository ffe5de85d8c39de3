// predictable: solve, compare, render, simulate and serve predictable policies
// for grid-world MDPs.

#include "predictable/predictable.hpp"
#include "predictable/service.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <thread>

namespace fs = std::filesystem;
using namespace predictable;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitPortInUse = 3;

struct RunConfig {
    std::string grid;
    std::string phi = "action";
    std::optional<double> gamma;
    double epsilon = 1e-3;
    double eta = 1e-9;
    std::string observer = "stochastic";
    std::string order = "up,down,left,right";
    double tau = 1.0;
    std::optional<double> slip;
    std::uint64_t seed = 0;
    std::string out;
};

std::string default_out() {
    const char* env = std::getenv("PREDICTABLE_OUT");
    return env && *env ? env : "out";
}

void add_problem_flags(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--phi", cfg.phi, "predicted type: action, state or none (base problem)")
        ->check(CLI::IsMember({"action", "state", "none"}));
    cmd->add_option("--gamma", cfg.gamma, "discount (default 1 for mazes, 0.99 for firefighter grids)");
    cmd->add_option("--eps", cfg.epsilon, "epsilon for near-optimal action sets")->check(CLI::PositiveNumber);
    cmd->add_option("--eta", cfg.eta, "residual threshold for undiscounted problems")->check(CLI::PositiveNumber);
    cmd->add_option("--observer", cfg.observer, "observer model")
        ->check(CLI::IsMember({"stochastic", "biased", "softmax"}));
    cmd->add_option("--order", cfg.order, "action preference for the biased observer and mdp-b");
    cmd->add_option("--tau", cfg.tau, "softmax temperature")->check(CLI::PositiveNumber);
    cmd->add_option("--slip-p", cfg.slip, "override the grid's slip probability")->check(CLI::Range(0.0, 1.0));
}

struct Problem {
    GridSpec grid;
    GridMDP world;
    ObserverSpec spec;
    SolverOptions opts;
    double discount = 1.0;
};

Problem load_problem(const RunConfig& cfg, const std::string& grid_path) {
    Problem p;
    p.grid = load_grid(grid_path);
    if (cfg.slip) p.grid.slip_probability = *cfg.slip;
    const bool maze = p.grid.kind == GridKind::maze;
    p.discount = cfg.gamma.value_or(maze ? 1.0 : 0.99);
    if (!(p.discount > 0.0 && p.discount <= 1.0)) throw SchemaError("gamma", "must lie in (0,1]");
    if (!maze && p.discount >= 1.0) throw SchemaError("gamma", "firefighter grids need a discount below 1");
    p.world = build_grid_mdp(p.grid, p.discount);
    p.opts = SolverOptions{cfg.epsilon, cfg.eta};
    const auto order = parse_action_order(cfg.order); // validated even when unused
    if (cfg.observer == "biased") {
        p.spec.kind = ObserverKind::biased;
        p.spec.order = order;
    } else if (cfg.observer == "softmax") {
        p.spec.kind = ObserverKind::softmax;
        p.spec.tau = cfg.tau;
    }
    return p;
}

std::string observer_label(const ObserverSpec& spec) {
    switch (spec.kind) {
    case ObserverKind::biased: return "biased(" + format_action_order(spec.order) + ")";
    case ObserverKind::softmax: return "softmax(" + detail::shortest_double(spec.tau) + ")";
    default: return "stochastic";
    }
}

Provenance provenance_of(const Problem& p, const std::string& phi) {
    Provenance prov;
    prov.grid_hash = grid_hash(p.grid);
    prov.observer = observer_label(p.spec);
    prov.phi = phi;
    prov.gamma = p.discount;
    prov.epsilon = p.opts.epsilon;
    prov.eta = p.opts.eta;
    const json config{{"grid", render_grid(p.grid)}, {"observer", prov.observer}, {"phi", phi},
                      {"gamma", prov.gamma},         {"epsilon", prov.epsilon},   {"eta", prov.eta}};
    prov.config_hash = hex64(fnv1a(config.dump()));
    return prov;
}

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

int cmd_solve(const RunConfig& cfg) {
    const Problem p = load_problem(cfg, cfg.grid);
    const TabularMDP& base = p.world.mdp;
    const ObserverModel observer = solve_observer(base, p.spec, p.opts);
    const fs::path out = cfg.out.empty() ? default_out() : cfg.out;

    json summary{{"grid", cfg.grid}, {"out", out.string()}, {"start", base.state_name(p.world.start)}};
    const ValueFunction* vf = &observer.values;
    const ActionSets* sets = &observer.psi;
    const StochasticPolicy* policy = &observer.policy;
    std::optional<PredictableSolution> solution;
    if (cfg.phi != "none") {
        const TypeKind type = cfg.phi == "action" ? TypeKind::action : TypeKind::state;
        const auto problem = make_problem(base, observer.policy, type, p.discount);
        solution = solve_predictable(problem, p.opts);
        vf = &solution->values;
        sets = &solution->action_sets;
        policy = &solution->policy;
        write_json(out / "pred_table.json", pred_table_to_json(problem));
        summary["expected_errors"] = -solution->values.values[p.world.start];
        summary["observer_expected_errors"] = expected_errors(problem, observer.policy, p.world.start);
    }
    const TabularMDP& solved = solution ? solution->induced : base;
    write_json(out / "value_function.json", to_json(*vf, solved));
    write_json(out / "policy.json", to_json(*policy, solved));
    write_json(out / "action_sets.json", action_sets_to_json(*sets, solved));
    write_json(out / "observer_policy.json", to_json(observer.policy, base));
    write_json(out / "observer_value_function.json", to_json(observer.values, base));
    write_json(out / "provenance.json", to_json(provenance_of(p, cfg.phi)));

    std::string diagram = render_policy(p.world, *sets, vf->values);
    if (p.grid.kind == GridKind::firefighter) diagram += "\ntank full:\n" + render_policy(p.world, *sets, vf->values, true);
    write_file(out / "diagram.txt", diagram);

    summary["iterations"] = vf->iterations;
    summary["value_at_start"] = vf->values[p.world.start];
    std::cout << summary.dump(2) << '\n';
    return 0;
}

/// Solved policies found under the artifact directories, keyed by grid hash
/// and φ.
std::map<std::pair<std::string, std::string>, fs::path> scan_artifacts(const std::vector<std::string>& dirs) {
    std::map<std::pair<std::string, std::string>, fs::path> found;
    for (const auto& dir : dirs) {
        const fs::path prov_path = fs::path(dir) / "provenance.json";
        if (!fs::exists(prov_path)) throw Error(Errc::io_error, "no provenance.json in " + dir);
        const Provenance prov = provenance_from_json(json::parse(read_file(prov_path)));
        found[{prov.grid_hash, prov.phi}] = dir;
    }
    return found;
}

int cmd_compare(const RunConfig& cfg, const std::vector<std::string>& grids, const std::string& policies,
                const std::vector<std::string>& artifact_dirs, std::size_t rollouts, const std::string& csv_path) {
    std::vector<PolicyKind> kinds;
    for (std::string_view rest = policies; !rest.empty();) {
        const auto comma = rest.find(',');
        const auto name = rest.substr(0, comma);
        const auto k = parse_policy_kind(name);
        if (!k) throw SchemaError("policies", "unknown policy \"" + std::string(name) + "\"");
        kinds.push_back(*k);
        rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    }
    if (kinds.empty()) throw SchemaError("policies", "at least one policy is required");
    const auto artifacts = scan_artifacts(artifact_dirs);
    const std::vector<ActionId> bias = parse_action_order(cfg.order);

    std::vector<ComparisonRow> rows;
    for (const auto& path : grids) {
        const Problem p = load_problem(cfg, path);
        const TabularMDP& base = p.world.mdp;
        const ObserverModel observer = solve_observer(base, p.spec, p.opts);
        const std::string maze = fs::path(path).stem().string();
        const std::string hash = grid_hash(p.grid);
        PreparedGrid g;
        g.id = maze;
        g.world = p.world;
        g.observer = observer;
        g.epsilon = p.opts.epsilon;
        for (std::size_t i = 0; i < kinds.size(); ++i) {
            const PolicyKind k = kinds[i];
            StochasticPolicy pi;
            if (k == PolicyKind::mdp_s) {
                pi = observer.policy;
            } else if (k == PolicyKind::mdp_b) {
                pi = biased_baseline(observer.psi, bias, base.num_actions());
            } else {
                const std::string phi = k == PolicyKind::pred_action ? "action" : "state";
                if (auto it = artifacts.find({hash, phi}); it != artifacts.end()) {
                    pi = policy_from_json(json::parse(read_file(it->second / "policy.json")), base);
                } else {
                    const TypeKind type = k == PolicyKind::pred_action ? TypeKind::action : TypeKind::state;
                    pi = solve_predictable(make_problem(base, observer.policy, type, p.discount), p.opts).policy;
                }
            }
            rows.push_back(compare_policy(g, std::string(to_string(k)), pi, rollouts, derive_seed(cfg.seed, i)));
        }
    }
    const std::string csv = comparison_csv(with_aggregates(std::move(rows)));
    if (csv_path.empty() || csv_path == "-") std::cout << csv;
    else write_file(csv_path, csv);
    return 0;
}

int cmd_render(const RunConfig& cfg, const std::string& artifacts) {
    const Problem p = load_problem(cfg, cfg.grid);
    ActionSets sets;
    std::vector<double> values;
    if (!artifacts.empty()) {
        const json j = json::parse(read_file(fs::path(artifacts) / "action_sets.json"));
        if (j.at("states") != json(p.world.mdp.state_names()))
            throw SchemaError("states", "artifacts belong to a different grid");
        for (const auto& set : j.at("sets")) {
            std::vector<ActionId> s;
            for (const auto& name : set) s.push_back(parse_move(name.get<std::string>()).value());
            sets.push_back(std::move(s));
        }
        values = json::parse(read_file(fs::path(artifacts) / "value_function.json")).at("values").get<std::vector<double>>();
    } else {
        const ObserverModel observer = solve_observer(p.world.mdp, p.spec, p.opts);
        sets = observer.psi;
        values = observer.values.values;
        if (cfg.phi != "none") {
            const TypeKind type = cfg.phi == "action" ? TypeKind::action : TypeKind::state;
            const auto sol = solve_predictable(make_problem(p.world.mdp, observer.policy, type, p.discount), p.opts);
            sets = sol.action_sets;
            values = sol.values.values;
        }
    }
    std::cout << render_policy(p.world, sets, values);
    if (p.grid.kind == GridKind::firefighter) std::cout << "\ntank full:\n" << render_policy(p.world, sets, values, true);
    return 0;
}

int cmd_simulate(const RunConfig& cfg, const std::string& policy_name, std::size_t rollouts, std::size_t max_steps) {
    const Problem p = load_problem(cfg, cfg.grid);
    const auto kind = parse_policy_kind(policy_name);
    if (!kind) throw SchemaError("policy", "unknown policy \"" + policy_name + "\"");
    const ObserverModel observer = solve_observer(p.world.mdp, p.spec, p.opts);
    StochasticPolicy pi;
    switch (*kind) {
    case PolicyKind::mdp_s: pi = observer.policy; break;
    case PolicyKind::mdp_b: pi = biased_baseline(observer.psi, parse_action_order(cfg.order), 4); break;
    case PolicyKind::pred_action:
    case PolicyKind::pred_state: {
        const TypeKind type = *kind == PolicyKind::pred_action ? TypeKind::action : TypeKind::state;
        pi = solve_predictable(make_problem(p.world.mdp, observer.policy, type, p.discount), p.opts).policy;
        break;
    }
    }
    const TypeKind type = cfg.phi == "state" ? TypeKind::state : TypeKind::action;
    const RewardFn induced = pred_reward(make_problem(p.world.mdp, observer.policy, type, p.discount));
    const std::size_t horizon = max_steps ? max_steps : default_horizon(p.world.mdp, p.discount);
    std::string lines;
    for (std::size_t i = 0; i < rollouts; ++i)
        lines += to_json(simulate(p.world.mdp, pi, p.world.start, derive_seed(cfg.seed, i), horizon, &induced), p.world.mdp)
                     .dump() +
                 '\n';
    if (cfg.out.empty() || cfg.out == "-") std::cout << lines;
    else write_file(cfg.out, lines);
    return 0;
}

int cmd_plan(const std::vector<std::string>& mazes, const std::string& policies, const std::vector<std::string>& pins,
             std::uint64_t seed, const std::string& out) {
    json j{{"seed", seed}, {"mazes", json::object()}, {"blocks", json::array()}};
    for (const auto& m : mazes) {
        const auto eq = m.find('=');
        if (eq == std::string::npos) throw SchemaError("maze", "expected id=path, got \"" + m + "\"");
        j["mazes"][m.substr(0, eq)] = fs::absolute(m.substr(eq + 1)).string();
    }
    experiment::ExperimentPlan plan;
    plan.seed = seed;
    for (const auto& [id, path] : j["mazes"].items()) plan.mazes.emplace(id, load_grid(path.get<std::string>()));
    for (const auto& pin : pins) {
        const auto eq = pin.find('=');
        if (eq == std::string::npos) throw SchemaError("pin", "expected id=position, got \"" + pin + "\"");
        plan.constraints.push_back({pin.substr(0, eq), std::stoul(pin.substr(eq + 1))});
    }
    std::vector<PolicyKind> kinds;
    for (std::string_view rest = policies; !rest.empty();) {
        const auto comma = rest.find(',');
        const auto k = parse_policy_kind(rest.substr(0, comma));
        if (!k) throw SchemaError("policies", "unknown policy \"" + std::string(rest.substr(0, comma)) + "\"");
        kinds.push_back(*k);
        rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    }
    const std::string text = experiment::plan_to_json(experiment::generate_plan(std::move(plan), kinds)).dump(2) + "\n";
    if (out.empty() || out == "-") std::cout << text;
    else write_file(out, text);
    return 0;
}

int cmd_serve(const std::string& plan_path, const std::string& host, int port, const std::string& log_path,
              const std::string& ui_dir) {
    const fs::path plan_file(plan_path);
    if (!fs::exists(plan_file)) throw Error(Errc::io_error, "plan not found: " + plan_path);
    const experiment::ExperimentPlan plan =
        experiment::plan_from_json(json::parse(read_file(plan_file)), plan_file.parent_path());
    const fs::path log = log_path.empty() ? fs::path(default_out()) / "sessions.jsonl" : fs::path(log_path);
    experiment::SessionStore store(plan, std::make_shared<experiment::EventLog>(log));

    // Block the shutdown signals before the server threads start so they all
    // inherit the mask and sigwait below sees them.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    httplib::Server server;
    // httplib also sets SO_REUSEPORT, which would let a second server share a busy port.
    server.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof yes);
    });
    experiment::install_routes(server, store, ui_dir);
    if (!server.bind_to_port(host, port)) {
        std::cerr << json{{"error", "port_in_use"}, {"message", host + ":" + std::to_string(port) + " is not available"}}.dump()
                  << '\n';
        return kExitPortInUse;
    }
    std::thread worker([&] { server.listen_after_bind(); });
    std::cout << "serving on http://" << host << ':' << port << "/  (log: " << log.string() << ")" << std::endl;
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
    worker.join();
    store.flush();
    std::cout << "stopped; " << store.records().size() << " session(s) recorded" << std::endl;
    return 0;
}

int cmd_export(const std::string& log_path, const std::string& csv_path, const std::string& json_path) {
    const auto sessions = experiment::replay_log(fs::path(log_path));
    const auto rows = experiment::summarize(sessions);
    const std::string csv = experiment::results_csv(rows);
    if (csv_path.empty() || csv_path == "-") std::cout << csv;
    else write_file(csv_path, csv);
    if (!json_path.empty()) write_file(json_path, experiment::results_json(rows, sessions).dump(2) + "\n");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Predictable policies for grid-world MDPs"};
    app.require_subcommand(1);
    RunConfig cfg;

    auto* solve = app.add_subcommand("solve", "solve a grid and write artifacts");
    solve->add_option("--grid", cfg.grid, "grid file")->required();
    add_problem_flags(solve, cfg);
    solve->add_option("--out", cfg.out, "output directory (default $PREDICTABLE_OUT or ./out)");

    std::vector<std::string> grids, artifact_dirs;
    std::string policies = "mdp-s,mdp-b,pred-action,pred-state";
    std::size_t rollouts = 0;
    std::string csv;
    auto* compare = app.add_subcommand("compare", "expected observer errors of several policies");
    compare->add_option("--grid", grids, "grid files")->required();
    compare->add_option("--policies", policies, "comma-separated policy list");
    compare->add_option("--artifacts", artifact_dirs, "directories written by solve to use instead of re-solving");
    compare->add_option("--rollouts", rollouts, "Monte Carlo rollouts per row (0: exact values only)");
    compare->add_option("--seed", cfg.seed, "master seed");
    compare->add_option("--csv", csv, "output CSV (default stdout)");
    add_problem_flags(compare, cfg);

    std::string render_artifacts;
    auto* render = app.add_subcommand("render", "print the arrow diagram of a grid");
    render->add_option("--grid", cfg.grid, "grid file")->required();
    render->add_option("--artifacts", render_artifacts, "directory written by solve");
    add_problem_flags(render, cfg);

    std::string policy_name = "pred-action";
    std::size_t max_steps = 0;
    std::size_t sim_rollouts = 1;
    auto* sim = app.add_subcommand("simulate", "sample trajectories as JSON lines");
    sim->add_option("--grid", cfg.grid, "grid file")->required();
    sim->add_option("--policy", policy_name, "mdp-s, mdp-b, pred-action or pred-state");
    sim->add_option("--rollouts", sim_rollouts, "number of trajectories");
    sim->add_option("--max-steps", max_steps, "step limit (0: default horizon)");
    sim->add_option("--seed", cfg.seed, "master seed");
    sim->add_option("--out", cfg.out, "output file (default stdout)");
    add_problem_flags(sim, cfg);

    std::vector<std::string> plan_mazes, pins;
    std::string plan_policies = "mdp-s,mdp-b,pred-action";
    std::string plan_out;
    auto* plan = app.add_subcommand("plan", "generate a randomised experiment plan");
    plan->add_option("--maze", plan_mazes, "maze as id=path")->required();
    plan->add_option("--policies", plan_policies, "comma-separated policy list");
    plan->add_option("--pin", pins, "pin a maze to a position as id=position");
    plan->add_option("--seed", cfg.seed, "randomisation seed");
    plan->add_option("--out", plan_out, "output file (default stdout)");

    std::string plan_path, host = "127.0.0.1", log_path, ui_dir;
    int port = 8080;
    auto* serve = app.add_subcommand("serve", "run the experiment service");
    serve->add_option("--plan", plan_path, "experiment plan JSON")->required();
    serve->add_option("--port", port, "TCP port")->check(CLI::Range(0, 65535));
    serve->add_option("--host", host, "bind address");
    serve->add_option("--log", log_path, "session log (default $PREDICTABLE_OUT/sessions.jsonl)");
    serve->add_option("--ui", ui_dir, "directory with the observer UI bundle");

    std::string export_log, export_csv, export_json;
    auto* exp = app.add_subcommand("export", "summarise a session log");
    exp->add_option("--log", export_log, "session log")->required();
    exp->add_option("--csv", export_csv, "output CSV (default stdout)");
    exp->add_option("--json", export_json, "output JSON with the raw step log");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        if (*solve) return cmd_solve(cfg);
        if (*compare) return cmd_compare(cfg, grids, policies, artifact_dirs, rollouts, csv);
        if (*render) return cmd_render(cfg, render_artifacts);
        if (*sim) return cmd_simulate(cfg, policy_name, sim_rollouts, max_steps);
        if (*plan) return cmd_plan(plan_mazes, plan_policies, pins, cfg.seed, plan_out);
        if (*serve) return cmd_serve(plan_path, host, port, log_path, ui_dir);
        if (*exp) return cmd_export(export_log, export_csv, export_json);
    } catch (const Error& e) {
        std::cerr << experiment::error_body(e).dump() << '\n';
        return kExitValidation;
    } catch (const json::exception& e) {
        std::cerr << json{{"error", "parse_error"}, {"message", e.what()}}.dump() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", "internal"}, {"message", e.what()}}.dump() << '\n';
        return 1;
    }
    return 0;
}
