#pragma once

#include "predictable/experiment.hpp"

#include <httplib.h>

#include <filesystem>
#include <string>

namespace predictable::experiment {

inline int http_status(Errc code) noexcept {
    switch (code) {
    case Errc::not_found: return 404;
    case Errc::conflict: return 409;
    case Errc::invalid_input:
    case Errc::parse_error:
    case Errc::schema_error: return 400;
    default: return 500;
    }
}

inline void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

inline json error_body(const Error& e) {
    json body{{"error", to_string(e.code())}, {"message", e.what()}};
    if (const auto* schema = dynamic_cast<const SchemaError*>(&e)) body["field"] = schema->field();
    return body;
}

namespace detail {

/// Runs `fn`, turning library and JSON errors into JSON error responses.
template <class Fn>
void guarded(httplib::Response& res, Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        send_json(res, http_status(e.code()), error_body(e));
    } catch (const json::exception& e) {
        send_json(res, 400, {{"error", "parse_error"}, {"message", e.what()}});
    } catch (const std::exception& e) {
        send_json(res, 500, {{"error", "internal"}, {"message", e.what()}});
    }
}

inline json body_of(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    json j = json::parse(req.body);
    if (!j.is_object()) throw SchemaError("$", "expected a JSON object");
    return j;
}

template <class T>
std::optional<T> optional_field(const json& j, const char* name) {
    if (!j.contains(name) || j[name].is_null()) return std::nullopt;
    try {
        return j[name].get<T>();
    } catch (const json::exception&) {
        throw SchemaError(name, "wrong type");
    }
}

} // namespace detail

/**
 * Registers the session API on `server`:
 *   POST /sessions                      {participant, seed?} -> 201 view
 *   GET  /sessions/{id}/current         view of the current step
 *   POST /sessions/{id}/predictions     {action, response_ms, block?, step?}
 *   POST /sessions/{id}/questionnaire   {ranking, ...}
 *   GET  /sessions/{id}/results.csv|json
 *   GET  /results.csv|json
 * and serves `ui_dir` as static files when it exists.
 */
inline void install_routes(httplib::Server& server, SessionStore& store, const std::filesystem::path& ui_dir = {}) {
    server.Post("/sessions", [&store](const httplib::Request& req, httplib::Response& res) {
        detail::guarded(res, [&] {
            const json body = detail::body_of(req);
            const auto participant = detail::optional_field<std::string>(body, "participant");
            if (!participant) throw SchemaError("participant", "required");
            send_json(res, 201, store.create(*participant, detail::optional_field<std::uint64_t>(body, "seed")));
        });
    });
    server.Get(R"(/sessions/([^/]+)/current)", [&store](const httplib::Request& req, httplib::Response& res) {
        detail::guarded(res, [&] { send_json(res, 200, store.current(req.matches[1])); });
    });
    server.Post(R"(/sessions/([^/]+)/predictions)", [&store](const httplib::Request& req, httplib::Response& res) {
        detail::guarded(res, [&] {
            const json body = detail::body_of(req);
            const auto action = detail::optional_field<std::string>(body, "action");
            if (!action) throw SchemaError("action", "required");
            const auto ms = detail::optional_field<std::int64_t>(body, "response_ms");
            if (!ms) throw SchemaError("response_ms", "required");
            send_json(res, 200,
                      store.predict(req.matches[1], *action, *ms, detail::optional_field<std::size_t>(body, "block"),
                                    detail::optional_field<std::size_t>(body, "step")));
        });
    });
    server.Post(R"(/sessions/([^/]+)/questionnaire)", [&store](const httplib::Request& req, httplib::Response& res) {
        detail::guarded(res, [&] { send_json(res, 200, store.questionnaire(req.matches[1], detail::body_of(req))); });
    });
    server.Get(R"(/sessions/([^/]+)/results\.csv)", [&store](const httplib::Request& req, httplib::Response& res) {
        detail::guarded(res, [&] {
            res.set_content(results_csv(summarize({store.record(req.matches[1])})), "text/csv");
        });
    });
    server.Get(R"(/sessions/([^/]+)/results\.json)", [&store](const httplib::Request& req, httplib::Response& res) {
        detail::guarded(res, [&] {
            const std::vector<SessionRecord> one{store.record(req.matches[1])};
            send_json(res, 200, results_json(summarize(one), one));
        });
    });
    server.Get("/results.csv", [&store](const httplib::Request&, httplib::Response& res) {
        detail::guarded(res, [&] { res.set_content(results_csv(summarize(store.records())), "text/csv"); });
    });
    server.Get("/results.json", [&store](const httplib::Request&, httplib::Response& res) {
        detail::guarded(res, [&] {
            const auto records = store.records();
            send_json(res, 200, results_json(summarize(records), records));
        });
    });
    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, {{"status", "ok"}});
    });
    if (!ui_dir.empty() && std::filesystem::is_directory(ui_dir)) server.set_mount_point("/", ui_dir.string());
}

} // namespace predictable::experiment
