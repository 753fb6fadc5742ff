#include "multibo/server.hpp"

#include "multibo/errors.hpp"

#include <httplib.h>

namespace multibo
{
namespace
{
constexpr const char* k_json = "application/json";

void send(httplib::Response& res, int status, const nlohmann::json& body)
{
    res.status = status;
    res.set_content(body.dump(), k_json);
}

template <typename Fn> void guarded(httplib::Response& res, Fn&& fn)
{
    try
    {
        send(res, 200, fn());
    }
    catch (const ServiceError& e)
    {
        send(res, e.status(), error_response(e));
    }
    catch (const nlohmann::json::exception& e)
    {
        send(res, 400, error_response(ServiceError(400, "bad-request", e.what())));
    }
    catch (const std::exception& e)
    {
        send(res, 500, error_response(ServiceError(500, "internal", e.what())));
    }
}

nlohmann::json parse_body(const httplib::Request& req)
{
    if (req.body.empty())
        return nlohmann::json::object();
    try
    {
        return nlohmann::json::parse(req.body);
    }
    catch (const nlohmann::json::exception& e)
    {
        throw ServiceError(400, "bad-request", std::string("body is not valid JSON: ") + e.what());
    }
}
} // namespace

HttpService::HttpService(SessionManager& manager) : manager_(manager), server_(std::make_unique<httplib::Server>())
{
    auto& s = *server_;
    s.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
        send(res, 200, {{"protocol_version", k_protocol_version}, {"kind", "health"}, {"status", "ok"}});
    });
    s.Post("/v1/sessions", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { return manager_.create_session(parse_body(req)); });
    });
    s.Get(R"(/v1/sessions/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { return manager_.get_status(req.matches[1]); });
    });
    s.Get(R"(/v1/sessions/([0-9a-f]+)/batch)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { return manager_.get_batch(req.matches[1]); });
    });
    s.Post(R"(/v1/sessions/([0-9a-f]+)/choice)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { return manager_.submit_choice(req.matches[1], parse_body(req)); });
    });
    s.Get(R"(/v1/sessions/([0-9a-f]+)/final)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { return manager_.get_final(req.matches[1]); });
    });
    s.Get(R"(/v1/previews/([0-9a-f]{64}\.pgm))", [this](const httplib::Request& req, httplib::Response& res) {
        if (auto bytes = manager_.preview(req.matches[1]))
        {
            res.set_header("Cache-Control", "public, max-age=31536000, immutable");
            res.set_content(*bytes, "image/x-portable-graymap");
        }
        else
        {
            send(res, 404, error_response(ServiceError(404, "not-found", "unknown preview")));
        }
    });
    s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty())
            send(res, res.status, error_response(ServiceError(res.status, "not-found", "no such endpoint")));
    });
}

HttpService::~HttpService() = default;

int HttpService::bind(const std::string& host, int port)
{
    if (port == 0)
        return server_->bind_to_any_port(host);
    return server_->bind_to_port(host, port) ? port : -1;
}

bool HttpService::listen() { return server_->listen_after_bind(); }

void HttpService::stop() { server_->stop(); }
} // namespace multibo
