#pragma once

// HTTP binding of SessionManager (JSON bodies, routes under /v1).

#include "multibo/service.hpp"

#include <functional>
#include <memory>
#include <string>

namespace httplib
{
class Server;
}

namespace multibo
{
class HttpService
{
  public:
    explicit HttpService(SessionManager& manager);
    ~HttpService();
    HttpService(const HttpService&) = delete;
    HttpService& operator=(const HttpService&) = delete;

    /// Binds to host:port (port 0 picks a free port) and returns the bound port, or -1.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call after bind().
    bool listen();
    void stop();

  private:
    SessionManager& manager_;
    std::unique_ptr<httplib::Server> server_;
};
} // namespace multibo
