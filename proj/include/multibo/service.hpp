#pragma once

// Human-in-the-loop session host. SessionManager implements the wire protocol
// on JSON values; server.hpp binds it to HTTP. Every response carries
// "protocol_version". Hidden task data (the target warp and objective values)
// stays in the manager and its persistence files.

#include "multibo/session.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>

namespace multibo
{
inline constexpr int k_protocol_version = 1;

struct ServiceLimits
{
    std::size_t max_budget = 200;
    std::size_t max_choices = 12;
    int max_field_size = 256;
};

/// Request failure mapped onto an HTTP status.
class ServiceError : public std::runtime_error
{
  public:
    ServiceError(int status, std::string code, const std::string& message)
        : std::runtime_error(message), status_(status), code_(std::move(code))
    {
    }
    int status() const { return status_; }
    const std::string& code() const { return code_; }

  private:
    int status_;
    std::string code_;
};

/// Error body for a failed request.
nlohmann::json error_response(const ServiceError& e);

/// Server-side task: the field being warped, plus the hidden target warp when known.
struct SessionTask
{
    std::string name;
    Field2D source;
    /// Full 24-entry hidden warp; absent when the user has the target only in mind.
    std::optional<Eigen::VectorXd> theta_star;
    std::vector<Eigen::Index> active;
    /// Send the target preview to the client.
    bool show_target = true;

    Eigen::VectorXd expand(const Eigen::VectorXd& theta) const;
    Field2D render(const Eigen::VectorXd& theta) const;
    std::optional<Field2D> target() const;
};

std::string base64_encode(const std::string& bytes);
std::string base64_decode(const std::string& text);

/// Content-addressed PGM store: name = sha256(bytes) + ".pgm".
class PreviewStore
{
  public:
    explicit PreviewStore(std::filesystem::path dir);
    /// Stores the bytes (idempotent) and returns the file name.
    std::string put(const std::string& bytes);
    std::optional<std::string> get(const std::string& name) const;

  private:
    std::filesystem::path dir_;
};

class SessionManager
{
  public:
    /// Sessions are persisted under data_dir/sessions, previews under data_dir/previews.
    explicit SessionManager(std::filesystem::path data_dir, ServiceLimits limits = {});

    /// Loads every persisted session; returns how many were restored.
    std::size_t restore();

    nlohmann::json create_session(const nlohmann::json& request);
    nlohmann::json get_batch(const std::string& id);
    /// Body: {"batch_id": n, "winners": [positions]}.
    nlohmann::json submit_choice(const std::string& id, const nlohmann::json& request);
    nlohmann::json get_status(const std::string& id);
    nlohmann::json get_final(const std::string& id);
    std::optional<std::string> preview(const std::string& name) const { return previews_.get(name); }

    std::size_t session_count() const;
    /// Internal state, for tests.
    SessionState snapshot(const std::string& id);

  private:
    struct Entry
    {
        std::mutex mutex;
        std::string id;
        std::int64_t created_at = 0;
        SessionTask task;
        SessionState state;
    };

    std::shared_ptr<Entry> find(const std::string& id) const;
    void persist(const Entry& e) const;
    std::string preview_path(const Field2D& field, const SessionTask& task);
    std::string state_name(const Entry& e) const;
    std::size_t remaining_budget(const SessionState& s) const;
    nlohmann::json envelope(const Entry& e, const std::string& kind) const;
    nlohmann::json batch_payload(Entry& e);
    nlohmann::json final_payload(Entry& e);
    SessionTask parse_task(const nlohmann::json& request) const;
    SessionConfig parse_config(const nlohmann::json& request, const SessionTask& task) const;

    std::filesystem::path data_dir_;
    ServiceLimits limits_;
    PreviewStore previews_;
    mutable std::mutex map_mutex_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
};
} // namespace multibo
