#include "multibo/service.hpp"

#include "multibo/errors.hpp"
#include "multibo/hash.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

namespace multibo
{
namespace
{
std::string read_file(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw ContractError("cannot read " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text)
{
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os)
            throw std::runtime_error("cannot write " + tmp.string());
        os << text;
        os.flush();
        if (!os)
            throw std::runtime_error("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string new_session_id()
{
    static std::mutex m;
    static std::random_device rd;
    static std::uint64_t counter = 0;
    std::lock_guard lock(m);
    std::string seed = std::to_string(rd()) + ":" + std::to_string(rd()) + ":" + std::to_string(++counter) + ":" +
                       std::to_string(std::chrono::steady_clock::now().time_since_epoch().count());
    return sha256_hex(seed).substr(0, 32);
}

bool valid_id(const std::string& id)
{
    return !id.empty() && id.size() <= 64 &&
           std::all_of(id.begin(), id.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)); });
}

nlohmann::json field_json(const Field2D& f)
{
    return {{"width", f.width()}, {"height", f.height()}, {"values", f.values()}};
}

Field2D field_from_json(const nlohmann::json& j)
{
    return Field2D(j.at("width").get<int>(), j.at("height").get<int>(), j.at("values").get<std::vector<double>>());
}

ServiceError bad_request(const std::string& msg) { return ServiceError(400, "bad-request", msg); }
ServiceError conflict(const std::string& msg) { return ServiceError(409, "conflict", msg); }
} // namespace

nlohmann::json error_response(const ServiceError& e)
{
    return {{"protocol_version", k_protocol_version},
            {"kind", "error"},
            {"error", {{"status", e.status()}, {"code", e.code()}, {"message", e.what()}}}};
}

Eigen::VectorXd SessionTask::expand(const Eigen::VectorXd& theta) const
{
    if (theta.size() != static_cast<Eigen::Index>(active.size()))
        throw ContractError("task expects " + std::to_string(active.size()) + " parameters");
    Eigen::VectorXd full = Eigen::VectorXd::Zero(k_warp_dim);
    for (std::size_t i = 0; i < active.size(); ++i)
        full(active[i]) = theta(static_cast<Eigen::Index>(i));
    return full;
}

Field2D SessionTask::render(const Eigen::VectorXd& theta) const { return warp_compose(WarpParams(expand(theta)), source); }

std::optional<Field2D> SessionTask::target() const
{
    if (!theta_star)
        return std::nullopt;
    return warp_compose(WarpParams(*theta_star), source);
}

std::string base64_encode(const std::string& bytes)
{
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::string base64_decode(const std::string& text)
{
    std::string clean;
    for (char c : text)
        if (!std::isspace(static_cast<unsigned char>(c)))
            clean.push_back(c);
    if (clean.size() % 4 != 0)
        throw ContractError("base64 length is not a multiple of 4");
    std::string out(3 * clean.size() / 4, '\0');
    const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(clean.data()), static_cast<int>(clean.size()));
    if (n < 0)
        throw ContractError("invalid base64 data");
    std::size_t len = static_cast<std::size_t>(n);
    // EVP_DecodeBlock keeps the zero bytes produced by '=' padding.
    for (std::size_t i = clean.size(); i > 0 && clean[i - 1] == '='; --i)
        --len;
    out.resize(len);
    return out;
}

PreviewStore::PreviewStore(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

std::string PreviewStore::put(const std::string& bytes)
{
    const std::string name = sha256_hex(bytes) + ".pgm";
    const auto path = dir_ / name;
    if (!std::filesystem::exists(path))
        write_file_atomic(path, bytes);
    return name;
}

std::optional<std::string> PreviewStore::get(const std::string& name) const
{
    if (name.size() != 68 || name.substr(64) != ".pgm" || !valid_id(name.substr(0, 64)))
        return std::nullopt;
    const auto path = dir_ / name;
    if (!std::filesystem::exists(path))
        return std::nullopt;
    return read_file(path);
}

SessionManager::SessionManager(std::filesystem::path data_dir, ServiceLimits limits)
    : data_dir_(std::move(data_dir)), limits_(limits), previews_(data_dir_ / "previews")
{
    std::filesystem::create_directories(data_dir_ / "sessions");
}

std::size_t SessionManager::restore()
{
    std::size_t restored = 0;
    for (const auto& file : std::filesystem::directory_iterator(data_dir_ / "sessions"))
    {
        if (file.path().extension() != ".json")
            continue;
        try
        {
            const auto doc = nlohmann::json::parse(read_file(file.path()));
            auto e = std::make_shared<Entry>();
            e->id = doc.at("id").get<std::string>();
            e->created_at = doc.at("created_at").get<std::int64_t>();
            const auto& t = doc.at("task");
            e->task.name = t.at("name").get<std::string>();
            e->task.source = field_from_json(t.at("source"));
            if (t.contains("theta_star"))
                e->task.theta_star = Eigen::Map<const Eigen::VectorXd>(
                    t.at("theta_star").get<std::vector<double>>().data(), k_warp_dim);
            e->task.active = t.at("active").get<std::vector<Eigen::Index>>();
            e->task.show_target = t.at("show_target").get<bool>();
            e->state = session_state_from_json(doc.at("state"));
            std::lock_guard lock(map_mutex_);
            sessions_[e->id] = e;
            ++restored;
        }
        catch (const std::exception& ex)
        {
            std::cerr << "skipping unreadable session file " << file.path() << ": " << ex.what() << "\n";
        }
    }
    return restored;
}

std::shared_ptr<SessionManager::Entry> SessionManager::find(const std::string& id) const
{
    std::lock_guard lock(map_mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end())
        throw ServiceError(404, "not-found", "unknown session '" + id + "'");
    return it->second;
}

std::size_t SessionManager::session_count() const
{
    std::lock_guard lock(map_mutex_);
    return sessions_.size();
}

SessionState SessionManager::snapshot(const std::string& id)
{
    auto e = find(id);
    std::lock_guard lock(e->mutex);
    return e->state;
}

void SessionManager::persist(const Entry& e) const
{
    nlohmann::json task = {{"name", e.task.name},
                           {"source", field_json(e.task.source)},
                           {"active", e.task.active},
                           {"show_target", e.task.show_target}};
    if (e.task.theta_star)
        task["theta_star"] = std::vector<double>(e.task.theta_star->data(), e.task.theta_star->data() + k_warp_dim);
    const nlohmann::json doc = {{"protocol_version", k_protocol_version},
                                {"id", e.id},
                                {"created_at", e.created_at},
                                {"task", task},
                                {"state", to_json(e.state)}};
    write_file_atomic(data_dir_ / "sessions" / (e.id + ".json"), doc.dump());
}

std::string SessionManager::preview_path(const Field2D& field, const SessionTask& task)
{
    // One intensity scale per task so previews are comparable across rounds.
    const auto range = std::make_pair(task.source.min_value(), task.source.max_value());
    return "/v1/previews/" + previews_.put(encode_pgm(field, range));
}

std::string SessionManager::state_name(const Entry& e) const
{
    if (e.state.pending)
        return "awaiting-choice";
    return e.state.finished() ? "finished" : "proposing";
}

std::size_t SessionManager::remaining_budget(const SessionState& s) const
{
    const SessionConfig& c = s.config;
    if (c.init_counts_toward_budget)
        return c.budget > s.round ? c.budget - s.round : 0;
    const std::size_t acquired = s.round > c.init_batches ? s.round - c.init_batches : 0;
    return c.budget > acquired ? c.budget - acquired : 0;
}

nlohmann::json SessionManager::envelope(const Entry& e, const std::string& kind) const
{
    return {{"protocol_version", k_protocol_version},
            {"kind", kind},
            {"session_id", e.id},
            {"state", state_name(e)},
            {"completed_rounds", e.state.round},
            {"remaining_budget", remaining_budget(e.state)}};
}

nlohmann::json SessionManager::batch_payload(Entry& e)
{
    nlohmann::json j = envelope(e, "batch");
    const PendingBatch& p = *e.state.pending;
    j["round"] = e.state.round + 1;
    j["batch_id"] = p.batch_id;
    j["init_phase"] = p.batch_id <= e.state.config.init_batches;
    nlohmann::json candidates = nlohmann::json::array();
    for (std::size_t i = 0; i < p.indices.size(); ++i)
        candidates.push_back(
            {{"position", i}, {"preview", preview_path(e.task.render(e.state.archive[p.indices[i]]), e.task)}});
    j["candidates"] = candidates;
    if (e.task.show_target)
        if (auto t = e.task.target())
            j["target_preview"] = preview_path(*t, e.task);
    if (e.state.posterior)
        j["incumbent_preview"] = preview_path(e.task.render(e.state.archive[e.state.incumbent_index]), e.task);
    return j;
}

nlohmann::json SessionManager::final_payload(Entry& e)
{
    nlohmann::json j = envelope(e, "final");
    const SessionBest best = session_best(e.state);
    j["round"] = e.state.round;
    j["theta"] = std::vector<double>(best.theta.data(), best.theta.data() + best.theta.size());
    j["predicted_value"] = best.predicted_value;
    j["incumbent_preview"] = preview_path(e.task.render(best.theta), e.task);
    if (e.task.show_target)
        if (auto t = e.task.target())
            j["target_preview"] = preview_path(*t, e.task);
    return j;
}

SessionTask SessionManager::parse_task(const nlohmann::json& request) const
{
    if (!request.contains("task"))
        throw bad_request("request needs a 'task'");
    const auto& t = request.at("task");
    int field_size = request.value("field_size", 64);
    if (field_size < 8 || field_size > limits_.max_field_size)
        throw bad_request("field_size must lie in [8, " + std::to_string(limits_.max_field_size) + "]");
    SessionTask task;
    if (t.is_string())
    {
        const std::string name = t.get<std::string>();
        if (name != "warp-affine" && name != "warp-full")
            throw bad_request("unknown task '" + name + "'; expected warp-affine or warp-full");
        const HiddenObjective obj = make_objective(name, request.value("task_seed", std::uint64_t{0}), field_size);
        task.name = name;
        task.source = obj.warp_task()->source;
        task.theta_star = obj.warp_task()->theta_star;
        task.active = obj.warp_task()->active;
        task.show_target = request.value("show_target", true);
        return task;
    }
    if (!t.is_object())
        throw bad_request("'task' must be a task name or an object");
    task.name = t.value("name", std::string("upload"));
    task.source = decode_pgm(base64_decode(t.at("source_pgm_base64").get<std::string>()));
    if (task.source.width() > limits_.max_field_size || task.source.height() > limits_.max_field_size)
        throw bad_request("uploaded field is larger than the server limit");
    const std::string mode = t.value("active", std::string("affine"));
    const Eigen::Index n_active = mode == "full" ? k_warp_dim : k_affine_dim;
    if (mode != "full" && mode != "affine")
        throw bad_request("'active' must be 'affine' or 'full'");
    for (Eigen::Index d = 0; d < n_active; ++d)
        task.active.push_back(d);
    if (t.contains("hidden_theta"))
    {
        const auto v = t.at("hidden_theta").get<std::vector<double>>();
        if (v.size() != static_cast<std::size_t>(k_warp_dim))
            throw bad_request("hidden_theta needs " + std::to_string(k_warp_dim) + " entries");
        Eigen::VectorXd star = Eigen::Map<const Eigen::VectorXd>(v.data(), k_warp_dim);
        WarpParams check(star);
        for (Eigen::Index d = n_active; d < k_warp_dim; ++d)
            if (star(d) != 0.0)
                throw bad_request("hidden_theta has non-zero entries outside the active set");
        task.theta_star = star;
    }
    task.show_target = t.value("show_target", true);
    return task;
}

SessionConfig SessionManager::parse_config(const nlohmann::json& request, const SessionTask& task) const
{
    SessionConfig cfg;
    const BoxBounds full = theta_bounds();
    Eigen::VectorXd lo(static_cast<Eigen::Index>(task.active.size())), hi(lo.size());
    for (std::size_t i = 0; i < task.active.size(); ++i)
    {
        lo(static_cast<Eigen::Index>(i)) = full.lower(task.active[i]);
        hi(static_cast<Eigen::Index>(i)) = full.upper(task.active[i]);
    }
    cfg.bounds = BoxBounds(lo, hi);
    cfg.likelihood.kind = LikelihoodKind::subset_logit;
    cfg.seed = std::random_device{}();
    const nlohmann::json c = request.value("config", nlohmann::json::object());
    if (!c.is_object())
        throw bad_request("'config' must be an object");
    cfg.budget = c.value("budget", cfg.budget);
    cfg.choices_per_round = c.value("choices_per_round", cfg.choices_per_round);
    cfg.init_batches = c.value("init_batches", cfg.init_batches);
    cfg.init_counts_toward_budget = c.value("init_counts_toward_budget", cfg.init_counts_toward_budget);
    cfg.seed = c.value("seed", cfg.seed);
    if (c.contains("multi_select") && !c.at("multi_select").get<bool>())
        cfg.likelihood.kind = cfg.choices_per_round == 2 ? LikelihoodKind::pairwise_logit
                                                         : LikelihoodKind::multinomial_logit;
    if (c.contains("likelihood"))
        cfg.likelihood.kind = likelihood_kind_from_string(c.at("likelihood").get<std::string>());
    if (c.contains("strategy"))
        cfg.dbs.strategy = proposal_strategy_from_string(c.at("strategy").get<std::string>());
    cfg.dbs.k = cfg.choices_per_round;
    if (cfg.budget > limits_.max_budget)
        throw bad_request("budget above the server limit of " + std::to_string(limits_.max_budget));
    if (cfg.choices_per_round > limits_.max_choices)
        throw bad_request("choices_per_round above the server limit of " + std::to_string(limits_.max_choices));
    if (cfg.init_batches > limits_.max_budget)
        throw bad_request("init_batches above the server limit of " + std::to_string(limits_.max_budget));
    cfg.validate();
    return cfg;
}

nlohmann::json SessionManager::create_session(const nlohmann::json& request)
{
    auto e = std::make_shared<Entry>();
    try
    {
        if (!request.is_object())
            throw bad_request("request body must be an object");
        e->task = parse_task(request);
        e->state = session_init(parse_config(request, e->task));
    }
    catch (const ContractError& ex)
    {
        throw bad_request(ex.what());
    }
    catch (const nlohmann::json::exception& ex)
    {
        throw bad_request(std::string("malformed request: ") + ex.what());
    }
    e->id = new_session_id();
    e->created_at = std::chrono::duration_cast<std::chrono::seconds>(
                        std::chrono::system_clock::now().time_since_epoch())
                        .count();
    std::lock_guard entry_lock(e->mutex);
    persist(*e);
    {
        std::lock_guard lock(map_mutex_);
        sessions_[e->id] = e;
    }
    nlohmann::json j = batch_payload(*e);
    j["created_at"] = e->created_at;
    j["config"] = {{"budget", e->state.config.budget},
                   {"choices_per_round", e->state.config.choices_per_round},
                   {"init_batches", e->state.config.init_batches},
                   {"init_counts_toward_budget", e->state.config.init_counts_toward_budget},
                   {"likelihood", to_string(e->state.config.likelihood.kind)},
                   {"task", e->task.name},
                   {"dim", e->task.active.size()}};
    return j;
}

nlohmann::json SessionManager::get_batch(const std::string& id)
{
    auto e = find(id);
    std::lock_guard lock(e->mutex);
    if (!e->state.pending)
        throw conflict(e->state.finished() ? "session is finished" : "no batch is pending");
    return batch_payload(*e);
}

nlohmann::json SessionManager::submit_choice(const std::string& id, const nlohmann::json& request)
{
    auto e = find(id);
    std::lock_guard lock(e->mutex);
    if (e->state.finished())
        throw conflict("session is finished");
    if (!request.is_object() || !request.contains("batch_id") || !request.at("batch_id").is_number_unsigned())
        throw bad_request("request needs a non-negative integer 'batch_id'");
    if (!request.contains("winners") || !request.at("winners").is_array())
        throw bad_request("request needs a 'winners' array");
    const auto batch_id = request.at("batch_id").get<std::size_t>();
    if (!e->state.pending || batch_id != e->state.pending->batch_id)
        throw conflict("batch " + std::to_string(batch_id) + " is not the pending batch");
    std::vector<std::size_t> winners;
    try
    {
        winners = request.at("winners").get<std::vector<std::size_t>>();
    }
    catch (const nlohmann::json::exception&)
    {
        throw bad_request("winners must be non-negative integer positions");
    }
    if (winners.empty())
        throw bad_request("select at least one candidate");

    SessionState next = e->state;
    try
    {
        session_record_choice(next, winners);
        if (next.can_propose())
            session_next_batch(next);
    }
    catch (const ContractError& ex)
    {
        throw bad_request(ex.what());
    }
    catch (const NumericalError& ex)
    {
        throw ServiceError(500, "numerical-failure", ex.what());
    }
    std::swap(e->state, next);
    try
    {
        persist(*e);
    }
    catch (...)
    {
        std::swap(e->state, next);
        throw;
    }
    return e->state.pending ? batch_payload(*e) : final_payload(*e);
}

nlohmann::json SessionManager::get_status(const std::string& id)
{
    auto e = find(id);
    std::lock_guard lock(e->mutex);
    nlohmann::json j = envelope(*e, "status");
    j["round"] = e->state.round;
    j["created_at"] = e->created_at;
    nlohmann::json trajectory = nlohmann::json::array();
    for (const auto& t : e->state.trajectory)
        trajectory.push_back({{"round", t.round}, {"incumbent_value", t.incumbent_value}, {"init_phase", t.init_phase}});
    j["trajectory"] = trajectory;
    if (e->state.pending)
        j["batch_id"] = e->state.pending->batch_id;
    if (e->state.posterior)
        j["incumbent_preview"] = preview_path(e->task.render(e->state.archive[e->state.incumbent_index]), e->task);
    if (e->state.finished())
    {
        const SessionBest best = session_best(e->state);
        j["final"] = {{"theta", std::vector<double>(best.theta.data(), best.theta.data() + best.theta.size())},
                      {"predicted_value", best.predicted_value}};
    }
    return j;
}

nlohmann::json SessionManager::get_final(const std::string& id)
{
    auto e = find(id);
    std::lock_guard lock(e->mutex);
    if (!e->state.finished())
        throw conflict("session is not finished");
    return final_payload(*e);
}
} // namespace multibo
