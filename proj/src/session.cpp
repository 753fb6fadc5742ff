#include "multibo/session.hpp"

#include "multibo/errors.hpp"
#include "multibo/sobol.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace multibo
{
namespace
{
void serve_batch(SessionState& state, const Eigen::MatrixXd& batch, std::size_t subspace_dim)
{
    PendingBatch pending;
    for (Eigen::Index i = 0; i < batch.rows(); ++i)
    {
        pending.indices.push_back(state.archive.size());
        state.archive.push_back(batch.row(i).transpose());
    }
    pending.batch_id = ++state.batches_issued;
    pending.subspace_dim = subspace_dim;
    state.pending = std::move(pending);
}

void serve_init_batch(SessionState& state)
{
    const auto k = static_cast<Eigen::Index>(state.config.choices_per_round);
    const auto first = static_cast<Eigen::Index>(state.batches_issued) * k;
    serve_batch(state, state.init_design.middleRows(first, k), 0);
}

void update_incumbent(SessionState& state)
{
    const LatentPosterior& post = *state.posterior;
    const GpPredictor predictor = post.predictor();
    Eigen::VectorXd means, vars;
    predictor.batch_moments(post.archive_points, means, vars);
    std::size_t best = 0;
    if (state.config.incumbent_rule == IncumbentRule::last_winner && !state.observations.empty())
    {
        const auto& last = state.observations.back();
        best = last.choice_set[last.winners.front()];
    }
    else
    {
        for (Eigen::Index i = 1; i < means.size(); ++i)
            if (means(i) > means(static_cast<Eigen::Index>(best)))
                best = static_cast<std::size_t>(i);
    }
    state.incumbent_index = best;
    state.incumbent_value = means(static_cast<Eigen::Index>(best));
}

nlohmann::json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const nlohmann::json& j)
{
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m)
{
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        rows.push_back(vector_json(m.row(i).transpose()));
    return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index cols)
{
    Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
    for (std::size_t i = 0; i < j.size(); ++i)
    {
        const Eigen::VectorXd row = vector_from_json(j[i]);
        if (row.size() != cols)
            throw ContractError("matrix row has the wrong length");
        m.row(static_cast<Eigen::Index>(i)) = row.transpose();
    }
    return m;
}

nlohmann::json observations_json(const std::vector<PreferenceObservation>& obs)
{
    nlohmann::json out = nlohmann::json::array();
    for (const auto& o : obs)
        out.push_back({{"choice_set", o.choice_set}, {"winners", o.winners}});
    return out;
}

std::vector<PreferenceObservation> observations_from_json(const nlohmann::json& j)
{
    std::vector<PreferenceObservation> out;
    for (const auto& o : j)
        out.push_back({o.at("choice_set").get<std::vector<std::size_t>>(),
                       o.at("winners").get<std::vector<std::size_t>>()});
    return out;
}

nlohmann::json kernel_json(const KernelConfig& k)
{
    return {{"family", k.family == KernelFamily::matern52 ? "matern52" : "squared-exponential"},
            {"lengthscales", k.lengthscales},
            {"signal_variance", k.signal_variance},
            {"jitter", k.jitter}};
}

KernelConfig kernel_from_json(const nlohmann::json& j)
{
    KernelConfig k;
    const auto fam = j.at("family").get<std::string>();
    if (fam == "matern52")
        k.family = KernelFamily::matern52;
    else if (fam == "squared-exponential")
        k.family = KernelFamily::squared_exponential;
    else
        throw ContractError("unknown kernel family '" + fam + "'");
    k.lengthscales = j.at("lengthscales").get<std::vector<double>>();
    k.signal_variance = j.at("signal_variance").get<double>();
    k.jitter = j.at("jitter").get<double>();
    return k;
}

void check_version(const nlohmann::json& j, const char* what)
{
    if (!j.contains("version") || j.at("version").get<int>() != k_session_format_version)
        throw ContractError(std::string(what) + ": unsupported or missing format version");
}

std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
} // namespace

void SessionConfig::validate() const
{
    if (budget < 1 && init_counts_toward_budget)
        throw ContractError("budget must be at least 1");
    if (choices_per_round < 2)
        throw ContractError("choices_per_round must be at least 2");
    if (choices_per_round > k_max_subset_choices)
        throw ContractError("choices_per_round above " + std::to_string(k_max_subset_choices) + " is not supported");
    if (init_batches < 1)
        throw ContractError("init_batches must be at least 1");
    if (init_counts_toward_budget && budget < init_batches)
        throw ContractError("budget must cover the init batches when they count toward it");
    if (bounds.dim() < 1)
        throw ContractError("session bounds are empty");
    if (!(lengthscale_factor > 0.0) || !std::isfinite(lengthscale_factor))
        throw ContractError("lengthscale_factor must be positive");
    kernel.validate();
    if (!auto_lengthscale)
        kernel.check_dimension(bounds.dim());
    DbsConfig d = dbs;
    d.k = choices_per_round;
    d.validate();
    if ((likelihood.kind == LikelihoodKind::pairwise_logit || likelihood.kind == LikelihoodKind::pairwise_probit) &&
        choices_per_round != 2)
        throw ContractError("pairwise likelihoods need choices_per_round = 2");
}

std::size_t SessionConfig::acquisition_rounds() const
{
    return init_counts_toward_budget ? budget - init_batches : budget;
}

Eigen::MatrixXd SessionState::archive_matrix() const
{
    if (archive.empty())
        return Eigen::MatrixXd(0, config.bounds.dim());
    Eigen::MatrixXd m(static_cast<Eigen::Index>(archive.size()), archive.front().size());
    for (std::size_t i = 0; i < archive.size(); ++i)
        m.row(static_cast<Eigen::Index>(i)) = archive[i].transpose();
    return m;
}

bool SessionState::can_propose() const
{
    if (pending || !posterior)
        return false;
    if (batches_issued < config.init_batches)
        return true;
    return batches_issued - config.init_batches < config.acquisition_rounds();
}

bool SessionState::finished() const { return !pending && posterior.has_value() && !can_propose(); }

std::size_t SessionState::remaining_rounds() const
{
    const std::size_t total = config.init_batches + config.acquisition_rounds();
    return total > round ? total - round : 0;
}

SessionState session_init(const SessionConfig& cfg)
{
    cfg.validate();
    SessionState state;
    state.config = cfg;
    state.config.dbs.k = cfg.choices_per_round;
    state.rng = Rng(cfg.seed);
    const std::size_t n_init = cfg.init_batches * cfg.choices_per_round;
    const Eigen::MatrixXd unit = shifted_sobol(n_init, cfg.bounds.dim(), state.rng);
    state.init_design.resize(unit.rows(), unit.cols());
    for (Eigen::Index i = 0; i < unit.rows(); ++i)
        state.init_design.row(i) = cfg.bounds.from_unit(unit.row(i).transpose()).transpose();
    if (cfg.auto_lengthscale)
    {
        const double med = cfg.lengthscale_factor * median_pairwise_distance(unit);
        const Eigen::VectorXd width = cfg.bounds.width();
        state.config.kernel.lengthscales.assign(static_cast<std::size_t>(width.size()), med);
        for (Eigen::Index d = 0; d < width.size(); ++d)
            state.config.kernel.lengthscales[static_cast<std::size_t>(d)] = med * (width(d) > 0.0 ? width(d) : 1.0);
    }
    serve_init_batch(state);
    return state;
}

void session_record_choice(SessionState& state, const std::vector<std::size_t>& winners,
                           const HiddenObjective* objective)
{
    if (!state.pending)
        throw ProtocolError("no pending batch to record a choice for");
    PreferenceObservation obs{state.pending->indices, winners};
    std::sort(obs.winners.begin(), obs.winners.end());
    obs.validate(state.archive.size());
    if (obs.winners.size() > 1 && state.config.likelihood.kind != LikelihoodKind::subset_logit)
        throw ContractError("selecting several candidates needs the subset-logit likelihood");

    std::vector<PreferenceObservation> observations = state.observations;
    observations.push_back(obs);
    LatentPosterior post = laplace_fit(state.archive_matrix(), observations, state.config.kernel,
                                       state.config.likelihood, state.config.laplace);

    const std::size_t subspace_dim = state.pending->subspace_dim;
    const bool init_phase = state.pending->batch_id <= state.config.init_batches;
    state.observations = std::move(observations);
    state.posterior = std::move(post);
    state.pending.reset();
    ++state.round;
    update_incumbent(state);

    TrajectoryEntry entry;
    entry.round = state.round;
    entry.init_phase = init_phase;
    entry.incumbent_index = state.incumbent_index;
    entry.incumbent_value = state.incumbent_value;
    entry.subspace_dim = subspace_dim;
    if (objective)
    {
        const double f = objective_eval(*objective, state.archive[state.incumbent_index]);
        entry.true_objective = f;
        entry.regret = objective->f_max() - f;
    }
    state.trajectory.push_back(entry);
}

Eigen::MatrixXd session_next_batch(SessionState& state)
{
    if (state.pending)
        throw ProtocolError("a batch is already awaiting feedback");
    if (!state.posterior)
        throw ProtocolError("no posterior has been fitted yet");
    const SessionConfig& cfg = state.config;
    if (state.batches_issued < cfg.init_batches)
    {
        serve_init_batch(state);
    }
    else
    {
        if (state.batches_issued - cfg.init_batches >= cfg.acquisition_rounds())
            throw BudgetExhausted("query budget of " + std::to_string(cfg.budget) + " rounds is exhausted");
        const GpPredictor predictor = state.posterior->predictor();
        const Eigen::VectorXd x_best = state.archive[state.incumbent_index];
        const DbsProposal proposal =
            dbs_propose(predictor, state.incumbent_value, x_best, cfg.bounds, cfg.dbs, state.rng);
        serve_batch(state, proposal.points, proposal.subspace_dim);
    }
    const auto& idx = state.pending->indices;
    Eigen::MatrixXd batch(static_cast<Eigen::Index>(idx.size()), cfg.bounds.dim());
    for (std::size_t i = 0; i < idx.size(); ++i)
        batch.row(static_cast<Eigen::Index>(i)) = state.archive[idx[i]].transpose();
    return batch;
}

SessionBest session_best(const SessionState& state, const HiddenObjective* objective)
{
    if (!state.posterior)
        throw ProtocolError("session_best needs at least one fitted posterior");
    SessionBest best;
    best.archive_index = state.incumbent_index;
    best.theta = state.archive[state.incumbent_index];
    best.predicted_value = state.incumbent_value;
    if (objective && objective->warp_task())
    {
        const WarpTask& task = *objective->warp_task();
        best.render = warp_compose(WarpParams(task.expand(best.theta)), task.source);
    }
    return best;
}

SessionState run_autonomous_session(const SessionConfig& cfg, const HiddenObjective& objective,
                                    const ChoiceNoiseModel& choice_model)
{
    if (cfg.bounds.dim() != objective.dim() || cfg.bounds.lower != objective.bounds().lower ||
        cfg.bounds.upper != objective.bounds().upper)
        throw ContractError("run_autonomous: session bounds do not match the objective");
    SessionState state = session_init(cfg);
    Rng user_rng(cfg.seed ^ 0x9e37'79b9'7f4a'7c15ULL);
    while (state.pending)
    {
        const auto& idx = state.pending->indices;
        Eigen::VectorXd values(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i)
            values(static_cast<Eigen::Index>(i)) = objective_eval(objective, state.archive[idx[i]]);
        session_record_choice(state, simulate_choice(values, choice_model, user_rng), &objective);
        if (state.can_propose())
            session_next_batch(state);
    }
    return state;
}

std::vector<TrajectoryEntry> run_autonomous(const SessionConfig& cfg, const HiddenObjective& objective,
                                            const ChoiceNoiseModel& choice_model)
{
    return run_autonomous_session(cfg, objective, choice_model).trajectory;
}

SessionConfig default_config_for(const HiddenObjective& objective, std::size_t k, std::uint64_t seed)
{
    SessionConfig cfg;
    cfg.bounds = objective.bounds();
    cfg.choices_per_round = k;
    cfg.dbs.k = k;
    cfg.seed = seed;
    cfg.likelihood.kind = k == 2 ? LikelihoodKind::pairwise_logit : LikelihoodKind::multinomial_logit;
    return cfg;
}

nlohmann::json to_json(const SessionConfig& cfg)
{
    const DbsConfig& d = cfg.dbs;
    return {
        {"budget", cfg.budget},
        {"choices_per_round", cfg.choices_per_round},
        {"init_batches", cfg.init_batches},
        {"init_counts_toward_budget", cfg.init_counts_toward_budget},
        {"bounds", {{"lower", vector_json(cfg.bounds.lower)}, {"upper", vector_json(cfg.bounds.upper)}}},
        {"kernel", kernel_json(cfg.kernel)},
        {"auto_lengthscale", cfg.auto_lengthscale},
        {"lengthscale_factor", cfg.lengthscale_factor},
        {"likelihood", {{"kind", to_string(cfg.likelihood.kind)}, {"noise_scale", cfg.likelihood.noise_scale}}},
        {"dbs",
         {{"gamma_bridge", d.gamma_bridge},
          {"spectral_threshold", d.spectral_threshold},
          {"n_gradient_samples", d.n_gradient_samples},
          {"neighborhood_radius", d.neighborhood_radius},
          {"perturb_scale", d.perturb_scale},
          {"ei_restarts", d.ei_restarts},
          {"ei_raw_samples", d.ei_raw_samples},
          {"ei_max_iterations", d.ei_max_iterations},
          {"ei_joint_incumbent", d.ei_joint_incumbent},
          {"strategy", to_string(d.strategy)}}},
        {"incumbent_rule", cfg.incumbent_rule == IncumbentRule::posterior_mean ? "posterior-mean" : "last-winner"},
        {"laplace",
         {{"gradient_tolerance", cfg.laplace.gradient_tolerance},
          {"max_iterations", cfg.laplace.max_iterations},
          {"max_halvings", cfg.laplace.max_halvings}}},
        {"seed", cfg.seed},
    };
}

SessionConfig session_config_from_json(const nlohmann::json& j)
{
    SessionConfig cfg;
    try
    {
        cfg.budget = j.at("budget").get<std::size_t>();
        cfg.choices_per_round = j.at("choices_per_round").get<std::size_t>();
        cfg.init_batches = j.at("init_batches").get<std::size_t>();
        cfg.init_counts_toward_budget = j.at("init_counts_toward_budget").get<bool>();
        cfg.bounds = BoxBounds(vector_from_json(j.at("bounds").at("lower")),
                               vector_from_json(j.at("bounds").at("upper")));
        cfg.kernel = kernel_from_json(j.at("kernel"));
        cfg.auto_lengthscale = j.at("auto_lengthscale").get<bool>();
        cfg.lengthscale_factor = j.at("lengthscale_factor").get<double>();
        cfg.likelihood.kind = likelihood_kind_from_string(j.at("likelihood").at("kind").get<std::string>());
        cfg.likelihood.noise_scale = j.at("likelihood").at("noise_scale").get<double>();
        const auto& d = j.at("dbs");
        cfg.dbs.k = cfg.choices_per_round;
        cfg.dbs.gamma_bridge = d.at("gamma_bridge").get<std::vector<double>>();
        cfg.dbs.spectral_threshold = d.at("spectral_threshold").get<double>();
        cfg.dbs.n_gradient_samples = d.at("n_gradient_samples").get<std::size_t>();
        cfg.dbs.neighborhood_radius = d.at("neighborhood_radius").get<double>();
        cfg.dbs.perturb_scale = d.at("perturb_scale").get<double>();
        cfg.dbs.ei_restarts = d.at("ei_restarts").get<std::size_t>();
        cfg.dbs.ei_raw_samples = d.at("ei_raw_samples").get<std::size_t>();
        cfg.dbs.ei_max_iterations = d.at("ei_max_iterations").get<int>();
        cfg.dbs.ei_joint_incumbent = d.at("ei_joint_incumbent").get<bool>();
        cfg.dbs.strategy = proposal_strategy_from_string(d.at("strategy").get<std::string>());
        const auto rule = j.at("incumbent_rule").get<std::string>();
        if (rule == "posterior-mean")
            cfg.incumbent_rule = IncumbentRule::posterior_mean;
        else if (rule == "last-winner")
            cfg.incumbent_rule = IncumbentRule::last_winner;
        else
            throw ContractError("unknown incumbent rule '" + rule + "'");
        cfg.laplace.gradient_tolerance = j.at("laplace").at("gradient_tolerance").get<double>();
        cfg.laplace.max_iterations = j.at("laplace").at("max_iterations").get<int>();
        cfg.laplace.max_halvings = j.at("laplace").at("max_halvings").get<int>();
        cfg.seed = j.at("seed").get<std::uint64_t>();
    }
    catch (const nlohmann::json::exception& e)
    {
        throw ContractError(std::string("malformed session config: ") + e.what());
    }
    return cfg;
}

nlohmann::json to_json(const LatentPosterior& posterior)
{
    return {
        {"version", k_session_format_version},
        {"kind", "latent-posterior"},
        {"kernel", kernel_json(posterior.kernel)},
        {"likelihood", {{"kind", to_string(posterior.model.kind)}, {"noise_scale", posterior.model.noise_scale}}},
        {"archive_points", matrix_json(posterior.archive_points)},
        {"f_map", vector_json(posterior.f_map)},
        {"observations", observations_json(posterior.observations)},
    };
}

LatentPosterior latent_posterior_from_json(const nlohmann::json& j)
{
    check_version(j, "latent posterior");
    try
    {
        const KernelConfig kernel = kernel_from_json(j.at("kernel"));
        LikelihoodModel model;
        model.kind = likelihood_kind_from_string(j.at("likelihood").at("kind").get<std::string>());
        model.noise_scale = j.at("likelihood").at("noise_scale").get<double>();
        const auto& pts = j.at("archive_points");
        const Eigen::Index dim = pts.empty() ? 0 : static_cast<Eigen::Index>(pts.front().size());
        const Eigen::MatrixXd archive = matrix_from_json(pts, dim);
        const Eigen::VectorXd stored = vector_from_json(j.at("f_map"));
        LatentPosterior post = laplace_fit(archive, observations_from_json(j.at("observations")), kernel, model);
        if (stored.size() != post.f_map.size() || (stored - post.f_map).lpNorm<Eigen::Infinity>() > 1e-9)
            throw NumericalError("stored f_map does not match the refitted posterior");
        return post;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw ContractError(std::string("malformed posterior document: ") + e.what());
    }
}

nlohmann::json to_json(const SessionState& state)
{
    std::ostringstream rng_state;
    rng_state << state.rng;
    nlohmann::json trajectory = nlohmann::json::array();
    for (const auto& t : state.trajectory)
    {
        nlohmann::json e = {{"round", t.round},
                            {"init_phase", t.init_phase},
                            {"incumbent_index", t.incumbent_index},
                            {"incumbent_value", t.incumbent_value},
                            {"subspace_dim", t.subspace_dim}};
        if (t.true_objective)
            e["true_objective"] = *t.true_objective;
        if (t.regret)
            e["regret"] = *t.regret;
        trajectory.push_back(e);
    }
    nlohmann::json j = {
        {"version", k_session_format_version},
        {"kind", "session-state"},
        {"config", to_json(state.config)},
        {"round", state.round},
        {"archive", nlohmann::json::array()},
        {"observations", observations_json(state.observations)},
        {"incumbent", {{"index", state.incumbent_index}, {"value", state.incumbent_value}}},
        {"init_design", matrix_json(state.init_design)},
        {"batches_issued", state.batches_issued},
        {"rng", rng_state.str()},
        {"trajectory", trajectory},
    };
    for (const auto& x : state.archive)
        j["archive"].push_back(vector_json(x));
    if (state.posterior)
        j["posterior"] = {{"archive_size", state.posterior->archive_points.rows()},
                          {"f_map", vector_json(state.posterior->f_map)}};
    if (state.pending)
        j["pending"] = {{"indices", state.pending->indices},
                        {"batch_id", state.pending->batch_id},
                        {"subspace_dim", state.pending->subspace_dim}};
    return j;
}

SessionState session_state_from_json(const nlohmann::json& j)
{
    check_version(j, "session state");
    SessionState state;
    try
    {
        state.config = session_config_from_json(j.at("config"));
        const Eigen::Index dim = state.config.bounds.dim();
        state.round = j.at("round").get<std::size_t>();
        for (const auto& x : j.at("archive"))
        {
            state.archive.push_back(vector_from_json(x));
            if (state.archive.back().size() != dim)
                throw ContractError("archive point has the wrong dimension");
        }
        state.observations = observations_from_json(j.at("observations"));
        state.incumbent_index = j.at("incumbent").at("index").get<std::size_t>();
        state.incumbent_value = j.at("incumbent").at("value").get<double>();
        state.init_design = matrix_from_json(j.at("init_design"), dim);
        state.batches_issued = j.at("batches_issued").get<std::size_t>();
        std::istringstream rng_state(j.at("rng").get<std::string>());
        rng_state >> state.rng;
        if (!rng_state)
            throw ContractError("corrupt rng state");
        for (const auto& e : j.at("trajectory"))
        {
            TrajectoryEntry t;
            t.round = e.at("round").get<std::size_t>();
            t.init_phase = e.at("init_phase").get<bool>();
            t.incumbent_index = e.at("incumbent_index").get<std::size_t>();
            t.incumbent_value = e.at("incumbent_value").get<double>();
            t.subspace_dim = e.at("subspace_dim").get<std::size_t>();
            if (e.contains("true_objective"))
                t.true_objective = e.at("true_objective").get<double>();
            if (e.contains("regret"))
                t.regret = e.at("regret").get<double>();
            state.trajectory.push_back(t);
        }
        if (j.contains("pending"))
        {
            PendingBatch p;
            p.indices = j.at("pending").at("indices").get<std::vector<std::size_t>>();
            p.batch_id = j.at("pending").at("batch_id").get<std::size_t>();
            p.subspace_dim = j.at("pending").at("subspace_dim").get<std::size_t>();
            for (std::size_t idx : p.indices)
                if (idx >= state.archive.size())
                    throw ContractError("pending batch refers to a missing archive point");
            state.pending = std::move(p);
        }
        for (const auto& obs : state.observations)
            obs.validate(state.archive.size());
        if (j.contains("posterior"))
        {
            const auto n = j.at("posterior").at("archive_size").get<std::size_t>();
            if (n > state.archive.size())
                throw ContractError("posterior archive size exceeds the archive");
            const Eigen::MatrixXd archive = state.archive_matrix().topRows(static_cast<Eigen::Index>(n));
            LatentPosterior post = laplace_fit(archive, state.observations, state.config.kernel,
                                               state.config.likelihood, state.config.laplace);
            const Eigen::VectorXd stored = vector_from_json(j.at("posterior").at("f_map"));
            if (stored.size() != post.f_map.size() || (stored - post.f_map).lpNorm<Eigen::Infinity>() > 1e-12)
                throw NumericalError("stored posterior does not match the refit of its archive and observations");
            state.posterior = std::move(post);
        }
    }
    catch (const nlohmann::json::exception& e)
    {
        throw ContractError(std::string("malformed session document: ") + e.what());
    }
    return state;
}

ReplayReport replay_session(const SessionState& recorded)
{
    ReplayReport report;
    SessionConfig cfg = recorded.config;
    SessionState fresh = session_init(cfg);
    for (std::size_t i = 0; i < recorded.observations.size(); ++i)
    {
        if (!fresh.pending && fresh.can_propose())
            session_next_batch(fresh);
        if (!fresh.pending || fresh.pending->indices != recorded.observations[i].choice_set)
        {
            report.pending_match = false;
            return report;
        }
        session_record_choice(fresh, recorded.observations[i].winners);
        ++report.rounds;
    }
    if (recorded.pending && !fresh.pending && fresh.can_propose())
        session_next_batch(fresh);

    if (fresh.archive.size() != recorded.archive.size())
    {
        report.max_archive_diff = std::numeric_limits<double>::infinity();
        return report;
    }
    for (std::size_t i = 0; i < fresh.archive.size(); ++i)
        report.max_archive_diff =
            std::max(report.max_archive_diff, (fresh.archive[i] - recorded.archive[i]).lpNorm<Eigen::Infinity>());
    if (fresh.posterior.has_value() != recorded.posterior.has_value())
        report.max_fmap_diff = std::numeric_limits<double>::infinity();
    else if (fresh.posterior)
    {
        if (fresh.posterior->f_map.size() != recorded.posterior->f_map.size())
            report.max_fmap_diff = std::numeric_limits<double>::infinity();
        else
            report.max_fmap_diff = (fresh.posterior->f_map - recorded.posterior->f_map).lpNorm<Eigen::Infinity>();
    }
    report.incumbents_match = fresh.incumbent_index == recorded.incumbent_index;
    const bool fresh_pending = fresh.pending.has_value();
    report.pending_match = fresh_pending == recorded.pending.has_value() &&
                           (!fresh_pending || fresh.pending->indices == recorded.pending->indices);
    return report;
}

std::string trajectory_csv(const std::vector<TrajectoryEntry>& trajectory)
{
    std::string out = "round,incumbent_value,true_objective,regret\n";
    for (const auto& t : trajectory)
    {
        out += std::to_string(t.round) + "," + format_double(t.incumbent_value) + "," +
               (t.true_objective ? format_double(*t.true_objective) : "") + "," +
               (t.regret ? format_double(*t.regret) : "") + "\n";
    }
    return out;
}
} // namespace multibo
