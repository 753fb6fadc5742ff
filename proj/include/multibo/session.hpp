#pragma once

// The preference-optimization loop as a sequential state machine:
//
//   session_init ──> [pending batch] ──record_choice──> [fitted] ──next_batch──> [pending batch] ...
//
// The first N0 batches come from a shifted Sobol design; every later batch is
// proposed by the configured acquisition strategy (DBS by default). Every
// transition is deterministic given the config seed and the recorded choices,
// so a session can be persisted as JSON and replayed exactly.

#include "multibo/acquisition.hpp"
#include "multibo/oracles.hpp"
#include "multibo/preference.hpp"
#include "multibo/random.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace multibo
{
enum class IncumbentRule
{
    posterior_mean, ///< archive argmax of the posterior mean
    last_winner,    ///< first winner of the most recent round
};

struct SessionConfig
{
    /// Number of acquisition rounds B.
    std::size_t budget = 50;
    std::size_t choices_per_round = 4;
    /// N0 quasi-random batches collected before acquisition starts.
    std::size_t init_batches = 10;
    /// When set, the init rounds are charged against `budget`.
    bool init_counts_toward_budget = false;
    BoxBounds bounds = theta_bounds();
    /// Preference utilities need more prior spread than unit variance to
    /// express strong, consistent choices.
    KernelConfig kernel{KernelFamily::matern52, {1.0}, 4.0, 4e-6};
    /// Replace kernel lengthscales with the per-axis median heuristic on the init design.
    bool auto_lengthscale = true;
    /// Multiplier applied to the median heuristic.
    double lengthscale_factor = 0.5;
    LikelihoodModel likelihood;
    DbsConfig dbs;
    IncumbentRule incumbent_rule = IncumbentRule::posterior_mean;
    LaplaceOptions laplace;
    std::uint64_t seed = 0;

    void validate() const;
    /// Acquisition rounds available after the init phase.
    std::size_t acquisition_rounds() const;
};

struct TrajectoryEntry
{
    std::size_t round = 0;
    bool init_phase = true;
    std::size_t incumbent_index = 0;
    double incumbent_value = 0.0;
    /// Only when an objective is attached (autonomous runs).
    std::optional<double> true_objective;
    std::optional<double> regret;
    /// Subspace dimension chosen for the batch that was answered; 0 if none.
    std::size_t subspace_dim = 0;
};

struct PendingBatch
{
    /// Archive indices, presentation order.
    std::vector<std::size_t> indices;
    /// 1-based batch counter; doubles as the idempotency token.
    std::size_t batch_id = 0;
    std::size_t subspace_dim = 0;
};

struct SessionState
{
    SessionConfig config;
    /// Completed feedback rounds.
    std::size_t round = 0;
    std::vector<Eigen::VectorXd> archive;
    std::vector<PreferenceObservation> observations;
    std::optional<LatentPosterior> posterior;
    std::size_t incumbent_index = 0;
    double incumbent_value = 0.0;
    std::optional<PendingBatch> pending;
    /// Init design, N0 * K rows; rows are moved into the archive as batches are served.
    Eigen::MatrixXd init_design;
    std::size_t batches_issued = 0;
    Rng rng;
    std::vector<TrajectoryEntry> trajectory;

    Eigen::MatrixXd archive_matrix() const;
    bool finished() const;
    /// True when a batch can be proposed now.
    bool can_propose() const;
    std::size_t remaining_rounds() const;
};

SessionState session_init(const SessionConfig& cfg);

/// Records the user's selection for the pending batch and refits the posterior.
/// `objective`, when given, adds the true incumbent value to the trajectory.
void session_record_choice(SessionState& state, const std::vector<std::size_t>& winners,
                           const HiddenObjective* objective = nullptr);

/// Issues the next batch (K x D) and marks it pending.
/// Throws BudgetExhausted when no acquisition rounds remain.
Eigen::MatrixXd session_next_batch(SessionState& state);

struct SessionBest
{
    Eigen::VectorXd theta;
    std::size_t archive_index = 0;
    double predicted_value = 0.0;
    std::optional<Field2D> render;
};

SessionBest session_best(const SessionState& state, const HiddenObjective* objective = nullptr);

/// Closes the loop with a simulated user: init + all acquisition rounds.
SessionState run_autonomous_session(const SessionConfig& cfg, const HiddenObjective& objective,
                                    const ChoiceNoiseModel& choice_model);
std::vector<TrajectoryEntry> run_autonomous(const SessionConfig& cfg, const HiddenObjective& objective,
                                            const ChoiceNoiseModel& choice_model);

/// Session configured with the objective's bounds and dimension-appropriate defaults.
SessionConfig default_config_for(const HiddenObjective& objective, std::size_t k, std::uint64_t seed);

inline constexpr int k_session_format_version = 1;

nlohmann::json to_json(const SessionConfig& cfg);
SessionConfig session_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const LatentPosterior& posterior);
/// Restores a posterior by refitting the stored archive and observations; throws
/// NumericalError if the refit disagrees with the stored f_map by more than 1e-9.
LatentPosterior latent_posterior_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SessionState& state);
SessionState session_state_from_json(const nlohmann::json& j);

struct ReplayReport
{
    std::size_t rounds = 0;
    double max_archive_diff = 0.0;
    double max_fmap_diff = 0.0;
    bool incumbents_match = true;
    bool pending_match = true;
    bool ok(double tol = 1e-12) const
    {
        return max_archive_diff <= tol && max_fmap_diff <= tol && incumbents_match && pending_match;
    }
};

/// Re-runs a session from its config and recorded choices and compares the
/// result with the stored state.
ReplayReport replay_session(const SessionState& recorded);

/// Tabular export: "round,incumbent_value,true_objective,regret".
std::string trajectory_csv(const std::vector<TrajectoryEntry>& trajectory);
} // namespace multibo
