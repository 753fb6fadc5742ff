#pragma once

// Benchmark harness: seed sweeps of autonomous sessions, aggregated into
// per-round regret statistics. Output is byte-deterministic for a fixed spec.

#include "multibo/session.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace multibo
{
struct BenchmarkSpec
{
    std::string objective = "warp-affine";
    std::size_t seeds = 20;
    std::uint64_t seed_offset = 0;
    std::size_t budget = 50;
    std::size_t init_batches = 10;
    /// Multiwise choice-set size (pairwise-vs-multiwise, dbs-components).
    std::size_t k = 4;
    /// Choice-set sizes swept by choice-k.
    std::vector<std::size_t> k_values{2, 4, 6, 10};
    /// Simulated user for the noiseless ablations.
    ChoiceNoiseModel choice;
    /// Gumbel temperature at K = 2 for the noisy choice-k user; scaled by 1 + 0.15 (K - 2).
    double noisy_base_temperature = 0.05;
    int field_size = 32;
    /// Worker threads; 0 picks the hardware concurrency. Results do not depend on it.
    unsigned threads = 0;

    void validate() const;
    std::vector<std::uint64_t> seed_list() const;
};

/// Temperature of the K-scaled noisy user.
double noisy_temperature(double base, std::size_t k);

struct RoundStats
{
    std::size_t round = 0;
    double median_regret = 0.0;
    double q25_regret = 0.0;
    double q75_regret = 0.0;
    double median_incumbent_value = 0.0;
    double median_subspace_dim = 0.0;
};

struct VariantResult
{
    std::string name;
    /// Everything that determines the runs, minus the seed.
    nlohmann::json config;
    std::string config_hash;
    std::vector<std::uint64_t> seeds;
    /// runs[i] belongs to seeds[i]; seeds ascending.
    std::vector<std::vector<TrajectoryEntry>> runs;
    std::vector<RoundStats> stats;

    std::vector<double> final_regrets() const;
    double median_final_regret() const;
};

struct AblationReport
{
    std::string ablation;
    std::vector<VariantResult> variants;
    nlohmann::json summary;

    const VariantResult& variant(const std::string& name) const;
};

/// Linear-interpolation quantile (q in [0, 1]) of an unsorted sample.
double quantile(std::vector<double> values, double q);
double median(std::vector<double> values);

using ConfigFactory = std::function<SessionConfig(const HiddenObjective& objective, std::uint64_t seed)>;

/// Runs one variant over all seeds of the spec.
VariantResult run_variant(const std::string& name, const BenchmarkSpec& spec, const ConfigFactory& make_config,
                          const ChoiceNoiseModel& choice);

/// Pairwise-logit K = 2 against multinomial-logit K = spec.k.
AblationReport run_ablation_pairwise_vs_multiwise(const BenchmarkSpec& spec);
/// Every K in spec.k_values under the noiseless user and the K-scaled noisy user.
AblationReport run_ablation_choice_k(const BenchmarkSpec& spec);
/// Full DBS, bridge-only, subspace-only, EI top-K and uniform random proposals.
AblationReport run_ablation_dbs_components(const BenchmarkSpec& spec);

/// Fraction of paired seeds where `a` ends with lower regret than `b` (ties count half).
double win_rate(const VariantResult& a, const VariantResult& b);
/// True when a's median regret is <= b's at every round >= from_round.
bool median_dominates(const VariantResult& a, const VariantResult& b, std::size_t from_round);

/// Per-variant table (one row per round).
std::string variant_table(const VariantResult& v);
/// Writes `<ablation>__<variant>.tsv` per variant and `<ablation>__summary.json`.
void write_report(const AblationReport& report, const std::filesystem::path& out_dir);
/// The summary document as written by write_report.
nlohmann::json report_summary(const AblationReport& report);
} // namespace multibo
