#include "multibo/bench.hpp"

#include "multibo/errors.hpp"
#include "multibo/hash.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

namespace multibo
{
namespace
{
std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

SessionConfig bench_config(const BenchmarkSpec& spec, const HiddenObjective& objective, std::size_t k,
                           LikelihoodKind kind, std::uint64_t seed)
{
    SessionConfig cfg = default_config_for(objective, k, seed);
    cfg.budget = spec.budget;
    cfg.init_batches = spec.init_batches;
    cfg.likelihood.kind = kind;
    return cfg;
}

LikelihoodKind kind_for(std::size_t k) { return k == 2 ? LikelihoodKind::pairwise_logit : LikelihoodKind::multinomial_logit; }

nlohmann::json choice_json(const ChoiceNoiseModel& m)
{
    return {{"kind", to_string(m.kind)}, {"temperature", m.temperature}, {"epsilon", m.epsilon}};
}

std::vector<RoundStats> round_stats(const std::vector<std::vector<TrajectoryEntry>>& runs)
{
    std::vector<RoundStats> out;
    if (runs.empty())
        return out;
    const std::size_t rounds = runs.front().size();
    for (std::size_t r = 0; r < rounds; ++r)
    {
        std::vector<double> regret, value, dim;
        for (const auto& run : runs)
        {
            if (run.size() != rounds)
                throw NumericalError("benchmark runs have different lengths");
            regret.push_back(run[r].regret.value_or(std::nan("")));
            value.push_back(run[r].incumbent_value);
            dim.push_back(static_cast<double>(run[r].subspace_dim));
        }
        RoundStats s;
        s.round = runs.front()[r].round;
        s.median_regret = median(regret);
        s.q25_regret = quantile(regret, 0.25);
        s.q75_regret = quantile(regret, 0.75);
        s.median_incumbent_value = median(value);
        s.median_subspace_dim = median(dim);
        out.push_back(s);
    }
    return out;
}

nlohmann::json variant_summary(const VariantResult& v)
{
    nlohmann::json curves = nlohmann::json::array();
    nlohmann::json dims = nlohmann::json::array();
    for (const auto& run : v.runs)
    {
        std::vector<double> c;
        std::vector<std::size_t> d;
        for (const auto& t : run)
        {
            c.push_back(t.regret.value_or(std::nan("")));
            d.push_back(t.subspace_dim);
        }
        curves.push_back(c);
        dims.push_back(d);
    }
    const auto finals = v.final_regrets();
    return {
        {"name", v.name},
        {"config_hash", v.config_hash},
        {"config", v.config},
        {"seeds", v.seeds},
        {"final_regrets", finals},
        {"median_final_regret", v.median_final_regret()},
        {"q25_final_regret", quantile(finals, 0.25)},
        {"q75_final_regret", quantile(finals, 0.75)},
        {"regret_curves", curves},
        {"subspace_dim_traces", dims},
    };
}
} // namespace

void BenchmarkSpec::validate() const
{
    if (seeds < 1)
        throw ContractError("benchmarks need at least one seed");
    if (k < 2)
        throw ContractError("benchmark K must be at least 2");
    for (std::size_t kv : k_values)
        if (kv < 2 || kv > k_max_subset_choices)
            throw ContractError("choice-k values must lie in [2, " + std::to_string(k_max_subset_choices) + "]");
    if (init_batches < 1)
        throw ContractError("init_batches must be at least 1");
    if (!(noisy_base_temperature > 0.0))
        throw ContractError("noisy base temperature must be positive");
    choice.validate();
    make_objective(objective, 0, field_size);
}

std::vector<std::uint64_t> BenchmarkSpec::seed_list() const
{
    std::vector<std::uint64_t> out(seeds);
    for (std::size_t i = 0; i < seeds; ++i)
        out[i] = seed_offset + i;
    return out;
}

double noisy_temperature(double base, std::size_t k) { return base * (1.0 + 0.15 * (static_cast<double>(k) - 2.0)); }

double quantile(std::vector<double> values, double q)
{
    if (values.empty())
        return std::nan("");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

std::vector<double> VariantResult::final_regrets() const
{
    std::vector<double> out;
    for (const auto& run : runs)
        out.push_back(run.empty() ? std::nan("") : run.back().regret.value_or(std::nan("")));
    return out;
}

double VariantResult::median_final_regret() const { return median(final_regrets()); }

const VariantResult& AblationReport::variant(const std::string& name) const
{
    for (const auto& v : variants)
        if (v.name == name)
            return v;
    throw ContractError("report has no variant '" + name + "'");
}

VariantResult run_variant(const std::string& name, const BenchmarkSpec& spec, const ConfigFactory& make_config,
                          const ChoiceNoiseModel& choice)
{
    VariantResult result;
    result.name = name;
    result.seeds = spec.seed_list();
    result.runs.resize(result.seeds.size());

    const HiddenObjective probe = make_objective(spec.objective, result.seeds.front(), spec.field_size);
    SessionConfig tmpl = make_config(probe, 0);
    result.config = {
        {"objective", spec.objective},
        {"field_size", spec.field_size},
        {"session", to_json(tmpl)},
        {"choice", choice_json(choice)},
        {"seeds", result.seeds},
    };
    result.config_hash = sha256_hex(result.config.dump());

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&]() {
        for (std::size_t i = next++; i < result.seeds.size(); i = next++)
        {
            try
            {
                const std::uint64_t seed = result.seeds[i];
                const HiddenObjective objective = make_objective(spec.objective, seed, spec.field_size);
                result.runs[i] = run_autonomous(make_config(objective, seed), objective, choice);
            }
            catch (...)
            {
                std::lock_guard lock(failure_mutex);
                if (!failure)
                    failure = std::current_exception();
            }
        }
    };
    unsigned n_threads = spec.threads ? spec.threads : std::max(1u, std::thread::hardware_concurrency());
    n_threads = static_cast<unsigned>(std::min<std::size_t>(n_threads, result.seeds.size()));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < n_threads; ++t)
        pool.emplace_back(worker);
    worker();
    for (auto& t : pool)
        t.join();
    if (failure)
        std::rethrow_exception(failure);

    result.stats = round_stats(result.runs);
    return result;
}

double win_rate(const VariantResult& a, const VariantResult& b)
{
    const auto fa = a.final_regrets();
    const auto fb = b.final_regrets();
    if (fa.size() != fb.size() || fa.empty())
        throw ContractError("win_rate needs two variants over the same seeds");
    double wins = 0.0;
    for (std::size_t i = 0; i < fa.size(); ++i)
        wins += fa[i] < fb[i] ? 1.0 : (fa[i] == fb[i] ? 0.5 : 0.0);
    return wins / static_cast<double>(fa.size());
}

bool median_dominates(const VariantResult& a, const VariantResult& b, std::size_t from_round)
{
    const std::size_t n = std::min(a.stats.size(), b.stats.size());
    for (std::size_t i = 0; i < n; ++i)
        if (a.stats[i].round >= from_round && a.stats[i].median_regret > b.stats[i].median_regret)
            return false;
    return true;
}

AblationReport run_ablation_pairwise_vs_multiwise(const BenchmarkSpec& spec)
{
    spec.validate();
    if (spec.k == 2)
        throw ContractError("the multiwise variant needs K > 2");
    AblationReport report;
    report.ablation = "pairwise-vs-multiwise";
    report.variants.push_back(run_variant(
        "pairwise-k2", spec,
        [&](const HiddenObjective& o, std::uint64_t s) {
            return bench_config(spec, o, 2, LikelihoodKind::pairwise_logit, s);
        },
        spec.choice));
    report.variants.push_back(run_variant(
        "multiwise-k" + std::to_string(spec.k), spec,
        [&](const HiddenObjective& o, std::uint64_t s) {
            return bench_config(spec, o, spec.k, LikelihoodKind::multinomial_logit, s);
        },
        spec.choice));
    const auto& pair = report.variants[0];
    const auto& multi = report.variants[1];
    report.summary = {
        {"multiwise_win_rate", win_rate(multi, pair)},
        {"multiwise_median_final_lower", multi.median_final_regret() < pair.median_final_regret()},
        {"multiwise_dominates_from_round_10", median_dominates(multi, pair, 10)},
    };
    return report;
}

AblationReport run_ablation_choice_k(const BenchmarkSpec& spec)
{
    spec.validate();
    AblationReport report;
    report.ablation = "choice-k";
    nlohmann::json noiseless = nlohmann::json::object();
    nlohmann::json noisy = nlohmann::json::object();
    for (std::size_t k : spec.k_values)
    {
        auto factory = [&spec, k](const HiddenObjective& o, std::uint64_t s) {
            return bench_config(spec, o, k, kind_for(k), s);
        };
        report.variants.push_back(run_variant("noiseless-k" + std::to_string(k), spec, factory, spec.choice));
        noiseless[std::to_string(k)] = report.variants.back().median_final_regret();

        ChoiceNoiseModel user;
        user.kind = ChoiceKind::gumbel_logit;
        user.temperature = noisy_temperature(spec.noisy_base_temperature, k);
        report.variants.push_back(run_variant("noisy-k" + std::to_string(k), spec, factory, user));
        noisy[std::to_string(k)] = report.variants.back().median_final_regret();
    }
    std::vector<std::size_t> ks = spec.k_values;
    std::sort(ks.begin(), ks.end());
    bool monotone = true;
    for (std::size_t i = 1; i < ks.size(); ++i)
        monotone = monotone && noiseless[std::to_string(ks[i])].get<double>() <=
                                   noiseless[std::to_string(ks[i - 1])].get<double>();
    report.summary = {
        {"noiseless_median_final_regret", noiseless},
        {"noisy_median_final_regret", noisy},
        {"noiseless_non_increasing_in_k", monotone},
        {"noisy_base_temperature", spec.noisy_base_temperature},
    };
    if (noisy.contains("4") && noisy.contains("10"))
        report.summary["noisy_k10_exceeds_k4"] = noisy["10"].get<double>() > noisy["4"].get<double>();
    return report;
}

AblationReport run_ablation_dbs_components(const BenchmarkSpec& spec)
{
    spec.validate();
    AblationReport report;
    report.ablation = "dbs-components";
    const std::pair<const char*, ProposalStrategy> variants[] = {
        {"dbs", ProposalStrategy::dbs},
        {"bridge-only", ProposalStrategy::bridge_only},
        {"subspace-only", ProposalStrategy::subspace_only},
        {"ei-top-k", ProposalStrategy::ei_top_k},
        {"random", ProposalStrategy::random},
    };
    nlohmann::json medians = nlohmann::json::object();
    for (const auto& [name, strategy] : variants)
    {
        auto factory = [&spec, strategy](const HiddenObjective& o, std::uint64_t s) {
            SessionConfig cfg = bench_config(spec, o, spec.k, kind_for(spec.k), s);
            cfg.dbs.strategy = strategy;
            return cfg;
        };
        report.variants.push_back(run_variant(name, spec, factory, spec.choice));
        medians[name] = report.variants.back().median_final_regret();
    }
    report.summary = {
        {"median_final_regret", medians},
        {"dbs_win_rate_vs_random", win_rate(report.variant("dbs"), report.variant("random"))},
        {"dbs_median_final_lower_than_random",
         report.variant("dbs").median_final_regret() < report.variant("random").median_final_regret()},
    };
    return report;
}

std::string variant_table(const VariantResult& v)
{
    std::string out = "round\tmedian_regret\tq25_regret\tq75_regret\tmedian_incumbent_value\tmedian_subspace_dim\t"
                      "n_seeds\tconfig_hash\n";
    for (const auto& s : v.stats)
        out += std::to_string(s.round) + "\t" + fmt(s.median_regret) + "\t" + fmt(s.q25_regret) + "\t" +
               fmt(s.q75_regret) + "\t" + fmt(s.median_incumbent_value) + "\t" + fmt(s.median_subspace_dim) + "\t" +
               std::to_string(v.seeds.size()) + "\t" + v.config_hash + "\n";
    return out;
}

nlohmann::json report_summary(const AblationReport& report)
{
    nlohmann::json variants = nlohmann::json::array();
    for (const auto& v : report.variants)
        variants.push_back(variant_summary(v));
    return {{"ablation", report.ablation}, {"results", report.summary}, {"variants", variants}};
}

void write_report(const AblationReport& report, const std::filesystem::path& out_dir)
{
    std::filesystem::create_directories(out_dir);
    auto write = [](const std::filesystem::path& path, const std::string& text) {
        std::ofstream os(path, std::ios::binary);
        if (!os)
            throw ContractError("cannot write " + path.string());
        os << text;
    };
    for (const auto& v : report.variants)
        write(out_dir / (report.ablation + "__" + v.name + ".tsv"), variant_table(v));
    write(out_dir / (report.ablation + "__summary.json"), report_summary(report).dump(2) + "\n");
}
} // namespace multibo
