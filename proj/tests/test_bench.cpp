#include "multibo/bench.hpp"
#include "multibo/errors.hpp"
#include "multibo/hash.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace multibo;

namespace
{
BenchmarkSpec tiny_spec()
{
    BenchmarkSpec spec;
    spec.objective = "branin-2d";
    spec.seeds = 1;
    spec.budget = 1;
    spec.init_batches = 2;
    spec.k = 4;
    return spec;
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }
} // namespace

TEST_CASE("SHA-256 digests")
{
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("quantiles interpolate linearly")
{
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
    CHECK(quantile({0.0, 10.0}, 0.25) == 2.5);
    CHECK(quantile({5.0, 1.0, 3.0, 2.0, 4.0}, 0.75) == 4.0);
    CHECK(std::isnan(median({})));
}

TEST_CASE("noisy user temperature grows with K")
{
    CHECK(noisy_temperature(0.05, 2) == 0.05);
    CHECK(noisy_temperature(0.05, 4) == doctest::Approx(0.065));
    CHECK(noisy_temperature(0.05, 10) == doctest::Approx(0.11));
}

TEST_CASE("benchmark settings are validated")
{
    BenchmarkSpec spec = tiny_spec();
    spec.seeds = 0;
    CHECK_THROWS_AS(spec.validate(), ContractError);
    spec = tiny_spec();
    spec.k_values = {2, 13};
    CHECK_THROWS_AS(spec.validate(), ContractError);
    spec = tiny_spec();
    spec.objective = "nope";
    CHECK_THROWS_AS(spec.validate(), ContractError);
    spec = tiny_spec();
    spec.seed_offset = 7;
    spec.seeds = 3;
    CHECK(spec.seed_list() == std::vector<std::uint64_t>{7, 8, 9});
}

TEST_CASE("one seed and one round give 1 + N0 rows per variant")
{
    const AblationReport r = run_ablation_pairwise_vs_multiwise(tiny_spec());
    REQUIRE(r.variants.size() == 2);
    for (const auto& v : r.variants)
    {
        CHECK(v.stats.size() == 3);
        const std::string table = variant_table(v);
        CHECK(count_lines(table) == 1 + 3);
        // Every data row ends with the full config hash.
        std::istringstream is(table);
        std::string line;
        std::getline(is, line);
        while (std::getline(is, line))
        {
            CHECK(line.size() > 64);
            CHECK(line.substr(line.size() - 64) == v.config_hash);
        }
        CHECK(v.config_hash == sha256_hex(v.config.dump()));
    }
    CHECK(r.variants[0].config_hash != r.variants[1].config_hash);
    CHECK(r.summary.contains("multiwise_win_rate"));
}

TEST_CASE("reports are byte-deterministic and independent of the thread count")
{
    BenchmarkSpec spec = tiny_spec();
    spec.seeds = 3;
    spec.budget = 2;
    spec.threads = 1;
    const auto base = std::filesystem::temp_directory_path() / "multibo_bench_test";
    std::filesystem::remove_all(base);
    write_report(run_ablation_pairwise_vs_multiwise(spec), base / "a");
    spec.threads = 3;
    write_report(run_ablation_pairwise_vs_multiwise(spec), base / "b");
    std::size_t files = 0;
    for (const auto& entry : std::filesystem::directory_iterator(base / "a"))
    {
        ++files;
        CHECK(slurp(entry.path()) == slurp(base / "b" / entry.path().filename()));
    }
    CHECK(files == 3);
    const auto summary = nlohmann::json::parse(slurp(base / "a" / "pairwise-vs-multiwise__summary.json"));
    CHECK(summary["variants"].size() == 2);
    CHECK(summary["variants"][0]["seeds"].size() == 3);
    CHECK(summary["variants"][0]["regret_curves"].size() == 3);
    std::filesystem::remove_all(base);
}

TEST_CASE("choice-k at K = 2 reproduces the pairwise variant")
{
    BenchmarkSpec spec = tiny_spec();
    spec.seeds = 2;
    spec.k_values = {2, 4};
    const AblationReport ck = run_ablation_choice_k(spec);
    const AblationReport pvm = run_ablation_pairwise_vs_multiwise(spec);
    const VariantResult& a = ck.variant("noiseless-k2");
    const VariantResult& b = pvm.variant("pairwise-k2");
    CHECK(a.config_hash == b.config_hash);
    CHECK(variant_table(a) == variant_table(b));
    CHECK(variant_table(ck.variant("noiseless-k4")) == variant_table(pvm.variant("multiwise-k4")));
    CHECK(ck.variants.size() == 4);
    CHECK(ck.variant("noisy-k4").config["choice"]["temperature"].get<double>() == doctest::Approx(0.065));
    CHECK(ck.summary.contains("noiseless_non_increasing_in_k"));
    CHECK_THROWS_AS(ck.variant("missing"), ContractError);
}

TEST_CASE("DBS component ablation logs subspace dimensions")
{
    BenchmarkSpec spec = tiny_spec();
    spec.objective = "sphere-3d";
    spec.budget = 2;
    const AblationReport r = run_ablation_dbs_components(spec);
    CHECK(r.variants.size() == 5);
    const auto& dbs = r.variant("dbs");
    CHECK(dbs.runs[0].back().subspace_dim >= 1);
    CHECK(r.variant("random").runs[0].back().subspace_dim == 0);
    CHECK(r.variant("bridge-only").runs[0].back().subspace_dim == 0);
    const auto summary = report_summary(r);
    CHECK(summary["variants"][0]["subspace_dim_traces"][0].size() == 4);
    CHECK(summary["results"].contains("dbs_win_rate_vs_random"));
}

TEST_CASE("win rate counts ties as half")
{
    VariantResult a, b;
    auto entry = [](std::size_t round, double regret) {
        TrajectoryEntry e;
        e.round = round;
        e.regret = regret;
        return e;
    };
    a.runs = {{entry(1, 1.0), entry(2, 0.1)}, {entry(1, 1.0), entry(2, 0.5)}};
    b.runs = {{entry(1, 1.0), entry(2, 0.2)}, {entry(1, 1.0), entry(2, 0.5)}};
    CHECK(win_rate(a, b) == 0.75);
    CHECK(win_rate(b, a) == 0.25);
}
