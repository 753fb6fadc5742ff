// multibo: benchmarks, autonomous runs, replay checks and the session server.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include "multibo/bench.hpp"
#include "multibo/errors.hpp"
#include "multibo/server.hpp"
#include "multibo/session.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

namespace
{
constexpr int k_exit_config = 2;
constexpr int k_exit_numerical = 3;

multibo::HttpService* g_service = nullptr;

void write_text(const std::string& path, const std::string& text)
{
    if (path.empty() || path == "-")
    {
        std::cout << text;
        return;
    }
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw multibo::ContractError("cannot write " + path);
    os << text;
}

void print_report(const multibo::AblationReport& report, const std::string& out)
{
    std::cout << report.ablation << "\n";
    for (const auto& v : report.variants)
        std::cout << "  " << v.name << ": median final regret " << v.median_final_regret() << " (hash "
                  << v.config_hash.substr(0, 12) << ")\n";
    std::cout << "  " << report.summary.dump() << "\n";
    if (!out.empty())
    {
        multibo::write_report(report, out);
        std::cout << "  written to " << out << "\n";
    }
}

struct BenchOptions
{
    multibo::BenchmarkSpec spec;
    std::string out;
    std::string choice = "argmax";
    double temperature = 1.0;
    double epsilon = 0.0;
};

void add_bench_flags(CLI::App* cmd, BenchOptions& o)
{
    cmd->add_option("--objective", o.spec.objective, "objective name")->capture_default_str();
    cmd->add_option("--seeds", o.spec.seeds, "number of seeds")->capture_default_str();
    cmd->add_option("--seed-offset", o.spec.seed_offset, "first seed")->capture_default_str();
    cmd->add_option("--budget", o.spec.budget, "acquisition rounds B")->capture_default_str();
    cmd->add_option("--init-batches", o.spec.init_batches, "quasi-random batches N0")->capture_default_str();
    cmd->add_option("--k", o.spec.k, "multiwise choice-set size")->capture_default_str();
    cmd->add_option("--threads", o.spec.threads, "worker threads (0 = all cores)")->capture_default_str();
    cmd->add_option("--choice", o.choice, "simulated user: argmax | gumbel-logit | subset-threshold")
        ->capture_default_str();
    cmd->add_option("--temperature", o.temperature, "gumbel-logit temperature")->capture_default_str();
    cmd->add_option("--out", o.out, "output directory for tables and summary");
}

void finish_bench_options(BenchOptions& o)
{
    o.spec.choice.kind = multibo::choice_kind_from_string(o.choice);
    o.spec.choice.temperature = o.temperature;
    o.spec.choice.epsilon = o.epsilon;
}
} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"multi-choice preferential Bayesian optimization"};
    app.require_subcommand(1);

    auto* bench = app.add_subcommand("bench", "run an ablation benchmark");
    bench->require_subcommand(1);
    BenchOptions pvm, ck, dbs;
    auto* cmd_pvm = bench->add_subcommand("pairwise-vs-multiwise", "pairwise K=2 against multiwise K");
    add_bench_flags(cmd_pvm, pvm);
    auto* cmd_ck = bench->add_subcommand("choice-k", "sweep the choice-set size");
    add_bench_flags(cmd_ck, ck);
    cmd_ck->add_option("--k-values", ck.spec.k_values, "choice-set sizes")->capture_default_str();
    cmd_ck->add_option("--noisy-base-temperature", ck.spec.noisy_base_temperature,
                       "noisy-user temperature at K=2")
        ->capture_default_str();
    auto* cmd_dbs = bench->add_subcommand("dbs-components", "ablate the parts of DBS");
    add_bench_flags(cmd_dbs, dbs);

    auto* run_auto = app.add_subcommand("run-auto", "one autonomous session against a hidden objective");
    std::string ra_objective = "warp-affine", ra_out, ra_state_out, ra_choice = "argmax", ra_likelihood,
                ra_strategy = "dbs";
    std::size_t ra_k = 4, ra_budget = 50, ra_init = 10;
    std::uint64_t ra_seed = 0;
    double ra_temperature = 1.0, ra_epsilon = 0.0;
    run_auto->add_option("--objective", ra_objective, "objective name")->capture_default_str();
    run_auto->add_option("--k", ra_k, "choices per round")->capture_default_str();
    run_auto->add_option("--budget", ra_budget, "acquisition rounds B")->capture_default_str();
    run_auto->add_option("--init-batches", ra_init, "quasi-random batches N0")->capture_default_str();
    run_auto->add_option("--seed,--seed-offset", ra_seed, "session and task seed")->capture_default_str();
    run_auto->add_option("--choice", ra_choice, "simulated user")->capture_default_str();
    run_auto->add_option("--temperature", ra_temperature, "gumbel-logit temperature")->capture_default_str();
    run_auto->add_option("--epsilon", ra_epsilon, "subset-threshold margin")->capture_default_str();
    run_auto->add_option("--likelihood", ra_likelihood, "likelihood (default by K)");
    run_auto->add_option("--strategy", ra_strategy, "proposal strategy")->capture_default_str();
    run_auto->add_option("--out", ra_out, "trajectory table (default stdout)");
    run_auto->add_option("--state-out", ra_state_out, "write the final session state (replay file)");

    auto* session = app.add_subcommand("session", "session files");
    session->require_subcommand(1);
    auto* replay = session->add_subcommand("replay", "re-run a session file and compare");
    std::string replay_file;
    double replay_tol = 1e-12;
    replay->add_option("file", replay_file, "session state JSON")->required();
    replay->add_option("--tolerance", replay_tol, "maximum allowed difference")->capture_default_str();

    auto* serve = app.add_subcommand("serve", "host human-in-the-loop sessions over HTTP");
    std::string host = "127.0.0.1", data_dir = "multibo-data";
    int port = 8080;
    serve->add_option("--host", host)->capture_default_str();
    serve->add_option("--port", port)->capture_default_str();
    serve->add_option("--data-dir", data_dir, "replay files and previews")->capture_default_str();

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        const int code = app.exit(e);
        return code == 0 ? 0 : k_exit_config;
    }

    try
    {
        if (cmd_pvm->parsed())
        {
            finish_bench_options(pvm);
            print_report(multibo::run_ablation_pairwise_vs_multiwise(pvm.spec), pvm.out);
        }
        else if (cmd_ck->parsed())
        {
            finish_bench_options(ck);
            print_report(multibo::run_ablation_choice_k(ck.spec), ck.out);
        }
        else if (cmd_dbs->parsed())
        {
            finish_bench_options(dbs);
            print_report(multibo::run_ablation_dbs_components(dbs.spec), dbs.out);
        }
        else if (run_auto->parsed())
        {
            const multibo::HiddenObjective objective = multibo::make_objective(ra_objective, ra_seed);
            multibo::SessionConfig cfg = multibo::default_config_for(objective, ra_k, ra_seed);
            cfg.budget = ra_budget;
            cfg.init_batches = ra_init;
            cfg.dbs.strategy = multibo::proposal_strategy_from_string(ra_strategy);
            if (!ra_likelihood.empty())
                cfg.likelihood.kind = multibo::likelihood_kind_from_string(ra_likelihood);
            multibo::ChoiceNoiseModel user;
            user.kind = multibo::choice_kind_from_string(ra_choice);
            user.temperature = ra_temperature;
            user.epsilon = ra_epsilon;
            const multibo::SessionState state = multibo::run_autonomous_session(cfg, objective, user);
            write_text(ra_out, multibo::trajectory_csv(state.trajectory));
            if (!ra_state_out.empty())
                write_text(ra_state_out, multibo::to_json(state).dump() + "\n");
        }
        else if (replay->parsed())
        {
            std::ifstream is(replay_file, std::ios::binary);
            if (!is)
                throw multibo::ContractError("cannot read " + replay_file);
            nlohmann::json doc;
            try
            {
                doc = nlohmann::json::parse(is);
            }
            catch (const nlohmann::json::exception& e)
            {
                throw multibo::ContractError(std::string("replay file is not valid JSON: ") + e.what());
            }
            // Service files wrap the state together with the task.
            if (doc.is_object() && !doc.contains("kind") && doc.contains("state"))
                doc = doc.at("state");
            const multibo::SessionState recorded = multibo::session_state_from_json(doc);
            const multibo::ReplayReport report = multibo::replay_session(recorded);
            std::cout << "rounds " << report.rounds << "\nmax_archive_diff " << report.max_archive_diff
                      << "\nmax_fmap_diff " << report.max_fmap_diff << "\nincumbents_match "
                      << (report.incumbents_match ? "yes" : "no") << "\npending_match "
                      << (report.pending_match ? "yes" : "no") << "\n";
            if (!report.ok(replay_tol))
            {
                std::cout << "replay MISMATCH\n";
                return k_exit_numerical;
            }
            std::cout << "replay OK\n";
        }
        else if (serve->parsed())
        {
            multibo::SessionManager manager(data_dir);
            const std::size_t restored = manager.restore();
            multibo::HttpService service(manager);
            const int bound = service.bind(host, port);
            if (bound < 0)
                throw multibo::ContractError("cannot bind " + host + ":" + std::to_string(port));
            std::cout << "serving on http://" << host << ":" << bound << " (" << restored << " sessions restored)"
                      << std::endl;
            g_service = &service;
            std::signal(SIGINT, [](int) {
                if (g_service)
                    g_service->stop();
            });
            std::signal(SIGTERM, [](int) {
                if (g_service)
                    g_service->stop();
            });
            service.listen();
            g_service = nullptr;
        }
    }
    catch (const multibo::ContractError& e)
    {
        std::cerr << "config error: " << e.what() << "\n";
        return k_exit_config;
    }
    catch (const multibo::ProtocolError& e)
    {
        std::cerr << "protocol error: " << e.what() << "\n";
        return k_exit_config;
    }
    catch (const multibo::NumericalError& e)
    {
        std::cerr << "numerical failure: " << e.what() << "\n";
        std::cerr << "  diagnostic " << e.diagnostic() << "\n";
        return k_exit_numerical;
    }
    return 0;
}
