#include "multibo/errors.hpp"
#include "multibo/session.hpp"

#include <doctest.h>

#include <cmath>

using namespace multibo;

namespace
{
SessionConfig fast_config(const HiddenObjective& obj, std::size_t k, std::uint64_t seed)
{
    SessionConfig cfg = default_config_for(obj, k, seed);
    cfg.dbs.ei_raw_samples = 256;
    cfg.dbs.ei_restarts = 6;
    cfg.dbs.ei_max_iterations = 50;
    return cfg;
}

void answer_argmax(SessionState& s, const HiddenObjective& obj)
{
    const auto& idx = s.pending->indices;
    std::size_t best = 0;
    for (std::size_t i = 1; i < idx.size(); ++i)
        if (objective_eval(obj, s.archive[idx[i]]) > objective_eval(obj, s.archive[idx[best]]))
            best = i;
    session_record_choice(s, {best}, &obj);
}
} // namespace

TEST_CASE("init design")
{
    const HiddenObjective obj = make_objective("warp-full");
    SessionConfig cfg = fast_config(obj, 4, 3);
    const SessionState s = session_init(cfg);
    CHECK(s.init_design.rows() == 40);
    for (Eigen::Index i = 0; i < 40; ++i)
        CHECK(cfg.bounds.contains(s.init_design.row(i).transpose()));
    REQUIRE(s.pending);
    CHECK(s.pending->indices.size() == 4);
    CHECK(s.pending->batch_id == 1);
    CHECK(!s.posterior);
    CHECK(session_init(cfg).init_design == s.init_design);
    cfg.seed = 4;
    CHECK(session_init(cfg).init_design != s.init_design);

    SessionConfig tiny = fast_config(make_objective("branin-2d"), 2, 0);
    tiny.init_batches = 1;
    const SessionState t = session_init(tiny);
    CHECK(t.init_design.rows() == 2);
    CHECK(t.pending->indices.size() == 2);
}

TEST_CASE("invalid configs are rejected")
{
    const HiddenObjective obj = make_objective("branin-2d");
    SessionConfig cfg = fast_config(obj, 4, 0);
    cfg.choices_per_round = 1;
    CHECK_THROWS_AS(session_init(cfg), ContractError);
    cfg.choices_per_round = 13;
    CHECK_THROWS_AS(session_init(cfg), ContractError);
    cfg = fast_config(obj, 4, 0);
    cfg.init_batches = 0;
    CHECK_THROWS_AS(session_init(cfg), ContractError);
    cfg = fast_config(obj, 4, 0);
    cfg.likelihood.kind = LikelihoodKind::pairwise_probit;
    CHECK_THROWS_AS(session_init(cfg), ContractError);
    cfg = fast_config(obj, 4, 0);
    cfg.init_counts_toward_budget = true;
    cfg.budget = 5;
    CHECK_THROWS_AS(session_init(cfg), ContractError);
}

TEST_CASE("recording choices")
{
    const HiddenObjective obj = make_objective("branin-2d");
    SessionConfig cfg = fast_config(obj, 4, 1);
    SessionState s = session_init(cfg);
    CHECK_THROWS_AS(session_best(s), ProtocolError);
    CHECK_THROWS_AS(session_next_batch(s), ProtocolError);
    CHECK_THROWS_AS(session_record_choice(s, {}), ContractError);
    CHECK_THROWS_AS(session_record_choice(s, {4}), ContractError);
    CHECK_THROWS_AS(session_record_choice(s, {0, 1}), ContractError); // multinomial takes one winner

    const auto batch = s.pending->indices;
    session_record_choice(s, {2});
    CHECK(!s.pending);
    CHECK(s.round == 1);
    REQUIRE(s.posterior);
    CHECK(s.posterior->map_certificate() <= 1e-6);
    const GpPredictor p = s.posterior->predictor();
    for (std::size_t i = 0; i < batch.size(); ++i)
        if (i != 2)
            CHECK(p.mean(s.archive[batch[2]]) >= p.mean(s.archive[batch[i]]));
    CHECK_THROWS_AS(session_record_choice(s, {0}), ProtocolError);

    const Eigen::MatrixXd second = session_next_batch(s);
    CHECK(second == s.init_design.middleRows(4, 4));
    CHECK(s.archive.size() == 8);
    CHECK_THROWS_AS(session_next_batch(s), ProtocolError);
}

TEST_CASE("subset-logit accepts the whole batch")
{
    const HiddenObjective obj = make_objective("sphere-3d");
    SessionConfig cfg = fast_config(obj, 4, 2);
    cfg.likelihood.kind = LikelihoodKind::subset_logit;
    SessionState s = session_init(cfg);
    session_record_choice(s, {3, 0, 1, 2});
    CHECK(s.posterior->map_certificate() <= 1e-6);
    CHECK(s.observations.back().winners == std::vector<std::size_t>{0, 1, 2, 3});
}

TEST_CASE("acquisition batch contains the incumbent at gamma 0 without perturbation")
{
    const HiddenObjective obj = make_objective("branin-2d");
    SessionConfig cfg = fast_config(obj, 4, 5);
    cfg.init_batches = 2;
    cfg.dbs.perturb_scale = 0.0;
    cfg.dbs.gamma_bridge = {0.0, 0.25, 0.5, 1.0};
    SessionState s = session_init(cfg);
    answer_argmax(s, obj);
    session_next_batch(s);
    answer_argmax(s, obj);
    const Eigen::VectorXd incumbent = s.archive[s.incumbent_index];
    const Eigen::MatrixXd batch = session_next_batch(s);
    CHECK(batch.row(0).transpose() == incumbent);
}

TEST_CASE("budget is enforced and the archive grows by K per round")
{
    const HiddenObjective obj = make_objective("sphere-2d");
    SessionConfig cfg = fast_config(obj, 3, 6);
    cfg.init_batches = 2;
    cfg.budget = 3;
    SessionState s = session_init(cfg);
    std::size_t rounds = 0;
    while (s.pending)
    {
        CHECK(s.archive.size() == 3 * (rounds + 1));
        answer_argmax(s, obj);
        ++rounds;
        CHECK(s.observations.size() == rounds);
        if (s.can_propose())
            session_next_batch(s);
    }
    CHECK(rounds == 5);
    CHECK(s.finished());
    CHECK(s.remaining_rounds() == 0);
    CHECK_THROWS_AS(session_next_batch(s), BudgetExhausted);

    cfg.init_counts_toward_budget = true;
    cfg.budget = 3;
    SessionState c = session_init(cfg);
    std::size_t charged = 0;
    while (c.pending)
    {
        answer_argmax(c, obj);
        ++charged;
        if (c.can_propose())
            session_next_batch(c);
    }
    CHECK(charged == 3);
}

TEST_CASE("session best")
{
    const HiddenObjective obj = make_objective("warp-affine", 2, 24);
    SessionConfig cfg = fast_config(obj, 4, 7);
    cfg.init_batches = 2;
    cfg.budget = 1;
    const SessionState s = run_autonomous_session(cfg, obj, ChoiceNoiseModel{});
    const SessionBest best = session_best(s, &obj);
    CHECK(best.theta == s.archive[best.archive_index]);
    // Re-evaluate the predictive mean with gp_predict.
    const LatentPosterior& post = *s.posterior;
    Eigen::MatrixXd q(1, best.theta.size());
    q.row(0) = best.theta.transpose();
    const auto pd = gp_predict(GpPrior{post.kernel}, post.archive_points, post.f_map, post.posterior_cov, q);
    CHECK(std::abs(pd.mean(0) - best.predicted_value) <= 1e-10);
    // The incumbent is the archive argmax of the posterior mean.
    const GpPredictor p = post.predictor();
    for (const auto& x : s.archive)
        CHECK(p.mean(x) <= best.predicted_value + 1e-12);
    REQUIRE(best.render);
    const WarpTask& task = *obj.warp_task();
    CHECK(*best.render == warp_compose(WarpParams(task.expand(best.theta)), task.source));
    CHECK(best.render->width() == task.source.width());
}

TEST_CASE("autonomous runs")
{
    const HiddenObjective obj = make_objective("branin-2d");
    SessionConfig cfg = fast_config(obj, 4, 8);
    cfg.init_batches = 3;
    SUBCASE("zero budget runs only the init rounds")
    {
        cfg.budget = 0;
        const auto traj = run_autonomous(cfg, obj, ChoiceNoiseModel{});
        REQUIRE(traj.size() == 3);
        for (const auto& e : traj)
            CHECK(e.init_phase);
    }
    SUBCASE("identical seeds give identical trajectory files")
    {
        cfg.budget = 4;
        const std::string a = trajectory_csv(run_autonomous(cfg, obj, ChoiceNoiseModel{}));
        const std::string b = trajectory_csv(run_autonomous(cfg, obj, ChoiceNoiseModel{}));
        CHECK(a == b);
        CHECK(a.rfind("round,incumbent_value,true_objective,regret\n", 0) == 0);
        cfg.seed = 9;
        CHECK(trajectory_csv(run_autonomous(cfg, obj, ChoiceNoiseModel{})) != a);
    }
    SUBCASE("mismatched bounds are rejected")
    {
        CHECK_THROWS_AS(run_autonomous(cfg, make_objective("sphere-2d"), ChoiceNoiseModel{}), ContractError);
    }
}

TEST_CASE("state survives a JSON round trip and replays exactly")
{
    const HiddenObjective obj = make_objective("warp-affine", 4, 24);
    SessionConfig cfg = fast_config(obj, 4, 10);
    cfg.init_batches = 3;
    cfg.likelihood.kind = LikelihoodKind::subset_logit;
    SessionState s = session_init(cfg);
    Rng user(1);
    ChoiceNoiseModel m{ChoiceKind::subset_threshold, 1.0, 0.05};
    for (int round = 0; round < 6; ++round)
    {
        // Serialize after every transition.
        const SessionState back = session_state_from_json(nlohmann::json::parse(to_json(s).dump()));
        CHECK(to_json(back).dump() == to_json(s).dump());
        CHECK(replay_session(back).ok(1e-12));

        Eigen::VectorXd v(4);
        for (std::size_t i = 0; i < 4; ++i)
            v(static_cast<Eigen::Index>(i)) = objective_eval(obj, s.archive[s.pending->indices[i]]);
        session_record_choice(s, simulate_choice(v, m, user), &obj);
        const SessionState mid = session_state_from_json(nlohmann::json::parse(to_json(s).dump()));
        const ReplayReport r = replay_session(mid);
        CHECK(r.ok(1e-12));
        CHECK(r.max_fmap_diff <= 1e-12);
        session_next_batch(s);
    }
    // A restored state continues exactly like the original.
    SessionState restored = session_state_from_json(to_json(s));
    session_record_choice(s, {0});
    session_record_choice(restored, {0});
    CHECK(session_next_batch(s) == session_next_batch(restored));

    // Tampering with a recorded choice is detected.
    nlohmann::json doc = to_json(s);
    auto& winners = doc["observations"][4]["winners"];
    winners = nlohmann::json::array({winners[0].get<std::size_t>() == 0 ? 1 : 0});
    bool detected = false;
    try
    {
        detected = !replay_session(session_state_from_json(doc)).ok(1e-12);
    }
    catch (const NumericalError&)
    {
        detected = true;
    }
    CHECK(detected);
}

TEST_CASE("sphere regret improves for most seeds")
{
    // 20 seeds, B = 50, K = 4, argmax user, default acquisition settings.
    const HiddenObjective obj = make_objective("sphere-6d");
    int improved = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed)
    {
        const auto traj = run_autonomous(default_config_for(obj, 4, seed), obj, ChoiceNoiseModel{});
        REQUIRE(traj.size() == 60);
        if (*traj.back().regret < *traj.front().regret)
            ++improved;
    }
    MESSAGE("improved seeds: " << improved);
    CHECK(improved >= 18);
}
