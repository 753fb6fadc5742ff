#include "multibo/oracles.hpp"

#include "multibo/errors.hpp"

#include <cmath>
#include <numbers>
#include <regex>

namespace multibo
{
Eigen::VectorXd WarpTask::expand(const Eigen::VectorXd& theta) const
{
    if (theta.size() != static_cast<Eigen::Index>(active.size()))
        throw ContractError("warp task expects " + std::to_string(active.size()) + " parameters");
    Eigen::VectorXd full = Eigen::VectorXd::Zero(k_warp_dim);
    for (std::size_t i = 0; i < active.size(); ++i)
        full(active[i]) = theta(static_cast<Eigen::Index>(i));
    return full;
}

HiddenObjective HiddenObjective::branin()
{
    HiddenObjective o;
    o.kind_ = ObjectiveKind::branin_2d;
    o.name_ = "branin-2d";
    o.bounds_ = BoxBounds(Eigen::Vector2d(-5.0, 0.0), Eigen::Vector2d(10.0, 15.0));
    o.f_max_ = -0.39788735772973816;
    return o;
}

HiddenObjective HiddenObjective::ackley(Eigen::Index dim)
{
    if (dim < 1)
        throw ContractError("ackley needs dimension >= 1");
    HiddenObjective o;
    o.kind_ = ObjectiveKind::ackley;
    o.name_ = "ackley-" + std::to_string(dim) + "d";
    o.bounds_ = BoxBounds(Eigen::VectorXd::Constant(dim, -32.768), Eigen::VectorXd::Constant(dim, 32.768));
    o.f_max_ = 0.0;
    return o;
}

HiddenObjective HiddenObjective::sphere(Eigen::Index dim)
{
    if (dim < 1)
        throw ContractError("sphere needs dimension >= 1");
    HiddenObjective o;
    o.kind_ = ObjectiveKind::sphere;
    o.name_ = "sphere-" + std::to_string(dim) + "d";
    o.bounds_ = BoxBounds(Eigen::VectorXd::Constant(dim, -5.12), Eigen::VectorXd::Constant(dim, 5.12));
    o.f_max_ = 0.0;
    return o;
}

HiddenObjective HiddenObjective::warp_match(Field2D source, const Eigen::VectorXd& theta_star_full,
                                            std::vector<Eigen::Index> active)
{
    if (active.empty())
        throw ContractError("warp task needs at least one active parameter");
    const BoxBounds full = theta_bounds();
    Eigen::VectorXd lo(static_cast<Eigen::Index>(active.size())), hi(lo.size());
    for (std::size_t i = 0; i < active.size(); ++i)
    {
        if (active[i] < 0 || active[i] >= k_warp_dim)
            throw ContractError("warp task active index out of range");
        lo(static_cast<Eigen::Index>(i)) = full.lower(active[i]);
        hi(static_cast<Eigen::Index>(i)) = full.upper(active[i]);
    }
    for (Eigen::Index d = 0; d < k_warp_dim; ++d)
        if (std::find(active.begin(), active.end(), d) == active.end() && theta_star_full(d) != 0.0)
            throw ContractError("hidden warp has a non-zero inactive parameter");

    auto task = std::make_shared<WarpTask>();
    task->target = warp_compose(WarpParams(theta_star_full), source);
    task->source = std::move(source);
    task->theta_star = theta_star_full;
    task->active = std::move(active);

    HiddenObjective o;
    o.kind_ = ObjectiveKind::warp_match;
    o.name_ = task->active.size() == static_cast<std::size_t>(k_affine_dim) ? "warp-affine" : "warp-match";
    if (task->active.size() == static_cast<std::size_t>(k_warp_dim))
        o.name_ = "warp-full";
    o.bounds_ = BoxBounds(lo, hi);
    o.f_max_ = 0.0;
    o.warp_ = std::move(task);
    return o;
}

double objective_eval(const HiddenObjective& obj, const Eigen::VectorXd& theta)
{
    if (!obj.bounds_.contains(theta, 1e-12))
        throw ContractError("objective_eval: theta outside the objective bounds");
    switch (obj.kind_)
    {
    case ObjectiveKind::branin_2d: {
        constexpr double pi = std::numbers::pi;
        const double a = 1.0, b = 5.1 / (4.0 * pi * pi), c = 5.0 / pi, r = 6.0, s = 10.0, t = 1.0 / (8.0 * pi);
        const double x1 = theta(0), x2 = theta(1);
        const double q = x2 - b * x1 * x1 + c * x1 - r;
        return -(a * q * q + s * (1.0 - t) * std::cos(x1) + s);
    }
    case ObjectiveKind::ackley: {
        const double n = static_cast<double>(theta.size());
        const double s1 = theta.squaredNorm() / n;
        const double s2 = (2.0 * std::numbers::pi * theta.array()).cos().sum() / n;
        const double v = -20.0 * std::exp(-0.2 * std::sqrt(s1)) - std::exp(s2) + 20.0 + std::numbers::e;
        return -std::max(0.0, v);
    }
    case ObjectiveKind::sphere:
        return -theta.squaredNorm();
    case ObjectiveKind::warp_match: {
        const WarpTask& task = *obj.warp_;
        const Field2D rendered = warp_compose(WarpParams(task.expand(theta)), task.source);
        double diff = 0.0;
        for (std::size_t i = 0; i < rendered.values().size(); ++i)
        {
            const double e = rendered.values()[i] - task.target.values()[i];
            diff += e * e;
        }
        return -std::sqrt(diff) / task.target.l2_norm();
    }
    }
    return 0.0;
}

HiddenObjective make_objective(const std::string& name, std::uint64_t task_seed, int field_size)
{
    if (name == "branin-2d")
        return HiddenObjective::branin();
    static const std::regex nd(R"((sphere|ackley)-(\d+)d)");
    std::smatch m;
    if (std::regex_match(name, m, nd))
    {
        const Eigen::Index dim = std::stoi(m[2].str());
        return m[1] == "sphere" ? HiddenObjective::sphere(dim) : HiddenObjective::ackley(dim);
    }
    if (name == "warp-affine" || name == "warp-full")
    {
        // Hidden warps are drawn from the inner part of the box so the optimum
        // is interior: half the affine range, 40% of the TPS range.
        Rng rng(task_seed ^ 0x5eed'7a5c'0000'0001ULL);
        const BoxBounds box = theta_bounds();
        const bool full = name == "warp-full";
        std::vector<Eigen::Index> active;
        Eigen::VectorXd star = Eigen::VectorXd::Zero(k_warp_dim);
        const Eigen::Index n_active = full ? k_warp_dim : k_affine_dim;
        for (Eigen::Index d = 0; d < n_active; ++d)
        {
            active.push_back(d);
            const double frac = d < k_affine_dim ? 0.5 : 0.4;
            star(d) = uniform(rng, frac * box.lower(d), frac * box.upper(d));
        }
        return HiddenObjective::warp_match(make_test_pattern(field_size, field_size), star, std::move(active));
    }
    throw ContractError("unknown objective '" + name + "'");
}

std::string to_string(ChoiceKind kind)
{
    switch (kind)
    {
    case ChoiceKind::argmax:
        return "argmax";
    case ChoiceKind::gumbel_logit:
        return "gumbel-logit";
    case ChoiceKind::subset_threshold:
        return "subset-threshold";
    }
    return "unknown";
}

ChoiceKind choice_kind_from_string(const std::string& name)
{
    for (auto k : {ChoiceKind::argmax, ChoiceKind::gumbel_logit, ChoiceKind::subset_threshold})
        if (to_string(k) == name)
            return k;
    throw ContractError("unknown choice model '" + name + "'");
}

void ChoiceNoiseModel::validate() const
{
    if (!(temperature > 0.0))
        throw ContractError("choice temperature must be positive");
    if (!(epsilon >= 0.0))
        throw ContractError("choice epsilon must be non-negative");
}

std::vector<std::size_t> simulate_choice(const Eigen::VectorXd& values, const ChoiceNoiseModel& model, Rng& rng)
{
    model.validate();
    if (values.size() < 2)
        throw ContractError("simulate_choice needs at least two candidates");
    auto argmax_of = [](const Eigen::VectorXd& v) {
        Eigen::Index best = 0;
        for (Eigen::Index i = 1; i < v.size(); ++i)
            if (v(i) > v(best))
                best = i;
        return static_cast<std::size_t>(best);
    };
    switch (model.kind)
    {
    case ChoiceKind::argmax:
        return {argmax_of(values)};
    case ChoiceKind::gumbel_logit: {
        Eigen::VectorXd noisy(values.size());
        for (Eigen::Index i = 0; i < values.size(); ++i)
            noisy(i) = values(i) / model.temperature + standard_gumbel(rng);
        return {argmax_of(noisy)};
    }
    case ChoiceKind::subset_threshold: {
        const double cut = values.maxCoeff() - model.epsilon;
        std::vector<std::size_t> out;
        for (Eigen::Index i = 0; i < values.size(); ++i)
            if (values(i) >= cut)
                out.push_back(static_cast<std::size_t>(i));
        return out;
    }
    }
    return {argmax_of(values)};
}
} // namespace multibo
