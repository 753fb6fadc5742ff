#pragma once

// Hidden objectives and simulated users. All objectives are maximized; the
// classical minimization test functions are negated here.

#include "multibo/acquisition.hpp"
#include "multibo/random.hpp"
#include "multibo/warp.hpp"

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace multibo
{
enum class ObjectiveKind
{
    branin_2d,
    ackley,
    sphere,
    warp_match,
};

/// Payload of a warp-matching objective. theta_star always has all 24 warp
/// entries; `active` lists which of them the optimizer controls (the rest stay
/// at their identity value 0).
struct WarpTask
{
    Field2D source;
    Field2D target;
    Eigen::VectorXd theta_star;
    std::vector<Eigen::Index> active;

    /// Embeds an active-coordinate vector into a full 24-entry warp vector.
    Eigen::VectorXd expand(const Eigen::VectorXd& theta) const;
};

class HiddenObjective
{
  public:
    ObjectiveKind kind() const { return kind_; }
    const std::string& name() const { return name_; }
    Eigen::Index dim() const { return bounds_.dim(); }
    const BoxBounds& bounds() const { return bounds_; }
    /// Global maximum value.
    double f_max() const { return f_max_; }
    /// Present only for warp-match objectives.
    const WarpTask* warp_task() const { return warp_.get(); }

    static HiddenObjective branin();
    static HiddenObjective ackley(Eigen::Index dim);
    static HiddenObjective sphere(Eigen::Index dim);
    /// target = warp_compose(theta_star, source).
    static HiddenObjective warp_match(Field2D source, const Eigen::VectorXd& theta_star_full,
                                      std::vector<Eigen::Index> active);

  private:
    ObjectiveKind kind_ = ObjectiveKind::sphere;
    std::string name_;
    BoxBounds bounds_;
    double f_max_ = 0.0;
    std::shared_ptr<const WarpTask> warp_;

    friend double objective_eval(const HiddenObjective& obj, const Eigen::VectorXd& theta);
};

/// Throws ContractError when theta is outside the objective's bounds.
double objective_eval(const HiddenObjective& obj, const Eigen::VectorXd& theta);

/// Builds a named objective: "branin-2d", "sphere-<N>d", "ackley-<N>d",
/// "warp-affine" (6 affine parameters) or "warp-full" (all 24). Warp tasks draw
/// their hidden parameters from `task_seed` and use a `field_size` square test
/// pattern as source.
HiddenObjective make_objective(const std::string& name, std::uint64_t task_seed = 0, int field_size = 32);

enum class ChoiceKind
{
    argmax,
    gumbel_logit,
    subset_threshold,
};

std::string to_string(ChoiceKind kind);
ChoiceKind choice_kind_from_string(const std::string& name);

struct ChoiceNoiseModel
{
    ChoiceKind kind = ChoiceKind::argmax;
    double temperature = 1.0;
    double epsilon = 0.0;

    void validate() const;
};

/// Simulated user: turns the K true utilities of a batch into selected positions
/// (sorted ascending, never empty).
std::vector<std::size_t> simulate_choice(const Eigen::VectorXd& values, const ChoiceNoiseModel& model, Rng& rng);
} // namespace multibo
