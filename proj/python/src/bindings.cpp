#include "multibo/acquisition.hpp"
#include "multibo/bench.hpp"
#include "multibo/errors.hpp"
#include "multibo/preference.hpp"
#include "multibo/service.hpp"
#include "multibo/session.hpp"
#include "multibo/warp.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace multibo;

namespace
{
// JSON crosses the boundary as text; the Python package wraps these in json.loads/dumps.
nlohmann::json parse(const std::string& s) { return s.empty() ? nlohmann::json::object() : nlohmann::json::parse(s); }

Field2D field_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a)
{
    if (a.ndim() != 2)
        throw ContractError("field must be a 2-D array");
    const auto h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
    return Field2D(w, h, std::vector<double>(a.data(), a.data() + a.size()));
}

py::array_t<double> field_to_array(const Field2D& f)
{
    py::array_t<double> out({f.height(), f.width()});
    std::copy(f.values().begin(), f.values().end(), out.mutable_data());
    return out;
}

std::vector<PreferenceObservation> observations_from(const std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>>& obs)
{
    std::vector<PreferenceObservation> out;
    out.reserve(obs.size());
    for (const auto& [set, winners] : obs)
        out.push_back({set, winners});
    return out;
}

py::dict trajectory_entry(const TrajectoryEntry& e)
{
    py::dict d;
    d["round"] = e.round;
    d["init_phase"] = e.init_phase;
    d["incumbent_index"] = e.incumbent_index;
    d["incumbent_value"] = e.incumbent_value;
    d["true_objective"] = e.true_objective ? py::cast(*e.true_objective) : py::none();
    d["regret"] = e.regret ? py::cast(*e.regret) : py::none();
    d["subspace_dim"] = e.subspace_dim;
    return d;
}

// A session bound to a named objective, for scripted experiments.
class PySession
{
  public:
    PySession(const std::string& objective, std::size_t k, std::uint64_t seed, std::size_t budget,
              std::size_t init_batches, const std::string& likelihood, std::uint64_t task_seed)
        : objective_(make_objective(objective, task_seed))
    {
        SessionConfig cfg = default_config_for(objective_, k, seed);
        cfg.budget = budget;
        cfg.init_batches = init_batches;
        cfg.likelihood.kind = likelihood_kind_from_string(likelihood);
        state_ = session_init(cfg);
    }

    Eigen::MatrixXd pending() const
    {
        if (!state_.pending)
            throw ProtocolError("no pending batch");
        Eigen::MatrixXd out(static_cast<Eigen::Index>(state_.pending->indices.size()), objective_.dim());
        for (std::size_t i = 0; i < state_.pending->indices.size(); ++i)
            out.row(static_cast<Eigen::Index>(i)) = state_.archive[state_.pending->indices[i]].transpose();
        return out;
    }

    Eigen::VectorXd values(const Eigen::MatrixXd& points) const
    {
        Eigen::VectorXd v(points.rows());
        for (Eigen::Index i = 0; i < points.rows(); ++i)
            v(i) = objective_eval(objective_, points.row(i).transpose());
        return v;
    }

    void record(const std::vector<std::size_t>& winners) { session_record_choice(state_, winners, &objective_); }
    Eigen::MatrixXd next_batch() { return session_next_batch(state_); }
    bool can_propose() const { return state_.can_propose(); }
    bool finished() const { return state_.finished(); }
    std::size_t round() const { return state_.round; }

    py::dict best() const
    {
        const SessionBest b = session_best(state_, &objective_);
        py::dict d;
        d["theta"] = b.theta;
        d["archive_index"] = b.archive_index;
        d["predicted_value"] = b.predicted_value;
        d["true_value"] = objective_eval(objective_, b.theta);
        return d;
    }

    py::list trajectory() const
    {
        py::list out;
        for (const auto& e : state_.trajectory)
            out.append(trajectory_entry(e));
        return out;
    }

    std::string to_json_text() const { return to_json(state_).dump(); }

  private:
    HiddenObjective objective_;
    SessionState state_;
};

py::dict replay_json(const std::string& text)
{
    const ReplayReport r = replay_session(session_state_from_json(nlohmann::json::parse(text)));
    py::dict d;
    d["rounds"] = r.rounds;
    d["max_archive_diff"] = r.max_archive_diff;
    d["max_fmap_diff"] = r.max_fmap_diff;
    d["ok"] = r.ok(1e-12);
    return d;
}
} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Preference-based Bayesian optimization with multiwise choices";

    static py::exception<NumericalError> numerical(m, "NumericalError", PyExc_ArithmeticError);
    static py::exception<ProtocolError> protocol(m, "ProtocolError", PyExc_RuntimeError);
    static py::exception<ServiceError> service(m, "ServiceError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try
        {
            if (p)
                std::rethrow_exception(p);
        }
        catch (const ContractError& e)
        {
            PyErr_SetString(PyExc_ValueError, e.what());
        }
        catch (const NumericalError& e)
        {
            py::set_error(numerical, e.what());
        }
        catch (const ProtocolError& e)
        {
            py::set_error(protocol, e.what());
        }
        catch (const ServiceError& e)
        {
            PyErr_SetObject(service.ptr(), py::make_tuple(e.status(), e.code(), e.what()).ptr());
        }
    });

    m.def("multinomial_logit_loglik", &multinomial_logit_loglik, py::arg("f"), py::arg("winner"));
    m.def(
        "subset_loglik", [](const Eigen::VectorXd& f, const std::vector<std::size_t>& w) { return subset_loglik(f, w); },
        py::arg("f"), py::arg("winners"));
    m.def(
        "subset_marginals",
        [](const Eigen::VectorXd& f) {
            const SubsetMarginals s = subset_marginals(f);
            return py::make_tuple(s.pi, s.pi_pair);
        },
        py::arg("f"));

    m.def(
        "laplace_fit",
        [](const Eigen::MatrixXd& points, const std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>>& obs,
           const std::string& likelihood, double lengthscale, double signal_variance, const std::string& kernel) {
            const KernelConfig k{kernel == "se" ? KernelFamily::squared_exponential : KernelFamily::matern52,
                                 {lengthscale}, signal_variance, 1e-6};
            const LatentPosterior post =
                laplace_fit(points, observations_from(obs), k, {likelihood_kind_from_string(likelihood)});
            py::dict d;
            d["f_map"] = post.f_map;
            d["posterior_cov"] = post.posterior_cov;
            d["certificate"] = post.map_certificate();
            d["iterations"] = post.iterations;
            return d;
        },
        py::arg("points"), py::arg("observations"), py::arg("likelihood") = "multinomial-logit",
        py::arg("lengthscale") = 0.5, py::arg("signal_variance") = 1.0, py::arg("kernel") = "matern52");

    m.def("expected_improvement", py::overload_cast<double, double, double>(&expected_improvement), py::arg("mean"),
          py::arg("sd"), py::arg("f_star"));

    m.def(
        "warp",
        [](const Eigen::VectorXd& theta, const py::array_t<double, py::array::c_style | py::array::forcecast>& field) {
            return field_to_array(warp_compose(WarpParams(theta), field_from_array(field)));
        },
        py::arg("theta"), py::arg("field"));
    m.def(
        "test_pattern", [](int w, int h) { return field_to_array(make_test_pattern(w, h)); }, py::arg("width") = 32,
        py::arg("height") = 32);
    m.def(
        "encode_pgm",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& field) {
            return py::bytes(encode_pgm(field_from_array(field)));
        },
        py::arg("field"));
    m.def("theta_bounds", [] {
        const BoxBounds b = theta_bounds();
        return py::make_tuple(b.lower, b.upper);
    });

    m.def(
        "objective_value",
        [](const std::string& name, const Eigen::VectorXd& x, std::uint64_t task_seed) {
            return objective_eval(make_objective(name, task_seed), x);
        },
        py::arg("name"), py::arg("x"), py::arg("task_seed") = 0);

    m.def(
        "run_autonomous",
        [](const std::string& objective, std::size_t k, std::uint64_t seed, std::size_t budget, std::uint64_t task_seed) {
            const HiddenObjective obj = make_objective(objective, task_seed);
            SessionConfig cfg = default_config_for(obj, k, seed);
            cfg.budget = budget;
            std::vector<TrajectoryEntry> traj;
            {
                py::gil_scoped_release release;
                traj = run_autonomous(cfg, obj, ChoiceNoiseModel{});
            }
            py::list out;
            for (const auto& e : traj)
                out.append(trajectory_entry(e));
            return out;
        },
        py::arg("objective"), py::arg("k") = 4, py::arg("seed") = 0, py::arg("budget") = 50, py::arg("task_seed") = 0);

    m.def("replay", &replay_json, py::arg("state_json"));

    py::class_<PySession>(m, "Session")
        .def(py::init<const std::string&, std::size_t, std::uint64_t, std::size_t, std::size_t, const std::string&,
                      std::uint64_t>(),
             py::arg("objective"), py::arg("k") = 4, py::arg("seed") = 0, py::arg("budget") = 50,
             py::arg("init_batches") = 10, py::arg("likelihood") = "multinomial-logit", py::arg("task_seed") = 0)
        .def("pending", &PySession::pending)
        .def("values", &PySession::values, py::arg("points"))
        .def("record", &PySession::record, py::arg("winners"))
        .def("next_batch", &PySession::next_batch)
        .def_property_readonly("can_propose", &PySession::can_propose)
        .def_property_readonly("finished", &PySession::finished)
        .def_property_readonly("round", &PySession::round)
        .def("best", &PySession::best)
        .def("trajectory", &PySession::trajectory)
        .def("to_json", &PySession::to_json_text);

    py::class_<SessionManager>(m, "SessionManager")
        .def(py::init([](const std::filesystem::path& dir) { return std::make_unique<SessionManager>(dir); }),
             py::arg("data_dir"))
        .def("restore", &SessionManager::restore)
        .def("create_session", [](SessionManager& s, const std::string& body) { return s.create_session(parse(body)).dump(); })
        .def("get_batch", [](SessionManager& s, const std::string& id) { return s.get_batch(id).dump(); })
        .def("submit_choice",
             [](SessionManager& s, const std::string& id, const std::string& body) {
                 return s.submit_choice(id, parse(body)).dump();
             })
        .def("get_status", [](SessionManager& s, const std::string& id) { return s.get_status(id).dump(); })
        .def("get_final", [](SessionManager& s, const std::string& id) { return s.get_final(id).dump(); })
        .def("preview", [](const SessionManager& s, const std::string& name) -> py::object {
            const auto bytes = s.preview(name);
            return bytes ? py::object(py::bytes(*bytes)) : py::object(py::none());
        });
}
