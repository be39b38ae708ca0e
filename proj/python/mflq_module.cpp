// Python bindings for the solver library: load/solve, closed-loop Monte
// Carlo, the asset-liability specialization, and the exact-tree verifier.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <variant>

#include "mflq/alm.hpp"
#include "mflq/errors.hpp"
#include "mflq/model.hpp"
#include "mflq/oracle.hpp"
#include "mflq/policy.hpp"
#include "mflq/riccati.hpp"
#include "mflq/simulate.hpp"

namespace py = pybind11;
using namespace mflq;

namespace {

void throw_if_invalid(const ValidationReport& report) {
    if (report.ok) return;
    std::string msg = "validation failed:";
    for (const auto& v : report.violations)
        msg += " [" + v.condition + " at k=" + std::to_string(v.k) + "]";
    throw std::invalid_argument(msg);
}

py::dict riccati_dict(const RiccatiSolution& r) {
    py::dict out;
    out["Sx"] = r.Sx;
    out["Tx"] = r.Tx;
    out["Sxy"] = r.Sxy;
    out["Txy"] = r.Txy;
    out["Sy"] = r.Sy;
    out["Ty"] = r.Ty;
    out["W1"] = r.W1;
    out["W2"] = r.W2;
    out["H1"] = r.H1;
    out["H2"] = r.H2;
    out["H3"] = r.H3;
    out["H4"] = r.H4;
    return out;
}

py::dict policy_dict(const FeedbackPolicy& p) {
    py::dict out;
    out["Kx"] = p.Kx;
    out["Kx_bar"] = p.Kx_bar;
    out["Ky"] = p.Ky;
    out["Ky_bar"] = p.Ky_bar;
    return out;
}

RiccatiSolution solve_any(const AnyProblem& problem) {
    return std::visit(
        [](const auto& s) {
            if constexpr (std::is_same_v<std::decay_t<decltype(s)>, ProblemSpec>)
                return solve_riccati(s);
            else
                return solve_riccati_multinoise(s);
        },
        problem);
}

py::dict solve_loaded(const LoadedProblem& loaded) {
    throw_if_invalid(
        std::visit([](const auto& s) { return validate_problem(s); }, loaded.problem));
    const RiccatiSolution riccati = solve_any(loaded.problem);
    const FeedbackPolicy policy = build_policy(riccati);

    py::dict out;
    out["horizon"] = horizon_of(loaded.problem);
    out["state_dim"] = state_dim_of(loaded.problem);
    out["control_dim"] = control_dim_of(loaded.problem);
    out["riccati"] = riccati_dict(riccati);
    out["policy"] = policy_dict(policy);
    out["warnings"] = loaded.warnings;
    if (loaded.has_initial) {
        out["optimal_cost"] = optimal_cost(riccati, loaded.initial);
        const ExpectedTrajectory traj = std::visit(
            [&](const auto& s) {
                return expected_trajectory(s, riccati, loaded.initial.mean_x,
                                           loaded.initial.mean_y);
            },
            loaded.problem);
        py::dict expected;
        expected["Ex"] = traj.Ex;
        expected["Ey"] = traj.Ey;
        expected["Eu"] = traj.Eu;
        out["expected"] = expected;
    }
    return out;
}

py::dict verify_loaded(const LoadedProblem& loaded) {
    throw_if_invalid(
        std::visit([](const auto& s) { return validate_problem(s); }, loaded.problem));
    const MultiNoiseProblemSpec spec = std::visit(
        [](const auto& s) -> MultiNoiseProblemSpec {
            if constexpr (std::is_same_v<std::decay_t<decltype(s)>, ProblemSpec>)
                return lift_to_multinoise(s);
            else
                return s;
        },
        loaded.problem);

    InitialSupport initial;
    if (loaded.has_initial) {
        const bool degenerate = loaded.initial.cov_x.norm() == 0 &&
                                loaded.initial.cov_y.norm() == 0 &&
                                loaded.initial.cov_xy.norm() == 0;
        initial = degenerate
                      ? deterministic_initial(loaded.initial.mean_x, loaded.initial.mean_y)
                      : sign_support_initial(loaded.initial);
    } else {
        initial = deterministic_initial(Eigen::VectorXd::Ones(spec.state_dim),
                                        0.5 * Eigen::VectorXd::Ones(spec.state_dim));
    }

    std::vector<NoiseSupport> supports;
    for (int k = 0; k < spec.horizon; ++k)
        supports.push_back(sign_support_noise(spec.alpha[k], spec.beta[k], spec.gamma[k]));

    const RiccatiSolution riccati = solve_riccati_multinoise(spec);
    const FeedbackPolicy policy = build_policy(riccati);
    const double j_riccati = optimal_cost(riccati, moments_of(initial));

    const ScenarioTree tree = build_tree(spec, initial, supports);
    const StackedQuadratic quad = assemble_quadratic(tree, spec);
    const OracleOptimum opt = brute_force_optimal(quad);
    const Eigen::VectorXd u_policy = policy_tree_controls(tree, policy);

    py::dict out;
    out["j_riccati"] = j_riccati;
    out["j_oracle"] = opt.value;
    out["value_residual"] = std::abs(j_riccati - opt.value);
    out["policy_residual"] = std::abs(quad.value(u_policy) - opt.value);
    out["control_residual"] = (u_policy - opt.controls).cwiseAbs().maxCoeff();
    out["stacked_dim"] = tree.stacked_dim;
    out["pass"] = std::abs(j_riccati - opt.value) <= 1e-8 * (1.0 + std::abs(opt.value));
    return out;
}

py::dict alm_result_dict(const AlmProblem& alm) {
    throw_if_invalid(validate_alm(alm));
    const AlmRiccati riccati = solve_alm_riccati(alm);
    py::dict out;
    out["horizon"] = alm.horizon;
    out["asset_count"] = alm.asset_count;
    out["Sx"] = riccati.Sx;
    out["Tx"] = riccati.Tx;
    out["Sxy"] = riccati.Sxy;
    out["Txy"] = riccati.Txy;
    out["Sy"] = riccati.Sy;
    out["Ty"] = riccati.Ty;
    return out;
}

}  // namespace

PYBIND11_MODULE(_mflq, m) {
    m.doc() = "mean-field LQ control of coupled asset/liability dynamics";

    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<NotPositiveDefinite>(m, "NotPositiveDefinite", PyExc_RuntimeError);
    py::register_exception<InvalidMoment>(m, "InvalidMoment", PyExc_RuntimeError);
    py::register_exception<NonFinite>(m, "NonFinite", PyExc_RuntimeError);
    py::register_exception<TreeTooLarge>(m, "TreeTooLarge", PyExc_RuntimeError);
    py::register_exception<SingularQuadratic>(m, "SingularQuadratic", PyExc_RuntimeError);

    m.def(
        "solve_file", [](const std::string& path) { return solve_loaded(load_problem_file(path)); },
        py::arg("path"),
        "Parse a problem JSON file, run the backward recursion, and return the "
        "weights, gains, and (when the file carries initial moments) the optimal "
        "cost and expected trajectory.");

    m.def(
        "solve_json", [](const std::string& text) { return solve_loaded(parse_problem_text(text)); },
        py::arg("text"), "Like solve_file, but takes the problem JSON as a string.");

    m.def(
        "verify_file",
        [](const std::string& path) { return verify_loaded(load_problem_file(path)); },
        py::arg("path"),
        "Check the recursion's value and policy against the exact optimum of the "
        "finite scenario tree induced by sign-support noise with the problem's "
        "moments.");

    m.def(
        "simulate_file",
        [](const std::string& path, long paths, std::uint64_t seed, const std::string& sampler,
           const std::string& initial_sampler, bool population_coupling, int threads) {
            LoadedProblem loaded = load_problem_file(path);
            throw_if_invalid(
                std::visit([](const auto& s) { return validate_problem(s); }, loaded.problem));
            if (!loaded.has_initial)
                throw std::invalid_argument("simulation needs an \"initial\" block");
            const SamplerKind kind =
                sampler == "rademacher" ? SamplerKind::rademacher : SamplerKind::gaussian;
            InitialSampler init;
            init.kind = initial_sampler == "two-point" ? InitialKind::two_point
                                                       : InitialKind::gaussian;
            init.moments = loaded.initial;
            SimulateOptions opts;
            opts.n_paths = paths;
            opts.population_coupling = population_coupling;
            opts.threads = threads;
            double cost_analytic = 0;
            SimulationResult result = std::visit(
                [&](const auto& spec) {
                    const auto riccati = [&] {
                        if constexpr (std::is_same_v<std::decay_t<decltype(spec)>, ProblemSpec>)
                            return solve_riccati(spec);
                        else
                            return solve_riccati_multinoise(spec);
                    }();
                    cost_analytic = optimal_cost(riccati, loaded.initial);
                    return simulate_closed_loop(spec, build_policy(riccati), init,
                                                NoiseSampler::for_spec(spec, kind, seed), opts);
                },
                loaded.problem);
            py::dict out;
            out["paths"] = result.n_paths;
            out["cost_mean"] = result.cost_mean;
            out["cost_std_err"] = result.cost_std_err;
            out["optimal_cost"] = cost_analytic;
            out["path_cost"] = result.path_cost;
            return out;
        },
        py::arg("path"), py::arg("paths") = 10000, py::arg("seed") = 1,
        py::arg("sampler") = "gaussian", py::arg("initial_sampler") = "gaussian",
        py::arg("population_coupling") = false, py::arg("threads") = 0,
        "Monte Carlo closed-loop evaluation under the optimal policy.");

    m.def(
        "alm_file",
        [](const std::string& path) {
            LoadedAlm loaded = load_alm_file(path);
            py::dict out = alm_result_dict(loaded.problem);
            if (loaded.has_initial) {
                const AlmRiccati riccati = solve_alm_riccati(loaded.problem);
                out["optimal_value"] =
                    alm_optimal_value(riccati, loaded.mean_x, loaded.var_x, loaded.mean_y,
                                      loaded.var_y, loaded.cov_xy);
                out["expected_terminal_equity"] = expected_terminal_equity(
                    loaded.problem, riccati, loaded.mean_x, loaded.mean_y);
            }
            return out;
        },
        py::arg("path"), "Solve an asset-liability allocation problem file.");

    m.def(
        "alm_from_returns_file",
        [](const std::string& csv_path, int horizon, double growth, double liability_growth,
           double control_penalty, double q, double q_bar, bool per_step) {
            const Eigen::MatrixXd returns = load_returns_csv(csv_path);
            const Eigen::MatrixXd R =
                control_penalty * Eigen::MatrixXd::Identity(returns.cols(), returns.cols());
            const AlmProblem alm = alm_from_returns(
                returns, horizon, growth, liability_growth, R, q, q_bar,
                per_step ? MomentEstimation::per_step : MomentEstimation::pooled);
            return alm_result_dict(alm);
        },
        py::arg("csv_path"), py::arg("horizon"), py::arg("growth") = 1.0,
        py::arg("liability_growth") = 1.0, py::arg("control_penalty") = 1.0,
        py::arg("q") = 1.0, py::arg("q_bar") = -1.0, py::arg("per_step") = false,
        "Estimate excess-return moments from a CSV history and solve the "
        "resulting allocation problem.");
}
