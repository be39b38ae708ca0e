#include "mflq/model.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "mflq/errors.hpp"
#include "src/json_util.hpp"

namespace mflq {

using nlohmann::json;
namespace ju = jsonutil;

namespace {

Eigen::MatrixXd zeros(int r, int c) { return Eigen::MatrixXd::Zero(r, c); }

std::vector<Eigen::MatrixXd> zero_seq(int count, int r, int c) {
    return std::vector<Eigen::MatrixXd>(static_cast<size_t>(count), zeros(r, c));
}

double scale_of(const Eigen::MatrixXd& M) {
    return 1.0 + (M.size() > 0 ? M.cwiseAbs().maxCoeff() : 0.0);
}

double min_eigenvalue(const Eigen::MatrixXd& M) {
    if (M.rows() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

// Tolerances for the solvability conditions (scale-relative, scale = 1 + max
// absolute entry): semidefiniteness accepts lambda_min down to -1e-10 * scale,
// definiteness requires lambda_min >= 1e-12 * scale.
constexpr double kPsdTol = 1e-10;
constexpr double kPdTol = 1e-12;

void check_psd(const Eigen::MatrixXd& M, const char* condition, int k, ValidationReport& report) {
    const double lmin = min_eigenvalue(M);
    if (lmin < -kPsdTol * scale_of(M)) {
        report.ok = false;
        report.violations.push_back({condition, k, lmin});
    }
}

void check_pd(const Eigen::MatrixXd& M, const char* condition, int k, ValidationReport& report) {
    const double lmin = min_eigenvalue(M);
    if (lmin < kPdTol * scale_of(M)) {
        report.ok = false;
        report.violations.push_back({condition, k, lmin});
    }
}

InitialMoments read_initial(const json& v, int n, std::vector<std::string>* warnings) {
    ju::reject_unknown_keys(v, {"mean_x", "mean_y", "cov_x", "cov_y", "cov_xy"}, "initial");
    for (const char* key : {"mean_x", "mean_y", "cov_x", "cov_y", "cov_xy"})
        ju::require(v.contains(key), std::string("initial: missing key \"") + key + "\"");
    InitialMoments init;
    init.mean_x = ju::read_vector(v["mean_x"], n, "initial.mean_x");
    init.mean_y = ju::read_vector(v["mean_y"], n, "initial.mean_y");
    init.cov_x = ju::read_matrix(v["cov_x"], n, n, "initial.cov_x");
    init.cov_y = ju::read_matrix(v["cov_y"], n, n, "initial.cov_y");
    init.cov_xy = ju::read_matrix(v["cov_xy"], n, n, "initial.cov_xy");
    ju::symmetrize(init.cov_x, "initial.cov_x", warnings);
    ju::symmetrize(init.cov_y, "initial.cov_y", warnings);
    return init;
}

json initial_to_json(const InitialMoments& init) {
    json v;
    v["mean_x"] = ju::vector_to_json(init.mean_x);
    v["mean_y"] = ju::vector_to_json(init.mean_y);
    v["cov_x"] = ju::matrix_to_json(init.cov_x);
    v["cov_y"] = ju::matrix_to_json(init.cov_y);
    v["cov_xy"] = ju::matrix_to_json(init.cov_xy);
    return v;
}

}  // namespace

ProblemSpec ProblemSpec::zero(int horizon, int state_dim, int control_dim) {
    ProblemSpec s;
    s.horizon = horizon;
    s.state_dim = state_dim;
    s.control_dim = control_dim;
    const int N = horizon, n = state_dim, m = control_dim;
    s.A = s.A_bar = s.C = s.C_bar = s.F = s.F_bar = s.G = s.G_bar = zero_seq(N, n, n);
    s.B = s.B_bar = s.D = s.D_bar = zero_seq(N, n, m);
    s.Q = s.Q_bar = zero_seq(N + 1, n, n);
    s.R = s.R_bar = zero_seq(N, m, m);
    return s;
}

MultiNoiseProblemSpec MultiNoiseProblemSpec::zero(int horizon, int state_dim, int control_dim,
                                                  int noise_dim) {
    MultiNoiseProblemSpec s;
    s.horizon = horizon;
    s.state_dim = state_dim;
    s.control_dim = control_dim;
    s.noise_dim = noise_dim;
    const int N = horizon, n = state_dim, m = control_dim, p = noise_dim;
    s.A = s.A_bar = s.F = s.F_bar = zero_seq(N, n, n);
    s.B = s.B_bar = zero_seq(N, n, m);
    const std::vector<Eigen::MatrixXd> nn(static_cast<size_t>(p), zeros(n, n));
    const std::vector<Eigen::MatrixXd> nm(static_cast<size_t>(p), zeros(n, m));
    s.C = s.C_bar = s.G = s.G_bar =
        std::vector<std::vector<Eigen::MatrixXd>>(static_cast<size_t>(N), nn);
    s.D = s.D_bar = std::vector<std::vector<Eigen::MatrixXd>>(static_cast<size_t>(N), nm);
    s.alpha = s.beta = s.gamma = zero_seq(N, p, p);
    s.Q = s.Q_bar = zero_seq(N + 1, n, n);
    s.R = s.R_bar = zero_seq(N, m, m);
    return s;
}

InitialMoments InitialMoments::zero(int state_dim) {
    InitialMoments init;
    init.mean_x = Eigen::VectorXd::Zero(state_dim);
    init.mean_y = Eigen::VectorXd::Zero(state_dim);
    init.cov_x = zeros(state_dim, state_dim);
    init.cov_y = zeros(state_dim, state_dim);
    init.cov_xy = zeros(state_dim, state_dim);
    return init;
}

ValidationReport validate_problem(const ProblemSpec& spec) {
    ValidationReport report;
    for (int k = 0; k <= spec.horizon; ++k) {
        check_psd(spec.Q[k], "Q psd", k, report);
        check_psd(spec.Q[k] + spec.Q_bar[k], "Q+Q_bar psd", k, report);
    }
    for (int k = 0; k < spec.horizon; ++k) {
        check_pd(spec.R[k], "R positive", k, report);
        check_pd(spec.R[k] + spec.R_bar[k], "R+R_bar positive", k, report);
    }
    if (std::abs(spec.rho) > 1.0) {
        report.ok = false;
        // The margin 1 - |rho| plays the role of the offending eigenvalue.
        report.violations.push_back({"rho bound", -1, 1.0 - std::abs(spec.rho)});
    }
    return report;
}

ValidationReport validate_problem(const MultiNoiseProblemSpec& spec) {
    ValidationReport report;
    for (int k = 0; k <= spec.horizon; ++k) {
        check_psd(spec.Q[k], "Q psd", k, report);
        check_psd(spec.Q[k] + spec.Q_bar[k], "Q+Q_bar psd", k, report);
    }
    const int p = spec.noise_dim;
    for (int k = 0; k < spec.horizon; ++k) {
        check_pd(spec.R[k], "R positive", k, report);
        check_pd(spec.R[k] + spec.R_bar[k], "R+R_bar positive", k, report);
        // A valid joint second moment for (w, v) must be PSD as a block.
        Eigen::MatrixXd joint(2 * p, 2 * p);
        joint.topLeftCorner(p, p) = spec.alpha[k];
        joint.topRightCorner(p, p) = spec.gamma[k];
        joint.bottomLeftCorner(p, p) = spec.gamma[k].transpose();
        joint.bottomRightCorner(p, p) = spec.beta[k];
        check_psd(spec.alpha[k], "alpha psd", k, report);
        check_psd(spec.beta[k], "beta psd", k, report);
        check_psd(joint, "joint moment psd", k, report);
    }
    return report;
}

MultiNoiseProblemSpec lift_to_multinoise(const ProblemSpec& spec) {
    MultiNoiseProblemSpec out = MultiNoiseProblemSpec::zero(spec.horizon, spec.state_dim,
                                                            spec.control_dim, 1);
    out.A = spec.A;
    out.A_bar = spec.A_bar;
    out.B = spec.B;
    out.B_bar = spec.B_bar;
    out.F = spec.F;
    out.F_bar = spec.F_bar;
    out.Q = spec.Q;
    out.Q_bar = spec.Q_bar;
    out.R = spec.R;
    out.R_bar = spec.R_bar;
    for (int k = 0; k < spec.horizon; ++k) {
        out.C[k][0] = spec.C[k];
        out.C_bar[k][0] = spec.C_bar[k];
        out.D[k][0] = spec.D[k];
        out.D_bar[k][0] = spec.D_bar[k];
        out.G[k][0] = spec.G[k];
        out.G_bar[k][0] = spec.G_bar[k];
        out.alpha[k](0, 0) = 1.0;
        out.beta[k](0, 0) = 1.0;
        out.gamma[k](0, 0) = spec.rho;
    }
    return out;
}

namespace {

const std::set<std::string> kScalarKeys = {
    "horizon", "state_dim", "control_dim", "A", "A_bar", "B", "B_bar", "C", "C_bar",
    "D", "D_bar", "F", "F_bar", "G", "G_bar", "Q", "Q_bar", "R", "R_bar", "rho", "initial"};

const std::set<std::string> kMultiKeys = {
    "horizon", "state_dim", "control_dim", "noise_dim", "A", "A_bar", "B", "B_bar",
    "C", "C_bar", "D", "D_bar", "F", "F_bar", "G", "G_bar", "alpha", "beta", "gamma",
    "Q", "Q_bar", "R", "R_bar", "initial"};

LoadedProblem parse_problem_json(const json& doc) {
    ju::require(doc.is_object(), "problem document must be a JSON object");
    LoadedProblem out;

    const bool multinoise = doc.contains("noise_dim");
    ju::reject_unknown_keys(doc, multinoise ? kMultiKeys : kScalarKeys, "problem");

    const int N = ju::read_positive_int(doc, "horizon");
    const int n = ju::read_positive_int(doc, "state_dim");
    const int m = ju::read_positive_int(doc, "control_dim");

    auto get = [&](const char* key) -> const json& {
        ju::require(doc.contains(key), std::string("missing key \"") + key + "\"");
        return doc[key];
    };

    if (!multinoise) {
        ProblemSpec spec = ProblemSpec::zero(N, n, m);
        spec.A = ju::read_matrix_seq(get("A"), N, n, n, "A");
        spec.A_bar = ju::read_matrix_seq(get("A_bar"), N, n, n, "A_bar");
        spec.B = ju::read_matrix_seq(get("B"), N, n, m, "B");
        spec.B_bar = ju::read_matrix_seq(get("B_bar"), N, n, m, "B_bar");
        spec.C = ju::read_matrix_seq(get("C"), N, n, n, "C");
        spec.C_bar = ju::read_matrix_seq(get("C_bar"), N, n, n, "C_bar");
        spec.D = ju::read_matrix_seq(get("D"), N, n, m, "D");
        spec.D_bar = ju::read_matrix_seq(get("D_bar"), N, n, m, "D_bar");
        spec.F = ju::read_matrix_seq(get("F"), N, n, n, "F");
        spec.F_bar = ju::read_matrix_seq(get("F_bar"), N, n, n, "F_bar");
        spec.G = ju::read_matrix_seq(get("G"), N, n, n, "G");
        spec.G_bar = ju::read_matrix_seq(get("G_bar"), N, n, n, "G_bar");
        spec.Q = ju::read_matrix_seq(get("Q"), N + 1, n, n, "Q");
        spec.Q_bar = ju::read_matrix_seq(get("Q_bar"), N + 1, n, n, "Q_bar");
        spec.R = ju::read_matrix_seq(get("R"), N, m, m, "R");
        spec.R_bar = ju::read_matrix_seq(get("R_bar"), N, m, m, "R_bar");
        spec.rho = ju::as_finite_double(get("rho"), "rho");
        ju::symmetrize_seq(spec.Q, "Q", &out.warnings);
        ju::symmetrize_seq(spec.Q_bar, "Q_bar", &out.warnings);
        ju::symmetrize_seq(spec.R, "R", &out.warnings);
        ju::symmetrize_seq(spec.R_bar, "R_bar", &out.warnings);
        out.problem = std::move(spec);
    } else {
        const int p = ju::read_positive_int(doc, "noise_dim");
        MultiNoiseProblemSpec spec = MultiNoiseProblemSpec::zero(N, n, m, p);
        spec.A = ju::read_matrix_seq(get("A"), N, n, n, "A");
        spec.A_bar = ju::read_matrix_seq(get("A_bar"), N, n, n, "A_bar");
        spec.B = ju::read_matrix_seq(get("B"), N, n, m, "B");
        spec.B_bar = ju::read_matrix_seq(get("B_bar"), N, n, m, "B_bar");
        spec.F = ju::read_matrix_seq(get("F"), N, n, n, "F");
        spec.F_bar = ju::read_matrix_seq(get("F_bar"), N, n, n, "F_bar");
        spec.C = ju::read_channel_seq(get("C"), N, p, n, n, "C");
        spec.C_bar = ju::read_channel_seq(get("C_bar"), N, p, n, n, "C_bar");
        spec.D = ju::read_channel_seq(get("D"), N, p, n, m, "D");
        spec.D_bar = ju::read_channel_seq(get("D_bar"), N, p, n, m, "D_bar");
        spec.G = ju::read_channel_seq(get("G"), N, p, n, n, "G");
        spec.G_bar = ju::read_channel_seq(get("G_bar"), N, p, n, n, "G_bar");
        spec.alpha = ju::read_matrix_seq(get("alpha"), N, p, p, "alpha");
        spec.beta = ju::read_matrix_seq(get("beta"), N, p, p, "beta");
        spec.gamma = ju::read_matrix_seq(get("gamma"), N, p, p, "gamma");
        spec.Q = ju::read_matrix_seq(get("Q"), N + 1, n, n, "Q");
        spec.Q_bar = ju::read_matrix_seq(get("Q_bar"), N + 1, n, n, "Q_bar");
        spec.R = ju::read_matrix_seq(get("R"), N, m, m, "R");
        spec.R_bar = ju::read_matrix_seq(get("R_bar"), N, m, m, "R_bar");
        ju::symmetrize_seq(spec.Q, "Q", &out.warnings);
        ju::symmetrize_seq(spec.Q_bar, "Q_bar", &out.warnings);
        ju::symmetrize_seq(spec.R, "R", &out.warnings);
        ju::symmetrize_seq(spec.R_bar, "R_bar", &out.warnings);
        ju::symmetrize_seq(spec.alpha, "alpha", &out.warnings);
        ju::symmetrize_seq(spec.beta, "beta", &out.warnings);
        out.problem = std::move(spec);
    }

    if (doc.contains("initial")) {
        out.initial = read_initial(doc["initial"], n, &out.warnings);
        out.has_initial = true;
    }
    return out;
}

}  // namespace

LoadedProblem parse_problem_text(const std::string& text) {
    return parse_problem_json(ju::parse_with_location(text));
}

LoadedProblem load_problem_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open problem file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_problem_text(buf.str());
}

std::string problem_to_json(const ProblemSpec& spec, const InitialMoments* initial) {
    json doc;
    doc["horizon"] = spec.horizon;
    doc["state_dim"] = spec.state_dim;
    doc["control_dim"] = spec.control_dim;
    doc["A"] = ju::matrix_seq_to_json(spec.A);
    doc["A_bar"] = ju::matrix_seq_to_json(spec.A_bar);
    doc["B"] = ju::matrix_seq_to_json(spec.B);
    doc["B_bar"] = ju::matrix_seq_to_json(spec.B_bar);
    doc["C"] = ju::matrix_seq_to_json(spec.C);
    doc["C_bar"] = ju::matrix_seq_to_json(spec.C_bar);
    doc["D"] = ju::matrix_seq_to_json(spec.D);
    doc["D_bar"] = ju::matrix_seq_to_json(spec.D_bar);
    doc["F"] = ju::matrix_seq_to_json(spec.F);
    doc["F_bar"] = ju::matrix_seq_to_json(spec.F_bar);
    doc["G"] = ju::matrix_seq_to_json(spec.G);
    doc["G_bar"] = ju::matrix_seq_to_json(spec.G_bar);
    doc["Q"] = ju::matrix_seq_to_json(spec.Q);
    doc["Q_bar"] = ju::matrix_seq_to_json(spec.Q_bar);
    doc["R"] = ju::matrix_seq_to_json(spec.R);
    doc["R_bar"] = ju::matrix_seq_to_json(spec.R_bar);
    doc["rho"] = spec.rho;
    if (initial) doc["initial"] = initial_to_json(*initial);
    return doc.dump(2);
}

std::string problem_to_json(const MultiNoiseProblemSpec& spec, const InitialMoments* initial) {
    json doc;
    doc["horizon"] = spec.horizon;
    doc["state_dim"] = spec.state_dim;
    doc["control_dim"] = spec.control_dim;
    doc["noise_dim"] = spec.noise_dim;
    doc["A"] = ju::matrix_seq_to_json(spec.A);
    doc["A_bar"] = ju::matrix_seq_to_json(spec.A_bar);
    doc["B"] = ju::matrix_seq_to_json(spec.B);
    doc["B_bar"] = ju::matrix_seq_to_json(spec.B_bar);
    doc["F"] = ju::matrix_seq_to_json(spec.F);
    doc["F_bar"] = ju::matrix_seq_to_json(spec.F_bar);
    doc["C"] = ju::channel_seq_to_json(spec.C);
    doc["C_bar"] = ju::channel_seq_to_json(spec.C_bar);
    doc["D"] = ju::channel_seq_to_json(spec.D);
    doc["D_bar"] = ju::channel_seq_to_json(spec.D_bar);
    doc["G"] = ju::channel_seq_to_json(spec.G);
    doc["G_bar"] = ju::channel_seq_to_json(spec.G_bar);
    doc["alpha"] = ju::matrix_seq_to_json(spec.alpha);
    doc["beta"] = ju::matrix_seq_to_json(spec.beta);
    doc["gamma"] = ju::matrix_seq_to_json(spec.gamma);
    doc["Q"] = ju::matrix_seq_to_json(spec.Q);
    doc["Q_bar"] = ju::matrix_seq_to_json(spec.Q_bar);
    doc["R"] = ju::matrix_seq_to_json(spec.R);
    doc["R_bar"] = ju::matrix_seq_to_json(spec.R_bar);
    if (initial) doc["initial"] = initial_to_json(*initial);
    return doc.dump(2);
}

int state_dim_of(const AnyProblem& problem) {
    return std::visit([](const auto& s) { return s.state_dim; }, problem);
}

int control_dim_of(const AnyProblem& problem) {
    return std::visit([](const auto& s) { return s.control_dim; }, problem);
}

int horizon_of(const AnyProblem& problem) {
    return std::visit([](const auto& s) { return s.horizon; }, problem);
}

}  // namespace mflq
