#pragma once

// Shared fixtures and utilities for the unit suites.

#include <sys/wait.h>

#include <Eigen/Dense>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mflq/model.hpp"
#include "mflq/random_instances.hpp"
#include "mflq/riccati.hpp"

namespace mflq::testing {

// ---------------------------------------------------------------------------
// Environment plumbing (set by ctest; fall back to in-tree defaults so the
// binary can also be run by hand from the build directory).

inline std::string data_path(const std::string& name) {
    const char* dir = std::getenv("MFLQ_DATA");
    return std::string(dir ? dir : "data") + "/" + name;
}

inline std::string cli_binary() {
    const char* bin = std::getenv("MFLQ_BIN");
    return bin ? bin : "./mflq";
}

// Runs a shell command, capturing combined stdout+stderr and the exit code.
struct CommandResult {
    int exit_code = -1;
    std::string output;
};

inline CommandResult run_command(const std::string& cmd) {
    CommandResult r;
    FILE* pipe = popen((cmd + " 2>&1").c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    size_t got;
    while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, got);
    const int status = pclose(pipe);
    if (WIFEXITED(status)) r.exit_code = WEXITSTATUS(status);
    return r;
}

inline std::string write_temp(const std::string& name, const std::string& content) {
    const std::string path = "/tmp/mflq_test_" + name;
    std::ofstream out(path);
    out << content;
    return path;
}

inline std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// Small matrix helpers.

inline Eigen::MatrixXd mat1(double v) {
    Eigen::MatrixXd m(1, 1);
    m(0, 0) = v;
    return m;
}

inline Eigen::VectorXd vec1(double v) {
    Eigen::VectorXd x(1);
    x(0) = v;
    return x;
}

inline double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return (a - b).cwiseAbs().maxCoeff();
}

inline double seq_diff(const std::vector<Eigen::MatrixXd>& a,
                       const std::vector<Eigen::MatrixXd>& b) {
    double worst = a.size() == b.size() ? 0.0 : std::numeric_limits<double>::infinity();
    for (size_t k = 0; k < a.size() && k < b.size(); ++k)
        worst = std::max(worst, max_abs_diff(a[k], b[k]));
    return worst;
}

// Relative deviation between two value sequences: max |a-b| / (1 + max |b|),
// the metric used to compare independent solver routes.
inline double seq_rel_diff(const std::vector<Eigen::MatrixXd>& a,
                           const std::vector<Eigen::MatrixXd>& b) {
    double worst = 0.0;
    for (size_t k = 0; k < a.size(); ++k) {
        const double scale = 1.0 + b[k].cwiseAbs().maxCoeff();
        worst = std::max(worst, max_abs_diff(a[k], b[k]) / scale);
    }
    return worst;
}

// Max relative deviation between the centered/aggregate value-and-kernel
// sequences of the two solver routes (all six value pairings plus kernels).
inline double route_deviation(const PFormSolution& p, const RiccatiSolution& st) {
    double worst = seq_rel_diff(p.Px, st.Sx);
    auto pair_sum = [](const std::vector<Eigen::MatrixXd>& u,
                       const std::vector<Eigen::MatrixXd>& v) {
        std::vector<Eigen::MatrixXd> s(u.size());
        for (size_t k = 0; k < u.size(); ++k) s[k] = u[k] + v[k];
        return s;
    };
    worst = std::max(worst, seq_rel_diff(pair_sum(p.Px, p.Px_bar), st.Tx));
    worst = std::max(worst, seq_rel_diff(p.Pxy, st.Sxy));
    worst = std::max(worst, seq_rel_diff(pair_sum(p.Pxy, p.Pxy_bar), st.Txy));
    worst = std::max(worst, seq_rel_diff(p.Py, st.Sy));
    worst = std::max(worst, seq_rel_diff(pair_sum(p.Py, p.Py_bar), st.Ty));
    worst = std::max(worst, seq_rel_diff(p.W1, st.W1));
    worst = std::max(worst, seq_rel_diff(p.W2, st.W2));
    return worst;
}

// Max absolute deviation between a scalar-noise solution and a multinoise one
// (used for the p = 1 lift reduction, which should be exact to rounding).
inline double solution_difference(const RiccatiSolution& a, const RiccatiSolution& b) {
    double worst = seq_diff(a.Sx, b.Sx);
    worst = std::max(worst, seq_diff(a.Tx, b.Tx));
    worst = std::max(worst, seq_diff(a.Sxy, b.Sxy));
    worst = std::max(worst, seq_diff(a.Txy, b.Txy));
    worst = std::max(worst, seq_diff(a.Sy, b.Sy));
    worst = std::max(worst, seq_diff(a.Ty, b.Ty));
    worst = std::max(worst, seq_diff(a.W1, b.W1));
    worst = std::max(worst, seq_diff(a.W2, b.W2));
    worst = std::max(worst, seq_diff(a.H1, b.H1));
    worst = std::max(worst, seq_diff(a.H2, b.H2));
    worst = std::max(worst, seq_diff(a.H3, b.H3));
    worst = std::max(worst, seq_diff(a.H4, b.H4));
    return worst;
}

// ---------------------------------------------------------------------------
// Hand fixtures.

// One-dimensional, one-step regulator: x1 = x0 + u, cost x0^2 + u^2 + x1^2
// (unit weights, no liability coupling, no noise feed-through).  The exact
// solution is u* = -x0/2 with value 1.5 x0^2.
inline ProblemSpec one_step_unit() {
    ProblemSpec s = ProblemSpec::zero(1, 1, 1);
    s.A[0] = mat1(1.0);
    s.B[0] = mat1(1.0);
    s.Q[0] = mat1(1.0);
    s.Q[1] = mat1(1.0);
    s.R[0] = mat1(1.0);
    return s;
}

// All dynamics zero: the value recursions collapse to the running weights.
inline ProblemSpec zero_dynamics_spec(int horizon, int n, int m, CounterRng& rng) {
    ProblemSpec s = ProblemSpec::zero(horizon, n, m);
    for (int k = 0; k <= horizon; ++k) {
        s.Q[k] = random_psd(rng, n, 1.0);
        s.Q_bar[k] = random_psd(rng, n, 0.5);
    }
    for (int k = 0; k < horizon; ++k) {
        s.R[k] = random_psd(rng, m, 1.0) + Eigen::MatrixXd::Identity(m, m);
        s.R_bar[k] = random_psd(rng, m, 0.5);
    }
    return s;
}

}  // namespace mflq::testing
