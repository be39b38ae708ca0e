#pragma once

// Problem data for discrete-time, finite-horizon mean-field LQ control of a
// coupled asset/liability pair.  The controlled asset x and the uncontrolled
// liability y evolve as
//
//   x_{k+1} = (A x + A_bar Ex + B u + B_bar Eu) + (C x + C_bar Ex + D u + D_bar Eu) w_k
//   y_{k+1} = (F y + F_bar Ey)                 + (G y + G_bar Ey) v_k
//
// with scalar noises (w_k, v_k) that have zero mean, unit second moments and
// cross-correlation rho, and Ex = E[x_k] etc. the population means that make
// the problem "mean-field".  The cost penalizes the surplus x - y and the
// control, both pathwise and in the mean:
//
//   J = sum_k E[(x-y)' Q (x-y)] + (E(x-y))' Q_bar (E(x-y)) + E[u' R u] + (Eu)' R_bar (Eu)
//       + terminal terms with Q_N, Q_bar_N.
//
// The multinoise variant replaces the scalar (w, v) with p-vectors whose
// per-step second moments are (alpha, beta, gamma); each noise channel i gets
// its own C^i, D^i, G^i loading.

#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace mflq {

struct ProblemSpec {
    int horizon = 0;      // N: number of control periods, k = 0..N-1
    int state_dim = 0;    // n
    int control_dim = 0;  // m

    // Dynamics, one matrix per step k = 0..N-1.
    std::vector<Eigen::MatrixXd> A, A_bar;  // n x n
    std::vector<Eigen::MatrixXd> B, B_bar;  // n x m
    std::vector<Eigen::MatrixXd> C, C_bar;  // n x n
    std::vector<Eigen::MatrixXd> D, D_bar;  // n x m
    std::vector<Eigen::MatrixXd> F, F_bar;  // n x n
    std::vector<Eigen::MatrixXd> G, G_bar;  // n x n

    // Weights.  Q, Q_bar run k = 0..N (terminal included); R, R_bar k = 0..N-1.
    std::vector<Eigen::MatrixXd> Q, Q_bar;  // n x n, symmetric
    std::vector<Eigen::MatrixXd> R, R_bar;  // m x m, symmetric

    double rho = 0.0;  // E[w v], |rho| <= 1

    // All-zero spec of the given shape; convenient starting point for tests
    // and programmatic construction.
    static ProblemSpec zero(int horizon, int state_dim, int control_dim);
};

struct MultiNoiseProblemSpec {
    int horizon = 0;
    int state_dim = 0;
    int control_dim = 0;
    int noise_dim = 0;  // p: channels of w and of v

    std::vector<Eigen::MatrixXd> A, A_bar;  // n x n per step
    std::vector<Eigen::MatrixXd> B, B_bar;  // n x m per step
    std::vector<Eigen::MatrixXd> F, F_bar;  // n x n per step

    // Channel-indexed loadings: outer index step k, inner index channel i.
    std::vector<std::vector<Eigen::MatrixXd>> C, C_bar;  // n x n
    std::vector<std::vector<Eigen::MatrixXd>> D, D_bar;  // n x m
    std::vector<std::vector<Eigen::MatrixXd>> G, G_bar;  // n x n

    // Second moments of the step-k noise pair: alpha = E[w w'], beta = E[v v'],
    // gamma = E[w v'], all p x p.  Index k refers to the noise applied in the
    // k -> k+1 transition.
    std::vector<Eigen::MatrixXd> alpha, beta, gamma;

    std::vector<Eigen::MatrixXd> Q, Q_bar;  // n x n, k = 0..N
    std::vector<Eigen::MatrixXd> R, R_bar;  // m x m, k = 0..N-1

    static MultiNoiseProblemSpec zero(int horizon, int state_dim, int control_dim,
                                      int noise_dim);
};

// First and second moments of the initial pair (zeta_x, zeta_y).  The analytic
// optimal value depends on the initial law only through these; cov_xy is
// E[(zeta_x - E zeta_x)(zeta_y - E zeta_y)'].
struct InitialMoments {
    Eigen::VectorXd mean_x, mean_y;          // n
    Eigen::MatrixXd cov_x, cov_y, cov_xy;    // n x n

    static InitialMoments zero(int state_dim);
};

struct ValidationReport {
    struct Violation {
        std::string condition;  // e.g. "Q psd", "R positive", "joint moment psd"
        int k = 0;              // offending step (-1 for step-free conditions)
        double lambda_min = 0;  // smallest offending eigenvalue / margin
    };

    bool ok = true;
    std::vector<Violation> violations;  // ok <=> violations.empty()
};

// Solvability conditions: Q_k >= 0 and Q_k + Q_bar_k >= 0 for k = 0..N,
// R_k > 0 and R_k + R_bar_k > 0 for k = 0..N-1.  Semidefiniteness is accepted
// down to lambda_min >= -1e-10 * scale, definiteness requires
// lambda_min >= 1e-12 * (1 + scale); scale is 1 + max|entry|.
// Reports every violation; never throws.
ValidationReport validate_problem(const ProblemSpec& spec);

// Same conditions plus per-step moment checks: alpha_k, beta_k and the stacked
// joint block [[alpha, gamma], [gamma', beta]] must be PSD.
ValidationReport validate_problem(const MultiNoiseProblemSpec& spec);

// Embeds a scalar-noise problem as the p = 1 multinoise instance with
// alpha = beta = [1], gamma = [rho].  Solutions and validation verdicts agree.
MultiNoiseProblemSpec lift_to_multinoise(const ProblemSpec& spec);

// ---------------------------------------------------------------------------
// JSON problem files.
//
// Scalar-noise schema (all matrices as row-major nested arrays of finite
// doubles):
//   { "horizon": N, "state_dim": n, "control_dim": m,
//     "A": [N x (n x n)], "A_bar": ..., "B": [N x (n x m)], "B_bar": ...,
//     "C", "C_bar", "D", "D_bar", "F", "F_bar", "G", "G_bar",
//     "Q": [(N+1) x (n x n)], "Q_bar": ..., "R": [N x (m x m)], "R_bar": ...,
//     "rho": number,
//     "initial": optional InitialMoments block (see below) }
//
// The multinoise schema adds "noise_dim": p, drops "rho", makes C/C_bar/D/
// D_bar/G/G_bar channel-indexed ([N][p][...]), and adds per-step "alpha",
// "beta", "gamma" ([N x (p x p)]).  Unknown keys are rejected.
//
// "initial": { "mean_x": [n], "mean_y": [n],
//              "cov_x": [n x n], "cov_y": [n x n], "cov_xy": [n x n] }
// ---------------------------------------------------------------------------

// File/JSON-level failure: bad syntax (with line/column), wrong shapes,
// unknown keys, non-finite numbers.  Distinct from ValidationReport, which
// covers the solvability conditions of a well-formed problem.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what_) : std::runtime_error(what_) {}
};

using AnyProblem = std::variant<ProblemSpec, MultiNoiseProblemSpec>;

struct LoadedProblem {
    AnyProblem problem;
    bool has_initial = false;
    InitialMoments initial;              // valid only when has_initial
    std::vector<std::string> warnings;   // e.g. symmetrization notices
};

// Parses a problem document from text.  Declared-symmetric inputs (Q, Q_bar,
// R, R_bar, alpha, beta, cov_*) are symmetrized to (M + M')/2 on load; a
// warning is recorded when the asymmetry exceeds 1e-9.
LoadedProblem parse_problem_text(const std::string& text);
LoadedProblem load_problem_file(const std::string& path);

// Serialization; round-trips bit-exactly for finite inputs.
std::string problem_to_json(const ProblemSpec& spec, const InitialMoments* initial = nullptr);
std::string problem_to_json(const MultiNoiseProblemSpec& spec,
                            const InitialMoments* initial = nullptr);

int state_dim_of(const AnyProblem& problem);
int control_dim_of(const AnyProblem& problem);
int horizon_of(const AnyProblem& problem);

}  // namespace mflq
