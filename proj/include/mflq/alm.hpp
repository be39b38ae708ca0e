#pragma once

// Asset-liability management specialization: scalar wealth x_{k+1} =
// a_k x_k + B_k u_k (a_k the risk-free factor, B_k the random row of excess
// returns over the m risky assets, u_k the money allocated to each), scalar
// liability y_{k+1} = f_k y_k, and cost
//   J = sum_k E[u_k' R_k u_k] + q_N E[(x_N - y_N)^2] + q_bar_N (E[x_N - y_N])^2,
// i.e. a weighted mix of terminal-surplus second moment and squared mean —
// with q_bar_N = -q_N this is exactly the variance of the terminal surplus.
//
// Only the first two moments of B_k enter anywhere: E B_k and Cov(B_k).
// The problem embeds into the general multinoise model with n = 1, p = m,
// B = E B_k, D^i = e_i' (unit row), alpha_k = Cov(B_k) — the noise channels
// are the centered excess returns themselves.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mflq/model.hpp"

namespace mflq {

struct AlmProblem {
    int horizon = 0;      // N
    int asset_count = 0;  // m risky assets

    std::vector<double> a;  // risk-free growth factor per step, k = 0..N-1
    std::vector<double> f;  // liability growth factor per step

    std::vector<Eigen::RowVectorXd> mean_excess;  // E B_k, 1 x m
    std::vector<Eigen::MatrixXd> cov_excess;      // Cov(B_k), m x m PSD
    std::vector<Eigen::MatrixXd> R;               // m x m positive definite

    double q_N = 0;      // terminal surplus second-moment weight, >= 0
    double q_bar_N = 0;  // terminal surplus squared-mean weight, q_N + q_bar_N >= 0
};

// Scalar Riccati sequences (the state is one-dimensional, so every S/T is a
// number) plus the m x m control kernels and 1 x m H-rows.
struct AlmRiccati {
    std::vector<double> Sx, Tx, Sxy, Txy, Sy, Ty;  // k = 0..N
    std::vector<Eigen::MatrixXd> W1, W2;           // k = 0..N-1
    std::vector<Eigen::RowVectorXd> H1, H2, H3, H4;
};

ValidationReport validate_alm(const AlmProblem& alm);

// Embedding into the general multinoise model (see file comment).  Q_k = 0
// for k < N; Q_N = [q_N], Q_bar_N = [q_bar_N]; beta = gamma = 0; all _bar
// coefficient matrices zero.
MultiNoiseProblemSpec lift_to_multinoise(const AlmProblem& alm);

// Specialized backward recursion in rational form, e.g.
//   W1 = R + Sx1 E(B'B),   with E(B'B) = Cov(B) + (E B)'(E B),
//   Sx = a^2 Sx1 [1 - Sx1 EB W1^{-1} EB'],
//   Txy = a f Txy1 [1 - Tx1 EB W2^{-1} EB'],   etc.
// Agrees with the general multinoise solve on the lifted problem (dual-route
// consistency is part of the verification suite).
AlmRiccati solve_alm_riccati(const AlmProblem& alm);

// Optimal allocation at step k:
//   u = -W1^{-1} H1' (x - Ex) - W2^{-1} H2' Ex - W1^{-1} H3' (y - Ey) - W2^{-1} H4' Ey.
Eigen::VectorXd alm_strategy(const AlmProblem& alm, const AlmRiccati& riccati, int k, double x,
                             double Ex, double y, double Ey);

// Minimal cost from the initial moments:
//   Sx0 Var(zx) + Tx0 (E zx)^2 + 2 Sxy0 Cov(zx, zy) + 2 Txy0 (E zx)(E zy)
//   + Sy0 Var(zy) + Ty0 (E zy)^2.
// (Both cross terms carry the factor 2; the tree oracle confirms.)
double alm_optimal_value(const AlmRiccati& riccati, double mean_x, double var_x, double mean_y,
                         double var_y, double cov_xy);

// E[x_N - y_N] under the optimal strategy, by the forward recursion
//   Ex' = Nx_k Ex + Mxy_k Ey,  Ey' = f_k Ey,
// with Nx = a_k (1 - Tx1 EB W2^{-1} EB') and Mxy = -f_k Txy1 EB W2^{-1} EB'.
double expected_terminal_equity(const AlmProblem& alm, const AlmRiccati& riccati, double mean_x0,
                                double mean_y0);

// Pseudo-inverse of M + c c' for symmetric PSD M with c in Range(M), via the
// rank-one update
//   (M + c c')^+  =  M^+  -  (M^+ c c' M^+) / (1 + c' M^+ c).
// Throws RangeViolation when the residual of the least-squares solve for c
// exceeds 1e-10 * |c|.  (The textbook identity requires c in Range(M); the
// denominator carries the +1 — dropping it, or mixing M with M^+ in the
// correction term, breaks the Moore-Penrose identities, which the tests
// check explicitly.)
Eigen::MatrixXd pinv_rank_one(const Eigen::MatrixXd& M, const Eigen::VectorXd& c);

// ---------------------------------------------------------------------------
// I/O.  ALM problem JSON:
//   { "horizon": N, "asset_count": m, "a": [N], "f": [N],
//     "mean_excess": [N x m], "cov_excess": [N x (m x m)], "R": [N x (m x m)],
//     "q_N": number, "q_bar_N": number,
//     "initial": optional { "mean_x", "var_x", "mean_y", "var_y", "cov_xy" } }
// Unknown keys rejected.  Returns ingestion: CSV with one row per period and
// one column per asset, excess returns as decimals.
// ---------------------------------------------------------------------------

struct LoadedAlm {
    AlmProblem problem;
    bool has_initial = false;
    double mean_x = 0, var_x = 0, mean_y = 0, var_y = 0, cov_xy = 0;
    std::vector<std::string> warnings;
};

LoadedAlm parse_alm_text(const std::string& text);
LoadedAlm load_alm_file(const std::string& path);
std::string alm_to_json(const AlmProblem& alm);

// Historical excess returns, one row per period, one column per asset.
Eigen::MatrixXd load_returns_csv(const std::string& path);

enum class MomentEstimation {
    pooled,    // one (mean, cov) from all rows, replicated over the horizon
    per_step,  // rows split into `horizon` equal blocks, one block per step
};

// Converts a returns history into the per-step moment sequences of an
// AlmProblem (a, f, R, q weights supplied by the caller).  per_step requires
// rows divisible into `horizon` blocks of at least 2 rows each.
AlmProblem alm_from_returns(const Eigen::MatrixXd& returns, int horizon, double a, double f,
                            const Eigen::MatrixXd& R, double q_N, double q_bar_N,
                            MomentEstimation estimation);

}  // namespace mflq
