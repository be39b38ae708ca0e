#pragma once

// Backward-in-time Riccati recursions for the mean-field LQ problem.
//
// The value function separates into a centered part (acting on x - Ex) and a
// mean part (acting on Ex), which is why every sequence comes in an S/T pair:
// S weights the centered component, T the mean component.  Six sequences are
// needed because the cost couples the controlled asset x to the uncontrolled
// liability y: Sx/Tx (asset-quadratic), Sxy/Txy (cross), Sy/Ty
// (liability-quadratic).
//
// Per backward step k the control kernels are
//   W1 = R + B' Sx1 B + D' Sx1 D                    (centered control weight)
//   W2 = R + R_bar + (B+Bb)' Tx1 (B+Bb) + (D+Db)' Sx1 (D+Db)   (mean weight)
//   H1 = A' Sx1 B + C' Sx1 D
//   H2 = (A+Ab)' Tx1 (B+Bb) + (C+Cb)' Sx1 (D+Db)
//   H3 = F' Sxy1 B + rho G' Sxy1 D
//   H4 = (F+Fb)' Txy1 (B+Bb) + rho (G+Gb)' Sxy1 (D+Db)
// (suffix 1 = step k+1 value, suffix b = the _bar matrix), and the updates are
// completed-square forms such as Sx = Q + A'Sx1 A + C'Sx1 C - H1 W1^{-1} H1'.
// The optimal control in centered form is
//   u = -W1^{-1} H1' (x-Ex) - W2^{-1} H2' Ex - W1^{-1} H3' (y-Ey) - W2^{-1} H4' Ey.

#include <vector>

#include <Eigen/Dense>

#include "mflq/errors.hpp"
#include "mflq/model.hpp"

namespace mflq {

struct RiccatiSolution {
    // Value-function weights, k = 0..N.  Sx, Tx, Sy, Ty symmetric; the cross
    // sequences Sxy, Txy are not symmetric in general.
    std::vector<Eigen::MatrixXd> Sx, Tx, Sxy, Txy, Sy, Ty;

    // Control kernels, k = 0..N-1.  W1, W2 are symmetric positive definite
    // m x m whenever the problem validates; H1..H4 are n x m.
    std::vector<Eigen::MatrixXd> W1, W2;
    std::vector<Eigen::MatrixXd> H1, H2, H3, H4;
};

// Multiplier/gain form of the same backward recursion.  P tracks the centered
// weight and P + P_bar the mean weight, so P corresponds to S and P + P_bar
// to T; the split parts P_bar are stored explicitly.  Gains are in the
// uncentered convention: u = Lx x + Lx_bar Ex + Ly y + Ly_bar Ey.
struct PFormSolution {
    std::vector<Eigen::MatrixXd> Px, Px_bar;    // k = 0..N, n x n
    std::vector<Eigen::MatrixXd> Pxy, Pxy_bar;  // k = 0..N, n x n
    std::vector<Eigen::MatrixXd> Py, Py_bar;    // k = 0..N, n x n

    std::vector<Eigen::MatrixXd> Lx, Lx_bar, Ly, Ly_bar;  // k = 0..N-1, m x n

    std::vector<Eigen::MatrixXd> W1, W2;          // as in RiccatiSolution
    std::vector<Eigen::MatrixXd> H1, H2, H3, H4;
};

// Backward solve of the six S/T sequences.  Terminal values:
//   Sx_N = Q_N, Tx_N = Q_N + Q_bar_N, Sxy_N = -Q_N, Txy_N = -(Q_N + Q_bar_N),
//   Sy_N = Q_N, Ty_N = Q_N + Q_bar_N.
// Symmetric iterates are re-symmetrized each step; W inverses are applied as
// solves against an SPD factorization, never formed explicitly.
// Throws NotPositiveDefinite if a W kernel loses definiteness.
// Precondition: validate_problem(spec).ok.
RiccatiSolution solve_riccati(const ProblemSpec& spec);

// Multinoise variant: every noise-quadratic term becomes a channel double sum
// weighted by the step-k second moments, e.g.
//   D' Sx1 D        ->  sum_{i,j} alpha_k(i,j) (D^i)' Sx1 D^j
//   rho G' Sxy1 D   ->  sum_{i,j} gamma_k(j,i) (G^i)' Sxy1 D^j
//   G' Sy1 G        ->  sum_{i,j} beta_k(i,j)  (G^i)' Sy1 G^j.
// In the cross sums the liability channel i (loading G^i, noise v_i) sits on
// the left and the asset channel j (loading D^j, noise w_j) on the right, so
// the weight is E[v_i w_j] = gamma(j, i) — the transpose indexing, since
// gamma = E[w v'].  The verification suite checks this orientation against
// the exact tree oracle on nonsymmetric-gamma instances.
// Throws InvalidMoment if a joint moment block fails PSD.
RiccatiSolution solve_riccati_multinoise(const MultiNoiseProblemSpec& spec);

// Multiplier/gain route.  Runs the same completed-square updates on
// (P, P + P_bar) pairs, derives the gains
//   Lx = -W1^{-1} H1',  Lx_bar = -W2^{-1} H2' + W1^{-1} H1',
//   Ly = -W1^{-1} H3',  Ly_bar = -W2^{-1} H4' + W1^{-1} H3',
// and splits P_bar = (P + P_bar) - P.  Terminal values: Px_N = Q_N,
// Px_bar_N = Q_bar_N, Pxy_N = -Q_N, Pxy_bar_N = -Q_bar_N, Py_N = Q_N,
// Py_bar_N = Q_bar_N.  (The cross boundary uses -Q_bar_N: the pair
// (Pxy + Pxy_bar)_N must equal -(Q_N + Q_bar_N) for the two routes to
// coincide, which the equivalence tests confirm.)
PFormSolution solve_p_form(const ProblemSpec& spec);

}  // namespace mflq
