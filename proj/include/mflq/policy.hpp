#pragma once

// Executable artifacts derived from a Riccati solution: feedback gains, the
// deterministic expected trajectory of the closed loop, and the closed-form
// optimal cost as a function of the initial moments.

#include <vector>

#include <Eigen/Dense>

#include "mflq/model.hpp"
#include "mflq/riccati.hpp"

namespace mflq {

// Centered-form feedback gains:
//   u_k = Kx (x - Ex) + Kx_bar Ex + Ky (y - Ey) + Ky_bar Ey.
// Centered storage avoids the cancellation between the x and Ex coefficients
// of the uncentered convention (which is recovered as Lx = Kx,
// Lx_bar = Kx_bar - Kx when needed).
struct FeedbackPolicy {
    int horizon = 0;
    int state_dim = 0;
    int control_dim = 0;
    std::vector<Eigen::MatrixXd> Kx, Kx_bar, Ky, Ky_bar;  // m x n, k = 0..N-1
};

// Deterministic evolution of the means under the optimal policy:
//   Ex_{k+1} = Nx_k Ex_k + Mxy_k Ey_k,   Ey_{k+1} = Oy_k Ey_k,
// with Nx = A + A_bar - (B + B_bar) W2^{-1} H2', Mxy = -(B + B_bar) W2^{-1} H4',
// Oy = F + F_bar, and Eu_k = -W2^{-1} (H2' Ex_k + H4' Ey_k).
struct ExpectedTrajectory {
    std::vector<Eigen::VectorXd> Ex, Ey;  // k = 0..N
    std::vector<Eigen::VectorXd> Eu;      // k = 0..N-1
    std::vector<Eigen::MatrixXd> Nx, Mxy, Oy;  // transition factors, k = 0..N-1
};

// Gains from the solved kernels: Kx = -W1^{-1} H1', Kx_bar = -W2^{-1} H2',
// Ky = -W1^{-1} H3', Ky_bar = -W2^{-1} H4'.
FeedbackPolicy build_policy(const RiccatiSolution& riccati);

// Evaluates the feedback law at step k.  Pure; throws DimensionMismatch on
// shape errors.
Eigen::VectorXd control_action(const FeedbackPolicy& policy, int k,
                               const Eigen::VectorXd& x, const Eigen::VectorXd& Ex,
                               const Eigen::VectorXd& y, const Eigen::VectorXd& Ey);

// Forward recursion of the means from (E zeta_x, E zeta_y).
ExpectedTrajectory expected_trajectory(const ProblemSpec& spec, const RiccatiSolution& riccati,
                                       const Eigen::VectorXd& mean_x0,
                                       const Eigen::VectorXd& mean_y0);
ExpectedTrajectory expected_trajectory(const MultiNoiseProblemSpec& spec,
                                       const RiccatiSolution& riccati,
                                       const Eigen::VectorXd& mean_x0,
                                       const Eigen::VectorXd& mean_y0);

// Closed-form minimal cost from the step-0 weights and the initial moments:
//   J* = tr(Sx0 cov_x) + mean_x' Tx0 mean_x
//      + 2 tr(Sxy0 cov_xy) + 2 mean_y' Txy0 mean_x
//      + tr(Sy0 cov_y)  + mean_y' Ty0 mean_y.
// (Centered quadratic expectations reduce to traces against covariances; the
// cross terms carry the factor 2.)
double optimal_cost(const RiccatiSolution& riccati, const InitialMoments& init);

}  // namespace mflq
