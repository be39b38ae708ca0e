#include "mflq/policy.hpp"

#include <Eigen/Cholesky>

#include "mflq/errors.hpp"

namespace mflq {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// The kernels stored in a RiccatiSolution were already certified SPD by the
// solve, so a plain Cholesky application is enough here.
MatrixXd kernel_solve(const MatrixXd& W, const MatrixXd& Ht) {
    return Eigen::LLT<MatrixXd>(W).solve(Ht);
}

ExpectedTrajectory mean_recursion(const RiccatiSolution& riccati,
                                  const std::vector<MatrixXd>& A_sum,
                                  const std::vector<MatrixXd>& B_sum,
                                  const std::vector<MatrixXd>& F_sum,
                                  const VectorXd& mean_x0, const VectorXd& mean_y0) {
    const int N = static_cast<int>(A_sum.size());
    ExpectedTrajectory traj;
    traj.Ex.resize(static_cast<size_t>(N) + 1);
    traj.Ey.resize(static_cast<size_t>(N) + 1);
    traj.Eu.resize(static_cast<size_t>(N));
    traj.Nx.resize(static_cast<size_t>(N));
    traj.Mxy.resize(static_cast<size_t>(N));
    traj.Oy.resize(static_cast<size_t>(N));

    traj.Ex[0] = mean_x0;
    traj.Ey[0] = mean_y0;
    for (int k = 0; k < N; ++k) {
        Eigen::LLT<MatrixXd> llt(riccati.W2[k]);
        const MatrixXd K2 = llt.solve(riccati.H2[k].transpose());  // W2^{-1} H2'
        const MatrixXd K4 = llt.solve(riccati.H4[k].transpose());  // W2^{-1} H4'
        traj.Nx[k] = A_sum[k] - B_sum[k] * K2;
        traj.Mxy[k] = -B_sum[k] * K4;
        traj.Oy[k] = F_sum[k];
        traj.Eu[k] = -(K2 * traj.Ex[k] + K4 * traj.Ey[k]);
        traj.Ex[k + 1] = traj.Nx[k] * traj.Ex[k] + traj.Mxy[k] * traj.Ey[k];
        traj.Ey[k + 1] = traj.Oy[k] * traj.Ey[k];
    }
    return traj;
}

}  // namespace

FeedbackPolicy build_policy(const RiccatiSolution& riccati) {
    const int N = static_cast<int>(riccati.W1.size());
    FeedbackPolicy policy;
    policy.horizon = N;
    if (N > 0) {
        policy.state_dim = static_cast<int>(riccati.H1[0].rows());
        policy.control_dim = static_cast<int>(riccati.H1[0].cols());
    }
    policy.Kx.resize(static_cast<size_t>(N));
    policy.Kx_bar.resize(static_cast<size_t>(N));
    policy.Ky.resize(static_cast<size_t>(N));
    policy.Ky_bar.resize(static_cast<size_t>(N));
    for (int k = 0; k < N; ++k) {
        policy.Kx[k] = -kernel_solve(riccati.W1[k], riccati.H1[k].transpose());
        policy.Kx_bar[k] = -kernel_solve(riccati.W2[k], riccati.H2[k].transpose());
        policy.Ky[k] = -kernel_solve(riccati.W1[k], riccati.H3[k].transpose());
        policy.Ky_bar[k] = -kernel_solve(riccati.W2[k], riccati.H4[k].transpose());
    }
    return policy;
}

VectorXd control_action(const FeedbackPolicy& policy, int k, const VectorXd& x,
                        const VectorXd& Ex, const VectorXd& y, const VectorXd& Ey) {
    if (k < 0 || k >= policy.horizon)
        throw DimensionMismatch("control_action: step " + std::to_string(k) +
                                " outside horizon " + std::to_string(policy.horizon));
    const int n = policy.state_dim;
    if (x.size() != n || Ex.size() != n || y.size() != n || Ey.size() != n)
        throw DimensionMismatch("control_action: state vectors must have dimension " +
                                std::to_string(n));
    return policy.Kx[k] * (x - Ex) + policy.Kx_bar[k] * Ex + policy.Ky[k] * (y - Ey) +
           policy.Ky_bar[k] * Ey;
}

ExpectedTrajectory expected_trajectory(const ProblemSpec& spec, const RiccatiSolution& riccati,
                                       const VectorXd& mean_x0, const VectorXd& mean_y0) {
    const int N = spec.horizon;
    std::vector<MatrixXd> As(static_cast<size_t>(N)), Bs(static_cast<size_t>(N)),
        Fs(static_cast<size_t>(N));
    for (int k = 0; k < N; ++k) {
        As[k] = spec.A[k] + spec.A_bar[k];
        Bs[k] = spec.B[k] + spec.B_bar[k];
        Fs[k] = spec.F[k] + spec.F_bar[k];
    }
    return mean_recursion(riccati, As, Bs, Fs, mean_x0, mean_y0);
}

ExpectedTrajectory expected_trajectory(const MultiNoiseProblemSpec& spec,
                                       const RiccatiSolution& riccati, const VectorXd& mean_x0,
                                       const VectorXd& mean_y0) {
    const int N = spec.horizon;
    std::vector<MatrixXd> As(static_cast<size_t>(N)), Bs(static_cast<size_t>(N)),
        Fs(static_cast<size_t>(N));
    for (int k = 0; k < N; ++k) {
        As[k] = spec.A[k] + spec.A_bar[k];
        Bs[k] = spec.B[k] + spec.B_bar[k];
        Fs[k] = spec.F[k] + spec.F_bar[k];
    }
    return mean_recursion(riccati, As, Bs, Fs, mean_x0, mean_y0);
}

double optimal_cost(const RiccatiSolution& riccati, const InitialMoments& init) {
    const MatrixXd& Sx0 = riccati.Sx[0];
    const MatrixXd& Tx0 = riccati.Tx[0];
    const MatrixXd& Sxy0 = riccati.Sxy[0];
    const MatrixXd& Txy0 = riccati.Txy[0];
    const MatrixXd& Sy0 = riccati.Sy[0];
    const MatrixXd& Ty0 = riccati.Ty[0];
    return (Sx0 * init.cov_x).trace() + init.mean_x.dot(Tx0 * init.mean_x) +
           2.0 * (Sxy0 * init.cov_xy).trace() + 2.0 * init.mean_y.dot(Txy0 * init.mean_x) +
           (Sy0 * init.cov_y).trace() + init.mean_y.dot(Ty0 * init.mean_y);
}

}  // namespace mflq
