#include "mflq/random_instances.hpp"

#include <algorithm>

namespace mflq {

using Eigen::MatrixXd;

MatrixXd random_matrix(CounterRng& rng, int rows, int cols, double scale) {
    MatrixXd M(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) M(i, j) = (2.0 * rng.uniform01() - 1.0) * scale;
    return M;
}

MatrixXd random_psd(CounterRng& rng, int n, double scale) {
    const MatrixXd M = random_matrix(rng, n, n, scale);
    return (M * M.transpose()) / static_cast<double>(n);
}

int random_between(CounterRng& rng, int lo, int hi) {
    const int span = hi - lo + 1;
    return lo + std::min(span - 1, static_cast<int>(rng.uniform01() * span));
}

namespace {

void fill_random_weights(CounterRng& rng, int horizon, int n, int m,
                         std::vector<MatrixXd>& Q, std::vector<MatrixXd>& Q_bar,
                         std::vector<MatrixXd>& R, std::vector<MatrixXd>& R_bar) {
    for (int k = 0; k <= horizon; ++k) {
        Q[k] = random_psd(rng, n, 0.8);
        // Q_bar may be indefinite as long as Q + Q_bar stays PSD.
        Q_bar[k] = random_psd(rng, n, 0.5) - 0.4 * Q[k];
    }
    for (int k = 0; k < horizon; ++k) {
        R[k] = random_psd(rng, m, 0.5) + 0.3 * MatrixXd::Identity(m, m);
        R_bar[k] = random_psd(rng, m, 0.4) - 0.4 * R[k];
    }
}

}  // namespace

ProblemSpec random_scalar_problem(CounterRng& rng, int horizon, int state_dim,
                                  int control_dim) {
    const int N = horizon, n = state_dim, m = control_dim;
    ProblemSpec spec = ProblemSpec::zero(N, n, m);
    for (int k = 0; k < N; ++k) {
        spec.A[k] = random_matrix(rng, n, n, 0.6);
        spec.A_bar[k] = random_matrix(rng, n, n, 0.3);
        spec.B[k] = random_matrix(rng, n, m, 0.5);
        spec.B_bar[k] = random_matrix(rng, n, m, 0.3);
        spec.C[k] = random_matrix(rng, n, n, 0.35);
        spec.C_bar[k] = random_matrix(rng, n, n, 0.2);
        spec.D[k] = random_matrix(rng, n, m, 0.3);
        spec.D_bar[k] = random_matrix(rng, n, m, 0.2);
        spec.F[k] = random_matrix(rng, n, n, 0.6);
        spec.F_bar[k] = random_matrix(rng, n, n, 0.3);
        spec.G[k] = random_matrix(rng, n, n, 0.35);
        spec.G_bar[k] = random_matrix(rng, n, n, 0.2);
    }
    fill_random_weights(rng, N, n, m, spec.Q, spec.Q_bar, spec.R, spec.R_bar);
    spec.rho = 2.0 * rng.uniform01() - 1.0;
    return spec;
}

ProblemSpec random_scalar_problem(CounterRng& rng) {
    const int N = random_between(rng, 1, 3);
    const int n = random_between(rng, 1, 2);
    const int m = random_between(rng, 1, 2);
    return random_scalar_problem(rng, N, n, m);
}

MultiNoiseProblemSpec random_multinoise_problem(CounterRng& rng, int horizon, int state_dim,
                                                int control_dim, int noise_dim) {
    const int N = horizon, n = state_dim, m = control_dim, p = noise_dim;
    MultiNoiseProblemSpec spec = MultiNoiseProblemSpec::zero(N, n, m, p);
    for (int k = 0; k < N; ++k) {
        spec.A[k] = random_matrix(rng, n, n, 0.6);
        spec.A_bar[k] = random_matrix(rng, n, n, 0.3);
        spec.B[k] = random_matrix(rng, n, m, 0.5);
        spec.B_bar[k] = random_matrix(rng, n, m, 0.3);
        spec.F[k] = random_matrix(rng, n, n, 0.6);
        spec.F_bar[k] = random_matrix(rng, n, n, 0.3);
        for (int i = 0; i < p; ++i) {
            spec.C[k][static_cast<size_t>(i)] = random_matrix(rng, n, n, 0.3);
            spec.C_bar[k][static_cast<size_t>(i)] = random_matrix(rng, n, n, 0.15);
            spec.D[k][static_cast<size_t>(i)] = random_matrix(rng, n, m, 0.25);
            spec.D_bar[k][static_cast<size_t>(i)] = random_matrix(rng, n, m, 0.15);
            spec.G[k][static_cast<size_t>(i)] = random_matrix(rng, n, n, 0.3);
            spec.G_bar[k][static_cast<size_t>(i)] = random_matrix(rng, n, n, 0.15);
        }
        // A PSD joint second-moment block whose off-diagonal (the w/v cross
        // moment) is not symmetric in general.
        const MatrixXd joint = random_psd(rng, 2 * p, 0.7);
        spec.alpha[k] = joint.topLeftCorner(p, p);
        spec.gamma[k] = joint.topRightCorner(p, p);
        spec.beta[k] = joint.bottomRightCorner(p, p);
    }
    fill_random_weights(rng, N, n, m, spec.Q, spec.Q_bar, spec.R, spec.R_bar);
    return spec;
}

MultiNoiseProblemSpec random_multinoise_problem(CounterRng& rng) {
    const int N = random_between(rng, 1, 2);
    const int n = random_between(rng, 1, 2);
    const int m = random_between(rng, 1, 2);
    const int p = random_between(rng, 1, 2);
    return random_multinoise_problem(rng, N, n, m, p);
}

InitialSupport random_initial_support(CounterRng& rng, int state_dim, bool two_atom) {
    const int n = state_dim;
    if (!two_atom)
        return deterministic_initial(random_matrix(rng, n, 1, 1.0),
                                     random_matrix(rng, n, 1, 1.0));
    InitialAtom a, b;
    a.x = random_matrix(rng, n, 1, 1.0);
    a.y = random_matrix(rng, n, 1, 1.0);
    a.prob = 0.3;
    b.x = random_matrix(rng, n, 1, 1.0);
    b.y = random_matrix(rng, n, 1, 1.0);
    b.prob = 0.7;
    return {a, b};
}

AlmProblem random_alm_problem(CounterRng& rng, int horizon, int asset_count) {
    const int N = horizon, m = asset_count;
    AlmProblem alm;
    alm.horizon = N;
    alm.asset_count = m;
    for (int k = 0; k < N; ++k) {
        alm.a.push_back(0.7 + 0.6 * rng.uniform01());
        alm.f.push_back(0.7 + 0.6 * rng.uniform01());
        alm.mean_excess.push_back(random_matrix(rng, 1, m, 0.3));
        alm.cov_excess.push_back(random_psd(rng, m, 0.6) +
                                 0.05 * MatrixXd::Identity(m, m));
        alm.R.push_back(random_psd(rng, m, 0.5) + 0.3 * MatrixXd::Identity(m, m));
    }
    alm.q_N = 1.2 * rng.uniform01();
    // q_bar_N may be negative down to -q_N (terminal mean weight q + q_bar >= 0).
    alm.q_bar_N = -alm.q_N + (alm.q_N + 0.8) * rng.uniform01();
    return alm;
}

AlmProblem random_alm_problem(CounterRng& rng) {
    const int N = random_between(rng, 1, 3);
    const int m = random_between(rng, 1, 3);
    return random_alm_problem(rng, N, m);
}

std::vector<NoiseSupport> sign_supports_for(const MultiNoiseProblemSpec& spec) {
    std::vector<NoiseSupport> supports;
    supports.reserve(static_cast<size_t>(spec.horizon));
    for (int k = 0; k < spec.horizon; ++k)
        supports.push_back(sign_support_noise(spec.alpha[k], spec.beta[k], spec.gamma[k]));
    return supports;
}

}  // namespace mflq
