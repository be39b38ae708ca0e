#include "mflq/riccati.hpp"

#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace mflq {

namespace {

using Eigen::MatrixXd;

MatrixXd sym(const MatrixXd& M) { return ((M + M.transpose()) / 2.0).eval(); }

double scale_of(const MatrixXd& M) {
    return 1.0 + (M.size() > 0 ? M.cwiseAbs().maxCoeff() : 0.0);
}

// SPD factorization of a control kernel; throws with the offending eigenvalue
// when definiteness is lost (scale-relative threshold).
Eigen::LLT<MatrixXd> factor_kernel(const MatrixXd& W, const char* which, int k) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(W, Eigen::EigenvaluesOnly);
    const double lmin = es.eigenvalues().minCoeff();
    if (lmin < 1e-12 * (1.0 + std::abs(W.trace()))) throw NotPositiveDefinite(which, k, lmin);
    Eigen::LLT<MatrixXd> llt(W);
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite(which, k, lmin);
    return llt;
}

void check_sequence_lengths(int horizon, size_t dynamics, size_t weights_q, size_t weights_r,
                            const char* what) {
    const auto N = static_cast<size_t>(horizon);
    if (dynamics != N || weights_q != N + 1 || weights_r != N)
        throw DimensionMismatch(std::string(what) + ": sequence lengths do not match horizon");
}

// One backward sweep of the six-sequence recursion for the scalar-noise
// problem.  Shared by the S/T solver and the P-form solver (identical
// updates; only the packaging of the outputs differs).
struct SweepResult {
    std::vector<MatrixXd> Sx, Tx, Sxy, Txy, Sy, Ty;
    std::vector<MatrixXd> W1, W2, H1, H2, H3, H4;
    // Solved kernels K_i = W^{-1} H_i' reused for gain construction.
    std::vector<MatrixXd> K1, K2, K3, K4;
};

SweepResult backward_sweep(const ProblemSpec& spec) {
    check_sequence_lengths(spec.horizon, spec.A.size(), spec.Q.size(), spec.R.size(),
                           "riccati solve");
    const int N = spec.horizon;
    SweepResult r;
    auto init_nodes = [&](std::vector<MatrixXd>& v) { v.resize(static_cast<size_t>(N) + 1); };
    auto init_steps = [&](std::vector<MatrixXd>& v) { v.resize(static_cast<size_t>(N)); };
    init_nodes(r.Sx); init_nodes(r.Tx); init_nodes(r.Sxy);
    init_nodes(r.Txy); init_nodes(r.Sy); init_nodes(r.Ty);
    init_steps(r.W1); init_steps(r.W2);
    init_steps(r.H1); init_steps(r.H2); init_steps(r.H3); init_steps(r.H4);
    init_steps(r.K1); init_steps(r.K2); init_steps(r.K3); init_steps(r.K4);

    r.Sx[N] = spec.Q[N];
    r.Tx[N] = spec.Q[N] + spec.Q_bar[N];
    r.Sxy[N] = -spec.Q[N];
    r.Txy[N] = -(spec.Q[N] + spec.Q_bar[N]);
    r.Sy[N] = spec.Q[N];
    r.Ty[N] = spec.Q[N] + spec.Q_bar[N];

    const double rho = spec.rho;
    for (int k = N - 1; k >= 0; --k) {
        const MatrixXd& Sx1 = r.Sx[k + 1];
        const MatrixXd& Tx1 = r.Tx[k + 1];
        const MatrixXd& Sxy1 = r.Sxy[k + 1];
        const MatrixXd& Txy1 = r.Txy[k + 1];
        const MatrixXd& Sy1 = r.Sy[k + 1];
        const MatrixXd& Ty1 = r.Ty[k + 1];

        const MatrixXd& A = spec.A[k];
        const MatrixXd& B = spec.B[k];
        const MatrixXd& C = spec.C[k];
        const MatrixXd& D = spec.D[k];
        const MatrixXd& F = spec.F[k];
        const MatrixXd& G = spec.G[k];
        const MatrixXd As = A + spec.A_bar[k];
        const MatrixXd Bs = B + spec.B_bar[k];
        const MatrixXd Cs = C + spec.C_bar[k];
        const MatrixXd Ds = D + spec.D_bar[k];
        const MatrixXd Fs = F + spec.F_bar[k];
        const MatrixXd Gs = G + spec.G_bar[k];
        const MatrixXd& Q = spec.Q[k];
        const MatrixXd& Qb = spec.Q_bar[k];

        const MatrixXd W1 = sym(spec.R[k] + B.transpose() * Sx1 * B + D.transpose() * Sx1 * D);
        const MatrixXd W2 = sym(spec.R[k] + spec.R_bar[k] + Bs.transpose() * Tx1 * Bs +
                                Ds.transpose() * Sx1 * Ds);
        const MatrixXd H1 = A.transpose() * Sx1 * B + C.transpose() * Sx1 * D;
        const MatrixXd H2 = As.transpose() * Tx1 * Bs + Cs.transpose() * Sx1 * Ds;
        const MatrixXd H3 = F.transpose() * Sxy1 * B + rho * G.transpose() * Sxy1 * D;
        const MatrixXd H4 = Fs.transpose() * Txy1 * Bs + rho * Gs.transpose() * Sxy1 * Ds;

        const auto llt1 = factor_kernel(W1, "W1", k);
        const auto llt2 = factor_kernel(W2, "W2", k);
        const MatrixXd K1 = llt1.solve(H1.transpose());
        const MatrixXd K2 = llt2.solve(H2.transpose());
        const MatrixXd K3 = llt1.solve(H3.transpose());
        const MatrixXd K4 = llt2.solve(H4.transpose());

        r.Sx[k] = sym(Q + A.transpose() * Sx1 * A + C.transpose() * Sx1 * C - H1 * K1);
        r.Tx[k] = sym(Q + Qb + As.transpose() * Tx1 * As + Cs.transpose() * Sx1 * Cs - H2 * K2);
        r.Sxy[k] = -Q + F.transpose() * Sxy1 * A + rho * G.transpose() * Sxy1 * C - H3 * K1;
        r.Txy[k] = -Q - Qb + Fs.transpose() * Txy1 * As + rho * Gs.transpose() * Sxy1 * Cs -
                   H4 * K2;
        r.Sy[k] = sym(Q + F.transpose() * Sy1 * F + G.transpose() * Sy1 * G - H3 * K3);
        r.Ty[k] = sym(Q + Qb + Fs.transpose() * Ty1 * Fs + Gs.transpose() * Sy1 * Gs - H4 * K4);

        r.W1[k] = W1;
        r.W2[k] = W2;
        r.H1[k] = H1;
        r.H2[k] = H2;
        r.H3[k] = H3;
        r.H4[k] = H4;
        r.K1[k] = K1;
        r.K2[k] = K2;
        r.K3[k] = K3;
        r.K4[k] = K4;
    }
    return r;
}

}  // namespace

RiccatiSolution solve_riccati(const ProblemSpec& spec) {
    SweepResult r = backward_sweep(spec);
    RiccatiSolution out;
    out.Sx = std::move(r.Sx);
    out.Tx = std::move(r.Tx);
    out.Sxy = std::move(r.Sxy);
    out.Txy = std::move(r.Txy);
    out.Sy = std::move(r.Sy);
    out.Ty = std::move(r.Ty);
    out.W1 = std::move(r.W1);
    out.W2 = std::move(r.W2);
    out.H1 = std::move(r.H1);
    out.H2 = std::move(r.H2);
    out.H3 = std::move(r.H3);
    out.H4 = std::move(r.H4);
    return out;
}

RiccatiSolution solve_riccati_multinoise(const MultiNoiseProblemSpec& spec) {
    check_sequence_lengths(spec.horizon, spec.A.size(), spec.Q.size(), spec.R.size(),
                           "multinoise riccati solve");
    const int N = spec.horizon;
    const int p = spec.noise_dim;

    // The joint second moment of (w, v) must be a genuine covariance-type
    // block; otherwise the noise-quadratic sums are meaningless.
    for (int k = 0; k < N; ++k) {
        MatrixXd joint(2 * p, 2 * p);
        joint.topLeftCorner(p, p) = spec.alpha[k];
        joint.topRightCorner(p, p) = spec.gamma[k];
        joint.bottomLeftCorner(p, p) = spec.gamma[k].transpose();
        joint.bottomRightCorner(p, p) = spec.beta[k];
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym(joint), Eigen::EigenvaluesOnly);
        const double lmin = es.eigenvalues().minCoeff();
        if (lmin < -1e-10 * scale_of(joint)) throw InvalidMoment(k, lmin);
    }

    RiccatiSolution r;
    auto init_nodes = [&](std::vector<MatrixXd>& v) { v.resize(static_cast<size_t>(N) + 1); };
    auto init_steps = [&](std::vector<MatrixXd>& v) { v.resize(static_cast<size_t>(N)); };
    init_nodes(r.Sx); init_nodes(r.Tx); init_nodes(r.Sxy);
    init_nodes(r.Txy); init_nodes(r.Sy); init_nodes(r.Ty);
    init_steps(r.W1); init_steps(r.W2);
    init_steps(r.H1); init_steps(r.H2); init_steps(r.H3); init_steps(r.H4);

    r.Sx[N] = spec.Q[N];
    r.Tx[N] = spec.Q[N] + spec.Q_bar[N];
    r.Sxy[N] = -spec.Q[N];
    r.Txy[N] = -(spec.Q[N] + spec.Q_bar[N]);
    r.Sy[N] = spec.Q[N];
    r.Ty[N] = spec.Q[N] + spec.Q_bar[N];

    // weight(i,j)-weighted channel double sum  sum_ij w(i,j) L_i' S R_j.
    auto channel_sum = [p](const MatrixXd& weight, const std::vector<MatrixXd>& L,
                           const MatrixXd& S, const std::vector<MatrixXd>& R) {
        MatrixXd acc = MatrixXd::Zero(L[0].cols(), R[0].cols());
        for (int j = 0; j < p; ++j) {
            const MatrixXd SR = S * R[static_cast<size_t>(j)];
            for (int i = 0; i < p; ++i) {
                const double w = weight(i, j);
                if (w != 0.0) acc.noalias() += w * L[static_cast<size_t>(i)].transpose() * SR;
            }
        }
        return acc;
    };
    auto plus = [p](const std::vector<MatrixXd>& M, const std::vector<MatrixXd>& Mb) {
        std::vector<MatrixXd> out(static_cast<size_t>(p));
        for (int i = 0; i < p; ++i)
            out[static_cast<size_t>(i)] = M[static_cast<size_t>(i)] + Mb[static_cast<size_t>(i)];
        return out;
    };

    for (int k = N - 1; k >= 0; --k) {
        const MatrixXd& Sx1 = r.Sx[k + 1];
        const MatrixXd& Tx1 = r.Tx[k + 1];
        const MatrixXd& Sxy1 = r.Sxy[k + 1];
        const MatrixXd& Txy1 = r.Txy[k + 1];
        const MatrixXd& Sy1 = r.Sy[k + 1];
        const MatrixXd& Ty1 = r.Ty[k + 1];

        const MatrixXd& A = spec.A[k];
        const MatrixXd& B = spec.B[k];
        const MatrixXd& F = spec.F[k];
        const MatrixXd As = A + spec.A_bar[k];
        const MatrixXd Bs = B + spec.B_bar[k];
        const MatrixXd Fs = F + spec.F_bar[k];
        const std::vector<MatrixXd>& C = spec.C[k];
        const std::vector<MatrixXd>& D = spec.D[k];
        const std::vector<MatrixXd>& G = spec.G[k];
        const std::vector<MatrixXd> Cs = plus(C, spec.C_bar[k]);
        const std::vector<MatrixXd> Ds = plus(D, spec.D_bar[k]);
        const std::vector<MatrixXd> Gs = plus(G, spec.G_bar[k]);
        const MatrixXd& alpha = spec.alpha[k];
        const MatrixXd& beta = spec.beta[k];
        // gamma(i,j) = E[w_i v_j].  The cross sums below put the v-side factor
        // (G-channel) on the left and the w-side factor on the right, so the
        // (i,j) pair is weighted by E[v_i w_j] = gamma(j,i).
        const MatrixXd gamma_vw = spec.gamma[k].transpose();
        const MatrixXd& Q = spec.Q[k];
        const MatrixXd& Qb = spec.Q_bar[k];

        const MatrixXd W1 =
            sym(spec.R[k] + B.transpose() * Sx1 * B + channel_sum(alpha, D, Sx1, D));
        const MatrixXd W2 = sym(spec.R[k] + spec.R_bar[k] + Bs.transpose() * Tx1 * Bs +
                                channel_sum(alpha, Ds, Sx1, Ds));
        const MatrixXd H1 = A.transpose() * Sx1 * B + channel_sum(alpha, C, Sx1, D);
        const MatrixXd H2 = As.transpose() * Tx1 * Bs + channel_sum(alpha, Cs, Sx1, Ds);
        const MatrixXd H3 = F.transpose() * Sxy1 * B + channel_sum(gamma_vw, G, Sxy1, D);
        const MatrixXd H4 = Fs.transpose() * Txy1 * Bs + channel_sum(gamma_vw, Gs, Sxy1, Ds);

        const auto llt1 = factor_kernel(W1, "W1", k);
        const auto llt2 = factor_kernel(W2, "W2", k);
        const MatrixXd K1 = llt1.solve(H1.transpose());
        const MatrixXd K2 = llt2.solve(H2.transpose());
        const MatrixXd K3 = llt1.solve(H3.transpose());
        const MatrixXd K4 = llt2.solve(H4.transpose());

        r.Sx[k] = sym(Q + A.transpose() * Sx1 * A + channel_sum(alpha, C, Sx1, C) - H1 * K1);
        r.Tx[k] =
            sym(Q + Qb + As.transpose() * Tx1 * As + channel_sum(alpha, Cs, Sx1, Cs) - H2 * K2);
        r.Sxy[k] = -Q + F.transpose() * Sxy1 * A + channel_sum(gamma_vw, G, Sxy1, C) - H3 * K1;
        r.Txy[k] = -Q - Qb + Fs.transpose() * Txy1 * As + channel_sum(gamma_vw, Gs, Sxy1, Cs) -
                   H4 * K2;
        r.Sy[k] = sym(Q + F.transpose() * Sy1 * F + channel_sum(beta, G, Sy1, G) - H3 * K3);
        r.Ty[k] =
            sym(Q + Qb + Fs.transpose() * Ty1 * Fs + channel_sum(beta, Gs, Sy1, Gs) - H4 * K4);

        r.W1[k] = W1;
        r.W2[k] = W2;
        r.H1[k] = H1;
        r.H2[k] = H2;
        r.H3[k] = H3;
        r.H4[k] = H4;
    }
    return r;
}

PFormSolution solve_p_form(const ProblemSpec& spec) {
    // Multiplier route: an independent backward loop in the (P, P_bar)
    // decomposition.  Each step forms the kernels from step-(k+1) P-values,
    // takes the gains, and applies the compact completed-square updates; the
    // mean parts are advanced through the pair sums P + P_bar, whose updates
    // close in terms of the sums themselves, and the split is recovered by
    // subtraction.  The terminal split puts the mean weight into the bar
    // parts: in particular the cross boundary is Pxy_bar_N = -Q_bar_N, the
    // only choice under which the pair sums reproduce the mean-weight
    // recursion (the alternative -Q_N fails the route-equivalence check
    // whenever Q_bar_N differs from Q_N; see the tests).
    check_sequence_lengths(spec.horizon, spec.A.size(), spec.Q.size(), spec.R.size(),
                           "problem");
    const int N = spec.horizon;
    const double rho = spec.rho;

    PFormSolution out;
    const auto n1 = static_cast<size_t>(N) + 1;
    out.Px.resize(n1);
    out.Px_bar.resize(n1);
    out.Pxy.resize(n1);
    out.Pxy_bar.resize(n1);
    out.Py.resize(n1);
    out.Py_bar.resize(n1);
    const auto nn = static_cast<size_t>(N);
    out.Lx.resize(nn);
    out.Lx_bar.resize(nn);
    out.Ly.resize(nn);
    out.Ly_bar.resize(nn);
    out.W1.resize(nn);
    out.W2.resize(nn);
    out.H1.resize(nn);
    out.H2.resize(nn);
    out.H3.resize(nn);
    out.H4.resize(nn);

    out.Px[N] = spec.Q[N];
    out.Px_bar[N] = spec.Q_bar[N];
    out.Pxy[N] = -spec.Q[N];
    out.Pxy_bar[N] = -spec.Q_bar[N];
    out.Py[N] = spec.Q[N];
    out.Py_bar[N] = spec.Q_bar[N];

    for (int k = N - 1; k >= 0; --k) {
        const MatrixXd& Px1 = out.Px[k + 1];
        const MatrixXd PxSum1 = out.Px[k + 1] + out.Px_bar[k + 1];
        const MatrixXd& Pxy1 = out.Pxy[k + 1];
        const MatrixXd PxySum1 = out.Pxy[k + 1] + out.Pxy_bar[k + 1];
        const MatrixXd& Py1 = out.Py[k + 1];
        const MatrixXd PySum1 = out.Py[k + 1] + out.Py_bar[k + 1];

        const MatrixXd& A = spec.A[k];
        const MatrixXd& B = spec.B[k];
        const MatrixXd& C = spec.C[k];
        const MatrixXd& D = spec.D[k];
        const MatrixXd& F = spec.F[k];
        const MatrixXd& G = spec.G[k];
        const MatrixXd As = A + spec.A_bar[k];
        const MatrixXd Bs = B + spec.B_bar[k];
        const MatrixXd Cs = C + spec.C_bar[k];
        const MatrixXd Ds = D + spec.D_bar[k];
        const MatrixXd Fs = F + spec.F_bar[k];
        const MatrixXd Gs = G + spec.G_bar[k];
        const MatrixXd& Q = spec.Q[k];
        const MatrixXd& Qb = spec.Q_bar[k];

        const MatrixXd W1 =
            sym(spec.R[k] + B.transpose() * Px1 * B + D.transpose() * Px1 * D);
        const MatrixXd W2 = sym(spec.R[k] + spec.R_bar[k] + Bs.transpose() * PxSum1 * Bs +
                                Ds.transpose() * Px1 * Ds);
        const MatrixXd H1 = A.transpose() * Px1 * B + C.transpose() * Px1 * D;
        const MatrixXd H2 = As.transpose() * PxSum1 * Bs + Cs.transpose() * Px1 * Ds;
        const MatrixXd H3 = F.transpose() * Pxy1 * B + rho * G.transpose() * Pxy1 * D;
        const MatrixXd H4 = Fs.transpose() * PxySum1 * Bs + rho * Gs.transpose() * Pxy1 * Ds;

        const auto llt1 = factor_kernel(W1, "W1", k);
        const auto llt2 = factor_kernel(W2, "W2", k);
        const MatrixXd K1 = llt1.solve(H1.transpose());
        const MatrixXd K2 = llt2.solve(H2.transpose());
        const MatrixXd K3 = llt1.solve(H3.transpose());
        const MatrixXd K4 = llt2.solve(H4.transpose());

        // Uncentered convention: u = Lx x + Lx_bar Ex + Ly y + Ly_bar Ey,
        // with Lx + Lx_bar (resp. Ly + Ly_bar) the mean-channel gains.
        out.Lx[k] = -K1;
        out.Lx_bar[k] = K1 - K2;
        out.Ly[k] = -K3;
        out.Ly_bar[k] = K3 - K4;

        out.Px[k] = sym(Q + A.transpose() * Px1 * A + C.transpose() * Px1 * C - H1 * K1);
        const MatrixXd PxSum =
            sym(Q + Qb + As.transpose() * PxSum1 * As + Cs.transpose() * Px1 * Cs - H2 * K2);
        out.Px_bar[k] = PxSum - out.Px[k];
        out.Pxy[k] =
            -Q + F.transpose() * Pxy1 * A + rho * G.transpose() * Pxy1 * C - H3 * K1;
        const MatrixXd PxySum = -Q - Qb + Fs.transpose() * PxySum1 * As +
                                rho * Gs.transpose() * Pxy1 * Cs - H4 * K2;
        out.Pxy_bar[k] = PxySum - out.Pxy[k];
        out.Py[k] = sym(Q + F.transpose() * Py1 * F + G.transpose() * Py1 * G - H3 * K3);
        const MatrixXd PySum =
            sym(Q + Qb + Fs.transpose() * PySum1 * Fs + Gs.transpose() * Py1 * Gs - H4 * K4);
        out.Py_bar[k] = PySum - out.Py[k];

        out.W1[k] = W1;
        out.W2[k] = W2;
        out.H1[k] = H1;
        out.H2[k] = H2;
        out.H3[k] = H3;
        out.H4[k] = H4;
    }
    return out;
}

}  // namespace mflq
