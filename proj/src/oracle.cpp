#include "mflq/oracle.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace mflq {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double scale_of(const MatrixXd& M) {
    return 1.0 + (M.size() > 0 ? M.cwiseAbs().maxCoeff() : 0.0);
}

constexpr long long kMaxStackedVars = 1'000'000;

// Aggregates of one tree level needed to expand it or to price it: the
// probability-weighted x (affine in the stacked controls), the weighted y,
// and for non-terminal levels the matrix mapping stacked controls to Eu.
struct LevelAggregates {
    VectorXd Ex_const;
    MatrixXd Ex_ctrl;
    VectorXd Ey;
    MatrixXd Eu;  // m x d, zero when terminal

    LevelAggregates(const std::vector<ScenarioTree::Node>& level, int n, int m, int d,
                    bool with_controls) {
        Ex_const = VectorXd::Zero(n);
        Ex_ctrl = MatrixXd::Zero(n, d);
        Ey = VectorXd::Zero(n);
        Eu = MatrixXd::Zero(with_controls ? m : 0, with_controls ? d : 0);
        for (const auto& node : level) {
            Ex_const += node.prob * node.x_const;
            Ex_ctrl += node.prob * node.x_ctrl;
            Ey += node.prob * node.y;
            if (with_controls)
                Eu.middleCols(node.control_offset, m) +=
                    node.prob * MatrixXd::Identity(m, m);
        }
    }
};

}  // namespace

NoiseSupport four_point_support(double rho) {
    auto atom = [](double w, double v, double prob) {
        NoiseAtom a;
        a.w = VectorXd::Constant(1, w);
        a.v = VectorXd::Constant(1, v);
        a.prob = prob;
        return a;
    };
    const double same = (1.0 + rho) / 4.0;
    const double diff = (1.0 - rho) / 4.0;
    NoiseSupport support;
    // Zero-probability atoms (|rho| = 1) are dropped so degenerate
    // correlations give genuinely smaller trees.
    if (same > 0) {
        support.push_back(atom(1, 1, same));
        support.push_back(atom(-1, -1, same));
    }
    if (diff > 0) {
        support.push_back(atom(1, -1, diff));
        support.push_back(atom(-1, 1, diff));
    }
    return support;
}

namespace {

// Symmetric PSD square root with roundoff-negative eigenvalues clamped.
MatrixXd psd_sqrt(const MatrixXd& M) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es((M + M.transpose()) / 2.0);
    VectorXd lambda = es.eigenvalues();
    for (int i = 0; i < lambda.size(); ++i) lambda(i) = std::sqrt(std::max(lambda(i), 0.0));
    return es.eigenvectors() * lambda.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

NoiseSupport sign_support_noise(const MatrixXd& alpha, const MatrixXd& beta,
                                const MatrixXd& gamma) {
    const int p = static_cast<int>(alpha.rows());
    MatrixXd joint(2 * p, 2 * p);
    joint.topLeftCorner(p, p) = alpha;
    joint.topRightCorner(p, p) = gamma;
    joint.bottomLeftCorner(p, p) = gamma.transpose();
    joint.bottomRightCorner(p, p) = beta;
    const MatrixXd L = psd_sqrt(joint);

    const unsigned long long count = 1ULL << (2 * p);
    const double prob = 1.0 / static_cast<double>(count);
    NoiseSupport support;
    support.reserve(count);
    for (unsigned long long bits = 0; bits < count; ++bits) {
        VectorXd s(2 * p);
        for (int i = 0; i < 2 * p; ++i) s(i) = (bits >> i) & 1ULL ? 1.0 : -1.0;
        const VectorXd wv = L * s;
        NoiseAtom a;
        a.w = wv.head(p);
        a.v = wv.tail(p);
        a.prob = prob;
        support.push_back(std::move(a));
    }
    return support;
}

InitialSupport sign_support_initial(const InitialMoments& moments) {
    const int n = static_cast<int>(moments.mean_x.size());
    MatrixXd cov(2 * n, 2 * n);
    cov.topLeftCorner(n, n) = moments.cov_x;
    cov.topRightCorner(n, n) = moments.cov_xy;
    cov.bottomLeftCorner(n, n) = moments.cov_xy.transpose();
    cov.bottomRightCorner(n, n) = moments.cov_y;
    const MatrixXd L = psd_sqrt(cov);

    const unsigned long long count = 1ULL << (2 * n);
    const double prob = 1.0 / static_cast<double>(count);
    InitialSupport support;
    support.reserve(count);
    for (unsigned long long bits = 0; bits < count; ++bits) {
        VectorXd s(2 * n);
        for (int i = 0; i < 2 * n; ++i) s(i) = (bits >> i) & 1ULL ? 1.0 : -1.0;
        InitialAtom a;
        a.x = moments.mean_x + L.topRows(n) * s;
        a.y = moments.mean_y + L.bottomRows(n) * s;
        a.prob = prob;
        support.push_back(std::move(a));
    }
    return support;
}

InitialSupport deterministic_initial(const VectorXd& x0, const VectorXd& y0) {
    InitialAtom a;
    a.x = x0;
    a.y = y0;
    a.prob = 1.0;
    return {a};
}

InitialMoments moments_of(const InitialSupport& support) {
    const int n = static_cast<int>(support.front().x.size());
    InitialMoments m = InitialMoments::zero(n);
    for (const auto& a : support) {
        m.mean_x += a.prob * a.x;
        m.mean_y += a.prob * a.y;
    }
    for (const auto& a : support) {
        const VectorXd dx = a.x - m.mean_x;
        const VectorXd dy = a.y - m.mean_y;
        m.cov_x += a.prob * dx * dx.transpose();
        m.cov_y += a.prob * dy * dy.transpose();
        m.cov_xy += a.prob * dx * dy.transpose();
    }
    return m;
}

ScenarioTree build_tree(const MultiNoiseProblemSpec& spec, const InitialSupport& initial,
                        const std::vector<NoiseSupport>& step_supports) {
    const int N = spec.horizon;
    const int n = spec.state_dim;
    const int m = spec.control_dim;
    const int p = spec.noise_dim;
    if (static_cast<int>(step_supports.size()) != N)
        throw DimensionMismatch("build_tree: need one noise support per step");

    // Count non-terminal nodes to size the stacked control vector (and bail
    // out before allocating anything enormous).
    long long level_count = static_cast<long long>(initial.size());
    long long controlled_nodes = 0;
    for (int k = 0; k < N; ++k) {
        controlled_nodes += level_count;
        if (controlled_nodes * m > kMaxStackedVars) throw TreeTooLarge(controlled_nodes * m);
        level_count *= static_cast<long long>(step_supports[static_cast<size_t>(k)].size());
    }
    const int d = static_cast<int>(controlled_nodes * m);

    ScenarioTree tree;
    tree.horizon = N;
    tree.state_dim = n;
    tree.control_dim = m;
    tree.stacked_dim = d;
    tree.supports = step_supports;
    tree.initial = initial;
    tree.levels.resize(static_cast<size_t>(N) + 1);

    int next_offset = 0;
    auto& root = tree.levels[0];
    root.reserve(initial.size());
    for (const auto& atom : initial) {
        ScenarioTree::Node node;
        node.prob = atom.prob;
        node.x_const = atom.x;
        node.x_ctrl = MatrixXd::Zero(n, d);
        node.y = atom.y;
        node.control_offset = next_offset;
        next_offset += m;
        root.push_back(std::move(node));
    }

    for (int k = 0; k < N; ++k) {
        const auto& level = tree.levels[static_cast<size_t>(k)];
        const NoiseSupport& support = step_supports[static_cast<size_t>(k)];
        const LevelAggregates agg(level, n, m, d, /*with_controls=*/true);

        auto& next = tree.levels[static_cast<size_t>(k) + 1];
        next.reserve(level.size() * support.size());
        const bool last = (k == N - 1);

        for (const auto& node : level) {
            // Affine pieces of this node's drift/diffusion inputs.  The
            // node's own control enters through its selector block.
            const VectorXd x_c = node.x_const;
            const MatrixXd& x_u = node.x_ctrl;

            VectorXd drift_c = spec.A[k] * x_c + spec.A_bar[k] * agg.Ex_const;
            MatrixXd drift_u = spec.A[k] * x_u + spec.A_bar[k] * agg.Ex_ctrl +
                               spec.B_bar[k] * agg.Eu;
            drift_u.middleCols(node.control_offset, m) += spec.B[k];

            const VectorXd y_drift = spec.F[k] * node.y + spec.F_bar[k] * agg.Ey;

            for (const auto& atom : support) {
                VectorXd child_c = drift_c;
                MatrixXd child_u = drift_u;
                VectorXd child_y = y_drift;
                for (int i = 0; i < p; ++i) {
                    const double w = atom.w(i);
                    const double v = atom.v(i);
                    if (w != 0.0) {
                        child_c += w * (spec.C[k][static_cast<size_t>(i)] * x_c +
                                        spec.C_bar[k][static_cast<size_t>(i)] * agg.Ex_const);
                        child_u +=
                            w * (spec.C[k][static_cast<size_t>(i)] * x_u +
                                 spec.C_bar[k][static_cast<size_t>(i)] * agg.Ex_ctrl +
                                 spec.D_bar[k][static_cast<size_t>(i)] * agg.Eu);
                        child_u.middleCols(node.control_offset, m) +=
                            w * spec.D[k][static_cast<size_t>(i)];
                    }
                    if (v != 0.0)
                        child_y += v * (spec.G[k][static_cast<size_t>(i)] * node.y +
                                        spec.G_bar[k][static_cast<size_t>(i)] * agg.Ey);
                }

                ScenarioTree::Node child;
                child.prob = node.prob * atom.prob;
                child.x_const = std::move(child_c);
                child.x_ctrl = std::move(child_u);
                child.y = std::move(child_y);
                if (!last) {
                    child.control_offset = next_offset;
                    next_offset += m;
                }
                next.push_back(std::move(child));
            }
        }
    }
    return tree;
}

ScenarioTree build_tree(const MultiNoiseProblemSpec& spec, const InitialSupport& initial,
                        const NoiseSupport& support) {
    return build_tree(spec, initial,
                      std::vector<NoiseSupport>(static_cast<size_t>(spec.horizon), support));
}

ScenarioTree build_tree(const ProblemSpec& spec, const InitialSupport& initial,
                        const NoiseSupport& support) {
    return build_tree(lift_to_multinoise(spec), initial, support);
}

StackedQuadratic assemble_quadratic(const ScenarioTree& tree, const MultiNoiseProblemSpec& spec) {
    const int N = tree.horizon;
    const int n = tree.state_dim;
    const int m = tree.control_dim;
    const int d = tree.stacked_dim;

    StackedQuadratic J;
    J.dim = d;
    J.quad = MatrixXd::Zero(d, d);
    J.linear_x = VectorXd::Zero(d);
    J.linear_y = VectorXd::Zero(d);

    for (int k = 0; k <= N; ++k) {
        const auto& level = tree.levels[static_cast<size_t>(k)];
        const bool controlled = (k < N);
        const LevelAggregates agg(level, n, m, d, controlled);
        const MatrixXd& Q = spec.Q[k];
        const MatrixXd& Qb = spec.Q_bar[k];

        // Pathwise surplus penalty E[(x - y)' Q (x - y)]; x is affine in the
        // stacked controls, y is constant per node.
        for (const auto& node : level) {
            const VectorXd c = node.x_const;
            const MatrixXd& X = node.x_ctrl;
            const MatrixXd QX = Q * X;
            J.quad.noalias() += node.prob * X.transpose() * QX;
            J.linear_x.noalias() += node.prob * (QX.transpose() * c);
            J.linear_y.noalias() -= node.prob * (QX.transpose() * node.y);
            J.const_xx += node.prob * c.dot(Q * c);
            J.const_xy -= 2.0 * node.prob * c.dot(Q * node.y);
            J.const_yy += node.prob * node.y.dot(Q * node.y);
        }

        // Mean surplus penalty (E(x - y))' Q_bar (E(x - y)).
        const MatrixXd QbEx = Qb * agg.Ex_ctrl;
        J.quad.noalias() += agg.Ex_ctrl.transpose() * QbEx;
        J.linear_x.noalias() += QbEx.transpose() * agg.Ex_const;
        J.linear_y.noalias() -= QbEx.transpose() * agg.Ey;
        J.const_xx += agg.Ex_const.dot(Qb * agg.Ex_const);
        J.const_xy -= 2.0 * agg.Ex_const.dot(Qb * agg.Ey);
        J.const_yy += agg.Ey.dot(Qb * agg.Ey);

        if (controlled) {
            // Control penalties: pathwise blocks and the mean-control term.
            const MatrixXd& R = spec.R[k];
            for (const auto& node : level)
                J.quad.block(node.control_offset, node.control_offset, m, m) +=
                    node.prob * R;
            J.quad.noalias() += agg.Eu.transpose() * spec.R_bar[k] * agg.Eu;
        }
    }

    J.quad = ((J.quad + J.quad.transpose()) / 2.0).eval();
    return J;
}

StackedQuadratic assemble_quadratic(const ScenarioTree& tree, const ProblemSpec& spec) {
    return assemble_quadratic(tree, lift_to_multinoise(spec));
}

OracleOptimum brute_force_optimal(const StackedQuadratic& quad) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(quad.quad, Eigen::EigenvaluesOnly);
    const double lmin = es.eigenvalues().minCoeff();
    if (lmin <= 1e-12 * scale_of(quad.quad)) throw SingularQuadratic(lmin);

    OracleOptimum opt;
    opt.controls = Eigen::LLT<MatrixXd>(quad.quad).solve(-(quad.linear_x + quad.linear_y));
    opt.value = quad.value(opt.controls);
    return opt;
}

PsdVerdict check_quadratic_psd(const StackedQuadratic& quad) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(quad.quad, Eigen::EigenvaluesOnly);
    PsdVerdict verdict;
    verdict.lambda_min = es.eigenvalues().minCoeff();
    verdict.psd = verdict.lambda_min >= -1e-10 * scale_of(quad.quad);
    return verdict;
}

VectorXd node_state_x(const ScenarioTree::Node& node, const VectorXd& controls) {
    return node.x_const + node.x_ctrl * controls;
}

VectorXd policy_tree_controls(const ScenarioTree& tree, const FeedbackPolicy& policy) {
    if (policy.horizon != tree.horizon || policy.state_dim != tree.state_dim ||
        policy.control_dim != tree.control_dim)
        throw DimensionMismatch("policy_tree_controls: policy shape does not match the tree");

    const int m = tree.control_dim;
    VectorXd controls = VectorXd::Zero(tree.stacked_dim);
    // A level-k state depends only on controls of levels < k (those columns of
    // x_ctrl are the only nonzero ones), so realizing levels in order is
    // exactly the adapted forward pass.
    for (int k = 0; k < tree.horizon; ++k) {
        const auto& level = tree.levels[static_cast<size_t>(k)];
        std::vector<VectorXd> xs;
        xs.reserve(level.size());
        VectorXd Ex = VectorXd::Zero(tree.state_dim);
        VectorXd Ey = VectorXd::Zero(tree.state_dim);
        for (const auto& node : level) {
            xs.push_back(node_state_x(node, controls));
            Ex += node.prob * xs.back();
            Ey += node.prob * node.y;
        }
        for (size_t i = 0; i < level.size(); ++i) {
            const auto& node = level[i];
            controls.segment(node.control_offset, m) =
                policy.Kx[k] * (xs[i] - Ex) + policy.Kx_bar[k] * Ex +
                policy.Ky[k] * (node.y - Ey) + policy.Ky_bar[k] * Ey;
        }
    }
    return controls;
}

}  // namespace mflq
