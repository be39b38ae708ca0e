#pragma once

// Exact finite verification of optimality.  When the noises and the initial
// condition have finite support, the whole control problem is a finite
// quadratic program: an adapted control assigns one decision vector to every
// node of the scenario tree, states are affine in the stacked decisions, and
// the cost is an explicit quadratic.  Minimizing it exactly (one SPD solve)
// gives a ground truth that the Riccati route must reproduce — including all
// mean-field terms, which become probability-weighted sums over tree levels.

#include <vector>

#include <Eigen/Dense>

#include "mflq/errors.hpp"
#include "mflq/model.hpp"
#include "mflq/policy.hpp"

namespace mflq {

// One joint realization of the step noise: w, v in R^p with probability prob.
struct NoiseAtom {
    Eigen::VectorXd w, v;
    double prob = 0;
};

// Finite joint law of (w, v), used for every step of the tree.
using NoiseSupport = std::vector<NoiseAtom>;

// The four-point scalar law on {-1,+1}^2 with P(w = v) = (1 + rho)/2:
// moments E w = E v = 0, E w^2 = E v^2 = 1, E wv = rho, exactly.
NoiseSupport four_point_support(double rho);

// One initial realization (zeta_x, zeta_y) with its probability.
struct InitialAtom {
    Eigen::VectorXd x, y;
    double prob = 0;
};

using InitialSupport = std::vector<InitialAtom>;

InitialSupport deterministic_initial(const Eigen::VectorXd& x0, const Eigen::VectorXd& y0);
// Exact moments of a finite initial law (for feeding the analytic cost).
InitialMoments moments_of(const InitialSupport& support);

// Scenario tree over N steps.  Level k holds (#initial support) * s^k nodes
// (s the noise-support size); every node of levels 0..N-1 carries one free
// control vector.  Node states are affine in the stacked controls:
//   x_node = x_const + X_node u,    y_node = y_const
// (y is uncontrolled, so it stays constant per node).  Probabilities multiply
// along edges; mean-field terms are level sums weighted by them.
struct ScenarioTree {
    int horizon = 0;
    int state_dim = 0;
    int control_dim = 0;
    int stacked_dim = 0;  // d = m * (number of non-terminal nodes)

    std::vector<NoiseSupport> supports;  // one per step, k = 0..N-1
    InitialSupport initial;

    struct Node {
        double prob = 0;
        Eigen::VectorXd x_const;  // control-free part of x
        Eigen::MatrixXd x_ctrl;   // n x d: sensitivity of x to stacked controls
        Eigen::VectorXd y;
        int control_offset = -1;  // column block of this node's own control; -1 at level N
    };

    std::vector<std::vector<Node>> levels;  // levels[k], k = 0..N
};

// Finite (w; v) law with the exact second moments [[alpha, gamma],
// [gamma', beta]]: atoms L s over all 2^{2p} sign vectors s with equal
// probability, L the PSD square root of the stacked moment.
NoiseSupport sign_support_noise(const Eigen::MatrixXd& alpha, const Eigen::MatrixXd& beta,
                                const Eigen::MatrixXd& gamma);

// Finite initial law with the exact moments of `moments`, by the same sign
// construction on the stacked (zeta_x, zeta_y) covariance (2^{2n} atoms).
InitialSupport sign_support_initial(const InitialMoments& moments);

// Builds the tree for a multinoise problem (use lift_to_multinoise for the
// scalar case).  The guard rejects trees with more than 1e6 stacked control
// variables.  Support moments are not modified; callers pick supports whose
// moments match the spec (four_point_support does for the scalar lift,
// sign_support_noise for per-step multinoise moments).
ScenarioTree build_tree(const MultiNoiseProblemSpec& spec, const InitialSupport& initial,
                        const std::vector<NoiseSupport>& step_supports);
ScenarioTree build_tree(const MultiNoiseProblemSpec& spec, const InitialSupport& initial,
                        const NoiseSupport& support);
ScenarioTree build_tree(const ProblemSpec& spec, const InitialSupport& initial,
                        const NoiseSupport& support);

// The cost as an explicit quadratic in the stacked controls u:
//   J(u) = u' quad u + 2 (linear_x + linear_y)' u + const_xx + const_xy + const_yy,
// with the linear and constant parts split by which initial chain (asset or
// liability) they originate from — x dynamics never feed y and vice versa, so
// the split is exact.
struct StackedQuadratic {
    int dim = 0;
    Eigen::MatrixXd quad;  // d x d symmetric
    Eigen::VectorXd linear_x, linear_y;
    double const_xx = 0, const_xy = 0, const_yy = 0;

    double linear_term(const Eigen::VectorXd& u) const {
        return 2.0 * (linear_x + linear_y).dot(u);
    }
    double value(const Eigen::VectorXd& u) const {
        return u.dot(quad * u) + linear_term(u) + const_xx + const_xy + const_yy;
    }
};

StackedQuadratic assemble_quadratic(const ScenarioTree& tree, const MultiNoiseProblemSpec& spec);
StackedQuadratic assemble_quadratic(const ScenarioTree& tree, const ProblemSpec& spec);

struct OracleOptimum {
    Eigen::VectorXd controls;  // stacked minimizer, one m-block per node
    double value = 0;          // exact minimum of the quadratic
};

// Exact minimizer: solves quad * u = -(linear_x + linear_y).  Throws
// SingularQuadratic when the quadratic is not strictly positive definite
// (lambda_min <= 1e-12 * scale) — the degenerate case is reported, not solved.
OracleOptimum brute_force_optimal(const StackedQuadratic& quad);

struct PsdVerdict {
    bool psd = false;
    double lambda_min = 0;
};

// Smallest eigenvalue of the quadratic's matrix, verdict at -1e-10 * scale.
PsdVerdict check_quadratic_psd(const StackedQuadratic& quad);

// Evaluates the state of a node at a given stacked control vector.
Eigen::VectorXd node_state_x(const ScenarioTree::Node& node, const Eigen::VectorXd& controls);

// Replays a feedback policy on the tree: level by level, realizes every
// node's state, forms the level means, and fills each node's control block
// with the policy's action.  The result can be priced with
// StackedQuadratic::value to compare the policy against the exact optimum.
Eigen::VectorXd policy_tree_controls(const ScenarioTree& tree, const FeedbackPolicy& policy);

}  // namespace mflq
