#include <algorithm>

#include "doctest.h"
#include "helpers.hpp"
#include "mflq/oracle.hpp"
#include "mflq/policy.hpp"

using namespace mflq;
using namespace mflq::testing;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Single-atom support (w = v = 0 almost surely): collapses the tree to a
// deterministic chain, which makes the stacked quadratic computable by hand.
NoiseSupport silent_support() {
    NoiseAtom atom;
    atom.w = VectorXd::Zero(1);
    atom.v = VectorXd::Zero(1);
    atom.prob = 1.0;
    return {atom};
}

}  // namespace

TEST_SUITE("oracle") {

TEST_CASE("four-point law matches the scalar moments exactly") {
    for (const double rho : {-0.7, 0.0, 0.3, 0.999}) {
        const NoiseSupport support = four_point_support(rho);
        double p = 0, ew = 0, ev = 0, eww = 0, evv = 0, ewv = 0;
        for (const auto& atom : support) {
            p += atom.prob;
            ew += atom.prob * atom.w(0);
            ev += atom.prob * atom.v(0);
            eww += atom.prob * atom.w(0) * atom.w(0);
            evv += atom.prob * atom.v(0) * atom.v(0);
            ewv += atom.prob * atom.w(0) * atom.v(0);
        }
        CHECK(p == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(std::abs(ew) <= 1e-15);
        CHECK(std::abs(ev) <= 1e-15);
        CHECK(eww == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(evv == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(ewv == doctest::Approx(rho).epsilon(1e-14));
    }
    CHECK(four_point_support(0.0).size() == 4);
    // Perfect correlation drops the zero-probability mismatched atoms.
    CHECK(four_point_support(1.0).size() == 2);
}

TEST_CASE("sign-construction law reproduces arbitrary joint moments") {
    CounterRng rng(61, 0);
    const MatrixXd joint = random_psd(rng, 4, 1.0);  // p = 2
    const MatrixXd alpha = joint.topLeftCorner(2, 2);
    const MatrixXd gamma = joint.topRightCorner(2, 2);
    const MatrixXd beta = joint.bottomRightCorner(2, 2);
    const NoiseSupport support = sign_support_noise(alpha, beta, gamma);
    CHECK(support.size() == 16);  // 2^{2p} sign patterns

    double p = 0;
    MatrixXd m2 = MatrixXd::Zero(4, 4);
    VectorXd m1 = VectorXd::Zero(4);
    for (const auto& atom : support) {
        VectorXd z(4);
        z << atom.w, atom.v;
        p += atom.prob;
        m1 += atom.prob * z;
        m2 += atom.prob * z * z.transpose();
    }
    CHECK(p == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(m1.cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(max_abs_diff(m2, joint) <= 1e-12);
}

TEST_CASE("initial supports carry their declared moments") {
    CounterRng rng(62, 0);
    InitialMoments init = InitialMoments::zero(2);
    const MatrixXd joint = random_psd(rng, 4, 1.0);
    init.mean_x = random_matrix(rng, 2, 1, 1.0);
    init.mean_y = random_matrix(rng, 2, 1, 1.0);
    init.cov_x = joint.topLeftCorner(2, 2);
    init.cov_xy = joint.topRightCorner(2, 2);
    init.cov_y = joint.bottomRightCorner(2, 2);
    const InitialSupport support = sign_support_initial(init);
    CHECK(support.size() == 16);
    const InitialMoments back = moments_of(support);
    CHECK((back.mean_x - init.mean_x).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((back.mean_y - init.mean_y).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(max_abs_diff(back.cov_x, init.cov_x) <= 1e-12);
    CHECK(max_abs_diff(back.cov_y, init.cov_y) <= 1e-12);
    CHECK(max_abs_diff(back.cov_xy, init.cov_xy) <= 1e-12);

    const InitialSupport det = deterministic_initial(vec1(1.5), vec1(-0.5));
    REQUIRE(det.size() == 1);
    CHECK(det[0].prob == 1.0);
    const InitialMoments dm = moments_of(det);
    CHECK(dm.mean_x(0) == 1.5);
    CHECK(dm.cov_x(0, 0) == 0.0);

    // Two-atom law, moments by hand.
    InitialSupport two(2);
    two[0].x = vec1(1.0);
    two[0].y = vec1(0.0);
    two[0].prob = 0.5;
    two[1].x = vec1(-1.0);
    two[1].y = vec1(0.4);
    two[1].prob = 0.5;
    const InitialMoments tm = moments_of(two);
    CHECK(tm.mean_x(0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(tm.mean_y(0) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(tm.cov_x(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(tm.cov_y(0, 0) == doctest::Approx(0.04).epsilon(1e-14));
    CHECK(tm.cov_xy(0, 0) == doctest::Approx(-0.2).epsilon(1e-14));
}

TEST_CASE("tree level sizes and probabilities") {
    CounterRng rng(63, 0);
    const ProblemSpec spec = random_scalar_problem(rng, 2, 1, 2);
    const InitialSupport init = deterministic_initial(vec1(1.0), vec1(0.0));
    const ScenarioTree tree = build_tree(spec, init, four_point_support(0.3));
    REQUIRE(tree.levels.size() == 3);
    CHECK(tree.levels[0].size() == 1);
    CHECK(tree.levels[1].size() == 4);
    CHECK(tree.levels[2].size() == 16);
    // One control block per non-terminal node: d = m (1 + 4).
    CHECK(tree.stacked_dim == 2 * 5);
    for (const auto& level : tree.levels) {
        double p = 0;
        for (const auto& node : level) p += node.prob;
        CHECK(p == doctest::Approx(1.0).epsilon(1e-12));
    }
    for (const auto& node : tree.levels[2]) CHECK(node.control_offset == -1);
}

TEST_CASE("one-step stacked quadratic by hand") {
    const ProblemSpec spec = one_step_unit();
    const ScenarioTree tree =
        build_tree(spec, deterministic_initial(vec1(1.0), vec1(0.0)), four_point_support(0.0));
    const StackedQuadratic quad = assemble_quadratic(tree, spec);
    REQUIRE(quad.dim == 1);
    // J(u) = x0^2 + u^2 + (x0 + u)^2 with x0 = 1: curvature 2, slope 1,
    // constant 2.
    CHECK(quad.quad(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK((quad.linear_x + quad.linear_y)(0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(quad.const_xx + quad.const_xy + quad.const_yy ==
          doctest::Approx(2.0).epsilon(1e-14));

    const PsdVerdict verdict = check_quadratic_psd(quad);
    CHECK(verdict.psd);
    CHECK(verdict.lambda_min == doctest::Approx(2.0).epsilon(1e-14));

    const OracleOptimum opt = brute_force_optimal(quad);
    CHECK(opt.controls(0) == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(opt.value == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("two-step deterministic chain expands coefficient by coefficient") {
    // Silent noise: the stacked quadratic is the product expansion of the
    // two-step deterministic problem, term by term.
    ProblemSpec s = ProblemSpec::zero(2, 1, 1);
    const double a0 = 0.9, a1 = 1.1, b0 = 0.8, b1 = 0.7, r0 = 0.5, r1 = 0.6, x0 = 1.3;
    s.A[0] = mat1(a0);
    s.A[1] = mat1(a1);
    s.B[0] = mat1(b0);
    s.B[1] = mat1(b1);
    s.R[0] = mat1(r0);
    s.R[1] = mat1(r1);
    for (int k = 0; k <= 2; ++k) s.Q[k] = mat1(1.0);

    const ScenarioTree tree =
        build_tree(s, deterministic_initial(vec1(x0), vec1(0.0)), silent_support());
    REQUIRE(tree.stacked_dim == 2);
    const StackedQuadratic quad = assemble_quadratic(tree, s);
    // x1 = a0 x0 + b0 u0, x2 = a1 x1 + b1 u1; J = sum Q x_k^2 + R u_k^2.
    CHECK(quad.quad(0, 0) ==
          doctest::Approx(r0 + b0 * b0 + a1 * a1 * b0 * b0).epsilon(1e-14));
    CHECK(quad.quad(1, 1) == doctest::Approx(r1 + b1 * b1).epsilon(1e-14));
    CHECK(quad.quad(0, 1) == doctest::Approx(a1 * b0 * b1).epsilon(1e-14));
    CHECK(quad.linear_x(0) ==
          doctest::Approx(a0 * x0 * b0 + (a1 * a0 * x0) * (a1 * b0)).epsilon(1e-14));
    CHECK(quad.linear_x(1) == doctest::Approx((a1 * a0 * x0) * b1).epsilon(1e-14));
    CHECK(quad.const_xx ==
          doctest::Approx(x0 * x0 * (1.0 + a0 * a0 + a1 * a1 * a0 * a0)).epsilon(1e-14));
    CHECK(quad.linear_y.cwiseAbs().maxCoeff() == 0.0);
    CHECK(quad.const_xy == 0.0);
    CHECK(quad.const_yy == 0.0);

    // And the minimum agrees with the value recursion.
    const OracleOptimum opt = brute_force_optimal(quad);
    InitialMoments init = InitialMoments::zero(1);
    init.mean_x = vec1(x0);
    CHECK(opt.value ==
          doctest::Approx(optimal_cost(solve_riccati(s), init)).epsilon(1e-12));
}

TEST_CASE("zero dynamics make the quadratic block diagonal in weighted R") {
    CounterRng rng(64, 0);
    ProblemSpec s = zero_dynamics_spec(2, 1, 2, rng);
    for (auto& rb : s.R_bar) rb.setZero();  // keep controls decoupled for now
    const ScenarioTree tree =
        build_tree(s, deterministic_initial(vec1(0.5), vec1(0.0)), four_point_support(0.2));
    const StackedQuadratic quad = assemble_quadratic(tree, s);
    REQUIRE(quad.dim == 2 * 5);
    // Level-0 block: R_0 with probability 1; level-1 blocks: prob-weighted R_1.
    CHECK(max_abs_diff(quad.quad.block(0, 0, 2, 2), s.R[0]) <= 1e-14);
    for (int j = 0; j < 4; ++j) {
        const double pj = tree.levels[1][static_cast<size_t>(j)].prob;
        CHECK(max_abs_diff(quad.quad.block(2 + 2 * j, 2 + 2 * j, 2, 2), pj * s.R[1]) <=
              1e-14);
    }
    // Everything off the diagonal blocks vanishes (controls never interact).
    MatrixXd offdiag = quad.quad;
    offdiag.block(0, 0, 2, 2).setZero();
    for (int j = 0; j < 4; ++j) offdiag.block(2 + 2 * j, 2 + 2 * j, 2, 2).setZero();
    CHECK(offdiag.cwiseAbs().maxCoeff() <= 1e-14);
    CHECK(quad.linear_x.cwiseAbs().maxCoeff() <= 1e-14);

    // Restoring a mean-control weight couples siblings exactly through
    // Eu = sum_j p_j u_j: block (i, j) picks up p_i p_j R_bar.
    CounterRng rng2(640, 0);
    s.R_bar[1] = random_psd(rng2, 2, 0.5);
    const StackedQuadratic coupled =
        assemble_quadratic(build_tree(s, deterministic_initial(vec1(0.5), vec1(0.0)),
                                      four_point_support(0.2)),
                           s);
    for (int i = 0; i < 4; ++i) {
        const double pi = tree.levels[1][static_cast<size_t>(i)].prob;
        for (int j = 0; j < 4; ++j) {
            const double pj = tree.levels[1][static_cast<size_t>(j)].prob;
            MatrixXd expect = pi * pj * s.R_bar[1];
            if (i == j) expect += pi * s.R[1];
            CHECK(max_abs_diff(coupled.quad.block(2 + 2 * i, 2 + 2 * j, 2, 2), expect) <=
                  1e-14);
        }
    }
}

TEST_CASE("definiteness verdict across validated and broken instances") {
    CounterRng rng(65, 0);
    for (int i = 0; i < 20; ++i) {
        const bool multi = (i % 2 == 1);
        if (multi) {
            const MultiNoiseProblemSpec spec = random_multinoise_problem(rng, 2, 1, 2, 2);
            const auto supports = sign_supports_for(spec);
            const ScenarioTree tree =
                build_tree(spec, random_initial_support(rng, 1, i % 4 == 1), supports);
            const PsdVerdict v = check_quadratic_psd(assemble_quadratic(tree, spec));
            CHECK(v.psd);
        } else {
            const ProblemSpec spec = random_scalar_problem(rng, 2, 2, 2);
            const ScenarioTree tree = build_tree(spec, random_initial_support(rng, 2, i % 4 == 0),
                                                 four_point_support(spec.rho));
            const PsdVerdict v = check_quadratic_psd(assemble_quadratic(tree, spec));
            CHECK(v.psd);
        }
    }
    // Injecting a negative control weight (bypassing validation) flips the
    // verdict.
    for (int i = 0; i < 3; ++i) {
        ProblemSpec spec = random_scalar_problem(rng, 2, 1, 1);
        spec.R[spec.horizon - 1] = mat1(-1.0);
        spec.B[spec.horizon - 1].setZero();
        spec.D[spec.horizon - 1].setZero();
        const ScenarioTree tree = build_tree(spec, deterministic_initial(vec1(1.0), vec1(0.0)),
                                             four_point_support(spec.rho));
        const PsdVerdict v = check_quadratic_psd(assemble_quadratic(tree, spec));
        CHECK_FALSE(v.psd);
        CHECK(v.lambda_min < 0.0);
    }
}

TEST_CASE("zero cost is flat: semidefinite but not minimizable") {
    ProblemSpec s = ProblemSpec::zero(1, 1, 1);
    s.A[0] = mat1(1.0);
    s.B[0] = mat1(1.0);  // dynamics present, all weights zero
    const ScenarioTree tree =
        build_tree(s, deterministic_initial(vec1(1.0), vec1(0.0)), four_point_support(0.0));
    const StackedQuadratic quad = assemble_quadratic(tree, s);
    const PsdVerdict v = check_quadratic_psd(quad);
    CHECK(v.psd);
    CHECK(v.lambda_min == 0.0);
    CHECK_THROWS_AS(brute_force_optimal(quad), SingularQuadratic);
    try {
        brute_force_optimal(quad);
    } catch (const SingularQuadratic& e) {
        CHECK(std::abs(e.lambda_min) <= 1e-12);
    }
}

TEST_CASE("zero initial state yields the zero optimum") {
    CounterRng rng(66, 0);
    const ProblemSpec spec = random_scalar_problem(rng, 2, 1, 1);
    const ScenarioTree tree = build_tree(spec, deterministic_initial(vec1(0.0), vec1(0.0)),
                                         four_point_support(spec.rho));
    const OracleOptimum opt = brute_force_optimal(assemble_quadratic(tree, spec));
    CHECK(opt.controls.cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(std::abs(opt.value) <= 1e-12);
}

TEST_CASE("relabeling sibling subtrees does not move the optimum") {
    CounterRng rng(67, 0);
    const ProblemSpec spec = random_scalar_problem(rng, 2, 1, 1);
    const InitialSupport init = random_initial_support(rng, 1, true);
    const NoiseSupport support = four_point_support(spec.rho);
    NoiseSupport reversed = support;
    std::reverse(reversed.begin(), reversed.end());

    const OracleOptimum a =
        brute_force_optimal(assemble_quadratic(build_tree(spec, init, support), spec));
    const OracleOptimum b =
        brute_force_optimal(assemble_quadratic(build_tree(spec, init, reversed), spec));
    CHECK(a.value == doctest::Approx(b.value).epsilon(1e-12));
    CHECK(a.controls.size() == b.controls.size());
}

TEST_CASE("oversized trees are rejected before allocation") {
    CounterRng rng(68, 0);
    const MultiNoiseProblemSpec spec = random_multinoise_problem(rng, 6, 1, 1, 2);
    const auto supports = sign_supports_for(spec);  // 16 atoms per step
    try {
        build_tree(spec, deterministic_initial(vec1(1.0), vec1(0.0)), supports);
        FAIL("expected TreeTooLarge");
    } catch (const TreeTooLarge& e) {
        CHECK(e.size > 1000000);
    }
}

TEST_CASE("node states are affine in the stacked controls") {
    CounterRng rng(69, 0);
    const ProblemSpec spec = random_scalar_problem(rng, 1, 1, 1);
    const double x0 = 1.4;
    const ScenarioTree tree =
        build_tree(spec, deterministic_initial(vec1(x0), vec1(0.0)), four_point_support(0.5));
    const NoiseSupport support = four_point_support(0.5);
    VectorXd u(1);
    u << 0.37;
    for (size_t j = 0; j < tree.levels[1].size(); ++j) {
        const double w = support[j].w(0);
        // Level 0 is a single node, so the mean field there is the node
        // itself: Ex0 = x0, Eu0 = u, and the bar terms apply in full:
        // x1 = ((A + A_bar) + (C + C_bar) w) x0 + ((B + B_bar) + (D + D_bar) w) u.
        const double expect =
            (spec.A[0](0, 0) + spec.A_bar[0](0, 0) +
             (spec.C[0](0, 0) + spec.C_bar[0](0, 0)) * w) *
                x0 +
            (spec.B[0](0, 0) + spec.B_bar[0](0, 0) +
             (spec.D[0](0, 0) + spec.D_bar[0](0, 0)) * w) *
                u(0);
        const VectorXd got = node_state_x(tree.levels[1][j], u);
        CHECK(got(0) == doctest::Approx(expect).epsilon(1e-13));
    }
}

TEST_CASE("replaying the solved policy on the tree prices at the optimum") {
    CounterRng rng(70, 0);
    const ProblemSpec spec = random_scalar_problem(rng, 2, 2, 1);
    const InitialSupport init = random_initial_support(rng, 2, true);
    const ScenarioTree tree = build_tree(spec, init, four_point_support(spec.rho));
    const StackedQuadratic quad = assemble_quadratic(tree, spec);
    const OracleOptimum opt = brute_force_optimal(quad);

    const FeedbackPolicy pol = build_policy(solve_riccati(spec));
    const VectorXd replay = policy_tree_controls(tree, pol);
    REQUIRE(replay.size() == opt.controls.size());
    CHECK((replay - opt.controls).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(quad.value(replay) ==
          doctest::Approx(opt.value).epsilon(1e-10));
}

}  // TEST_SUITE
