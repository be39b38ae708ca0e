#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"
#include "mflq/alm.hpp"
#include "mflq/oracle.hpp"
#include "mflq/policy.hpp"
#include "src/cli/commands.hpp"

using namespace mflq;
using namespace mflq::testing;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

namespace {

// Pseudo-inverse through an explicit eigendecomposition, as an independent
// baseline for the rank-one update formula.
MatrixXd direct_pinv(const MatrixXd& M) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(M);
    const double tol = 1e-12 * (1.0 + es.eigenvalues().cwiseAbs().maxCoeff());
    VectorXd inv = es.eigenvalues();
    for (int i = 0; i < inv.size(); ++i) inv(i) = std::abs(inv(i)) > tol ? 1.0 / inv(i) : 0.0;
    return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

// One-asset, one-period hand instance: a = 1, f = 0, E B = 1, Var B = 1,
// R = 1, q_N = 1, q_bar_N = 0.  The first-step asset value is
//   Sx0 = a^2 Sx1 (1 - Sx1 EB W1^{-1} EB') = 1 - 1/3 = 2/3.
AlmProblem unit_alm() {
    AlmProblem alm;
    alm.horizon = 1;
    alm.asset_count = 1;
    alm.a = {1.0};
    alm.f = {0.0};
    alm.mean_excess = {RowVectorXd::Ones(1)};
    alm.cov_excess = {mat1(1.0)};
    alm.R = {mat1(1.0)};
    alm.q_N = 1.0;
    alm.q_bar_N = 0.0;
    return alm;
}

}  // namespace

TEST_SUITE("alm") {

TEST_CASE("validation of the bundled example and of broken variants") {
    const AlmProblem alm = cli::example_problem();
    CHECK(validate_alm(alm).ok);

    AlmProblem bad_r = alm;
    bad_r.R[1] = -MatrixXd::Identity(3, 3);
    const ValidationReport r = validate_alm(bad_r);
    REQUIRE_FALSE(r.ok);
    bool found = false;
    for (const auto& v : r.violations)
        if (v.condition == "R positive" && v.k == 1) found = true;
    CHECK(found);

    AlmProblem bad_q = alm;
    bad_q.q_N = -0.1;
    CHECK_FALSE(validate_alm(bad_q).ok);

    AlmProblem bad_sum = alm;
    bad_sum.q_bar_N = -2.0 * bad_sum.q_N;  // q_N + q_bar_N < 0
    CHECK_FALSE(validate_alm(bad_sum).ok);
}

TEST_CASE("lift of the example has the expected structure") {
    const AlmProblem alm = cli::example_problem();
    const MultiNoiseProblemSpec lifted = lift_to_multinoise(alm);
    REQUIRE(lifted.state_dim == 1);
    REQUIRE(lifted.control_dim == 3);
    REQUIRE(lifted.noise_dim == 3);
    REQUIRE(lifted.horizon == 3);
    for (int k = 0; k < 3; ++k) {
        CHECK(lifted.A[k](0, 0) == alm.a[static_cast<size_t>(k)]);
        CHECK(lifted.F[k](0, 0) == alm.f[static_cast<size_t>(k)]);
        CHECK(max_abs_diff(lifted.B[k], alm.mean_excess[static_cast<size_t>(k)]) == 0.0);
        // The noise channels feed the asset only: D^i = e_i', all C/G zero.
        for (int i = 0; i < 3; ++i) {
            RowVectorXd ei = RowVectorXd::Zero(3);
            ei(i) = 1.0;
            CHECK(max_abs_diff(lifted.D[k][static_cast<size_t>(i)], ei) == 0.0);
            CHECK(lifted.C[k][static_cast<size_t>(i)].cwiseAbs().maxCoeff() == 0.0);
            CHECK(lifted.G[k][static_cast<size_t>(i)].cwiseAbs().maxCoeff() == 0.0);
        }
        CHECK(max_abs_diff(lifted.alpha[k], alm.cov_excess[static_cast<size_t>(k)]) == 0.0);
        CHECK(lifted.beta[k].cwiseAbs().maxCoeff() == 0.0);
        CHECK(lifted.gamma[k].cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK(lifted.Q[3](0, 0) == alm.q_N);
    CHECK(lifted.Q_bar[3](0, 0) == alm.q_bar_N);
    CHECK(lifted.Q[0].cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("example value sequences match the published table") {
    const AlmRiccati st = solve_alm_riccati(cli::example_problem());
    // Published four-decimal values.
    const double sx[4] = {0.0133, 0.0540, 0.2260, 1.0};
    const double sxy[4] = {-0.0230, -0.0777, -0.2712, -1.0};
    const double sy[4] = {0.0397, 0.1119, 0.3254, 1.0};
    for (int k = 0; k <= 3; ++k) {
        CHECK(std::abs(st.Sx[static_cast<size_t>(k)] - sx[k]) <= 1e-4);
        CHECK(std::abs(st.Sxy[static_cast<size_t>(k)] - sxy[k]) <= 1e-4);
        CHECK(std::abs(st.Sy[static_cast<size_t>(k)] - sy[k]) <= 1e-4);
        // Aggregate sequences vanish: the terminal weights satisfy
        // q_bar_N = -q_N, so every T starts and stays at zero.
        CHECK(std::abs(st.Tx[static_cast<size_t>(k)]) <= 1e-12);
        CHECK(std::abs(st.Txy[static_cast<size_t>(k)]) <= 1e-12);
        CHECK(std::abs(st.Ty[static_cast<size_t>(k)]) <= 1e-12);
    }
    // Full-precision regression pins.
    const double sx_full[4] = {0.0132982, 0.0539536, 0.225966, 1.0};
    const double sxy_full[4] = {-0.0229793, -0.0776932, -0.27116, -1.0};
    const double sy_full[4] = {0.0397083, 0.111878, 0.325392, 1.0};
    for (int k = 0; k <= 3; ++k) {
        CHECK(st.Sx[static_cast<size_t>(k)] ==
              doctest::Approx(sx_full[k]).epsilon(1e-5));
        CHECK(st.Sxy[static_cast<size_t>(k)] ==
              doctest::Approx(sxy_full[k]).epsilon(1e-5));
        CHECK(st.Sy[static_cast<size_t>(k)] ==
              doctest::Approx(sy_full[k]).epsilon(1e-5));
    }
}

TEST_CASE("zero terminal weights give identically zero values and strategy") {
    AlmProblem alm = cli::example_problem();
    alm.q_N = 0.0;
    alm.q_bar_N = 0.0;
    const AlmRiccati st = solve_alm_riccati(alm);
    for (int k = 0; k <= 3; ++k) {
        CHECK(st.Sx[static_cast<size_t>(k)] == 0.0);
        CHECK(st.Ty[static_cast<size_t>(k)] == 0.0);
    }
    for (int k = 0; k < 3; ++k) {
        const VectorXd u = alm_strategy(alm, st, k, 1.3, 0.4, -0.2, 0.1);
        CHECK(u.cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("one-asset hand instance solves to two thirds") {
    const AlmRiccati st = solve_alm_riccati(unit_alm());
    CHECK(st.Sx[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(st.Tx[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    // f = 0 kills the liability transport entirely.
    CHECK(st.Sxy[0] == 0.0);
    CHECK(st.Sy[0] == 0.0);
    CHECK(st.W1[0](0, 0) == doctest::Approx(3.0).epsilon(1e-14));
}

TEST_CASE("asset value admits the rational division form") {
    // Sx_k = a_k^2 Sx_{k+1} / (1 + Sx_{k+1} EB (R + Sx_{k+1} Cov)^{-1} EB'),
    // an algebraically equivalent rewrite of the completed square.
    CounterRng rng(51, 0);
    for (int i = 0; i < 30; ++i) {
        const AlmProblem alm = random_alm_problem(rng);
        const AlmRiccati st = solve_alm_riccati(alm);
        for (int k = alm.horizon - 1; k >= 0; --k) {
            const auto ku = static_cast<size_t>(k);
            const double s1 = st.Sx[ku + 1];
            const MatrixXd inner = alm.R[ku] + s1 * alm.cov_excess[ku];
            const double t =
                s1 * (alm.mean_excess[ku] * inner.llt().solve(
                                                alm.mean_excess[ku].transpose()))(0, 0);
            const double rational = alm.a[ku] * alm.a[ku] * s1 / (1.0 + t);
            CHECK(st.Sx[ku] == doctest::Approx(rational).epsilon(1e-12));
        }
    }
}

TEST_CASE("specialized recursion agrees with the lifted general solver") {
    CounterRng rng(52, 0);
    double worst = 0.0;
    for (int i = 0; i < 30; ++i) {
        const AlmProblem alm = random_alm_problem(rng);
        const AlmRiccati st = solve_alm_riccati(alm);
        const RiccatiSolution lift = solve_riccati_multinoise(lift_to_multinoise(alm));
        for (int k = 0; k <= alm.horizon; ++k) {
            const auto ku = static_cast<size_t>(k);
            worst = std::max(worst, std::abs(st.Sx[ku] - lift.Sx[ku](0, 0)));
            worst = std::max(worst, std::abs(st.Tx[ku] - lift.Tx[ku](0, 0)));
            worst = std::max(worst, std::abs(st.Sxy[ku] - lift.Sxy[ku](0, 0)));
            worst = std::max(worst, std::abs(st.Txy[ku] - lift.Txy[ku](0, 0)));
            worst = std::max(worst, std::abs(st.Sy[ku] - lift.Sy[ku](0, 0)));
            worst = std::max(worst, std::abs(st.Ty[ku] - lift.Ty[ku](0, 0)));
        }
        for (int k = 0; k < alm.horizon; ++k) {
            const auto ku = static_cast<size_t>(k);
            worst = std::max(worst, max_abs_diff(st.W1[ku], lift.W1[ku]));
            worst = std::max(worst, max_abs_diff(st.W2[ku], lift.W2[ku]));
            worst = std::max(worst, max_abs_diff(st.H1[ku], lift.H1[ku]));
            worst = std::max(worst, max_abs_diff(st.H2[ku], lift.H2[ku]));
            worst = std::max(worst, max_abs_diff(st.H3[ku], lift.H3[ku]));
            worst = std::max(worst, max_abs_diff(st.H4[ku], lift.H4[ku]));
        }
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("strategy rows of the example match the published table") {
    const AlmProblem alm = cli::example_problem();
    const AlmRiccati st = solve_alm_riccati(alm);
    // Unit asset deviation at the last step: the x-gain column.
    const VectorXd ux = alm_strategy(alm, st, 2, 1.0, 0.0, 0.0, 0.0);
    const double cx2[3] = {-0.0300, -0.0429, -0.0730};
    const double cy2[3] = {0.0359, 0.0515, 0.0876};
    for (int i = 0; i < 3; ++i) CHECK(std::abs(ux(i) - cx2[i]) <= 1e-4);
    // Unit liability deviation at the last step: the y-gain column.
    const VectorXd uy = alm_strategy(alm, st, 2, 0.0, 0.0, 1.0, 0.0);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(uy(i) - cy2[i]) <= 1e-4);
    // Pure mean displacement: the aggregate sequences vanish, so the strategy
    // ignores it entirely.
    const VectorXd um = alm_strategy(alm, st, 1, 0.5, 0.5, 0.2, 0.2);
    CHECK(um.cwiseAbs().maxCoeff() <= 1e-12);

    // First-step liability column, checked against the general lifted solver
    // rather than the published table: the published first-step liability row
    // is internally inconsistent with its own value recursion (it equals 5/6
    // of the recursion output — a growth-rate-for-liability-rate slip), while
    // the recursion value below is confirmed by the exact tree oracle.
    const FeedbackPolicy pol = build_policy(solve_riccati_multinoise(lift_to_multinoise(alm)));
    const VectorXd uy0 = alm_strategy(alm, st, 0, 0.0, 0.0, 1.0, 0.0);
    for (int i = 0; i < 3; ++i)
        CHECK(uy0(i) == doctest::Approx(pol.Ky[0](i, 0)).epsilon(1e-10));
    const double published_y0[3] = {0.0069, 0.0104, 0.0141};
    double gap = 0.0;
    for (int i = 0; i < 3; ++i) gap = std::max(gap, std::abs(uy0(i) - published_y0[i]));
    CHECK(gap > 1e-3);  // the published row is not the recursion's output
}

TEST_CASE("optimal value of the example from unit initial moments") {
    const AlmRiccati st = solve_alm_riccati(cli::example_problem());
    const double J = alm_optimal_value(st, 0.0, 1.0, 0.0, 1.0, 0.0);
    CHECK(std::abs(J - 0.0530) <= 1e-4);
    CHECK(J == doctest::Approx(0.0530065).epsilon(1e-5));
    // Deterministic initial states: value zero (pure variance objective).
    CHECK(std::abs(alm_optimal_value(st, 1.0, 0.0, 1.0, 0.0, 0.0)) <= 1e-15);
    CHECK(alm_optimal_value(st, 0.0, 0.0, 0.0, 0.0, 0.0) == 0.0);
}

TEST_CASE("optimal value agrees with the exact tree oracle") {
    CounterRng rng(53, 0);
    AlmProblem alm = random_alm_problem(rng, 2, 1);
    const AlmRiccati st = solve_alm_riccati(alm);
    const MultiNoiseProblemSpec lifted = lift_to_multinoise(alm);
    const InitialSupport init = deterministic_initial(vec1(1.2), vec1(0.9));
    std::vector<NoiseSupport> supports;
    for (int k = 0; k < alm.horizon; ++k)
        supports.push_back(sign_support_noise(lifted.alpha[static_cast<size_t>(k)],
                                              lifted.beta[static_cast<size_t>(k)],
                                              lifted.gamma[static_cast<size_t>(k)]));
    const ScenarioTree tree = build_tree(lifted, init, supports);
    const OracleOptimum opt = brute_force_optimal(assemble_quadratic(tree, lifted));
    const double J = alm_optimal_value(st, 1.2, 0.0, 0.9, 0.0, 0.0);
    CHECK(std::abs(J - opt.value) <= 1e-8 * (1.0 + std::abs(opt.value)));
}

TEST_CASE("expected terminal equity compounds the bare growth rates") {
    const AlmProblem alm = cli::example_problem();
    const AlmRiccati st = solve_alm_riccati(alm);
    // Mean gains vanish here, so E[x_3 - y_3] = 0.125 E x0 - 0.216 E y0.
    for (const auto& [ex, ey] : std::vector<std::pair<double, double>>{
             {1.0, 1.0}, {2.0, 0.5}, {-1.0, 3.0}}) {
        const double equity = expected_terminal_equity(alm, st, ex, ey);
        CHECK(equity == doctest::Approx(0.125 * ex - 0.216 * ey).epsilon(1e-12));
    }
    CHECK(expected_terminal_equity(alm, st, 1.0, 1.0) ==
          doctest::Approx(-0.091).epsilon(1e-12));

    // With a nonzero aggregate weight the mean feedback kicks in; the equity
    // recursion must then match the general lifted mean trajectory.
    AlmProblem coupled = alm;
    coupled.q_bar_N = 0.0;  // q_N alone: T sequences no longer vanish
    const AlmRiccati stc = solve_alm_riccati(coupled);
    const MultiNoiseProblemSpec lifted = lift_to_multinoise(coupled);
    const RiccatiSolution lift_st = solve_riccati_multinoise(lifted);
    const ExpectedTrajectory traj = expected_trajectory(lifted, lift_st, vec1(1.5), vec1(0.7));
    const double equity = expected_terminal_equity(coupled, stc, 1.5, 0.7);
    CHECK(equity == doctest::Approx(traj.Ex[3](0) - traj.Ey[3](0)).epsilon(1e-12));
}

TEST_CASE("rank-one pseudo-inverse update: examples and identities") {
    // M = I3, c = e1: M + cc' = diag(2, 1, 1), inverse diag(1/2, 1, 1).
    const MatrixXd I3 = MatrixXd::Identity(3, 3);
    VectorXd e1 = VectorXd::Zero(3);
    e1(0) = 1.0;
    const MatrixXd X = pinv_rank_one(I3, e1);
    MatrixXd expected = I3;
    expected(0, 0) = 0.5;
    CHECK(max_abs_diff(X, expected) <= 1e-14);

    CounterRng rng(54, 0);
    // Positive definite M: the update must match the plain inverse.
    const MatrixXd Mpd = random_psd(rng, 4, 1.0) + I3.Identity(4, 4);
    const VectorXd c = random_matrix(rng, 4, 1, 1.0);
    const MatrixXd direct = (Mpd + c * c.transpose()).inverse();
    CHECK(max_abs_diff(pinv_rank_one(Mpd, c), direct) <= 1e-10);

    // c = 0 reduces to the pseudo-inverse of M itself.
    CHECK(max_abs_diff(pinv_rank_one(Mpd, VectorXd::Zero(4)), Mpd.inverse()) <= 1e-10);

    // Rank-deficient M with c inside its range: verify the four Moore-Penrose
    // identities and agreement with an eigendecomposition pseudo-inverse.
    const MatrixXd U = random_matrix(rng, 4, 2, 1.0);
    const MatrixXd Mdef = U * U.transpose();  // rank 2
    const VectorXd cin = Mdef * random_matrix(rng, 4, 1, 1.0);
    const MatrixXd S = Mdef + cin * cin.transpose();
    const MatrixXd Xd = pinv_rank_one(Mdef, cin);
    CHECK(max_abs_diff(S * Xd * S, S) <= 1e-9);
    CHECK(max_abs_diff(Xd * S * Xd, Xd) <= 1e-9);
    CHECK(max_abs_diff((S * Xd).transpose(), S * Xd) <= 1e-9);
    CHECK(max_abs_diff((Xd * S).transpose(), Xd * S) <= 1e-9);
    CHECK(max_abs_diff(Xd, direct_pinv(S)) <= 1e-10);

    // c outside Range(M) violates the formula's hypothesis and must throw.
    VectorXd outside = VectorXd::Zero(3);
    outside(2) = 1.0;
    MatrixXd Msing = MatrixXd::Zero(3, 3);
    Msing(0, 0) = 1.0;
    Msing(1, 1) = 1.0;
    CHECK_THROWS_AS(pinv_rank_one(Msing, outside), RangeViolation);
}

TEST_CASE("JSON round trip and strict schema") {
    const AlmProblem alm = cli::example_problem();
    const std::string text = alm_to_json(alm);
    const LoadedAlm loaded = parse_alm_text(text);
    CHECK(alm_to_json(loaded.problem) == text);
    CHECK_FALSE(loaded.has_initial);

    nlohmann::json doc = nlohmann::json::parse(text);
    doc["surprise"] = 1;
    CHECK_THROWS_WITH_AS(parse_alm_text(doc.dump()), doctest::Contains("surprise"),
                         ParseError);

    const LoadedAlm bundled = load_alm_file(data_path("alm_three_period.json"));
    REQUIRE(bundled.has_initial);
    CHECK(bundled.mean_x == 1.0);
    CHECK(bundled.var_x == 1.0);
    CHECK(bundled.cov_xy == 0.0);
    CHECK(alm_to_json(bundled.problem) == alm_to_json(cli::example_problem()));
}

TEST_CASE("returns ingestion: pooled and per-step moments") {
    // Two assets, four periods.
    MatrixXd returns(4, 2);
    returns << 0.02, 0.05,
               0.04, 0.01,
               0.00, 0.03,
               0.02, 0.03;
    const MatrixXd R = MatrixXd::Identity(2, 2);

    const AlmProblem pooled =
        alm_from_returns(returns, 3, 1.02, 1.01, R, 1.0, -1.0, MomentEstimation::pooled);
    REQUIRE(pooled.horizon == 3);
    REQUIRE(pooled.asset_count == 2);
    RowVectorXd mean(2);
    mean << 0.02, 0.03;
    for (int k = 0; k < 3; ++k) {
        CHECK(max_abs_diff(pooled.mean_excess[static_cast<size_t>(k)], mean) <= 1e-15);
        CHECK(max_abs_diff(pooled.cov_excess[static_cast<size_t>(k)],
                           pooled.cov_excess[0]) == 0.0);
    }
    // Pooled covariance is the unbiased sample covariance of all four rows.
    MatrixXd centered = returns.rowwise() - mean;
    const MatrixXd cov = centered.transpose() * centered / 3.0;
    CHECK(max_abs_diff(pooled.cov_excess[0], cov) <= 1e-15);

    const AlmProblem stepped =
        alm_from_returns(returns, 2, 1.02, 1.01, R, 1.0, -1.0, MomentEstimation::per_step);
    RowVectorXd m0(2), m1(2);
    m0 << 0.03, 0.03;  // rows 0-1
    m1 << 0.01, 0.03;  // rows 2-3
    CHECK(max_abs_diff(stepped.mean_excess[0], m0) <= 1e-15);
    CHECK(max_abs_diff(stepped.mean_excess[1], m1) <= 1e-15);

    // Rows not divisible into horizon blocks of >= 2.
    CHECK_THROWS_AS(alm_from_returns(returns, 3, 1.0, 1.0, R, 1.0, -1.0,
                                     MomentEstimation::per_step),
                    DimensionMismatch);
    CHECK_THROWS_AS(alm_from_returns(returns, 4, 1.0, 1.0, R, 1.0, -1.0,
                                     MomentEstimation::per_step),
                    DimensionMismatch);
    CHECK_THROWS_AS(alm_from_returns(returns, 0, 1.0, 1.0, R, 1.0, -1.0,
                                     MomentEstimation::pooled),
                    DimensionMismatch);
    CHECK_THROWS_AS(alm_from_returns(returns, 2, 1.0, 1.0, MatrixXd::Identity(3, 3), 1.0,
                                     -1.0, MomentEstimation::pooled),
                    DimensionMismatch);

    // Constant single-asset returns: zero covariance, and the recursion still
    // solves (the control kernel stays positive through the mean term).
    MatrixXd flat(4, 1);
    flat << 0.05, 0.05, 0.05, 0.05;
    const AlmProblem degenerate = alm_from_returns(flat, 2, 1.01, 1.0, mat1(1.0), 1.0, -1.0,
                                                   MomentEstimation::pooled);
    CHECK(degenerate.cov_excess[0](0, 0) == 0.0);
    CHECK(degenerate.mean_excess[0](0) == doctest::Approx(0.05).epsilon(1e-15));
    const AlmRiccati st = solve_alm_riccati(degenerate);
    // a^2/(1 + t) compounding with t = Sx1 EB R^{-1} EB' = 0.0025 per step.
    CHECK(st.Sx[0] == doctest::Approx(1.0201 * 1.0201 / (1.0025 * 1.00254377))
                          .epsilon(1e-4));
}

TEST_CASE("returns CSV: headers, comments, and malformed rows") {
    const std::string good = write_temp("returns_good.csv",
                                        "# quarterly excess returns\n"
                                        "equity,bonds\n"
                                        "0.02, 0.05\n"
                                        "\n"
                                        "0.04,0.01\n");
    const MatrixXd loaded = load_returns_csv(good);
    REQUIRE(loaded.rows() == 2);
    REQUIRE(loaded.cols() == 2);
    CHECK(loaded(0, 1) == 0.05);
    CHECK(loaded(1, 0) == 0.04);

    const std::string ragged =
        write_temp("returns_ragged.csv", "0.01,0.02\n0.01\n");
    CHECK_THROWS_AS(load_returns_csv(ragged), ParseError);
    const std::string word_mid =
        write_temp("returns_word.csv", "0.01,0.02\noops,0.02\n");
    CHECK_THROWS_AS(load_returns_csv(word_mid), ParseError);
    const std::string empty = write_temp("returns_empty.csv", "# nothing here\n");
    CHECK_THROWS_AS(load_returns_csv(empty), ParseError);
    CHECK_THROWS_AS(load_returns_csv("/nonexistent/nope.csv"), ParseError);

    // The bundled sample parses and feeds the estimator end to end.
    const MatrixXd sample = load_returns_csv(data_path("returns_sample.csv"));
    CHECK(sample.rows() >= 4);
    const AlmProblem alm =
        alm_from_returns(sample, 2, 1.02, 1.01, MatrixXd::Identity(sample.cols(), sample.cols()),
                         1.0, -1.0, MomentEstimation::pooled);
    CHECK(validate_alm(alm).ok);
}

TEST_CASE("terminal values and nonnegativity across random instances") {
    CounterRng rng(55, 0);
    for (int i = 0; i < 20; ++i) {
        const AlmProblem alm = random_alm_problem(rng);
        const AlmRiccati st = solve_alm_riccati(alm);
        const auto N = static_cast<size_t>(alm.horizon);
        CHECK(st.Sx[N] == alm.q_N);
        CHECK(st.Tx[N] == alm.q_N + alm.q_bar_N);
        CHECK(st.Sxy[N] == -alm.q_N);
        CHECK(st.Txy[N] == -(alm.q_N + alm.q_bar_N));
        CHECK(st.Sy[N] == alm.q_N);
        CHECK(st.Ty[N] == alm.q_N + alm.q_bar_N);
        for (size_t k = 0; k <= N; ++k) {
            CHECK(st.Sx[k] >= -1e-12);
            CHECK(st.Tx[k] >= -1e-12);
        }
    }
}

}  // TEST_SUITE
