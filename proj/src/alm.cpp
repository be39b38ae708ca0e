#include "mflq/alm.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "mflq/errors.hpp"
#include "src/json_util.hpp"

namespace mflq {

using nlohmann::json;
namespace ju = jsonutil;

namespace {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

double scale_of(const MatrixXd& M) {
    return 1.0 + (M.size() > 0 ? M.cwiseAbs().maxCoeff() : 0.0);
}

double min_eigenvalue(const MatrixXd& M) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(M, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

Eigen::LLT<MatrixXd> factor_kernel(const MatrixXd& W, const char* which, int k) {
    const double lmin = min_eigenvalue((W + W.transpose()) / 2.0);
    if (lmin < 1e-12 * scale_of(W)) throw NotPositiveDefinite(which, k, lmin);
    return Eigen::LLT<MatrixXd>((W + W.transpose()) / 2.0);
}

}  // namespace

ValidationReport validate_alm(const AlmProblem& alm) {
    ValidationReport report;
    const auto N = static_cast<size_t>(alm.horizon);
    if (alm.a.size() != N || alm.f.size() != N || alm.mean_excess.size() != N ||
        alm.cov_excess.size() != N || alm.R.size() != N) {
        report.ok = false;
        report.violations.push_back({"sequence lengths", -1, 0.0});
        return report;
    }
    for (int k = 0; k < alm.horizon; ++k) {
        const double cov_min = min_eigenvalue(alm.cov_excess[k]);
        if (cov_min < -1e-10 * scale_of(alm.cov_excess[k])) {
            report.ok = false;
            report.violations.push_back({"cov_excess psd", k, cov_min});
        }
        const double r_min = min_eigenvalue(alm.R[k]);
        if (r_min < 1e-12 * scale_of(alm.R[k])) {
            report.ok = false;
            report.violations.push_back({"R positive", k, r_min});
        }
    }
    if (alm.q_N < 0) {
        report.ok = false;
        report.violations.push_back({"terminal weight psd", alm.horizon, alm.q_N});
    }
    if (alm.q_N + alm.q_bar_N < 0) {
        report.ok = false;
        report.violations.push_back({"terminal mean weight psd", alm.horizon,
                                     alm.q_N + alm.q_bar_N});
    }
    return report;
}

MultiNoiseProblemSpec lift_to_multinoise(const AlmProblem& alm) {
    const int N = alm.horizon;
    const int m = alm.asset_count;
    MultiNoiseProblemSpec spec = MultiNoiseProblemSpec::zero(N, 1, m, m);
    for (int k = 0; k < N; ++k) {
        spec.A[k](0, 0) = alm.a[static_cast<size_t>(k)];
        spec.F[k](0, 0) = alm.f[static_cast<size_t>(k)];
        spec.B[k] = alm.mean_excess[static_cast<size_t>(k)];
        // Noise channel i is the i-th centered excess return: it multiplies
        // the money in asset i, so D^i is the i-th unit row.
        for (int i = 0; i < m; ++i) spec.D[k][static_cast<size_t>(i)](0, i) = 1.0;
        spec.alpha[k] = alm.cov_excess[static_cast<size_t>(k)];
        spec.R[k] = alm.R[static_cast<size_t>(k)];
        // beta = gamma = 0: the liability is deterministic.
    }
    spec.Q[N](0, 0) = alm.q_N;
    spec.Q_bar[N](0, 0) = alm.q_bar_N;
    return spec;
}

AlmRiccati solve_alm_riccati(const AlmProblem& alm) {
    const int N = alm.horizon;
    AlmRiccati r;
    r.Sx.assign(static_cast<size_t>(N) + 1, 0.0);
    r.Tx.assign(static_cast<size_t>(N) + 1, 0.0);
    r.Sxy.assign(static_cast<size_t>(N) + 1, 0.0);
    r.Txy.assign(static_cast<size_t>(N) + 1, 0.0);
    r.Sy.assign(static_cast<size_t>(N) + 1, 0.0);
    r.Ty.assign(static_cast<size_t>(N) + 1, 0.0);
    r.W1.resize(static_cast<size_t>(N));
    r.W2.resize(static_cast<size_t>(N));
    r.H1.resize(static_cast<size_t>(N));
    r.H2.resize(static_cast<size_t>(N));
    r.H3.resize(static_cast<size_t>(N));
    r.H4.resize(static_cast<size_t>(N));

    r.Sx[N] = alm.q_N;
    r.Tx[N] = alm.q_N + alm.q_bar_N;
    r.Sxy[N] = -alm.q_N;
    r.Txy[N] = -(alm.q_N + alm.q_bar_N);
    r.Sy[N] = alm.q_N;
    r.Ty[N] = alm.q_N + alm.q_bar_N;

    for (int k = N - 1; k >= 0; --k) {
        const double a = alm.a[static_cast<size_t>(k)];
        const double f = alm.f[static_cast<size_t>(k)];
        const RowVectorXd& EB = alm.mean_excess[static_cast<size_t>(k)];
        const MatrixXd& Cov = alm.cov_excess[static_cast<size_t>(k)];
        const MatrixXd EBtB = Cov + EB.transpose() * EB;  // E[B'B]

        const double Sx1 = r.Sx[k + 1], Tx1 = r.Tx[k + 1];
        const double Sxy1 = r.Sxy[k + 1], Txy1 = r.Txy[k + 1];
        const double Sy1 = r.Sy[k + 1], Ty1 = r.Ty[k + 1];

        const MatrixXd W1 = alm.R[static_cast<size_t>(k)] + Sx1 * EBtB;
        const MatrixXd W2 =
            alm.R[static_cast<size_t>(k)] + Tx1 * EB.transpose() * EB + Sx1 * Cov;

        const auto llt1 = factor_kernel(W1, "W1", k);
        const auto llt2 = factor_kernel(W2, "W2", k);
        // q1 = EB W1^{-1} EB', q2 = EB W2^{-1} EB' (scalars).
        const double q1 = EB * llt1.solve(EB.transpose());
        const double q2 = EB * llt2.solve(EB.transpose());

        r.W1[k] = W1;
        r.W2[k] = W2;
        r.H1[k] = a * Sx1 * EB;
        r.H2[k] = a * Tx1 * EB;
        r.H3[k] = f * Sxy1 * EB;
        r.H4[k] = f * Txy1 * EB;

        r.Sx[k] = a * a * Sx1 * (1.0 - Sx1 * q1);
        r.Tx[k] = a * a * Tx1 * (1.0 - Tx1 * q2);
        r.Sxy[k] = a * f * Sxy1 * (1.0 - Sx1 * q1);
        r.Txy[k] = a * f * Txy1 * (1.0 - Tx1 * q2);
        r.Sy[k] = f * f * (Sy1 - Sxy1 * Sxy1 * q1);
        r.Ty[k] = f * f * (Ty1 - Txy1 * Txy1 * q2);
    }
    return r;
}

VectorXd alm_strategy(const AlmProblem& alm, const AlmRiccati& riccati, int k, double x,
                      double Ex, double y, double Ey) {
    if (k < 0 || k >= alm.horizon)
        throw DimensionMismatch("alm_strategy: step " + std::to_string(k) +
                                " outside horizon " + std::to_string(alm.horizon));
    const Eigen::LLT<MatrixXd> llt1(riccati.W1[static_cast<size_t>(k)]);
    const Eigen::LLT<MatrixXd> llt2(riccati.W2[static_cast<size_t>(k)]);
    VectorXd u = -llt1.solve(riccati.H1[static_cast<size_t>(k)].transpose()) * (x - Ex);
    u -= llt2.solve(riccati.H2[static_cast<size_t>(k)].transpose()) * Ex;
    u -= llt1.solve(riccati.H3[static_cast<size_t>(k)].transpose()) * (y - Ey);
    u -= llt2.solve(riccati.H4[static_cast<size_t>(k)].transpose()) * Ey;
    return u;
}

double alm_optimal_value(const AlmRiccati& riccati, double mean_x, double var_x, double mean_y,
                         double var_y, double cov_xy) {
    return riccati.Sx[0] * var_x + riccati.Tx[0] * mean_x * mean_x +
           2.0 * riccati.Sxy[0] * cov_xy + 2.0 * riccati.Txy[0] * mean_x * mean_y +
           riccati.Sy[0] * var_y + riccati.Ty[0] * mean_y * mean_y;
}

double expected_terminal_equity(const AlmProblem& alm, const AlmRiccati& riccati, double mean_x0,
                                double mean_y0) {
    double Ex = mean_x0, Ey = mean_y0;
    for (int k = 0; k < alm.horizon; ++k) {
        const double a = alm.a[static_cast<size_t>(k)];
        const double f = alm.f[static_cast<size_t>(k)];
        const RowVectorXd& EB = alm.mean_excess[static_cast<size_t>(k)];
        const Eigen::LLT<MatrixXd> llt2(riccati.W2[static_cast<size_t>(k)]);
        const double q2 = EB * llt2.solve(EB.transpose());
        const double Nx = a * (1.0 - riccati.Tx[k + 1] * q2);
        const double Mxy = -f * riccati.Txy[k + 1] * q2;
        const double Ex_next = Nx * Ex + Mxy * Ey;
        Ey *= f;
        Ex = Ex_next;
    }
    return Ex - Ey;
}

MatrixXd pinv_rank_one(const MatrixXd& M, const VectorXd& c) {
    if (M.rows() != M.cols() || c.size() != M.rows())
        throw DimensionMismatch("pinv_rank_one: M must be square with c of matching size");

    // Moore-Penrose inverse of the symmetric base via eigendecomposition.
    Eigen::SelfAdjointEigenSolver<MatrixXd> es((M + M.transpose()) / 2.0);
    const VectorXd lambda = es.eigenvalues();
    const double lmax = lambda.cwiseAbs().maxCoeff();
    const double rank_tol = 1e-12 * std::max(1.0, lmax) * static_cast<double>(M.rows());
    VectorXd inv_lambda(lambda.size());
    for (int i = 0; i < lambda.size(); ++i)
        inv_lambda(i) = std::abs(lambda(i)) > rank_tol ? 1.0 / lambda(i) : 0.0;
    const MatrixXd Mpinv =
        es.eigenvectors() * inv_lambda.asDiagonal() * es.eigenvectors().transpose();

    // The identity requires c in Range(M); check via the least-squares
    // residual of M z = c with z = M^+ c.
    const double cnorm = c.norm();
    if (cnorm > 0) {
        const double residual = (M * (Mpinv * c) - c).norm() / cnorm;
        if (residual > 1e-10) throw RangeViolation(residual);
    }

    const VectorXd pc = Mpinv * c;
    const double denom = 1.0 + c.dot(pc);
    return Mpinv - (pc * pc.transpose()) / denom;
}

// --- I/O --------------------------------------------------------------------

namespace {

const std::set<std::string> kAlmKeys = {"horizon", "asset_count", "a",   "f",
                                        "mean_excess", "cov_excess", "R", "q_N",
                                        "q_bar_N", "initial"};

LoadedAlm parse_alm_json(const json& doc) {
    ju::require(doc.is_object(), "ALM document must be a JSON object");
    ju::reject_unknown_keys(doc, kAlmKeys, "alm");

    LoadedAlm out;
    const int N = ju::read_positive_int(doc, "horizon");
    const int m = ju::read_positive_int(doc, "asset_count");
    out.problem.horizon = N;
    out.problem.asset_count = m;

    auto get = [&](const char* key) -> const json& {
        ju::require(doc.contains(key), std::string("missing key \"") + key + "\"");
        return doc[key];
    };

    const VectorXd a = ju::read_vector(get("a"), N, "a");
    const VectorXd f = ju::read_vector(get("f"), N, "f");
    out.problem.a.assign(a.data(), a.data() + N);
    out.problem.f.assign(f.data(), f.data() + N);

    const MatrixXd mean_rows = ju::read_matrix(get("mean_excess"), N, m, "mean_excess");
    for (int k = 0; k < N; ++k) out.problem.mean_excess.push_back(mean_rows.row(k));

    out.problem.cov_excess = ju::read_matrix_seq(get("cov_excess"), N, m, m, "cov_excess");
    out.problem.R = ju::read_matrix_seq(get("R"), N, m, m, "R");
    ju::symmetrize_seq(out.problem.cov_excess, "cov_excess", &out.warnings);
    ju::symmetrize_seq(out.problem.R, "R", &out.warnings);

    out.problem.q_N = ju::as_finite_double(get("q_N"), "q_N");
    out.problem.q_bar_N = ju::as_finite_double(get("q_bar_N"), "q_bar_N");

    if (doc.contains("initial")) {
        const json& init = doc["initial"];
        ju::reject_unknown_keys(init, {"mean_x", "var_x", "mean_y", "var_y", "cov_xy"},
                                "initial");
        for (const char* key : {"mean_x", "var_x", "mean_y", "var_y", "cov_xy"})
            ju::require(init.contains(key), std::string("initial: missing key \"") + key + "\"");
        out.mean_x = ju::as_finite_double(init["mean_x"], "initial.mean_x");
        out.var_x = ju::as_finite_double(init["var_x"], "initial.var_x");
        out.mean_y = ju::as_finite_double(init["mean_y"], "initial.mean_y");
        out.var_y = ju::as_finite_double(init["var_y"], "initial.var_y");
        out.cov_xy = ju::as_finite_double(init["cov_xy"], "initial.cov_xy");
        out.has_initial = true;
    }
    return out;
}

}  // namespace

LoadedAlm parse_alm_text(const std::string& text) {
    return parse_alm_json(ju::parse_with_location(text));
}

LoadedAlm load_alm_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open ALM file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_alm_text(buf.str());
}

std::string alm_to_json(const AlmProblem& alm) {
    json doc;
    doc["horizon"] = alm.horizon;
    doc["asset_count"] = alm.asset_count;
    doc["a"] = alm.a;
    doc["f"] = alm.f;
    json mean_rows = json::array();
    for (const auto& row : alm.mean_excess) mean_rows.push_back(ju::row_to_json(row));
    doc["mean_excess"] = mean_rows;
    doc["cov_excess"] = ju::matrix_seq_to_json(alm.cov_excess);
    doc["R"] = ju::matrix_seq_to_json(alm.R);
    doc["q_N"] = alm.q_N;
    doc["q_bar_N"] = alm.q_bar_N;
    return doc.dump(2);
}

MatrixXd load_returns_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open returns file: " + path);

    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 0;
    size_t cols = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        // Skip blanks and comment lines.
        const size_t first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;

        std::vector<double> row;
        std::stringstream ss(line);
        std::string field;
        bool numeric = true;
        while (std::getline(ss, field, ',')) {
            try {
                size_t used = 0;
                const double v = std::stod(field, &used);
                // Trailing garbage after the number is an error, not a header.
                while (used < field.size() &&
                       (field[used] == ' ' || field[used] == '\t'))
                    ++used;
                if (used != field.size()) throw std::invalid_argument(field);
                if (!std::isfinite(v))
                    throw ParseError("returns CSV line " + std::to_string(lineno) +
                                     ": non-finite value");
                row.push_back(v);
            } catch (const std::invalid_argument&) {
                numeric = false;
                break;
            }
        }
        if (!numeric) {
            // A single non-numeric row is tolerated as a header, but only as
            // the first content row.
            if (rows.empty() && cols == 0) continue;
            throw ParseError("returns CSV line " + std::to_string(lineno) +
                             ": non-numeric field");
        }
        if (cols == 0) cols = row.size();
        if (row.size() != cols)
            throw ParseError("returns CSV line " + std::to_string(lineno) + ": expected " +
                             std::to_string(cols) + " columns, got " +
                             std::to_string(row.size()));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ParseError("returns CSV has no data rows: " + path);

    MatrixXd out(static_cast<long>(rows.size()), static_cast<long>(cols));
    for (size_t i = 0; i < rows.size(); ++i)
        for (size_t j = 0; j < cols; ++j)
            out(static_cast<long>(i), static_cast<long>(j)) = rows[i][j];
    return out;
}

namespace {

// Sample mean (row) and unbiased covariance of the rows of a block.
std::pair<RowVectorXd, MatrixXd> block_moments(const MatrixXd& block) {
    const long T = block.rows();
    const RowVectorXd mean = block.colwise().mean();
    const MatrixXd centered = block.rowwise() - mean;
    const MatrixXd cov =
        centered.transpose() * centered / static_cast<double>(T - 1);
    return {mean, ((cov + cov.transpose()) / 2.0).eval()};
}

}  // namespace

AlmProblem alm_from_returns(const MatrixXd& returns, int horizon, double a, double f,
                            const MatrixXd& R, double q_N, double q_bar_N,
                            MomentEstimation estimation) {
    if (horizon <= 0) throw DimensionMismatch("alm_from_returns: horizon must be positive");
    const long T = returns.rows();
    const long m = returns.cols();
    if (m <= 0) throw DimensionMismatch("alm_from_returns: no asset columns");
    if (R.rows() != m || R.cols() != m)
        throw DimensionMismatch("alm_from_returns: R must be asset_count x asset_count");

    AlmProblem alm;
    alm.horizon = horizon;
    alm.asset_count = static_cast<int>(m);
    alm.a.assign(static_cast<size_t>(horizon), a);
    alm.f.assign(static_cast<size_t>(horizon), f);
    alm.R.assign(static_cast<size_t>(horizon), R);
    alm.q_N = q_N;
    alm.q_bar_N = q_bar_N;

    if (estimation == MomentEstimation::pooled) {
        if (T < 2) throw DimensionMismatch("alm_from_returns: need at least 2 return rows");
        const auto [mean, cov] = block_moments(returns);
        alm.mean_excess.assign(static_cast<size_t>(horizon), mean);
        alm.cov_excess.assign(static_cast<size_t>(horizon), cov);
    } else {
        if (T % horizon != 0 || T / horizon < 2)
            throw DimensionMismatch(
                "alm_from_returns: per-step estimation needs rows divisible into horizon "
                "blocks of at least 2 rows");
        const long block = T / horizon;
        for (int k = 0; k < horizon; ++k) {
            const auto [mean, cov] = block_moments(returns.middleRows(k * block, block));
            alm.mean_excess.push_back(mean);
            alm.cov_excess.push_back(cov);
        }
    }
    return alm;
}

}  // namespace mflq
