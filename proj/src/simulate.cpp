#include "mflq/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <type_traits>
#include <vector>

#include <Eigen/Eigenvalues>

#include "mflq/errors.hpp"
#include "mflq/rng.hpp"

namespace mflq {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Symmetric PSD square root, with tiny negative eigenvalues (roundoff) clamped
// to zero so sampling never takes sqrt of a negative number.
MatrixXd psd_sqrt(const MatrixXd& M) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es((M + M.transpose()) / 2.0);
    VectorXd lambda = es.eigenvalues();
    for (int i = 0; i < lambda.size(); ++i) lambda(i) = std::sqrt(std::max(lambda(i), 0.0));
    return es.eigenvectors() * lambda.asDiagonal() * es.eigenvectors().transpose();
}

int resolve_threads(int requested, long n_paths) {
    int threads = requested > 0 ? requested
                                : static_cast<int>(std::thread::hardware_concurrency());
    if (threads <= 0) threads = 1;
    if (const char* cap_env = std::getenv("MFLQ_THREADS")) {
        const long cap = std::strtol(cap_env, nullptr, 10);
        if (cap > 0) threads = std::min<long>(threads, cap);
    }
    if (n_paths > 0) threads = static_cast<int>(std::min<long>(threads, n_paths));
    return std::max(threads, 1);
}

// Initial draw (zeta_x, zeta_y) = mean + L s with the stacked 2n moments;
// s is either standard normal or fair signs.
struct InitialDrawer {
    int n = 0;
    InitialKind kind = InitialKind::gaussian;
    VectorXd mean;  // 2n
    MatrixXd L;     // 2n x 2n

    explicit InitialDrawer(const InitialSampler& sampler) {
        n = static_cast<int>(sampler.moments.mean_x.size());
        kind = sampler.kind;
        mean.resize(2 * n);
        mean.head(n) = sampler.moments.mean_x;
        mean.tail(n) = sampler.moments.mean_y;
        MatrixXd cov(2 * n, 2 * n);
        cov.topLeftCorner(n, n) = sampler.moments.cov_x;
        cov.topRightCorner(n, n) = sampler.moments.cov_xy;
        cov.bottomLeftCorner(n, n) = sampler.moments.cov_xy.transpose();
        cov.bottomRightCorner(n, n) = sampler.moments.cov_y;
        L = psd_sqrt(cov);
    }

    std::pair<VectorXd, VectorXd> draw(CounterRng& rng) const {
        VectorXd s(2 * n);
        for (int i = 0; i < 2 * n; ++i)
            s(i) = (kind == InitialKind::gaussian) ? rng.normal() : rng.sign();
        const VectorXd xy = mean + L * s;
        return {xy.head(n), xy.tail(n)};
    }
};

// Scalar step-noise pair (w, v) with E w = E v = 0, unit second moments,
// E[wv] = rho.
struct ScalarNoiseDrawer {
    SamplerKind kind;
    double rho;

    std::pair<double, double> draw(CounterRng& rng) const {
        if (kind == SamplerKind::gaussian) {
            const double z1 = rng.normal();
            const double z2 = rng.normal();
            return {z1, rho * z1 + std::sqrt(std::max(1.0 - rho * rho, 0.0)) * z2};
        }
        // Four-point law on {-1,+1}^2: matched signs with probability (1+rho)/2.
        const double w = rng.sign();
        const double v = (rng.uniform01() < (1.0 + rho) / 2.0) ? w : -w;
        return {w, v};
    }
};

// Multinoise step draw (w; v) = L_k s, L_k the PSD root of the stacked joint
// moment [[alpha, gamma], [gamma', beta]] at step k.
struct MultiNoiseDrawer {
    SamplerKind kind;
    int p = 0;
    std::vector<MatrixXd> L;  // per step, 2p x 2p

    MultiNoiseDrawer(SamplerKind kind_, const std::vector<MatrixXd>& alpha,
                     const std::vector<MatrixXd>& beta, const std::vector<MatrixXd>& gamma)
        : kind(kind_) {
        p = alpha.empty() ? 0 : static_cast<int>(alpha[0].rows());
        L.reserve(alpha.size());
        for (size_t k = 0; k < alpha.size(); ++k) {
            MatrixXd joint(2 * p, 2 * p);
            joint.topLeftCorner(p, p) = alpha[k];
            joint.topRightCorner(p, p) = gamma[k];
            joint.bottomLeftCorner(p, p) = gamma[k].transpose();
            joint.bottomRightCorner(p, p) = beta[k];
            L.push_back(psd_sqrt(joint));
        }
    }

    // Returns the stacked vector (w; v), size 2p.
    VectorXd draw(CounterRng& rng, int k) const {
        VectorXd s(2 * p);
        for (int i = 0; i < 2 * p; ++i)
            s(i) = (kind == SamplerKind::gaussian) ? rng.normal() : rng.sign();
        return L[static_cast<size_t>(k)] * s;
    }
};

template <class Spec>
constexpr bool kIsMultiNoise = std::is_same_v<Spec, MultiNoiseProblemSpec>;

// Advances one path through the k -> k+1 transition.
template <class Spec, class Drawer>
void advance_state(const Spec& spec, const Drawer& drawer, CounterRng& rng, int k, VectorXd& x,
                   VectorXd& y, const VectorXd& u, const VectorXd& Ex, const VectorXd& Eu,
                   const VectorXd& Ey) {
    if constexpr (!kIsMultiNoise<Spec>) {
        const auto [w, v] = drawer.draw(rng);
        const VectorXd drift =
            spec.A[k] * x + spec.A_bar[k] * Ex + spec.B[k] * u + spec.B_bar[k] * Eu;
        const VectorXd diffusion =
            spec.C[k] * x + spec.C_bar[k] * Ex + spec.D[k] * u + spec.D_bar[k] * Eu;
        const VectorXd y_drift = spec.F[k] * y + spec.F_bar[k] * Ey;
        const VectorXd y_diffusion = spec.G[k] * y + spec.G_bar[k] * Ey;
        x = drift + diffusion * w;
        y = y_drift + y_diffusion * v;
    } else {
        const VectorXd wv = drawer.draw(rng, k);
        const int p = spec.noise_dim;
        VectorXd x_next =
            spec.A[k] * x + spec.A_bar[k] * Ex + spec.B[k] * u + spec.B_bar[k] * Eu;
        VectorXd y_next = spec.F[k] * y + spec.F_bar[k] * Ey;
        for (int i = 0; i < p; ++i) {
            x_next.noalias() += (spec.C[k][i] * x + spec.C_bar[k][i] * Ex + spec.D[k][i] * u +
                                 spec.D_bar[k][i] * Eu) *
                                wv(i);
            y_next.noalias() += (spec.G[k][i] * y + spec.G_bar[k][i] * Ey) * wv(p + i);
        }
        x = std::move(x_next);
        y = std::move(y_next);
    }
}

template <class Spec>
double stage_cost(const Spec& spec, int k, const VectorXd& x, const VectorXd& y,
                  const VectorXd& u, const VectorXd& Ex, const VectorXd& Ey,
                  const VectorXd& Eu) {
    const VectorXd s = x - y;
    const VectorXd sm = Ex - Ey;
    return s.dot(spec.Q[k] * s) + sm.dot(spec.Q_bar[k] * sm) + u.dot(spec.R[k] * u) +
           Eu.dot(spec.R_bar[k] * Eu);
}

template <class Spec>
double terminal_cost(const Spec& spec, const VectorXd& x, const VectorXd& y, const VectorXd& Ex,
                     const VectorXd& Ey) {
    const int N = spec.horizon;
    const VectorXd s = x - y;
    const VectorXd sm = Ex - Ey;
    return s.dot(spec.Q[N] * s) + sm.dot(spec.Q_bar[N] * sm);
}

template <class Spec, class Drawer>
SimulationResult run_simulation(const Spec& spec, const FeedbackPolicy& policy,
                                const InitialSampler& init, const Drawer& drawer,
                                std::uint64_t seed, const SimulateOptions& options) {
    const int N = spec.horizon;
    const int n = spec.state_dim;
    if (policy.horizon != N || policy.state_dim != n)
        throw DimensionMismatch("simulate: policy shape does not match the problem");
    if (static_cast<int>(init.moments.mean_x.size()) != n)
        throw DimensionMismatch("simulate: initial moments have wrong state dimension");

    const long P = std::max<long>(options.n_paths, 0);
    SimulationResult result;
    result.n_paths = P;
    result.expected =
        policy_mean_flow(spec, policy, init.moments.mean_x, init.moments.mean_y);
    result.terminal_x.resize(static_cast<size_t>(P));
    result.terminal_y.resize(static_cast<size_t>(P));
    result.path_cost.resize(static_cast<size_t>(P));
    if (P == 0) return result;

    const InitialDrawer initial(init);
    const int threads = resolve_threads(options.threads, P);

    if (!options.population_coupling) {
        // Default: analytic mean-field closure.  Each path is a pure function
        // of (seed, path index), so any partition of paths over workers gives
        // identical per-path outputs; the reduction below is a fixed-order
        // single-threaded pass.
        const auto& flow = result.expected;
        auto run_one = [&](long path) {
            CounterRng rng(seed, 2 * static_cast<std::uint64_t>(path));
            CounterRng rng_init(seed, 2 * static_cast<std::uint64_t>(path) + 1);
            auto [x, y] = initial.draw(rng_init);
            double cost = 0;
            for (int k = 0; k < N; ++k) {
                const VectorXd u = policy.Kx[k] * (x - flow.Ex[k]) +
                                   policy.Kx_bar[k] * flow.Ex[k] +
                                   policy.Ky[k] * (y - flow.Ey[k]) +
                                   policy.Ky_bar[k] * flow.Ey[k];
                cost += stage_cost(spec, k, x, y, u, flow.Ex[k], flow.Ey[k], flow.Eu[k]);
                advance_state(spec, drawer, rng, k, x, y, u, flow.Ex[k], flow.Eu[k],
                              flow.Ey[k]);
                if (!x.allFinite() || !y.allFinite()) throw NonFinite(path, k);
            }
            cost += terminal_cost(spec, x, y, flow.Ex[N], flow.Ey[N]);
            result.terminal_x[static_cast<size_t>(path)] = std::move(x);
            result.terminal_y[static_cast<size_t>(path)] = std::move(y);
            result.path_cost[static_cast<size_t>(path)] = cost;
        };

        std::exception_ptr failure;
        std::mutex failure_mutex;
        std::vector<std::thread> workers;
        const long chunk = (P + threads - 1) / threads;
        for (int t = 0; t < threads; ++t) {
            const long lo = t * chunk;
            const long hi = std::min(P, lo + chunk);
            if (lo >= hi) break;
            workers.emplace_back([&, lo, hi] {
                try {
                    for (long path = lo; path < hi; ++path) run_one(path);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            });
        }
        for (auto& w : workers) w.join();
        if (failure) std::rethrow_exception(failure);
    } else {
        // Population coupling: the mean-field terms are cross-path averages,
        // recomputed every step, so all paths advance in lockstep.
        std::vector<VectorXd> xs(static_cast<size_t>(P)), ys(static_cast<size_t>(P));
        std::vector<CounterRng> rngs;
        rngs.reserve(static_cast<size_t>(P));
        for (long path = 0; path < P; ++path) {
            CounterRng rng_init(seed, 2 * static_cast<std::uint64_t>(path) + 1);
            auto [x, y] = initial.draw(rng_init);
            xs[static_cast<size_t>(path)] = std::move(x);
            ys[static_cast<size_t>(path)] = std::move(y);
            rngs.emplace_back(seed, 2 * static_cast<std::uint64_t>(path));
        }

        auto population_mean = [P](const std::vector<VectorXd>& vs) {
            VectorXd acc = VectorXd::Zero(vs[0].size());
            for (const auto& v : vs) acc += v;  // fixed path order
            return (acc / static_cast<double>(P)).eval();
        };

        std::vector<VectorXd> us(static_cast<size_t>(P));
        for (int k = 0; k < N; ++k) {
            const VectorXd Ex = population_mean(xs);
            const VectorXd Ey = population_mean(ys);
            for (long path = 0; path < P; ++path) {
                const auto i = static_cast<size_t>(path);
                us[i] = policy.Kx[k] * (xs[i] - Ex) + policy.Kx_bar[k] * Ex +
                        policy.Ky[k] * (ys[i] - Ey) + policy.Ky_bar[k] * Ey;
            }
            const VectorXd Eu = population_mean(us);
            result.expected.Ex[k] = Ex;
            result.expected.Ey[k] = Ey;
            result.expected.Eu[k] = Eu;
            for (long path = 0; path < P; ++path) {
                const auto i = static_cast<size_t>(path);
                result.path_cost[i] += stage_cost(spec, k, xs[i], ys[i], us[i], Ex, Ey, Eu);
                advance_state(spec, drawer, rngs[i], k, xs[i], ys[i], us[i], Ex, Eu, Ey);
                if (!xs[i].allFinite() || !ys[i].allFinite()) throw NonFinite(path, k);
            }
        }
        const VectorXd ExN = population_mean(xs);
        const VectorXd EyN = population_mean(ys);
        result.expected.Ex[N] = ExN;
        result.expected.Ey[N] = EyN;
        for (long path = 0; path < P; ++path) {
            const auto i = static_cast<size_t>(path);
            result.path_cost[i] += terminal_cost(spec, xs[i], ys[i], ExN, EyN);
            result.terminal_x[i] = std::move(xs[i]);
            result.terminal_y[i] = std::move(ys[i]);
        }
    }

    const auto [mean, stderr_] = estimate_cost(result.path_cost);
    result.cost_mean = mean;
    result.cost_std_err = stderr_;
    return result;
}

ExpectedTrajectory mean_flow_impl(int N, const std::vector<MatrixXd>& As,
                                  const std::vector<MatrixXd>& Bs,
                                  const std::vector<MatrixXd>& Fs, const FeedbackPolicy& policy,
                                  const VectorXd& mean_x0, const VectorXd& mean_y0) {
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
        // In the mean, u averages to Kx_bar Ex + Ky_bar Ey (centered parts drop).
        traj.Nx[k] = As[k] + Bs[k] * policy.Kx_bar[k];
        traj.Mxy[k] = Bs[k] * policy.Ky_bar[k];
        traj.Oy[k] = Fs[k];
        traj.Eu[k] = policy.Kx_bar[k] * traj.Ex[k] + policy.Ky_bar[k] * traj.Ey[k];
        traj.Ex[k + 1] = traj.Nx[k] * traj.Ex[k] + traj.Mxy[k] * traj.Ey[k];
        traj.Ey[k + 1] = traj.Oy[k] * traj.Ey[k];
    }
    return traj;
}

}  // namespace

NoiseSampler NoiseSampler::for_spec(const ProblemSpec& spec, SamplerKind kind,
                                    std::uint64_t seed) {
    NoiseSampler sampler;
    sampler.kind = kind;
    sampler.seed = seed;
    sampler.rho = spec.rho;
    return sampler;
}

NoiseSampler NoiseSampler::for_spec(const MultiNoiseProblemSpec& spec, SamplerKind kind,
                                    std::uint64_t seed) {
    NoiseSampler sampler;
    sampler.kind = kind;
    sampler.seed = seed;
    sampler.alpha = spec.alpha;
    sampler.beta = spec.beta;
    sampler.gamma = spec.gamma;
    return sampler;
}

SimulationResult simulate_closed_loop(const ProblemSpec& spec, const FeedbackPolicy& policy,
                                      const InitialSampler& init, const NoiseSampler& noise,
                                      const SimulateOptions& options) {
    const ScalarNoiseDrawer drawer{noise.kind, noise.rho};
    return run_simulation(spec, policy, init, drawer, noise.seed, options);
}

SimulationResult simulate_closed_loop(const MultiNoiseProblemSpec& spec,
                                      const FeedbackPolicy& policy, const InitialSampler& init,
                                      const NoiseSampler& noise, const SimulateOptions& options) {
    if (noise.alpha.size() != static_cast<size_t>(spec.horizon))
        throw DimensionMismatch("simulate: sampler moments do not cover the horizon");
    const MultiNoiseDrawer drawer(noise.kind, noise.alpha, noise.beta, noise.gamma);
    return run_simulation(spec, policy, init, drawer, noise.seed, options);
}

std::pair<double, double> estimate_cost(const std::vector<double>& path_costs) {
    const size_t n = path_costs.size();
    if (n == 0) return {0.0, 0.0};
    double sum = 0;
    for (const double c : path_costs) sum += c;
    const double mean = sum / static_cast<double>(n);
    if (n == 1) return {mean, 0.0};
    double ss = 0;
    for (const double c : path_costs) ss += (c - mean) * (c - mean);
    const double sample_var = ss / static_cast<double>(n - 1);
    return {mean, std::sqrt(sample_var / static_cast<double>(n))};
}

ExpectedTrajectory policy_mean_flow(const ProblemSpec& spec, const FeedbackPolicy& policy,
                                    const VectorXd& mean_x0, const VectorXd& mean_y0) {
    const int N = spec.horizon;
    std::vector<MatrixXd> As(static_cast<size_t>(N)), Bs(static_cast<size_t>(N)),
        Fs(static_cast<size_t>(N));
    for (int k = 0; k < N; ++k) {
        As[k] = spec.A[k] + spec.A_bar[k];
        Bs[k] = spec.B[k] + spec.B_bar[k];
        Fs[k] = spec.F[k] + spec.F_bar[k];
    }
    return mean_flow_impl(N, As, Bs, Fs, policy, mean_x0, mean_y0);
}

ExpectedTrajectory policy_mean_flow(const MultiNoiseProblemSpec& spec,
                                    const FeedbackPolicy& policy, const VectorXd& mean_x0,
                                    const VectorXd& mean_y0) {
    const int N = spec.horizon;
    std::vector<MatrixXd> As(static_cast<size_t>(N)), Bs(static_cast<size_t>(N)),
        Fs(static_cast<size_t>(N));
    for (int k = 0; k < N; ++k) {
        As[k] = spec.A[k] + spec.A_bar[k];
        Bs[k] = spec.B[k] + spec.B_bar[k];
        Fs[k] = spec.F[k] + spec.F_bar[k];
    }
    return mean_flow_impl(N, As, Bs, Fs, policy, mean_x0, mean_y0);
}

}  // namespace mflq
