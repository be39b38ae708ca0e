#pragma once

// Monte Carlo evaluation of the closed loop.  Each path evolves the pair
// (x, y) under a feedback policy; the mean-field quantities Ex_k, Ey_k, Eu_k
// that the dynamics and cost require are, by default, the analytic means of
// the closed loop (exact under linear dynamics).  A population-coupling mode
// substitutes cross-path averages instead, to demonstrate convergence of the
// interacting-particle picture to the mean-field limit.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "mflq/model.hpp"
#include "mflq/policy.hpp"

namespace mflq {

enum class SamplerKind { gaussian, rademacher };

// Noise sampler for one step of the pair (w, v).
//
// Scalar case: w, v are scalars with E w = E v = 0, E w^2 = E v^2 = 1,
// E[w v] = rho.  gaussian draws a correlated normal pair; rademacher draws
// the four-point law on {-1,+1}^2 with P(w = v) = (1 + rho)/2 on matched
// signs — the minimal law with these moments, and the one the exact tree
// oracle uses.
//
// Multinoise case: (w, v) in R^{2p} with per-step joint second moment
// [[alpha, gamma], [gamma', beta]].  gaussian draws jointly normal vectors;
// rademacher draws L s with s a vector of 2p independent fair signs and L the
// PSD square root of the joint moment — finitely supported with the exact
// first two moments (it reduces to +/- the rows of L, not to +/-1 entries).
struct NoiseSampler {
    SamplerKind kind = SamplerKind::gaussian;
    std::uint64_t seed = 0;

    // Scalar case.
    double rho = 0.0;

    // Multinoise case: per-step moment triples (copied from the spec).
    std::vector<Eigen::MatrixXd> alpha, beta, gamma;

    static NoiseSampler for_spec(const ProblemSpec& spec, SamplerKind kind, std::uint64_t seed);
    static NoiseSampler for_spec(const MultiNoiseProblemSpec& spec, SamplerKind kind,
                                 std::uint64_t seed);
};

// Initial-condition sampler.  gaussian matches InitialMoments with a jointly
// normal draw; two_point uses the sign construction mean + L s (L the PSD
// square root of the stacked covariance, s independent fair signs), which has
// the same first two moments and finite support — a genuine two-point law
// when the stacked covariance has rank one.
enum class InitialKind { gaussian, two_point };

struct InitialSampler {
    InitialKind kind = InitialKind::gaussian;
    InitialMoments moments;
};

struct SimulationResult {
    long n_paths = 0;
    std::vector<Eigen::VectorXd> terminal_x, terminal_y;  // per path
    std::vector<double> path_cost;                        // per path
    double cost_mean = 0;
    double cost_std_err = 0;  // sample std / sqrt(n_paths)
    ExpectedTrajectory expected;  // the mean-field closure actually used
};

struct SimulateOptions {
    long n_paths = 0;
    bool population_coupling = false;  // cross-path means instead of analytic
    int threads = 0;                   // 0: hardware default, capped by MFLQ_THREADS
};

// Runs n_paths closed-loop paths.  Deterministic given (spec, policy,
// samplers, options): per-path noise is drawn from counter-based streams
// keyed by (seed, path), and the reduction order is fixed, so results are
// independent of thread count.  Throws NonFinite if a path blows up.
//
// The analytic closure evolves the means under the *given* policy
// (Eu = Kx_bar Ex + Ky_bar Ey in the mean), so perturbed/suboptimal policies
// are costed against their own mean flow, not the optimal one.
SimulationResult simulate_closed_loop(const ProblemSpec& spec, const FeedbackPolicy& policy,
                                      const InitialSampler& init, const NoiseSampler& noise,
                                      const SimulateOptions& options);
SimulationResult simulate_closed_loop(const MultiNoiseProblemSpec& spec,
                                      const FeedbackPolicy& policy, const InitialSampler& init,
                                      const NoiseSampler& noise, const SimulateOptions& options);

// Unbiased sample mean and standard error of per-path realized costs.
std::pair<double, double> estimate_cost(const std::vector<double>& path_costs);

// Expected trajectory of the closed loop under an arbitrary feedback policy
// (not necessarily the optimal one): Eu = Kx_bar Ex + Ky_bar Ey,
// Ex' = (A + A_bar) Ex + (B + B_bar) Eu, Ey' = (F + F_bar) Ey.
ExpectedTrajectory policy_mean_flow(const ProblemSpec& spec, const FeedbackPolicy& policy,
                                    const Eigen::VectorXd& mean_x0,
                                    const Eigen::VectorXd& mean_y0);
ExpectedTrajectory policy_mean_flow(const MultiNoiseProblemSpec& spec,
                                    const FeedbackPolicy& policy,
                                    const Eigen::VectorXd& mean_x0,
                                    const Eigen::VectorXd& mean_y0);

}  // namespace mflq
