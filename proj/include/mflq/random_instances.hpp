// Random well-posed problem instances, used by verification sweeps.
//
// All generators draw from a caller-supplied counter RNG, so a (seed, stream)
// pair pins the instance exactly.  Weights are built to satisfy the
// validation conditions by construction: Q is PSD with Q + Q_bar kept PSD,
// R is PD with R + R_bar kept PD, and second-moment blocks are formed as
// Gram matrices.

#pragma once

#include <vector>

#include <Eigen/Dense>

#include "mflq/alm.hpp"
#include "mflq/model.hpp"
#include "mflq/oracle.hpp"
#include "mflq/rng.hpp"

namespace mflq {

// Uniform entries in [-scale, scale].
Eigen::MatrixXd random_matrix(CounterRng& rng, int rows, int cols, double scale);

// Gram matrix M M' / n of a random square factor with entries in
// [-scale, scale]; always PSD.
Eigen::MatrixXd random_psd(CounterRng& rng, int n, double scale);

// Uniform integer in [lo, hi].
int random_between(CounterRng& rng, int lo, int hi);

// Scalar-correlation problem with the given shape; coefficient magnitudes
// are tamed so short-horizon closed loops stay well-scaled.
ProblemSpec random_scalar_problem(CounterRng& rng, int horizon, int state_dim,
                                  int control_dim);
// Shape drawn from small ranges (horizon 1..3, dims 1..2).
ProblemSpec random_scalar_problem(CounterRng& rng);

// Channel-noise problem; the per-step second-moment block is a random PSD
// Gram matrix, so the w/v cross moment is not symmetric in general.
MultiNoiseProblemSpec random_multinoise_problem(CounterRng& rng, int horizon, int state_dim,
                                                int control_dim, int noise_dim);
// Shape drawn from small ranges (horizon 1..2, dims 1..2).
MultiNoiseProblemSpec random_multinoise_problem(CounterRng& rng);

// Either a point mass (two_atom false) or a 0.3/0.7 two-point law.
InitialSupport random_initial_support(CounterRng& rng, int state_dim, bool two_atom);

// Asset-liability instance: growth factors in [0.7, 1.3], small mean excess
// returns, PSD excess covariance, PD allocation penalty, and terminal
// weights with q_N >= 0 and q_N + q_bar_N >= 0.
AlmProblem random_alm_problem(CounterRng& rng, int horizon, int asset_count);
// Shape drawn from small ranges (horizon 1..3, assets 1..3).
AlmProblem random_alm_problem(CounterRng& rng);

// One exact sign-support per step from the problem's (alpha, beta, gamma).
std::vector<NoiseSupport> sign_supports_for(const MultiNoiseProblemSpec& spec);

}  // namespace mflq
