#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gmoa/common.hpp"
#include "gmoa/em.hpp"
#include "gmoa/mixture.hpp"
#include "gmoa/reducer.hpp"

namespace gmoa::bilevel {

// Outer-loop configuration. eta0 is the ascent rate on theta (and the
// warm-start half step on u); delta the finite-difference step for the
// Hessian and mixed-partial blocks.
struct GmoaConfig {
  double eta0 = 0.005;
  int n_iter = 100;
  double delta = 1e-5;
  EmConfig em;
  bool backtrack = true;    // halve eta until g does not decrease
  bool carry_eta = false;   // keep the backtracked eta for the next step;
                            // false resets to eta0 every iteration
  std::uint64_t seed = 0;
  int k = 2;                // mixture size when no initial u is given
  bool reduce_weights = true;  // eliminate the last weight coordinate from
                               // the solve; false keeps all K (regularized)
  double manifold_slack = 1e-2;  // stationarity tolerance after re-fitting
  double stop_tol = 1e-8;        // stop when the theta step is below this
  int n_threads = 1;
};

// A point (u_theta, theta) with its energies. E is the mixture NLL of the
// projected data; g the separation objective.
struct ManifoldState {
  MixtureParams u;
  ReducerParams theta;
  double e = 0.0;
  double g = 0.0;
  int iter = 0;
};

struct TrajectoryRecord {
  int iter = 0;
  double e = 0.0;
  double g = 0.0;
  double eta = 0.0;
  std::string flags;  // '|'-joined tokens: backtrack, backtrack_exhausted,
                      // clamped, tikhonov, off_manifold, converged, truncated
  Vector theta_flat;
  Vector u_packed;
};

struct Trajectory {
  std::vector<TrajectoryRecord> records;
  bool truncated = false;
};

// d^2 E / du dtheta, by central differences over the packed mixture
// coordinates of the exact theta-gradient. Row j is the theta-gradient
// sensitivity to u_j; l = theta.flat_size(). Variance coordinates whose
// downward perturbation would cross the floor are clamped there (counted in
// clamp_log). Rows are independent, so the j loop may run on n_threads.
Matrix mixed_partial(const MixtureParams& u, const ReducerParams& theta,
                     const Matrix& x, double delta,
                     ClampLog* clamp_log = nullptr, int n_threads = 1);

// Solves delta = -grad_g^T H^{-1} M without forming an inverse. The solve
// tries H, then H + lambda I for lambda in {1e-8, 1e-6, 1e-4}; past that it
// throws StepFailure. cond_out gets |eig_max| / |eig_min| of the matrix as
// passed in, tikhonov_out the shift that succeeded.
Vector implicit_delta(const Matrix& hess, const Matrix& mixed,
                      const Vector& grad_g, double* cond_out = nullptr,
                      double* tikhonov_out = nullptr);

struct ImplicitResult {
  Vector delta;                    // ascent direction in theta space
  double cond = 0.0;               // Hessian condition estimate
  double tikhonov = 0.0;           // shift applied by the solve
  double manifold_residual = 0.0;  // reduced-coordinate NLL gradient norm
  int clamped = 0;                 // floor clamps during differencing
};

// Assembles grad_g, the u-Hessian of E, and the mixed block at (u, theta)
// and forms the implicit manifold gradient of g with respect to theta.
// The mixture simplex makes the weight block of H rank-deficient, so by
// default the last weight coordinate is eliminated before the solve
// (cfg.reduce_weights); the full-coordinate variant relies on the Tikhonov
// shift instead. manifold_residual is reported in the reduced coordinates,
// where a fitted u is stationary; callers treat values above
// cfg.manifold_slack as an off-manifold warning.
ImplicitResult implicit_grad(const MixtureParams& u,
                             const ReducerParams& theta, const Matrix& x,
                             const GmoaConfig& cfg);

// The full outer loop: initial minimization (from u_init when given, else a
// seeded k-means moment start with cfg.k components), then n_iter ascent
// steps on theta with warm-started re-minimization of u after each. Stops
// early when the theta step drops below cfg.stop_tol. If the linear solve
// fails beyond its regularization budget the best-g state seen so far is
// returned and the trajectory is marked truncated.
std::pair<ManifoldState, Trajectory> gmoa_run(
    const Matrix& x, const ReducerParams& theta0,
    const std::optional<MixtureParams>& u_init, const GmoaConfig& cfg);

// One row of the energy surface sweep: theta, the fitted mean gap, and the
// NLL at the constrained optimum.
struct SurfaceRow {
  Vector theta;
  double delta_mu = 0.0;  // means(0) - means(1) of the fitted projection
  double e = 0.0;
  bool ok = true;
};

// For each grid theta, minimizes the NLL over the two component means only
// (variances and weights held at the supplied knowns) and reports the mean
// gap at the optimum. Each point is solved from symmetric moment starts plus
// the previous grid solution, keeping the lowest E, so the swept gap is the
// global constrained optimum up to EM tolerance. Requires a 1D projection
// and exactly two components.
std::vector<SurfaceRow> manifold_surface(const std::vector<ReducerParams>& grid,
                                         const Matrix& x,
                                         const Matrix& known_variances,
                                         const Vector& known_weights,
                                         const EmConfig& em_cfg);

// CSV sinks. Trajectory: iter,E,g,eta,flags,theta1..thetaL,u1..uM.
// Surface: theta1[,theta2],delta_mu,E,flags.
void write_trajectory_csv(const Trajectory& traj, const std::string& path);
void write_surface_csv(const std::vector<SurfaceRow>& rows,
                       const std::string& path);

}  // namespace gmoa::bilevel
