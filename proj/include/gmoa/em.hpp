#pragma once

#include "gmoa/common.hpp"
#include "gmoa/mixture.hpp"
#include "gmoa/rng.hpp"

namespace gmoa {

struct EmConfig {
  int max_iters = 100;
  double tol = 1e-7;   // stop when |NLL change| falls below this
  bool refine = false; // opt-in quasi-Newton polish after EM; EM alone is
                       // basin-preserving, the polish can leave the basin on
                       // heavily overlapping data
  int refine_max_iters = 50;
};

/// Events worth surfacing from a fit: collapsed components that had to be
/// reseeded and variance entries pushed back up to the floor.
struct EmEvents {
  int reseeded_components = 0;
  int floored_variances = 0;
};

/// One EM update (E-step responsibilities, M-step moments), with weight and
/// variance floors applied. A component whose effective count drops below
/// 1e-8 is reinitialized at a random data point drawn from `rng` (a fixed
/// default stream when null) and counted in `events`.
MixtureParams em_step(const MixtureParams& u, const Matrix& z,
                      Rng* rng = nullptr, EmEvents* events = nullptr);

struct FitResult {
  MixtureParams u;
  double nll = 0.0;
  int iters = 0;
  EmEvents events;
};

/// Iterated EM from u0 until the NLL change drops below cfg.tol or
/// cfg.max_iters is hit. A step that would increase the NLL by more than
/// 1e-10 (possible only through the floors) is rejected and iteration stops.
/// With cfg.refine, runs quasi_newton_refine afterwards and returns
/// whichever parameters have the lower NLL.
FitResult fit(const MixtureParams& u0, const Matrix& z, const EmConfig& cfg,
              Rng* rng = nullptr);

/// Limited-memory BFGS minimization of the mixture NLL in unconstrained
/// coordinates (log variances, weight logits), mapped back to natural
/// coordinates on return. Never returns parameters with higher NLL than the
/// input.
MixtureParams quasi_newton_refine(const MixtureParams& u, const Matrix& z,
                                  int max_iters);

/// The unconstrained reparameterization used by quasi_newton_refine:
/// (means, log variances, log weights). from_unconstrained applies softmax
/// to the weight block, so to_unconstrained followed by from_unconstrained
/// is the identity on valid parameters.
Vector to_unconstrained(const MixtureParams& u);
MixtureParams from_unconstrained(const Vector& x, int k, int d);

/// Number of NLL evaluations performed by the last quasi_newton_refine /
/// fit call on this thread. Test instrumentation for convergence-budget
/// comparisons.
long nll_evaluations();
void reset_nll_evaluations();

}  // namespace gmoa
