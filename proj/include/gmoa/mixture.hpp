#pragma once

#include "gmoa/common.hpp"

namespace gmoa {

/// Lower bound on every diagonal variance entry; keeps the likelihood finite
/// when a component tries to collapse onto a single point.
inline constexpr double kVarFloor = 1e-6;

/// Lower bound on mixture weights; keeps components from degenerating.
inline constexpr double kWeightFloor = 1e-4;

/// Diagonal-covariance Gaussian mixture parameters.
///
/// means and variances are K x d (one row per component), weights is a
/// length-K simplex vector. An isotropic component is just a row with equal
/// variance entries, so the single-variance mode needs no separate type.
struct MixtureParams {
  Matrix means;      // K x d
  Matrix variances;  // K x d, entries >= kVarFloor
  Vector weights;    // K, nonnegative, sums to 1

  int components() const { return static_cast<int>(means.rows()); }
  int dim() const { return static_cast<int>(means.cols()); }

  /// Throws std::invalid_argument on shape mismatch, variances below the
  /// floor, negative weights, or weights not summing to 1 within 1e-12.
  /// Single-component parameter sets are structurally valid; K >= 2 is only
  /// required where pairwise separation is involved.
  void validate() const;

  /// Isotropic constructor: one variance per component, broadcast across
  /// dimensions.
  static MixtureParams isotropic(const Matrix& means, const Vector& variances,
                                 const Vector& weights);
};

/// Flat coordinate vector u. Order is fixed: for each component k,
/// (mean_k[0..d), variance_k[0..d), weight_k), giving length K*(2d+1).
/// All derivative code indexes this layout.
int packed_size(int k, int d);
Vector pack(const MixtureParams& u);
MixtureParams unpack(const Vector& packed, int k, int d);

/// log N(z; mean, diag(variance)). Throws std::domain_error if any variance
/// entry is nonpositive.
double gaussian_logpdf(const Vector& z, const Vector& mean,
                       const Vector& variance);

/// Negative log-likelihood of Z (N x d, one point per row) under the
/// mixture, log-sum-exp stabilized, per-sample terms reduced with
/// fixed-order pairwise summation.
double mixture_nll(const MixtureParams& u, const Matrix& z);

/// N x K posterior responsibilities; each row sums to 1.
Matrix responsibilities(const MixtureParams& u, const Matrix& z);

/// Central-difference gradient of mixture_nll with respect to the packed
/// coordinates, step `delta` per coordinate. A perturbation that would push
/// a variance below kVarFloor is clamped on the perturbed copy and counted
/// in `clamps` when given.
Vector grad_nll_u_fd(const MixtureParams& u, const Matrix& z, double delta,
                     ClampLog* clamps = nullptr);

/// Exact gradient of mixture_nll in packed coordinates, via
/// responsibilities. Weight coordinates are treated as free (no simplex
/// constraint), matching what independent perturbation of the packed vector
/// measures.
Vector grad_nll_u_analytic(const MixtureParams& u, const Matrix& z);

/// Hessian of mixture_nll in packed coordinates: central differences of the
/// analytic gradient, symmetrized as (H + H^T)/2.
Matrix hessian_nll_u(const MixtureParams& u, const Matrix& z, double delta,
                     ClampLog* clamps = nullptr);

/// Nearest simplex point with a kWeightFloor lower bound on every entry:
/// mass below the floor is clipped and the excess redistributed
/// proportionally, so the result sums to 1 exactly (within rounding) and
/// every entry is >= kWeightFloor.
Vector floor_weights(Vector w);

/// Euclidean projection onto the probability simplex.
Vector project_to_simplex(const Vector& w);

}  // namespace gmoa
