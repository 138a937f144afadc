#pragma once

#include "gmoa/common.hpp"
#include "gmoa/mixture.hpp"

namespace gmoa {

/// Value of the cluster-separation objective g together with its pieces.
struct SeparationReport {
  double g = 0.0;
  Matrix pairwise_bd;          // K x K, symmetric, zero diagonal
  double weight_penalty = 0.0; // sum_k log pi_k
};

/// Bhattacharyya distance between two diagonal-covariance Gaussians:
///
///   BD = 1/8 (m_i - m_j)^T S^-1 (m_i - m_j)
///      + 1/2 log( det S / sqrt(det S_i det S_j) ),   S = (S_i + S_j)/2
///
/// Throws std::domain_error on nonpositive variances.
double bhattacharyya(const Vector& mean_i, const Vector& var_i,
                     const Vector& mean_j, const Vector& var_j);

/// g(u) = 2/(K(K-1)) * sum_{i<j} BD(u_i, u_j) + sum_k log pi_k.
/// Large g means well separated components with non-degenerate weights.
SeparationReport g_value(const MixtureParams& u);

/// Exact gradient of g_value in packed-u coordinates. Weight block is
/// 1/pi_k (free coordinates).
Vector grad_g(const MixtureParams& u);

}  // namespace gmoa
