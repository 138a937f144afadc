#include "gmoa/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace gmoa {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

/// N x K matrix of log(pi_k) + log N(z_i; mu_k, var_k).
Matrix weighted_log_density(const MixtureParams& u, const Matrix& z) {
  const int n = static_cast<int>(z.rows());
  const int k = u.components();
  const int d = u.dim();
  Matrix out(n, k);
  for (int c = 0; c < k; ++c) {
    if (u.weights(c) <= 0.0)
      throw std::domain_error("mixture weight must be positive");
    if ((u.variances.row(c).array() <= 0.0).any())
      throw std::domain_error("mixture variance must be positive");
    const double log_norm = std::log(u.weights(c)) - 0.5 * d * kLog2Pi -
                            0.5 * u.variances.row(c).array().log().sum();
    Matrix diff = z.rowwise() - u.means.row(c);
    out.col(c) =
        log_norm -
        0.5 * (diff.array().square().rowwise() / u.variances.row(c).array())
                  .rowwise()
                  .sum();
  }
  return out;
}

void check_points(const MixtureParams& u, const Matrix& z) {
  if (z.rows() < 1) throw std::invalid_argument("dataset must be nonempty");
  if (z.cols() != u.dim())
    throw std::invalid_argument("point dimension does not match mixture");
}

double clamp_variance_coord(double v, ClampLog* clamps) {
  if (v < kVarFloor) {
    if (clamps) ++clamps->variance_clamps;
    return kVarFloor;
  }
  return v;
}

/// Packed coordinate j is a variance coordinate iff j mod (2d+1) lies in
/// [d, 2d).
bool is_variance_coord(int j, int d) {
  const int r = j % (2 * d + 1);
  return r >= d && r < 2 * d;
}

}  // namespace

void MixtureParams::validate() const {
  const int k = components();
  const int d = dim();
  if (k < 1) throw std::invalid_argument("mixture needs at least 1 component");
  if (d < 1) throw std::invalid_argument("mixture dimension must be >= 1");
  if (variances.rows() != k || variances.cols() != d)
    throw std::invalid_argument("variances shape does not match means");
  if (weights.size() != k)
    throw std::invalid_argument("weights length does not match components");
  if ((variances.array() < kVarFloor).any())
    throw std::invalid_argument("variance entry below floor");
  if ((weights.array() < 0.0).any())
    throw std::invalid_argument("negative mixture weight");
  if (std::abs(weights.sum() - 1.0) > 1e-12)
    throw std::invalid_argument("mixture weights must sum to 1");
}

MixtureParams MixtureParams::isotropic(const Matrix& means,
                                       const Vector& variances,
                                       const Vector& weights) {
  MixtureParams u;
  u.means = means;
  u.variances = variances.replicate(1, means.cols());
  u.weights = weights;
  return u;
}

int packed_size(int k, int d) { return k * (2 * d + 1); }

Vector pack(const MixtureParams& u) {
  const int k = u.components();
  const int d = u.dim();
  Vector out(packed_size(k, d));
  int at = 0;
  for (int c = 0; c < k; ++c) {
    out.segment(at, d) = u.means.row(c).transpose();
    out.segment(at + d, d) = u.variances.row(c).transpose();
    out(at + 2 * d) = u.weights(c);
    at += 2 * d + 1;
  }
  return out;
}

MixtureParams unpack(const Vector& packed, int k, int d) {
  if (packed.size() != packed_size(k, d))
    throw std::invalid_argument("packed vector length does not match (K, d)");
  MixtureParams u;
  u.means.resize(k, d);
  u.variances.resize(k, d);
  u.weights.resize(k);
  int at = 0;
  for (int c = 0; c < k; ++c) {
    u.means.row(c) = packed.segment(at, d).transpose();
    u.variances.row(c) = packed.segment(at + d, d).transpose();
    u.weights(c) = packed(at + 2 * d);
    at += 2 * d + 1;
  }
  return u;
}

double gaussian_logpdf(const Vector& z, const Vector& mean,
                       const Vector& variance) {
  if ((variance.array() <= 0.0).any())
    throw std::domain_error("gaussian_logpdf: nonpositive variance");
  const int d = static_cast<int>(z.size());
  if (mean.size() != d || variance.size() != d)
    throw std::invalid_argument("gaussian_logpdf: shape mismatch");
  const double quad =
      ((z - mean).array().square() / variance.array()).sum();
  return -0.5 * d * kLog2Pi - 0.5 * variance.array().log().sum() - 0.5 * quad;
}

double mixture_nll(const MixtureParams& u, const Matrix& z) {
  check_points(u, z);
  const Matrix logd = weighted_log_density(u, z);
  const int n = static_cast<int>(z.rows());
  std::vector<double> terms(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double m = logd.row(i).maxCoeff();
    terms[static_cast<std::size_t>(i)] =
        m + std::log((logd.row(i).array() - m).exp().sum());
  }
  return -pairwise_sum(terms);
}

Matrix responsibilities(const MixtureParams& u, const Matrix& z) {
  check_points(u, z);
  Matrix logd = weighted_log_density(u, z);
  for (int i = 0; i < logd.rows(); ++i) {
    const double m = logd.row(i).maxCoeff();
    Eigen::ArrayXd e = (logd.row(i).array() - m).exp();
    logd.row(i) = e / e.sum();
  }
  return logd;
}

Vector grad_nll_u_fd(const MixtureParams& u, const Matrix& z, double delta,
                     ClampLog* clamps) {
  if (delta <= 0.0) throw std::invalid_argument("fd step must be positive");
  check_points(u, z);
  const int k = u.components();
  const int d = u.dim();
  const Vector packed = pack(u);
  const int m = static_cast<int>(packed.size());
  Vector grad(m);
  for (int j = 0; j < m; ++j) {
    Vector up = packed;
    Vector dn = packed;
    up(j) += delta;
    dn(j) -= delta;
    if (is_variance_coord(j, d)) {
      up(j) = clamp_variance_coord(up(j), clamps);
      dn(j) = clamp_variance_coord(dn(j), clamps);
    }
    grad(j) = (mixture_nll(unpack(up, k, d), z) -
               mixture_nll(unpack(dn, k, d), z)) /
              (2.0 * delta);
  }
  return grad;
}

Vector grad_nll_u_analytic(const MixtureParams& u, const Matrix& z) {
  check_points(u, z);
  const int k = u.components();
  const int d = u.dim();
  const Matrix resp = responsibilities(u, z);
  Vector grad(packed_size(k, d));
  int at = 0;
  for (int c = 0; c < k; ++c) {
    const Vector rk = resp.col(c);
    const double nk = rk.sum();
    const Matrix diff = z.rowwise() - u.means.row(c);
    const Eigen::ArrayXd var = u.variances.row(c).transpose().array();
    // d/d mu_j:  sum_i r_ik (mu_j - z_ij) / var_j
    const Vector sum_rdiff = diff.transpose() * rk;
    grad.segment(at, d) = (-sum_rdiff.array() / var).matrix();
    // d/d var_j: (1/2) sum_i r_ik (1/var_j - diff_ij^2 / var_j^2)
    const Vector sum_rdiff2 = diff.array().square().matrix().transpose() * rk;
    grad.segment(at + d, d) =
        (0.5 * (nk / var - sum_rdiff2.array() / var.square())).matrix();
    // d/d pi_k: -sum_i r_ik / pi_k   (free coordinate, no simplex constraint)
    grad(at + 2 * d) = -nk / u.weights(c);
    at += 2 * d + 1;
  }
  return grad;
}

Matrix hessian_nll_u(const MixtureParams& u, const Matrix& z, double delta,
                     ClampLog* clamps) {
  if (delta <= 0.0) throw std::invalid_argument("fd step must be positive");
  check_points(u, z);
  const int k = u.components();
  const int d = u.dim();
  const Vector packed = pack(u);
  const int m = static_cast<int>(packed.size());
  Matrix h(m, m);
  for (int j = 0; j < m; ++j) {
    Vector up = packed;
    Vector dn = packed;
    up(j) += delta;
    dn(j) -= delta;
    if (is_variance_coord(j, d)) {
      up(j) = clamp_variance_coord(up(j), clamps);
      dn(j) = clamp_variance_coord(dn(j), clamps);
    }
    h.col(j) = (grad_nll_u_analytic(unpack(up, k, d), z) -
                grad_nll_u_analytic(unpack(dn, k, d), z)) /
               (2.0 * delta);
  }
  return 0.5 * (h + h.transpose());
}

Vector floor_weights(Vector w) {
  const int k = static_cast<int>(w.size());
  if (k * kWeightFloor >= 1.0)
    throw std::invalid_argument("too many components for the weight floor");
  Vector excess = (w.array() - kWeightFloor).cwiseMax(0.0).matrix();
  const double total = excess.sum();
  if (total <= 0.0)
    return Vector::Constant(k, 1.0 / k);
  return (kWeightFloor + excess.array() * (1.0 - k * kWeightFloor) / total)
      .matrix();
}

Vector project_to_simplex(const Vector& w) {
  const int k = static_cast<int>(w.size());
  std::vector<double> sorted(w.data(), w.data() + k);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double tau = 0.0;
  int support = 0;
  for (int i = 0; i < k; ++i) {
    cumulative += sorted[static_cast<std::size_t>(i)];
    const double candidate = (cumulative - 1.0) / (i + 1);
    if (sorted[static_cast<std::size_t>(i)] - candidate > 0.0) {
      tau = candidate;
      support = i + 1;
    }
  }
  (void)support;
  return (w.array() - tau).cwiseMax(0.0).matrix();
}

}  // namespace gmoa
