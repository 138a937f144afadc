#include "gmoa/separation.hpp"

#include <cmath>

namespace gmoa {

double bhattacharyya(const Vector& mean_i, const Vector& var_i,
                     const Vector& mean_j, const Vector& var_j) {
  if (mean_i.size() != mean_j.size() || var_i.size() != mean_i.size() ||
      var_j.size() != mean_i.size())
    throw std::invalid_argument("bhattacharyya: shape mismatch");
  if ((var_i.array() <= 0.0).any() || (var_j.array() <= 0.0).any())
    throw std::domain_error("bhattacharyya: nonpositive variance");
  const Eigen::ArrayXd avg = 0.5 * (var_i.array() + var_j.array());
  const double quad =
      ((mean_i - mean_j).array().square() / avg).sum() / 8.0;
  const double logdet =
      0.5 * (avg.log().sum() -
             0.5 * (var_i.array().log().sum() + var_j.array().log().sum()));
  return quad + logdet;
}

SeparationReport g_value(const MixtureParams& u) {
  const int k = u.components();
  if (k < 2)
    throw std::invalid_argument("separation needs at least 2 components");
  if ((u.weights.array() <= 0.0).any())
    throw std::domain_error("separation: nonpositive mixture weight");

  SeparationReport report;
  report.pairwise_bd = Matrix::Zero(k, k);
  double bd_sum = 0.0;
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      const double bd =
          bhattacharyya(u.means.row(i).transpose(),
                        u.variances.row(i).transpose(),
                        u.means.row(j).transpose(),
                        u.variances.row(j).transpose());
      report.pairwise_bd(i, j) = bd;
      report.pairwise_bd(j, i) = bd;
      bd_sum += bd;
    }
  }
  report.weight_penalty = u.weights.array().log().sum();
  report.g = 2.0 / (k * (k - 1.0)) * bd_sum + report.weight_penalty;
  return report;
}

Vector grad_g(const MixtureParams& u) {
  const int k = u.components();
  const int d = u.dim();
  if (k < 2)
    throw std::invalid_argument("separation needs at least 2 components");
  if ((u.weights.array() <= 0.0).any())
    throw std::domain_error("separation: nonpositive mixture weight");
  if ((u.variances.array() <= 0.0).any())
    throw std::domain_error("separation: nonpositive variance");

  const double coef = 2.0 / (k * (k - 1.0));
  Vector grad = Vector::Zero(packed_size(k, d));
  const int stride = 2 * d + 1;
  for (int c = 0; c < k; ++c) {
    Eigen::ArrayXd mean_acc = Eigen::ArrayXd::Zero(d);
    Eigen::ArrayXd var_acc = Eigen::ArrayXd::Zero(d);
    for (int j = 0; j < k; ++j) {
      if (j == c) continue;
      const Eigen::ArrayXd diff =
          (u.means.row(c) - u.means.row(j)).transpose().array();
      const Eigen::ArrayXd avg =
          0.5 * (u.variances.row(c) + u.variances.row(j)).transpose().array();
      mean_acc += 0.25 * diff / avg;
      var_acc += -diff.square() / (16.0 * avg.square()) +
                 0.25 * (1.0 / avg -
                         1.0 / u.variances.row(c).transpose().array());
    }
    grad.segment(c * stride, d) = (coef * mean_acc).matrix();
    grad.segment(c * stride + d, d) = (coef * var_acc).matrix();
    grad(c * stride + 2 * d) = 1.0 / u.weights(c);
  }
  return grad;
}

}  // namespace gmoa
