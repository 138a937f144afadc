#include "gmoa/em.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace gmoa {

namespace {

thread_local long g_nll_evals = 0;

double eval_nll(const MixtureParams& u, const Matrix& z) {
  ++g_nll_evals;
  return mixture_nll(u, z);
}

Vector column_variances(const Matrix& z) {
  const Eigen::RowVectorXd mean = z.colwise().mean();
  return ((z.rowwise() - mean).array().square().colwise().sum() /
          static_cast<double>(z.rows()))
      .transpose()
      .matrix();
}

/// Gradient of the NLL in the unconstrained coordinates, by chain rule from
/// the packed-coordinate gradient.
Vector unconstrained_grad(const MixtureParams& u, const Matrix& z) {
  const int k = u.components();
  const int d = u.dim();
  const int stride = 2 * d + 1;
  Vector g = grad_nll_u_analytic(u, z);
  // Weight block first: needs all natural-coordinate weight derivatives.
  Vector weight_grad(k);
  for (int c = 0; c < k; ++c) weight_grad(c) = g(c * stride + 2 * d);
  const double dot = u.weights.dot(weight_grad);
  for (int c = 0; c < k; ++c) {
    // d var / d s = var  (s = log var)
    g.segment(c * stride + d, d).array() *=
        u.variances.row(c).transpose().array();
    // softmax Jacobian for the weight logits
    g(c * stride + 2 * d) = u.weights(c) * (weight_grad(c) - dot);
  }
  return g;
}

}  // namespace

long nll_evaluations() { return g_nll_evals; }
void reset_nll_evaluations() { g_nll_evals = 0; }

MixtureParams em_step(const MixtureParams& u, const Matrix& z, Rng* rng,
                      EmEvents* events) {
  const int k = u.components();
  const int d = u.dim();
  const int n = static_cast<int>(z.rows());
  if (n < k) throw std::invalid_argument("need at least K data points");

  const Matrix resp = responsibilities(u, z);
  const Vector counts = resp.colwise().sum().transpose();

  Rng fallback(0);
  Rng* gen = rng ? rng : &fallback;

  MixtureParams next;
  next.means.resize(k, d);
  next.variances.resize(k, d);
  next.weights.resize(k);
  for (int c = 0; c < k; ++c) {
    if (counts(c) < 1e-8) {
      // Collapsed component: restart it at a random data point with the
      // global spread.
      const int pick = static_cast<int>(gen->uniform_int(n));
      next.means.row(c) = z.row(pick);
      next.variances.row(c) =
          column_variances(z).cwiseMax(kVarFloor).transpose();
      next.weights(c) = 0.0;  // floor_weights lifts it back up
      if (events) ++events->reseeded_components;
      continue;
    }
    const Vector rk = resp.col(c);
    next.means.row(c) = (z.transpose() * rk).transpose() / counts(c);
    const Matrix diff = z.rowwise() - next.means.row(c);
    Vector var =
        (diff.array().square().matrix().transpose() * rk) / counts(c);
    for (int j = 0; j < d; ++j) {
      if (var(j) < kVarFloor) {
        var(j) = kVarFloor;
        if (events) ++events->floored_variances;
      }
    }
    next.variances.row(c) = var.transpose();
    next.weights(c) = counts(c) / n;
  }
  next.weights = floor_weights(next.weights);
  return next;
}

FitResult fit(const MixtureParams& u0, const Matrix& z, const EmConfig& cfg,
              Rng* rng) {
  if (cfg.max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  if (cfg.tol <= 0.0) throw std::invalid_argument("tol must be positive");

  FitResult result;
  result.u = u0;
  result.nll = eval_nll(u0, z);
  for (int it = 0; it < cfg.max_iters; ++it) {
    MixtureParams candidate = em_step(result.u, z, rng, &result.events);
    const double nll = eval_nll(candidate, z);
    if (nll > result.nll + 1e-10) break;  // floors can break monotonicity
    const double change = result.nll - nll;
    result.u = std::move(candidate);
    result.nll = nll;
    result.iters = it + 1;
    if (std::abs(change) < cfg.tol) break;
  }
  if (cfg.refine) {
    MixtureParams refined =
        quasi_newton_refine(result.u, z, cfg.refine_max_iters);
    const double refined_nll = eval_nll(refined, z);
    if (refined_nll < result.nll) {
      result.u = std::move(refined);
      result.nll = refined_nll;
    }
  }
  return result;
}

Vector to_unconstrained(const MixtureParams& u) {
  const int k = u.components();
  const int d = u.dim();
  const int stride = 2 * d + 1;
  Vector x(packed_size(k, d));
  for (int c = 0; c < k; ++c) {
    x.segment(c * stride, d) = u.means.row(c).transpose();
    x.segment(c * stride + d, d) =
        u.variances.row(c).transpose().array().log().matrix();
    x(c * stride + 2 * d) = std::log(u.weights(c));
  }
  return x;
}

MixtureParams from_unconstrained(const Vector& x, int k, int d) {
  const int stride = 2 * d + 1;
  MixtureParams u;
  u.means.resize(k, d);
  u.variances.resize(k, d);
  u.weights.resize(k);
  Vector logits(k);
  for (int c = 0; c < k; ++c) {
    u.means.row(c) = x.segment(c * stride, d).transpose();
    u.variances.row(c) =
        x.segment(c * stride + d, d).transpose().array().exp().matrix();
    logits(c) = x(c * stride + 2 * d);
  }
  const double m = logits.maxCoeff();
  Eigen::ArrayXd e = (logits.array() - m).exp();
  u.weights = (e / e.sum()).matrix();
  return u;
}

MixtureParams quasi_newton_refine(const MixtureParams& u, const Matrix& z,
                                  int max_iters) {
  const int k = u.components();
  const int d = u.dim();
  const double input_nll = eval_nll(u, z);

  Vector x = to_unconstrained(u);
  const int m = static_cast<int>(x.size());
  auto objective = [&](const Vector& v) {
    return eval_nll(from_unconstrained(v, k, d), z);
  };

  double fx = objective(x);
  Vector grad = unconstrained_grad(from_unconstrained(x, k, d), z);
  Vector best_x = x;
  double best_f = fx;

  constexpr int kMemory = 10;
  constexpr double kArmijoC = 1e-4;
  std::deque<Vector> s_hist, y_hist;
  std::deque<double> rho_hist;

  for (int it = 0; it < max_iters; ++it) {
    if (grad.lpNorm<Eigen::Infinity>() < 1e-8) break;

    // Two-loop recursion for the search direction.
    Vector q = grad;
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha[static_cast<std::size_t>(i)] =
          rho_hist[static_cast<std::size_t>(i)] *
          s_hist[static_cast<std::size_t>(i)].dot(q);
      q -= alpha[static_cast<std::size_t>(i)] *
           y_hist[static_cast<std::size_t>(i)];
    }
    if (!s_hist.empty()) {
      const Vector& s = s_hist.back();
      const Vector& y = y_hist.back();
      q *= s.dot(y) / y.dot(y);
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    Vector dir = -q;
    double slope = grad.dot(dir);
    if (slope >= 0.0) {  // not a descent direction; fall back to steepest
      dir = -grad;
      slope = grad.dot(dir);
    }

    // Armijo backtracking, halving.
    double step = s_hist.empty()
                      ? std::min(1.0, 1.0 / grad.lpNorm<Eigen::Infinity>())
                      : 1.0;
    bool accepted = false;
    Vector x_new;
    double f_new = fx;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = x + step * dir;
      f_new = objective(x_new);
      if (std::isfinite(f_new) && f_new <= fx + kArmijoC * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // line search exhausted; best iterate is kept

    Vector grad_new = unconstrained_grad(from_unconstrained(x_new, k, d), z);
    Vector s = x_new - x;
    Vector y = grad_new - grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (static_cast<int>(s_hist.size()) == kMemory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
    }
    x = std::move(x_new);
    fx = f_new;
    grad = std::move(grad_new);
    if (fx < best_f) {
      best_f = fx;
      best_x = x;
    }
    (void)m;
  }

  // Back to natural coordinates, with the floors restored.
  MixtureParams result = from_unconstrained(best_x, k, d);
  result.variances = result.variances.cwiseMax(kVarFloor);
  result.weights = floor_weights(result.weights);
  if (eval_nll(result, z) > input_nll) return u;  // never worse than input
  return result;
}

}  // namespace gmoa
