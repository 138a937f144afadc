#include "gmoa/bilevel.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <vector>

#include "gmoa/labeling.hpp"
#include "gmoa/rng.hpp"
#include "gmoa/separation.hpp"

namespace gmoa::bilevel {

namespace {

bool is_variance_coord(int j, int d) {
  const int r = j % (2 * d + 1);
  return r >= d && r < 2 * d;
}

// dE/dz per sample: s(i,j) = sum_k r(i,k) (z(i,j) - mu(k,j)) / var(k,j).
Matrix nll_z_sensitivity(const MixtureParams& u, const Matrix& z) {
  const Matrix resp = responsibilities(u, z);
  Matrix s = Matrix::Zero(z.rows(), z.cols());
  for (int c = 0; c < u.components(); ++c) {
    s.array() += ((z.rowwise() - u.means.row(c)).array().rowwise() /
                  u.variances.row(c).array())
                     .colwise() *
                 resp.col(c).array();
  }
  return s;
}

// Basis change eliminating the last weight coordinate: full = J * reduced
// with pi_K = 1 - sum of the other weights. J is m x (m-1).
Matrix weight_reduction(int k, int d) {
  const int m = packed_size(k, d);
  Matrix j = Matrix::Zero(m, m - 1);
  for (int i = 0; i < m - 1; ++i) j(i, i) = 1.0;
  for (int c = 0; c < k - 1; ++c) j(m - 1, c * (2 * d + 1) + 2 * d) = -1.0;
  return j;
}

std::string join_flags(const std::vector<std::string>& flags) {
  std::string out;
  for (const auto& f : flags) {
    if (!out.empty()) out += '|';
    out += f;
  }
  return out;
}

MixtureParams project_feasible(MixtureParams u) {
  u.variances = u.variances.cwiseMax(kVarFloor);
  u.weights = floor_weights(project_to_simplex(u.weights));
  return u;
}

// Moment initialization from a k-means split of the projected data.
MixtureParams moment_init(const Matrix& z, int k, std::uint64_t seed) {
  const auto km = labeling::kmeans(z, k, seed);
  const int n = static_cast<int>(z.rows());
  const int d = static_cast<int>(z.cols());

  const Eigen::RowVectorXd global_mean = z.colwise().mean();
  const Eigen::RowVectorXd global_var =
      (z.rowwise() - global_mean).array().square().colwise().sum() /
      std::max(n - 1, 1);

  MixtureParams u;
  u.means = km.centers;
  u.variances.resize(k, d);
  u.weights.resize(k);
  for (int c = 0; c < k; ++c) {
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(d);
    int count = 0;
    for (int i = 0; i < n; ++i) {
      if (km.labels[static_cast<std::size_t>(i)] != c) continue;
      acc += (z.row(i) - km.centers.row(c)).array().square().matrix();
      ++count;
    }
    if (count > 1)
      u.variances.row(c) = (acc / (count - 1)).cwiseMax(kVarFloor);
    else
      u.variances.row(c) = global_var.cwiseMax(kVarFloor);
    u.weights(c) = static_cast<double>(count) / n;
  }
  u.weights = floor_weights(u.weights);
  return u;
}

}  // namespace

Matrix mixed_partial(const MixtureParams& u, const ReducerParams& theta,
                     const Matrix& x, double delta, ClampLog* clamp_log,
                     int n_threads) {
  if (delta <= 0.0) throw std::invalid_argument("difference step must be > 0");
  u.validate();
  const int k = u.components();
  const int d = u.dim();
  if (theta.output_dim() != d)
    throw std::invalid_argument("reducer output does not match mixture dim");

  const int m = packed_size(k, d);
  const int l = theta.flat_size();
  const Vector base = pack(u);
  const Matrix z = project(theta, x);
  Matrix out(m, l);
  std::vector<int> clamps(static_cast<std::size_t>(m), 0);

  parallel_for(m, n_threads, [&](int j) {
    Vector up = base;
    Vector um = base;
    up(j) += delta;
    um(j) -= delta;
    if (is_variance_coord(j, d) && um(j) < kVarFloor) {
      um(j) = kVarFloor;
      clamps[static_cast<std::size_t>(j)] = 1;
    }
    const Matrix sens_p = nll_z_sensitivity(unpack(up, k, d), z);
    const Matrix sens_m = nll_z_sensitivity(unpack(um, k, d), z);
    out.row(j) = ((grad_theta(theta, x, sens_p) -
                   grad_theta(theta, x, sens_m)) /
                  (2.0 * delta))
                     .transpose();
  });

  if (clamp_log) {
    for (int c : clamps) clamp_log->variance_clamps += c;
  }
  return out;
}

Vector implicit_delta(const Matrix& hess, const Matrix& mixed,
                      const Vector& grad_g, double* cond_out,
                      double* tikhonov_out) {
  const int m = static_cast<int>(hess.rows());
  if (hess.cols() != m) throw std::invalid_argument("hessian must be square");
  if (mixed.rows() != m || grad_g.size() != m)
    throw std::invalid_argument("derivative block shapes disagree");

  if (cond_out) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(hess, Eigen::EigenvaluesOnly);
    const Vector abs_ev = es.eigenvalues().cwiseAbs();
    const double lo = abs_ev.minCoeff();
    const double hi = abs_ev.maxCoeff();
    *cond_out =
        lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  }

  const double b_scale = std::max(1.0, grad_g.norm());
  for (const double lambda : {0.0, 1e-8, 1e-6, 1e-4}) {
    Matrix a = hess;
    a.diagonal().array() += lambda;
    Eigen::LDLT<Matrix> ldlt(a);
    if (ldlt.info() != Eigen::Success) continue;
    const Vector y = ldlt.solve(grad_g);
    if (!y.allFinite()) continue;
    // Negated comparison so a non-finite residual is rejected too.
    if (!((a * y - grad_g).norm() <= 1e-6 * b_scale)) continue;
    if (tikhonov_out) *tikhonov_out = lambda;
    return -(mixed.transpose() * y);
  }
  throw StepFailure("hessian solve failed beyond the regularization budget");
}

ImplicitResult implicit_grad(const MixtureParams& u,
                             const ReducerParams& theta, const Matrix& x,
                             const GmoaConfig& cfg) {
  const int k = u.components();
  const int d = u.dim();
  const Matrix z = project(theta, x);

  ClampLog clamps;
  Vector b = grad_g(u);
  Matrix h = hessian_nll_u(u, z, cfg.delta, &clamps);
  Matrix mixed = mixed_partial(u, theta, x, cfg.delta, &clamps, cfg.n_threads);
  const Vector grad_e = grad_nll_u_analytic(u, z);

  const Matrix j = weight_reduction(k, d);
  ImplicitResult res;
  res.manifold_residual =
      (j.transpose() * grad_e).lpNorm<Eigen::Infinity>();
  res.clamped = clamps.variance_clamps;

  if (cfg.reduce_weights) {
    h = j.transpose() * h * j;
    mixed = j.transpose() * mixed;
    b = j.transpose() * b;
  }
  res.delta = implicit_delta(h, mixed, b, &res.cond, &res.tikhonov);
  return res;
}

std::pair<ManifoldState, Trajectory> gmoa_run(
    const Matrix& x, const ReducerParams& theta0,
    const std::optional<MixtureParams>& u_init, const GmoaConfig& cfg) {
  if (x.rows() < 1) throw std::invalid_argument("empty dataset");
  if (cfg.eta0 <= 0.0 || cfg.delta <= 0.0)
    throw std::invalid_argument("eta0 and delta must be > 0");
  if (cfg.n_iter < 0) throw std::invalid_argument("n_iter must be >= 0");
  if (!u_init && cfg.k < 2)
    throw std::invalid_argument("need k >= 2 components");

  Rng root(cfg.seed);
  Rng em_rng = root.split(1);
  const int d = theta0.output_dim();

  Matrix z = project(theta0, x);
  const MixtureParams u0 =
      u_init ? *u_init : moment_init(z, cfg.k, root.split(0).next_u64());
  const int k = u0.components();
  const Matrix reduction = weight_reduction(k, d);

  auto residual = [&](const MixtureParams& u, const Matrix& zz) {
    return (reduction.transpose() * grad_nll_u_analytic(u, zz))
        .lpNorm<Eigen::Infinity>();
  };

  FitResult fr = fit(u0, z, cfg.em, &em_rng);
  ManifoldState state{fr.u, theta0, fr.nll, g_value(fr.u).g, 0};

  Trajectory traj;
  {
    std::vector<std::string> flags;
    if (fr.events.reseeded_components > 0) flags.push_back("reseeded");
    if (residual(state.u, z) > cfg.manifold_slack)
      flags.push_back("off_manifold");
    traj.records.push_back({0, state.e, state.g, cfg.eta0, join_flags(flags),
                            theta0.flatten(), pack(state.u)});
  }

  ManifoldState best = state;
  double eta = cfg.eta0;

  for (int t = 1; t <= cfg.n_iter; ++t) {
    if (!cfg.carry_eta) eta = cfg.eta0;

    ImplicitResult ig;
    try {
      ig = implicit_grad(state.u, state.theta, x, cfg);
    } catch (const StepFailure&) {
      traj.truncated = true;
      best.iter = t;
      traj.records.push_back({t, best.e, best.g, eta, "truncated",
                              best.theta.flatten(), pack(best.u)});
      return {best, traj};
    }

    if (ig.delta.lpNorm<Eigen::Infinity>() < cfg.stop_tol) {
      auto& last = traj.records.back().flags;
      last = last.empty() ? "converged" : last + "|converged";
      break;
    }

    std::vector<std::string> flags;
    if (ig.tikhonov > 0.0) flags.push_back("tikhonov");
    if (ig.clamped > 0) flags.push_back("clamped");

    const Vector theta_flat = state.theta.flatten();
    const Vector ascent = grad_g(state.u);
    const Vector u_flat = pack(state.u);
    const double g_prev = state.g;

    ReducerParams theta_new = state.theta;
    FitResult cand;
    double g_new = 0.0;
    for (int bt = 0;; ++bt) {
      theta_new = state.theta.with_flat(theta_flat + eta * ig.delta);
      const MixtureParams u_half =
          project_feasible(unpack(u_flat + eta * ascent, k, d));
      z = project(theta_new, x);
      cand = fit(u_half, z, cfg.em, &em_rng);
      g_new = g_value(cand.u).g;
      if (!cfg.backtrack || g_new >= g_prev - 1e-12) {
        if (bt > 0) flags.push_back("backtrack");
        break;
      }
      if (bt >= 10) {
        flags.push_back("backtrack_exhausted");
        break;
      }
      eta *= 0.5;
    }

    state.u = cand.u;
    state.theta = theta_new;
    state.e = cand.nll;
    state.g = g_new;
    state.iter = t;
    if (cand.events.reseeded_components > 0) flags.push_back("reseeded");
    if (residual(state.u, z) > cfg.manifold_slack)
      flags.push_back("off_manifold");

    traj.records.push_back({t, state.e, state.g, eta, join_flags(flags),
                            theta_new.flatten(), pack(state.u)});
    if (state.g > best.g) best = state;
  }

  return {state, traj};
}

namespace {

std::pair<Matrix, double> means_only_em(Matrix means, const Matrix& z,
                                        const Matrix& variances,
                                        const Vector& weights,
                                        const EmConfig& cfg) {
  MixtureParams u;
  u.means = std::move(means);
  u.variances = variances;
  u.weights = weights;
  double prev = mixture_nll(u, z);
  for (int it = 0; it < cfg.max_iters; ++it) {
    const Matrix resp = responsibilities(u, z);
    const Vector counts = resp.colwise().sum();
    for (int c = 0; c < u.components(); ++c) {
      if (counts(c) > 1e-12)
        u.means.row(c) = (resp.col(c).transpose() * z) / counts(c);
    }
    const double cur = mixture_nll(u, z);
    if (std::abs(prev - cur) < cfg.tol) {
      prev = cur;
      break;
    }
    prev = cur;
  }
  return {u.means, prev};
}

}  // namespace

std::vector<SurfaceRow> manifold_surface(const std::vector<ReducerParams>& grid,
                                         const Matrix& x,
                                         const Matrix& known_variances,
                                         const Vector& known_weights,
                                         const EmConfig& em_cfg) {
  if (grid.empty()) throw std::invalid_argument("empty theta grid");
  if (known_variances.rows() != 2 || known_variances.cols() != 1 ||
      known_weights.size() != 2)
    throw std::invalid_argument(
        "surface sweep needs two components in one dimension");

  std::vector<SurfaceRow> rows;
  rows.reserve(grid.size());
  std::optional<Matrix> prev_means;

  for (const auto& theta : grid) {
    SurfaceRow row;
    row.theta = theta.flatten();
    try {
      if (theta.output_dim() != 1)
        throw std::invalid_argument("surface sweep needs a 1D projection");
      const Matrix z = project(theta, x);
      const double zm = z.col(0).mean();
      const double zs = std::sqrt(
          (z.col(0).array() - zm).square().sum() /
          std::max<int>(static_cast<int>(z.rows()) - 1, 1));

      std::vector<Matrix> starts;
      Matrix a(2, 1), b(2, 1);
      a << zm - zs, zm + zs;
      b << zm + zs, zm - zs;
      starts.push_back(a);
      starts.push_back(b);
      if (prev_means) starts.push_back(*prev_means);

      double best_e = std::numeric_limits<double>::infinity();
      Matrix best_means;
      for (const auto& start : starts) {
        const auto [means, e] =
            means_only_em(start, z, known_variances, known_weights, em_cfg);
        if (e < best_e) {
          best_e = e;
          best_means = means;
        }
      }
      row.delta_mu = best_means(0, 0) - best_means(1, 0);
      row.e = best_e;
      prev_means = best_means;
    } catch (const std::exception&) {
      row.ok = false;
      row.delta_mu = std::numeric_limits<double>::quiet_NaN();
      row.e = std::numeric_limits<double>::quiet_NaN();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out << "iter,E,g,eta,flags";
  const int l =
      traj.records.empty() ? 0 : static_cast<int>(traj.records[0].theta_flat.size());
  const int m =
      traj.records.empty() ? 0 : static_cast<int>(traj.records[0].u_packed.size());
  for (int j = 1; j <= l; ++j) out << ",theta" << j;
  for (int j = 1; j <= m; ++j) out << ",u" << j;
  out << "\n";
  for (const auto& rec : traj.records) {
    out << rec.iter << "," << format_double(rec.e) << ","
        << format_double(rec.g) << "," << format_double(rec.eta) << ","
        << rec.flags;
    for (int j = 0; j < rec.theta_flat.size(); ++j)
      out << "," << format_double(rec.theta_flat(j));
    for (int j = 0; j < rec.u_packed.size(); ++j)
      out << "," << format_double(rec.u_packed(j));
    out << "\n";
  }
  if (!out) throw FormatError("write to '" + path + "' failed");
}

void write_surface_csv(const std::vector<SurfaceRow>& rows,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  const int l = rows.empty() ? 1 : static_cast<int>(rows[0].theta.size());
  out << "theta1";
  for (int j = 2; j <= l; ++j) out << ",theta" << j;
  out << ",delta_mu,E,flags\n";
  for (const auto& row : rows) {
    for (int j = 0; j < row.theta.size(); ++j) {
      if (j > 0) out << ",";
      out << format_double(row.theta(j));
    }
    out << "," << format_double(row.delta_mu) << "," << format_double(row.e)
        << "," << (row.ok ? "" : "failed") << "\n";
  }
  if (!out) throw FormatError("write to '" + path + "' failed");
}

}  // namespace gmoa::bilevel
