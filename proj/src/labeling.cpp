#include "gmoa/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gmoa::labeling {

LabelResult assign_labels(const MixtureParams& u, const Matrix& z,
                          bool use_weights) {
  u.validate();
  const int n = static_cast<int>(z.rows());
  const int k = u.components();
  if (z.cols() != u.dim())
    throw std::invalid_argument("point dimension does not match mixture");

  LabelResult out;
  out.labels.resize(static_cast<std::size_t>(n));
  out.per_point_loglik.resize(n, k);
  for (int i = 0; i < n; ++i) {
    const Vector zi = z.row(i).transpose();
    int best = 0;
    double best_val = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      double val = use_weights ? std::log(u.weights(c)) : 0.0;
      val += gaussian_logpdf(zi, u.means.row(c).transpose(),
                             u.variances.row(c).transpose());
      out.per_point_loglik(i, c) = val;
      if (val > best_val) {
        best_val = val;
        best = c;
      }
    }
    out.labels[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

LabelResult assign_labels(const MixtureParams& u, const ReducerParams& theta,
                          const Matrix& x, bool use_weights) {
  return assign_labels(u, project(theta, x), use_weights);
}

namespace {

int nearest_center(const Matrix& centers, const Eigen::RowVectorXd& point,
                   double* dist_sq) {
  int best = 0;
  double best_d = (centers.row(0) - point).squaredNorm();
  for (int c = 1; c < centers.rows(); ++c) {
    const double d = (centers.row(c) - point).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (dist_sq) *dist_sq = best_d;
  return best;
}

Matrix seed_plus_plus(const Matrix& z, int k, Rng& rng) {
  const int n = static_cast<int>(z.rows());
  Matrix centers(k, z.cols());
  centers.row(0) =
      z.row(static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n))));
  Vector dist_sq(n);
  for (int c = 1; c < k; ++c) {
    for (int i = 0; i < n; ++i) {
      double d = (centers.row(0) - z.row(i)).squaredNorm();
      for (int prev = 1; prev < c; ++prev)
        d = std::min(d, (centers.row(prev) - z.row(i)).squaredNorm());
      dist_sq(i) = d;
    }
    const double total = dist_sq.sum();
    if (total <= 0.0) {
      centers.row(c) = z.row(
          static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n))));
      continue;
    }
    double target = rng.uniform() * total;
    int pick = n - 1;
    for (int i = 0; i < n; ++i) {
      target -= dist_sq(i);
      if (target <= 0.0) {
        pick = i;
        break;
      }
    }
    centers.row(c) = z.row(pick);
  }
  return centers;
}

}  // namespace

KmeansResult kmeans(const Matrix& z, int k, std::uint64_t seed,
                    int max_iters) {
  const int n = static_cast<int>(z.rows());
  if (k < 1) throw std::invalid_argument("need at least one cluster");
  if (n < k) throw std::invalid_argument("fewer points than clusters");

  Rng rng(seed);
  KmeansResult res;
  res.centers = seed_plus_plus(z, k, rng);
  res.labels.assign(static_cast<std::size_t>(n), -1);

  for (res.iters = 0; res.iters < max_iters; ++res.iters) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      const int c = nearest_center(res.centers, z.row(i), nullptr);
      if (c != res.labels[static_cast<std::size_t>(i)]) {
        res.labels[static_cast<std::size_t>(i)] = c;
        changed = true;
      }
    }
    if (!changed) break;

    Matrix sums = Matrix::Zero(k, z.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int i = 0; i < n; ++i) {
      const int c = res.labels[static_cast<std::size_t>(i)];
      sums.row(c) += z.row(i);
      ++counts[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        res.centers.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
        continue;
      }
      // Re-anchor an empty cluster at the worst-served point.
      int far = 0;
      double far_d = -1.0;
      for (int i = 0; i < n; ++i) {
        const double d =
            (z.row(i) -
             res.centers.row(res.labels[static_cast<std::size_t>(i)]))
                .squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      res.centers.row(c) = z.row(far);
    }
  }

  res.inertia = 0.0;
  for (int i = 0; i < n; ++i) {
    double d = 0.0;
    res.labels[static_cast<std::size_t>(i)] =
        nearest_center(res.centers, z.row(i), &d);
    res.inertia += d;
  }
  return res;
}

namespace {

// Assignment problem via potentials (Kuhn-Munkres), O(n^2 m). Returns the
// column matched to each row of the (n x m, n <= m) cost matrix.
std::vector<int> solve_assignment(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  const double inf = std::numeric_limits<double>::infinity();

  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(m) + 1, 0.0);
  std::vector<int> match(static_cast<std::size_t>(m) + 1, 0);
  std::vector<int> way(static_cast<std::size_t>(m) + 1, 0);

  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(m) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = match[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = -1;
      for (int j = 1; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) -
                           u[static_cast<std::size_t>(i0)] -
                           v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(match[static_cast<std::size_t>(j)])] +=
              delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= m; ++j)
    if (match[static_cast<std::size_t>(j)] != 0)
      row_to_col[static_cast<std::size_t>(match[static_cast<std::size_t>(j)] -
                                          1)] = j - 1;
  return row_to_col;
}

}  // namespace

MatchResult hungarian_accuracy(const std::vector<int>& pred,
                               const std::vector<int>& truth, int k) {
  if (pred.size() != truth.size() || pred.empty())
    throw std::invalid_argument("label vectors must be equal and nonempty");

  int k_seen = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || truth[i] < 0)
      throw std::invalid_argument("labels must be nonnegative");
    k_seen = std::max({k_seen, pred[i] + 1, truth[i] + 1});
  }
  if (k < 0) k = k_seen;
  if (k < k_seen) throw std::invalid_argument("label outside [0, k)");

  Matrix counts = Matrix::Zero(k, k);
  for (std::size_t i = 0; i < pred.size(); ++i)
    counts(pred[i], truth[i]) += 1.0;

  // Maximize agreement == minimize negated contingency counts.
  const std::vector<int> mapping = solve_assignment(-counts);

  double matched = 0.0;
  for (int c = 0; c < k; ++c)
    matched += counts(c, mapping[static_cast<std::size_t>(c)]);

  MatchResult out;
  out.accuracy = matched / static_cast<double>(pred.size());
  out.mapping = mapping;
  return out;
}

}  // namespace gmoa::labeling
