#include "gmoa/reducer.hpp"

#include "gmoa/rng.hpp"

#include <cmath>

namespace gmoa {

namespace {

Vector angle2d_direction(double a) {
  Vector v(2);
  v << std::cos(a), std::sin(a);
  return v;
}

Vector angle3d_direction(double a1, double a2) {
  Vector v(3);
  v << std::cos(a1), std::sin(a1) * std::cos(a2), std::sin(a1) * std::sin(a2);
  return v;
}

void check_input(const ReducerParams& theta, const Matrix& x) {
  if (x.rows() < 1) throw std::invalid_argument("projection input is empty");
  if (x.cols() != theta.input_dim())
    throw std::invalid_argument("input dimension does not match reducer");
}

struct MlpForward {
  std::vector<Matrix> activations;  // activations[0] = input, size L+1
};

MlpForward mlp_forward(const std::vector<MlpLayer>& layers, const Matrix& x) {
  MlpForward f;
  f.activations.reserve(layers.size() + 1);
  f.activations.push_back(x);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix z = f.activations.back() * layers[l].weights.transpose();
    z.rowwise() += layers[l].bias.transpose();
    if (l + 1 < layers.size()) z = z.array().tanh().matrix();
    f.activations.push_back(std::move(z));
  }
  return f;
}

}  // namespace

ReducerParams ReducerParams::make_angle2d(double angle) {
  ReducerParams p;
  p.kind = Kind::Angle2D;
  p.angle = angle;
  return p;
}

ReducerParams ReducerParams::make_angle3d(double angle1, double angle2) {
  ReducerParams p;
  p.kind = Kind::Angle3D;
  p.angle1 = angle1;
  p.angle2 = angle2;
  return p;
}

ReducerParams ReducerParams::make_linear(Matrix w) {
  ReducerParams p;
  p.kind = Kind::Linear;
  p.linear = std::move(w);
  return p;
}

ReducerParams ReducerParams::make_mlp(std::vector<MlpLayer> layers) {
  if (layers.empty()) throw std::invalid_argument("mlp needs >= 1 layer");
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    if (layers[l + 1].weights.cols() != layers[l].weights.rows())
      throw std::invalid_argument("mlp layer shapes do not chain");
  }
  ReducerParams p;
  p.kind = Kind::Mlp;
  p.layers = std::move(layers);
  return p;
}

int ReducerParams::input_dim() const {
  switch (kind) {
    case Kind::Angle2D: return 2;
    case Kind::Angle3D: return 3;
    case Kind::Linear: return static_cast<int>(linear.rows());
    case Kind::Mlp: return static_cast<int>(layers.front().weights.cols());
  }
  return 0;
}

int ReducerParams::output_dim() const {
  switch (kind) {
    case Kind::Angle2D:
    case Kind::Angle3D: return 1;
    case Kind::Linear: return static_cast<int>(linear.cols());
    case Kind::Mlp: return static_cast<int>(layers.back().weights.rows());
  }
  return 0;
}

int ReducerParams::flat_size() const {
  switch (kind) {
    case Kind::Angle2D: return 1;
    case Kind::Angle3D: return 2;
    case Kind::Linear: return static_cast<int>(linear.size());
    case Kind::Mlp: {
      int n = 0;
      for (const auto& layer : layers)
        n += static_cast<int>(layer.weights.size() + layer.bias.size());
      return n;
    }
  }
  return 0;
}

Vector ReducerParams::flatten() const {
  Vector out(flat_size());
  switch (kind) {
    case Kind::Angle2D:
      out(0) = angle;
      break;
    case Kind::Angle3D:
      out(0) = angle1;
      out(1) = angle2;
      break;
    case Kind::Linear:
      out = Eigen::Map<const Vector>(linear.data(), linear.size());
      break;
    case Kind::Mlp: {
      int at = 0;
      for (const auto& layer : layers) {
        const int nw = static_cast<int>(layer.weights.size());
        out.segment(at, nw) =
            Eigen::Map<const Vector>(layer.weights.data(), nw);
        at += nw;
        out.segment(at, layer.bias.size()) = layer.bias;
        at += static_cast<int>(layer.bias.size());
      }
      break;
    }
  }
  return out;
}

ReducerParams ReducerParams::with_flat(const Vector& flat) const {
  if (flat.size() != flat_size())
    throw std::invalid_argument("flat parameter length mismatch");
  ReducerParams p = *this;
  switch (kind) {
    case Kind::Angle2D:
      p.angle = flat(0);
      break;
    case Kind::Angle3D:
      p.angle1 = flat(0);
      p.angle2 = flat(1);
      break;
    case Kind::Linear:
      p.linear = Eigen::Map<const Matrix>(flat.data(), linear.rows(),
                                          linear.cols());
      break;
    case Kind::Mlp: {
      int at = 0;
      for (auto& layer : p.layers) {
        const int nw = static_cast<int>(layer.weights.size());
        layer.weights = Eigen::Map<const Matrix>(
            flat.data() + at, layer.weights.rows(), layer.weights.cols());
        at += nw;
        layer.bias = flat.segment(at, layer.bias.size());
        at += static_cast<int>(layer.bias.size());
      }
      break;
    }
  }
  return p;
}

Matrix project(const ReducerParams& theta, const Matrix& x) {
  check_input(theta, x);
  switch (theta.kind) {
    case ReducerParams::Kind::Angle2D:
      return x * angle2d_direction(theta.angle);
    case ReducerParams::Kind::Angle3D:
      return x * angle3d_direction(theta.angle1, theta.angle2);
    case ReducerParams::Kind::Linear:
      return x * theta.linear;
    case ReducerParams::Kind::Mlp:
      return mlp_forward(theta.layers, x).activations.back();
  }
  throw std::logic_error("unreachable");
}

Vector grad_theta(const ReducerParams& theta, const Matrix& x,
                  const Matrix& sens) {
  check_input(theta, x);
  if (sens.rows() != x.rows() || sens.cols() != theta.output_dim())
    throw std::invalid_argument("sensitivity shape does not match output");

  switch (theta.kind) {
    case ReducerParams::Kind::Angle2D: {
      Vector tangent(2);
      tangent << -std::sin(theta.angle), std::cos(theta.angle);
      Vector g(1);
      g(0) = sens.col(0).dot(x * tangent);
      return g;
    }
    case ReducerParams::Kind::Angle3D: {
      const double c1 = std::cos(theta.angle1), s1 = std::sin(theta.angle1);
      const double c2 = std::cos(theta.angle2), s2 = std::sin(theta.angle2);
      Vector t1(3), t2(3);
      t1 << -s1, c1 * c2, c1 * s2;
      t2 << 0.0, -s1 * s2, s1 * c2;
      Vector g(2);
      g(0) = sens.col(0).dot(x * t1);
      g(1) = sens.col(0).dot(x * t2);
      return g;
    }
    case ReducerParams::Kind::Linear: {
      const Matrix grad_w = x.transpose() * sens;  // p x d
      return Eigen::Map<const Vector>(grad_w.data(), grad_w.size());
    }
    case ReducerParams::Kind::Mlp: {
      const MlpForward fwd = mlp_forward(theta.layers, x);
      const int num_layers = static_cast<int>(theta.layers.size());
      Vector out(theta.flat_size());
      Matrix delta = sens;  // dLoss/d(pre-activation of last layer)
      // Walk layers backwards; write each layer's slice at its offset.
      std::vector<int> offsets(static_cast<std::size_t>(num_layers));
      int at = 0;
      for (int l = 0; l < num_layers; ++l) {
        offsets[static_cast<std::size_t>(l)] = at;
        at += static_cast<int>(theta.layers[static_cast<std::size_t>(l)]
                                   .weights.size() +
                               theta.layers[static_cast<std::size_t>(l)]
                                   .bias.size());
      }
      for (int l = num_layers - 1; l >= 0; --l) {
        const auto& layer = theta.layers[static_cast<std::size_t>(l)];
        const Matrix& input = fwd.activations[static_cast<std::size_t>(l)];
        const Matrix grad_w = delta.transpose() * input;  // out x in
        const Vector grad_b = delta.colwise().sum().transpose();
        const int base = offsets[static_cast<std::size_t>(l)];
        out.segment(base, grad_w.size()) =
            Eigen::Map<const Vector>(grad_w.data(), grad_w.size());
        out.segment(base + grad_w.size(), grad_b.size()) = grad_b;
        if (l > 0) {
          // input = tanh(pre-activation), so tanh' = 1 - input^2
          delta = ((delta * layer.weights).array() *
                   (1.0 - input.array().square()))
                      .matrix();
        }
      }
      return out;
    }
  }
  throw std::logic_error("unreachable");
}

ReducerParams init_linear_pca(const Matrix& x, int d) {
  const int n = static_cast<int>(x.rows());
  const int p = static_cast<int>(x.cols());
  if (d < 1 || d > p) throw std::invalid_argument("bad target dimension");
  if (n <= d) throw std::invalid_argument("need more samples than dimensions");

  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Matrix centered = x.rowwise() - mean;
  const Matrix cov = centered.transpose() * centered / n;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("pca eigendecomposition failed");

  // Eigen returns ascending eigenvalues; take the top d, descending.
  const Vector values = eig.eigenvalues();
  const double threshold = std::max(values(p - 1), 0.0) * 1e-12;
  Matrix w(p, d);
  for (int j = 0; j < d; ++j) {
    const int src = p - 1 - j;
    if (values(src) <= threshold || values(src) <= 0.0)
      throw std::invalid_argument(
          "data has fewer nonzero-variance directions than requested");
    Vector dir = eig.eigenvectors().col(src);
    int imax = 0;
    dir.cwiseAbs().maxCoeff(&imax);
    if (dir(imax) < 0.0) dir = -dir;
    w.col(j) = dir;
  }
  return ReducerParams::make_linear(std::move(w));
}

ReducerParams make_mlp(int input_dim, const std::vector<int>& hidden,
                       int output_dim, std::uint64_t seed) {
  std::vector<int> widths;
  widths.push_back(input_dim);
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(output_dim);

  Rng rng(seed);
  std::vector<MlpLayer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int fan_in = widths[l];
    const int fan_out = widths[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    MlpLayer layer;
    layer.weights.resize(fan_out, fan_in);
    // Column-major fill, matching the flatten() order.
    for (int c = 0; c < fan_in; ++c)
      for (int r = 0; r < fan_out; ++r)
        layer.weights(r, c) = bound * (2.0 * rng.uniform() - 1.0);
    layer.bias = Vector::Zero(fan_out);
    layers.push_back(std::move(layer));
  }
  return ReducerParams::make_mlp(std::move(layers));
}

MlpFitResult init_mlp_from_embedding(const Matrix& x, const Matrix& target,
                                     const std::vector<int>& hidden,
                                     int epochs, double lr,
                                     std::uint64_t seed) {
  if (target.rows() != x.rows())
    throw std::invalid_argument("embedding row count does not match data");
  const int d = static_cast<int>(target.cols());
  ReducerParams theta =
      make_mlp(static_cast<int>(x.cols()), hidden, d, seed);

  const double scale = static_cast<double>(x.rows()) * d;
  auto mse = [&](const ReducerParams& t) {
    return (project(t, x) - target).squaredNorm() / scale;
  };

  double current = mse(theta);
  if (epochs <= 0) return {std::move(theta), current};

  double step = lr;
  Vector flat = theta.flatten();
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const Matrix sens = 2.0 * (project(theta, x) - target) / scale;
    const Vector grad = grad_theta(theta, x, sens);
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving) {
      ReducerParams candidate = theta.with_flat(flat - step * grad);
      const double candidate_mse = mse(candidate);
      if (candidate_mse <= current + 1e-15) {
        flat -= step * grad;
        theta = std::move(candidate);
        current = candidate_mse;
        accepted = true;
        if (halving == 0) step *= 1.5;  // cheap step-size adaptation
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
  return {std::move(theta), current};
}

ReducerParams normalize_output_layer(const ReducerParams& theta,
                                     const Matrix& x) {
  if (theta.kind != ReducerParams::Kind::Mlp)
    throw std::invalid_argument("output normalization applies to MLPs only");
  const Matrix z = project(theta, x);
  const Eigen::RowVectorXd mean = z.colwise().mean();
  const Eigen::RowVectorXd stddev =
      ((z.rowwise() - mean).array().square().colwise().sum() /
       static_cast<double>(z.rows()))
          .sqrt();
  if ((stddev.array() < 1e-12).any())
    throw std::domain_error("projected output is degenerate (zero spread)");

  ReducerParams out = theta;
  MlpLayer& last = out.layers.back();
  for (int j = 0; j < last.weights.rows(); ++j) {
    last.weights.row(j) /= stddev(j);
    last.bias(j) = (last.bias(j) - mean(j)) / stddev(j);
  }
  return out;
}

}  // namespace gmoa
