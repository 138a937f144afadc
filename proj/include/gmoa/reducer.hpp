#pragma once

#include "gmoa/common.hpp"

#include <vector>

namespace gmoa {

struct MlpLayer {
  Matrix weights;  // out x in
  Vector bias;     // out
};

/// Dimension-reduction map A with learnable parameters. Four variants:
///
///   Angle2D  x in R^2 -> [cos a, sin a] . x            (d = 1)
///   Angle3D  x in R^3 -> [cos a1, sin a1 cos a2, sin a1 sin a2] . x
///   Linear   x in R^p -> W^T x                          (W is p x d)
///   Mlp      feed-forward net, tanh hidden layers, identity output
///
/// The angle variants project along a unit vector by construction.
struct ReducerParams {
  enum class Kind { Angle2D, Angle3D, Linear, Mlp };

  Kind kind = Kind::Linear;
  double angle = 0.0;                // Angle2D
  double angle1 = 0.0, angle2 = 0.0; // Angle3D
  Matrix linear;                     // Linear: p x d
  std::vector<MlpLayer> layers;      // Mlp

  static ReducerParams make_angle2d(double angle);
  static ReducerParams make_angle3d(double angle1, double angle2);
  static ReducerParams make_linear(Matrix w);
  static ReducerParams make_mlp(std::vector<MlpLayer> layers);

  int input_dim() const;
  int output_dim() const;

  /// Total number of scalar parameters l.
  int flat_size() const;

  /// Flat parameter vector. Order: Angle2D (a); Angle3D (a1, a2); Linear W
  /// column-major; Mlp layer by layer, W column-major then bias.
  Vector flatten() const;

  /// Same shapes as *this, values taken from `flat`.
  ReducerParams with_flat(const Vector& flat) const;
};

/// Projects the rows of X (N x p) to N x d.
Matrix project(const ReducerParams& theta, const Matrix& x);

/// Exact reverse-mode parameter gradient of sum_i <sens_i, A(x_i)> for
/// per-output sensitivities sens (N x d), i.e. the pullback of any scalar
/// loss whose dLoss/dA(x_i) is given. Aligned with flatten().
Vector grad_theta(const ReducerParams& theta, const Matrix& x,
                  const Matrix& sens);

/// Linear reducer whose columns are the top-d principal directions of the
/// centered data, the largest-magnitude entry of each direction made
/// positive. Throws std::invalid_argument if the data has fewer than d
/// directions of nonzero variance.
ReducerParams init_linear_pca(const Matrix& x, int d);

/// Fresh MLP with the given hidden widths, weights uniform in
/// +-sqrt(6 / (fan_in + fan_out)), zero biases, seeded.
ReducerParams make_mlp(int input_dim, const std::vector<int>& hidden,
                       int output_dim, std::uint64_t seed);

struct MlpFitResult {
  ReducerParams params;
  double final_mse = 0.0;
};

/// MLP pretrained to mimic a target embedding (N x d) by full-batch
/// gradient descent on mean squared error, with step halving whenever a
/// step would increase the loss. epochs = 0 returns the seeded
/// initialization untouched.
MlpFitResult init_mlp_from_embedding(const Matrix& x, const Matrix& target,
                                     const std::vector<int>& hidden,
                                     int epochs, double lr,
                                     std::uint64_t seed);

/// Rescales the last MLP layer so the projected outputs over X have zero
/// mean and unit standard deviation per output dimension:
/// bias <- (bias - mean)/std, weights <- weights/std. Throws
/// std::domain_error when an output dimension has std below 1e-12.
ReducerParams normalize_output_layer(const ReducerParams& theta,
                                     const Matrix& x);

}  // namespace gmoa
