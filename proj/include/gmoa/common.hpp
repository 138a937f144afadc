#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>

namespace gmoa {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Numerical failure that should abort the surrounding optimization step
/// (e.g. a linear solve that stays singular after regularization).
class StepFailure : public std::runtime_error {
 public:
  explicit StepFailure(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input file (IDX, CSV, JSON config). Carries a human-readable
/// location (byte offset or line number) in the message.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

/// Counts variance-floor clamps applied to perturbed parameter copies during
/// finite differencing. Callers that care pass a counter; nullptr ignores.
struct ClampLog {
  int variance_clamps = 0;
};

/// Fixed-order pairwise summation. The reduction tree depends only on the
/// length, so results are bit-identical no matter how the terms were produced
/// (serially or by concurrent workers writing disjoint slots).
double pairwise_sum(std::span<const double> values);

/// Runs fn(i) for i in [0, n) on up to n_threads workers over contiguous
/// index chunks. Workers must write to disjoint locations; there is no
/// reduction here. n_threads <= 1 runs inline.
void parallel_for(int n, int n_threads, const std::function<void(int)>& fn);

/// Doubles are printed with 17 significant digits so that text round-trips
/// reproduce the exact bit pattern.
std::string format_double(double x);

}  // namespace gmoa
