#pragma once

// Independent reference implementations used to check the library. These
// deliberately avoid the library's numerics: plain log/exp sums, no
// log-sum-exp stabilization, no pairwise reduction, brute-force search
// instead of combinatorial algorithms.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gmoa/common.hpp"
#include "gmoa/mixture.hpp"

namespace testsupport {

using gmoa::Matrix;
using gmoa::Vector;

// Mixture NLL the textbook way: -sum_i log sum_k pi_k prod_j pdf.
double naive_nll(const gmoa::MixtureParams& u, const Matrix& z);

// Central finite difference of a scalar function along coordinate j.
double central_diff(const std::function<double(const Vector&)>& f,
                    const Vector& at, int j, double delta);

// Full central-difference gradient.
Vector fd_gradient(const std::function<double(const Vector&)>& f,
                   const Vector& at, double delta);

// Best label-matching accuracy by trying every permutation (K <= 8).
double brute_force_accuracy(const std::vector<int>& pred,
                            const std::vector<int>& truth, int k);

// Largest relative mismatch between two vectors, scaled by
// max(|a_i|, |b_i|, floor).
double max_rel_err(const Vector& a, const Vector& b, double floor = 1e-8);

// Random valid mixture parameters: means in [-3,3], variances in
// [0.2, 2.2], weights a perturbed simplex away from the floor.
gmoa::MixtureParams random_mixture(int k, int d, std::uint64_t seed);

// N x d standard normal data, scaled/shifted per column for variety.
Matrix random_points(int n, int d, std::uint64_t seed);

// Writes an IDX image file (magic 0x00000803) and a label file (0x00000801)
// from raw byte rows; images.size() == labels.size(), each image has
// rows*cols bytes.
void write_idx_pair(const std::string& images_path,
                    const std::string& labels_path,
                    const std::vector<std::vector<unsigned char>>& images,
                    const std::vector<unsigned char>& labels, int rows,
                    int cols);

// A self-deleting temporary directory for artifact tests.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::string& path() const { return path_; }
  std::string file(const std::string& name) const { return path_ + "/" + name; }

 private:
  std::string path_;
};

}  // namespace testsupport
