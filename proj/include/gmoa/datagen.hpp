#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gmoa/common.hpp"

namespace gmoa::datagen {

struct Dataset {
  Matrix x;                 // N x p
  std::vector<int> labels;  // empty when absent, else length N
  std::string name;
  std::uint64_t seed = 0;

  bool has_labels() const { return !labels.empty(); }
  int size() const { return static_cast<int>(x.rows()); }
  int dim() const { return static_cast<int>(x.cols()); }
};

struct GmmSpec {
  Matrix means;      // K x p
  Matrix variances;  // K x p, diagonal covariances
  Vector weights;    // K, sums to 1
  int n = 0;
  std::uint64_t seed = 0;
  std::string name = "gmm";

  void validate() const;  // throws std::invalid_argument
};

// Built-in specs:
//   paper2d: means (0,0) and (-3,-5), covariances 2I and I, equal weights
//   paper3d: means (0,0,0) and (-3,-5,10), covariances 2I and I, equal weights
// Unknown names throw std::invalid_argument listing the presets.
GmmSpec preset_spec(const std::string& name, int n, std::uint64_t seed);
std::vector<std::string> preset_names();

// Samples n points: a seeded component choice per point, then a seeded
// Gaussian draw from that component. Labels are the component indices.
// Component choice and per-component draws use split RNG streams, so the
// points drawn for component k do not depend on how often other components
// were chosen.
Dataset gen_gmm(const GmmSpec& spec);

struct NoisyLinesSpec {
  double slope = 1.0;
  double intercept0 = 0.0;
  double intercept1 = 4.0;
  int n_per_line = 250;
  double eps = 0.5;  // noise std dev on the second coordinate
  double x_min = 0.0;
  double x_max = 10.0;
  std::uint64_t seed = 0;
};

// Two parallel lines: x uniform on [x_min, x_max], y = slope*x + intercept
// + N(0, eps^2). Labels are the line indices.
Dataset gen_noisy_lines(const NoisyLinesSpec& spec);

// Reads an IDX image/label file pair (the big-endian format used for the
// MNIST distribution): magic 0x00000803 with N x rows x cols for images,
// 0x00000801 with N for labels. Pixels are scaled to [0,1] and each image is
// flattened row-major. Optional digit_filter keeps only the listed labels
// (file order preserved); limit truncates after filtering. Structural
// problems raise FormatError naming the byte offset.
Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path,
                 const std::optional<std::set<int>>& digit_filter = {},
                 std::optional<int> limit = {});

// Keeps at most n_per_label points of each label, in file order.
Dataset take_per_label(const Dataset& ds, int n_per_label);

// CSV interchange, header `label,x1,...,xp`; the label cell is `-` for
// unlabeled datasets. Values print with 17 significant digits so the
// round trip is exact to the double. Malformed rows raise FormatError
// naming the line.
void save_csv(const Dataset& ds, const std::string& path);
Dataset load_csv(const std::string& path);

// Embedding CSV, header `id,z1,...,zd`.
void save_embedding_csv(const Matrix& z, const std::string& path);
Matrix load_embedding_csv(const std::string& path);

}  // namespace gmoa::datagen
