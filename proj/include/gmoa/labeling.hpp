#pragma once

#include <vector>

#include "gmoa/common.hpp"
#include "gmoa/mixture.hpp"
#include "gmoa/reducer.hpp"
#include "gmoa/rng.hpp"

namespace gmoa::labeling {

struct LabelResult {
  std::vector<int> labels;  // argmax component per point, ties -> lowest index
  Matrix per_point_loglik;  // N x K component log densities (as compared)
};

// Hard assignment of each row of z to a mixture component. By default each
// component's log density is compared unweighted; with use_weights the mixing
// proportions are folded in (log pi_k + log N(z | mu_k, var_k)), which turns
// the rule into a MAP assignment.
LabelResult assign_labels(const MixtureParams& u, const Matrix& z,
                          bool use_weights = false);

// Convenience form that projects raw inputs first.
LabelResult assign_labels(const MixtureParams& u, const ReducerParams& theta,
                          const Matrix& x, bool use_weights = false);

struct KmeansResult {
  Matrix centers;           // k x d
  std::vector<int> labels;  // nearest center per point
  double inertia = 0.0;     // sum of squared distances to assigned centers
  int iters = 0;
};

// Lloyd iterations from a k-means++ seeding, deterministic given the seed.
// Empty clusters are re-anchored at the point farthest from its current
// center, so every center stays live.
KmeansResult kmeans(const Matrix& z, int k, std::uint64_t seed,
                    int max_iters = 300);

struct MatchResult {
  double accuracy = 0.0;
  std::vector<int> mapping;  // mapping[pred_label] = matched truth label
};

// Best-case clustering accuracy: the fraction of points whose predicted label
// matches the truth under the permutation of label names that maximizes
// agreement. The permutation is found by solving the assignment problem on
// the contingency matrix in O(K^3). Pass k to fix the label range; k < 0
// infers it from the data.
MatchResult hungarian_accuracy(const std::vector<int>& pred,
                               const std::vector<int>& truth, int k = -1);

}  // namespace gmoa::labeling
