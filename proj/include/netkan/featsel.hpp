#pragma once

#include <cstdint>
#include <vector>

namespace netkan {

// Ridge-stabilized least squares with intercept. Returns [intercept, w_0...].
std::vector<double> linreg_fit(const std::vector<std::vector<double>>& X,
                               const std::vector<double>& y, double ridge = 1e-8);

double linreg_predict(const std::vector<double>& coef, const std::vector<double>& row);

// Mean test MSE of a linear proxy over k seeded shuffled folds, using only
// the listed feature columns.
double kfold_mse(const std::vector<std::vector<double>>& X, const std::vector<double>& y,
                 const std::vector<int>& feature_subset, int k, std::uint64_t seed);

struct SfsConfig {
  int k_folds = 3;
  int max_features = 16;
  double rel_improvement_threshold = 1e-4;
  std::uint64_t seed = 0;
};

struct SfsResult {
  std::vector<int> selected;          // insertion order
  std::vector<double> cv_mse_trace;   // MSE after each addition
};

// Greedy forward selection: each step adds the feature minimizing CV-MSE
// (ties by lowest index); stops on small relative improvement or the cap.
SfsResult sfs(const std::vector<std::vector<double>>& X, const std::vector<double>& y,
              const SfsConfig& config);

}  // namespace netkan
