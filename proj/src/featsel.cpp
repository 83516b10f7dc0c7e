#include "netkan/featsel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "netkan/rng.hpp"

namespace netkan {

namespace {

// Solve A x = b by Gaussian elimination with partial pivoting. A is dense
// symmetric positive definite here (normal equations + ridge), sizes <= ~30.
std::vector<double> solve(std::vector<std::vector<double>> A, std::vector<double> b) {
  int n = static_cast<int>(b.size());
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
    if (std::abs(A[piv][col]) < 1e-300) throw std::runtime_error("linreg: singular system");
    std::swap(A[col], A[piv]);
    std::swap(b[col], b[piv]);
    for (int r = col + 1; r < n; ++r) {
      double f = A[r][col] / A[col][col];
      if (f == 0.0) continue;
      for (int c2 = col; c2 < n; ++c2) A[r][c2] -= f * A[col][c2];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (int r = n - 1; r >= 0; --r) {
    double s = b[r];
    for (int c2 = r + 1; c2 < n; ++c2) s -= A[r][c2] * x[c2];
    x[r] = s / A[r][r];
  }
  return x;
}

}  // namespace

std::vector<double> linreg_fit(const std::vector<std::vector<double>>& X,
                               const std::vector<double>& y, double ridge) {
  if (X.empty() || X.size() != y.size()) throw std::invalid_argument("linreg_fit: bad inputs");
  int p = static_cast<int>(X[0].size()) + 1;  // intercept column first
  if (static_cast<int>(X.size()) < p)
    throw std::invalid_argument("linreg_fit: fewer rows than columns");
  std::vector<std::vector<double>> ata(p, std::vector<double>(p, 0.0));
  std::vector<double> aty(p, 0.0);
  std::vector<double> row(p);
  for (size_t i = 0; i < X.size(); ++i) {
    row[0] = 1.0;
    for (int j = 1; j < p; ++j) row[j] = X[i][j - 1];
    for (int a = 0; a < p; ++a) {
      for (int b = a; b < p; ++b) ata[a][b] += row[a] * row[b];
      aty[a] += row[a] * y[i];
    }
  }
  for (int a = 0; a < p; ++a) {
    for (int b = 0; b < a; ++b) ata[a][b] = ata[b][a];
    ata[a][a] += ridge;
  }
  return solve(std::move(ata), std::move(aty));
}

double linreg_predict(const std::vector<double>& coef, const std::vector<double>& row) {
  if (coef.size() != row.size() + 1) throw std::invalid_argument("linreg_predict: width mismatch");
  double s = coef[0];
  for (size_t j = 0; j < row.size(); ++j) s += coef[j + 1] * row[j];
  return s;
}

double kfold_mse(const std::vector<std::vector<double>>& X, const std::vector<double>& y,
                 const std::vector<int>& feature_subset, int k, std::uint64_t seed) {
  int n = static_cast<int>(X.size());
  if (k < 2 || k > n) throw std::invalid_argument("kfold_mse: need 2 <= k <= samples");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(0, i)]);

  auto subset_row = [&](int i) {
    std::vector<double> r(feature_subset.size());
    for (size_t j = 0; j < feature_subset.size(); ++j) r[j] = X[i][feature_subset[j]];
    return r;
  };

  double total = 0.0;
  for (int fold = 0; fold < k; ++fold) {
    std::vector<std::vector<double>> xtr, xte;
    std::vector<double> ytr, yte;
    for (int i = 0; i < n; ++i) {
      bool test = (i % k) == fold;
      auto r = subset_row(order[i]);
      if (test) {
        xte.push_back(std::move(r));
        yte.push_back(y[order[i]]);
      } else {
        xtr.push_back(std::move(r));
        ytr.push_back(y[order[i]]);
      }
    }
    auto coef = linreg_fit(xtr, ytr);
    double sse = 0.0;
    for (size_t i = 0; i < xte.size(); ++i) {
      double d = linreg_predict(coef, xte[i]) - yte[i];
      sse += d * d;
    }
    total += sse / static_cast<double>(xte.size());
  }
  return total / static_cast<double>(k);
}

SfsResult sfs(const std::vector<std::vector<double>>& X, const std::vector<double>& y,
              const SfsConfig& config) {
  if (X.empty() || X[0].empty()) throw std::invalid_argument("sfs: need >= 1 candidate feature");
  int n_features = static_cast<int>(X[0].size());
  SfsResult res;
  double prev_mse = 0.0;
  bool have_prev = false;
  while (static_cast<int>(res.selected.size()) < std::min(config.max_features, n_features)) {
    int best_feature = -1;
    double best_mse = 0.0;
    // candidates are independent; evaluated in index order so ties resolve
    // to the lowest feature index
    std::vector<double> cand_mse(n_features, -1.0);
#pragma omp parallel for schedule(dynamic)
    for (int f = 0; f < n_features; ++f) {
      if (std::find(res.selected.begin(), res.selected.end(), f) != res.selected.end()) continue;
      std::vector<int> trial = res.selected;
      trial.push_back(f);
      cand_mse[f] = kfold_mse(X, y, trial, config.k_folds, config.seed);
    }
    for (int f = 0; f < n_features; ++f) {
      if (cand_mse[f] < 0.0) continue;
      if (best_feature < 0 || cand_mse[f] < best_mse) {
        best_feature = f;
        best_mse = cand_mse[f];
      }
    }
    if (best_feature < 0) break;
    if (have_prev) {
      double rel = (prev_mse - best_mse) / std::max(prev_mse, 1e-300);
      if (rel < config.rel_improvement_threshold) break;
    }
    res.selected.push_back(best_feature);
    res.cv_mse_trace.push_back(best_mse);
    prev_mse = best_mse;
    have_prev = true;
  }
  return res;
}

}  // namespace netkan
