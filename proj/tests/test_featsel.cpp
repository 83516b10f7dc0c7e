#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "netkan/featsel.hpp"
#include "netkan/rng.hpp"

using namespace netkan;

namespace {

std::vector<std::vector<double>> random_X(int n, int d, Rng& rng) {
  std::vector<std::vector<double>> X(n, std::vector<double>(d));
  for (auto& row : X)
    for (auto& v : row) v = rng.uniform(-1.0, 1.0);
  return X;
}

}  // namespace

TEST_CASE("linear regression recovers exact coefficients") {
  Rng rng(2);
  auto X = random_X(60, 3, rng);
  std::vector<double> y;
  for (const auto& r : X) y.push_back(3.0 + 2.0 * r[0] - r[1]);  // r[2] irrelevant
  auto coef = linreg_fit(X, y);
  REQUIRE(coef.size() == 4);
  CHECK(coef[0] == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(coef[1] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(coef[2] == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(coef[3] == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(linreg_predict(coef, X[5]) == doctest::Approx(y[5]).epsilon(1e-9));
}

TEST_CASE("kfold mse is deterministic under seed and near zero for exact fits") {
  Rng rng(4);
  auto X = random_X(90, 4, rng);
  std::vector<double> y;
  for (const auto& r : X) y.push_back(1.0 + r[0] - 2.0 * r[3]);
  double a = kfold_mse(X, y, {0, 3}, 3, 11);
  double b = kfold_mse(X, y, {0, 3}, 3, 11);
  CHECK(a == b);
  CHECK(a < 1e-12);
  double worse = kfold_mse(X, y, {1, 2}, 3, 11);
  CHECK(worse > a);
}

TEST_CASE("SFS recovers the true support before any distractor") {
  Rng rng(8);
  auto X = random_X(240, 9, rng);  // features 0..2 real, 3..8 distractors
  std::vector<double> y;
  for (const auto& r : X) y.push_back(2.0 * r[0] - 3.0 * r[1] + 0.5 * r[2]);
  SfsConfig cfg;
  cfg.seed = 1;
  SfsResult res = sfs(X, y, cfg);
  REQUIRE(res.selected.size() >= 3);
  for (int s = 0; s < 3; ++s) CHECK(res.selected[s] <= 2);
  CHECK(res.selected[0] != res.selected[1]);
  CHECK(res.cv_mse_trace.size() == res.selected.size());
  CHECK(res.cv_mse_trace[2] < 1e-10);
  // once the support is found, the threshold stops the scan quickly
  CHECK(res.selected.size() <= 4);

  // brute-force verification of the first two greedy steps
  double best1 = std::numeric_limits<double>::infinity();
  int arg1 = -1;
  for (int j = 0; j < 9; ++j) {
    double m = kfold_mse(X, y, {j}, cfg.k_folds, cfg.seed);
    if (m < best1) {
      best1 = m;
      arg1 = j;
    }
  }
  CHECK(arg1 == res.selected[0]);
  double best2 = std::numeric_limits<double>::infinity();
  int arg2 = -1;
  for (int j = 0; j < 9; ++j) {
    if (j == arg1) continue;
    double m = kfold_mse(X, y, {arg1, j}, cfg.k_folds, cfg.seed);
    if (m < best2) {
      best2 = m;
      arg2 = j;
    }
  }
  CHECK(arg2 == res.selected[1]);
}

TEST_CASE("SFS breaks ties toward the lowest index") {
  Rng rng(12);
  auto base = random_X(80, 1, rng);
  std::vector<std::vector<double>> X;
  std::vector<double> y;
  for (const auto& r : base) {
    // columns 0 and 1 identical (exact tie); column 2 pure noise
    X.push_back({r[0], r[0], rng.uniform(-1.0, 1.0)});
    y.push_back(5.0 * r[0]);
  }
  SfsConfig cfg;
  SfsResult res = sfs(X, y, cfg);
  REQUIRE(!res.selected.empty());
  CHECK(res.selected[0] == 0);
}

TEST_CASE("SFS respects the max feature cap") {
  Rng rng(19);
  auto X = random_X(100, 6, rng);
  std::vector<double> y;
  for (const auto& r : X) {
    double s = 0;
    for (int j = 0; j < 6; ++j) s += (j + 1) * r[j];
    y.push_back(s);
  }
  SfsConfig cfg;
  cfg.max_features = 2;
  SfsResult res = sfs(X, y, cfg);
  CHECK(res.selected.size() <= 2);
}
