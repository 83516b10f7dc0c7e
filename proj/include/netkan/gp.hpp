#pragma once

#include <cstdint>
#include <vector>

#include "netkan/expr.hpp"
#include "netkan/rng.hpp"

namespace netkan {

// Operator menus used during hyperparameter tuning: three binary sets of
// increasing richness and four unary sets (index 0..).
const std::vector<std::vector<BinOp>>& binop_menus();
const std::vector<std::vector<UnOp>>& unop_menus();
const std::vector<int>& maxsize_menu();  // {7, 14, 21, 28, 35}

struct GpConfig {
  int population = 200;
  int generations = 60;
  double crossover_rate = 0.7;
  double mutation_rate = 0.5;
  double parsimony = 1e-6;  // fitness = mse + parsimony * complexity
  int maxsize = 14;
  int tournament = 4;
  std::vector<BinOp> binary_ops = {BinOp::Add, BinOp::Sub, BinOp::Mul};
  std::vector<UnOp> unary_ops = {};
  double const_lo = -2.0, const_hi = 2.0;
  int refine_top = 5;     // candidates refined by coordinate descent
  int refine_sweeps = 3;  // sweeps over each candidate's constants

  void validate() const;
};

struct ScoredExpr {
  Expr expr;
  double mse = 0.0;
  int complexity = 0;
};

// Mean squared error of expr over the samples (guarded evaluation).
double expr_mse(const Expr& e, const std::vector<std::vector<double>>& X,
                const std::vector<double>& y);

// Evolves expressions fitting y = f(X rows). Returns the Pareto front over
// (mse, complexity), sorted by mse ascending then complexity ascending.
// Deterministic under seed.
std::vector<ScoredExpr> gp_search(const std::vector<std::vector<double>>& X,
                                  const std::vector<double>& y, const GpConfig& cfg,
                                  std::uint64_t seed);

}  // namespace netkan
