#pragma once

#include <vector>

#include "netkan/tensor.hpp"

namespace netkan {

// Uniform extended knot vector on [lo, hi] with G interior intervals and
// order (degree) k; k extra knots continue the spacing beyond each boundary.
// Supports G+k basis functions of degree k.
struct SplineGrid {
  double lo = -1.0, hi = 1.0;
  int G = 5;
  int k = 3;
  std::vector<double> knots;  // size G + 2k + 1

  SplineGrid() { rebuild(); }
  SplineGrid(double lo_, double hi_, int G_, int k_);
  void rebuild();
  int n_basis() const { return G + k; }
};

// All basis values at x (clamped to [lo,hi]). Cox-de Boor recursion.
std::vector<double> bspline_basis(double x, const SplineGrid& grid);

// Basis values and their derivatives w.r.t. x.
void bspline_basis_and_deriv(double x, const SplineGrid& grid,
                             std::vector<double>& basis, std::vector<double>& deriv);

// Differentiable featurization: x is (n,m) -> (n, m*(G+k)), column block
// i*(G+k)..(i+1)*(G+k) holds the basis values of input column i.
Tensor bspline_features(const Tensor& x, const SplineGrid& grid);

// One KAN layer: y_o = sum_i [ base_w(o,i) * silu(x_i)
//                            + spline_scale(o,i) * sum_c coeff(o,i,c) B_c(x_i) ].
struct KanLayer {
  int in_dim = 0, out_dim = 0;
  SplineGrid grid;
  double sigma = 1.0;
  // coeffs stored as (out_dim, in_dim*(G+k)); base/scale as (out_dim, in_dim)
  Tensor coeffs;
  Tensor base_weight;
  Tensor spline_scale;

  Tensor forward(const Tensor& x) const;
  std::vector<double> forward_plain(const std::vector<double>& x) const;
  long long param_count() const;
  void register_params(ParamSet& ps, const std::string& prefix);
};

KanLayer kan_init(int in_dim, int out_dim, int G, int k, double sigma, Rng& rng,
                  double lo = -1.0, double hi = 1.0);

}  // namespace netkan
