#include "netkan/spline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace netkan {

SplineGrid::SplineGrid(double lo_, double hi_, int G_, int k_) : lo(lo_), hi(hi_), G(G_), k(k_) {
  if (!(lo < hi)) throw std::invalid_argument("SplineGrid: lo must be < hi");
  if (G < 1) throw std::invalid_argument("SplineGrid: G >= 1");
  if (k < 0) throw std::invalid_argument("SplineGrid: k >= 0");
  rebuild();
}

void SplineGrid::rebuild() {
  double h = (hi - lo) / static_cast<double>(G);
  knots.resize(static_cast<size_t>(G + 2 * k + 1));
  for (int j = 0; j <= G + 2 * k; ++j) knots[j] = lo + h * static_cast<double>(j - k);
}

namespace {

// Full Cox-de Boor triangle. degrees[d][j] = N_{j,d}(x), j = 0 .. G+2k-1-d.
void cdb_triangle(double x, const SplineGrid& grid, std::vector<std::vector<double>>& tri) {
  const auto& t = grid.knots;
  int n0 = grid.G + 2 * grid.k;  // number of degree-0 functions
  tri.assign(grid.k + 1, {});
  tri[0].assign(n0, 0.0);
  if (x >= grid.hi) {
    // right-inclusive at the domain's upper boundary so partition of unity holds
    for (int j = 0; j < n0; ++j)
      if (t[j] < grid.hi && t[j + 1] >= grid.hi) {
        tri[0][j] = 1.0;
        break;
      }
  } else {
    for (int j = 0; j < n0; ++j)
      if (t[j] <= x && x < t[j + 1]) tri[0][j] = 1.0;
  }
  for (int d = 1; d <= grid.k; ++d) {
    int nd = n0 - d;
    tri[d].assign(nd, 0.0);
    for (int j = 0; j < nd; ++j) {
      double left = 0.0, right = 0.0;
      double dl = t[j + d] - t[j];
      double dr = t[j + d + 1] - t[j + 1];
      if (dl > 0.0) left = (x - t[j]) / dl * tri[d - 1][j];
      if (dr > 0.0) right = (t[j + d + 1] - x) / dr * tri[d - 1][j + 1];
      tri[d][j] = left + right;
    }
  }
}

}  // namespace

std::vector<double> bspline_basis(double x, const SplineGrid& grid) {
  x = std::clamp(x, grid.lo, grid.hi);
  std::vector<std::vector<double>> tri;
  cdb_triangle(x, grid, tri);
  return tri[grid.k];
}

void bspline_basis_and_deriv(double x, const SplineGrid& grid,
                             std::vector<double>& basis, std::vector<double>& deriv) {
  bool clamped = (x < grid.lo || x > grid.hi);
  x = std::clamp(x, grid.lo, grid.hi);
  std::vector<std::vector<double>> tri;
  cdb_triangle(x, grid, tri);
  basis = tri[grid.k];
  deriv.assign(basis.size(), 0.0);
  if (grid.k == 0 || clamped) return;  // clamped input: constant in x outside domain
  const auto& t = grid.knots;
  const auto& lower = tri[grid.k - 1];
  double k = static_cast<double>(grid.k);
  for (size_t j = 0; j < basis.size(); ++j) {
    double dl = t[j + grid.k] - t[j];
    double dr = t[j + grid.k + 1] - t[j + 1];
    double d = 0.0;
    if (dl > 0.0) d += k / dl * lower[j];
    if (dr > 0.0 && j + 1 < lower.size()) d -= k / dr * lower[j + 1];
    deriv[j] = d;
  }
}

Tensor bspline_features(const Tensor& x, const SplineGrid& grid) {
  int n = x.rows(), m = x.cols(), B = grid.n_basis();
  auto out = Tensor::zeros(n, m * B);
  auto node = out.node();
  std::vector<double> dmat;  // cached dB/dx, same layout as output
  bool rec = grad_enabled() && x.requires_grad();
  if (rec) dmat.assign(static_cast<size_t>(n) * m * B, 0.0);
  std::vector<double> b, d;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      if (rec) {
        bspline_basis_and_deriv(x.at(i, j), grid, b, d);
      } else {
        b = bspline_basis(x.at(i, j), grid);
      }
      for (int cix = 0; cix < B; ++cix) {
        size_t off = (static_cast<size_t>(i) * m + j) * B + cix;
        node->x[off] = b[cix];
        if (rec) dmat[off] = d[cix];
      }
    }
  if (rec) {
    node->rg = true;
    auto px = x.node();
    node->parents = {px};
    TensorNode* o = node.get();
    node->back = [o, px, dmat, m, B]() {
      for (int i = 0; i < px->r; ++i)
        for (int j = 0; j < m; ++j) {
          double s = 0.0;
          size_t off = (static_cast<size_t>(i) * m + j) * B;
          for (int cix = 0; cix < B; ++cix) s += o->g[off + cix] * dmat[off + cix];
          px->g[static_cast<size_t>(i) * m + j] += s;
        }
    };
  }
  return out;
}

Tensor KanLayer::forward(const Tensor& x) const {
  if (x.cols() != in_dim) throw std::invalid_argument("KanLayer: input width mismatch");
  Tensor base = matmul(activation(x, Activation::Silu), base_weight, false, true);
  Tensor phi = bspline_features(x, grid);
  Tensor scaled = mul(coeffs, repeat_interleave_cols(spline_scale, grid.n_basis()));
  Tensor spline = matmul(phi, scaled, false, true);
  return add(base, spline);
}

std::vector<double> KanLayer::forward_plain(const std::vector<double>& x) const {
  if (static_cast<int>(x.size()) != in_dim) throw std::invalid_argument("KanLayer: input width mismatch");
  // mirrors the taped forward term-for-term (same products, same summation
  // order) so the serial reference path agrees bit-exactly with the tape
  int B = grid.n_basis();
  std::vector<double> silu(in_dim);
  std::vector<double> phi(static_cast<size_t>(in_dim) * B);
  std::vector<double> basis;
  for (int i = 0; i < in_dim; ++i) {
    double xi = x[i];
    silu[i] = xi * sigmoid_stable(xi);
    basis = bspline_basis(xi, grid);
    for (int c = 0; c < B; ++c) phi[static_cast<size_t>(i) * B + c] = basis[c];
  }
  std::vector<double> y(out_dim, 0.0);
  for (int o = 0; o < out_dim; ++o) {
    double base = 0.0;
    for (int i = 0; i < in_dim; ++i) base += silu[i] * base_weight.at(o, i);
    double sp = 0.0;
    for (int i = 0; i < in_dim; ++i) {
      double sc = spline_scale.at(o, i);
      size_t coff = (static_cast<size_t>(o) * in_dim + i) * B;
      for (int c = 0; c < B; ++c)
        sp += phi[static_cast<size_t>(i) * B + c] * (coeffs.data()[coff + c] * sc);
    }
    y[o] = base + sp;
  }
  return y;
}

long long KanLayer::param_count() const {
  return static_cast<long long>(out_dim) * in_dim * (grid.G + grid.k + 2);
}

void KanLayer::register_params(ParamSet& ps, const std::string& prefix) {
  ps.add(prefix + ".coeffs", coeffs);
  ps.add(prefix + ".base_weight", base_weight);
  ps.add(prefix + ".spline_scale", spline_scale);
}

KanLayer kan_init(int in_dim, int out_dim, int G, int k, double sigma, Rng& rng,
                  double lo, double hi) {
  if (in_dim < 1 || out_dim < 1) throw std::invalid_argument("kan_init: dims >= 1");
  if (k < 1) throw std::invalid_argument("kan_init: spline order >= 1");
  KanLayer layer;
  layer.in_dim = in_dim;
  layer.out_dim = out_dim;
  layer.grid = SplineGrid(lo, hi, G, k);
  layer.sigma = sigma;
  int B = layer.grid.n_basis();
  double coeff_sd = sigma / std::sqrt(static_cast<double>(B));
  layer.coeffs = Tensor::randn(out_dim, in_dim * B, rng, coeff_sd, true);
  if (sigma == 0.0)
    std::fill(layer.coeffs.data().begin(), layer.coeffs.data().end(), 0.0);
  layer.base_weight =
      Tensor::randn(out_dim, in_dim, rng, 1.0 / std::sqrt(static_cast<double>(in_dim)), true);
  layer.spline_scale = Tensor::full(out_dim, in_dim, 1.0, true);
  return layer;
}

}  // namespace netkan
