#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "gradcheck.hpp"
#include "netkan/spline.hpp"

using namespace netkan;
using netkan::testing::max_grad_rel_error;

TEST_CASE("partition of unity across grid sizes and degrees") {
  for (int G = 1; G <= 12; ++G) {
    for (int k = 1; k <= 5; ++k) {
      SplineGrid grid(-1.0, 1.5, G, k);
      CHECK(grid.n_basis() == G + k);
      CHECK(static_cast<int>(grid.knots.size()) == G + 2 * k + 1);
      for (int s = 0; s <= 40; ++s) {
        double x = -1.0 + 2.5 * s / 40.0;
        auto basis = bspline_basis(x, grid);
        double sum = std::accumulate(basis.begin(), basis.end(), 0.0);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        for (double b : basis) CHECK(b >= -1e-12);
      }
    }
  }
}

TEST_CASE("degree-0 basis is the interval indicator") {
  SplineGrid grid(0.0, 4.0, 4, 0);
  auto b = bspline_basis(2.5, grid);
  REQUIRE(b.size() == 4);
  CHECK(b[2] == 1.0);
  CHECK(b[0] + b[1] + b[3] == 0.0);
  auto hi = bspline_basis(4.0, grid);  // right boundary closed
  CHECK(hi[3] == 1.0);
}

TEST_CASE("inputs clamp to the grid domain") {
  SplineGrid grid(-1.0, 1.0, 5, 3);
  auto lo = bspline_basis(-50.0, grid);
  auto at_lo = bspline_basis(-1.0, grid);
  for (size_t i = 0; i < lo.size(); ++i) CHECK(lo[i] == at_lo[i]);
}

TEST_CASE("basis derivative matches finite differences in the interior") {
  SplineGrid grid(-2.0, 2.0, 6, 3);
  std::vector<double> basis, deriv, bp, bm;
  for (double x : {-1.3, -0.2, 0.7, 1.9}) {
    bspline_basis_and_deriv(x, grid, basis, deriv);
    double h = 1e-6;
    bp = bspline_basis(x + h, grid);
    bm = bspline_basis(x - h, grid);
    for (size_t i = 0; i < basis.size(); ++i) {
      double fd = (bp[i] - bm[i]) / (2 * h);
      CHECK(deriv[i] == doctest::Approx(fd).epsilon(1e-4));
    }
  }
}

TEST_CASE("KAN layer parameter count matches enumeration") {
  Rng rng(5);
  KanLayer layer = kan_init(3, 4, 6, 3, 0.9, rng, -1.0, 1.5);
  // out*in*(G+k) coeffs + out*in base + out*in scale
  long long expect = 4LL * 3 * (6 + 3) + 4 * 3 + 4 * 3;
  CHECK(layer.param_count() == expect);
  CHECK(layer.param_count() == 4LL * 3 * (6 + 3 + 2));
  ParamSet ps;
  layer.register_params(ps, "blk");
  CHECK(ps.scalar_count() == expect);
  CHECK(ps.find("blk.coeffs") != nullptr);
  CHECK(ps.find("blk.base_weight") != nullptr);
  CHECK(ps.find("blk.spline_scale") != nullptr);
}

TEST_CASE("taped forward equals the plain serial forward exactly") {
  Rng rng(17);
  KanLayer layer = kan_init(5, 3, 7, 4, 1.1, rng, -2.0, 2.0);
  Rng xr(2);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<double> x(5);
    for (auto& v : x) v = xr.uniform(-3.0, 3.0);  // includes out-of-grid values
    NoGradGuard guard;
    Tensor xt = Tensor::from(1, 5, x);
    Tensor y = layer.forward(xt);
    std::vector<double> yp = layer.forward_plain(x);
    REQUIRE(y.cols() == 3);
    for (int j = 0; j < 3; ++j) CHECK(y.at(0, j) == yp[j]);
  }
}

TEST_CASE("gradcheck: KAN layer") {
  Rng rng(23);
  KanLayer layer = kan_init(3, 2, 5, 3, 0.8, rng, -1.0, 1.5);
  ParamSet ps;
  layer.register_params(ps, "k");
  Tensor x = Tensor::randn(4, 3, rng, 0.4);
  Tensor ones = Tensor::from(2, 1, {1.0, 1.0});
  std::vector<double> target = {0.1, 0.2, -0.1, 0.3};
  auto loss = [&]() { return mse_loss(matmul(layer.forward(x), ones), target); };
  Rng probe(3);
  CHECK(max_grad_rel_error(ps, loss, 80, probe) < 1e-5);
}

TEST_CASE("spline coefficients actually shape the output") {
  Rng rng(31);
  KanLayer layer = kan_init(1, 1, 8, 3, 1.0, rng, -1.0, 1.0);
  std::vector<double> y1 = layer.forward_plain({0.3});
  // x=0.3 sits in interior interval 5, so degree-3 bases 5..8 are active there
  layer.coeffs.data()[6] += 1.0;
  std::vector<double> y2 = layer.forward_plain({0.3});
  CHECK(y1[0] != y2[0]);
  // a basis with support away from x leaves the output untouched
  layer.coeffs.data()[0] += 1.0;
  std::vector<double> y3 = layer.forward_plain({0.3});
  CHECK(y3[0] == y2[0]);
}
