#include <chrono>
#include <cmath>
#include <cstdio>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "netkan/datagen.hpp"
#include "netkan/gp.hpp"
#include "netkan/trainer.hpp"

using namespace netkan;

namespace {

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(n);
#else
  (void)n;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace

int main() {
  ScenarioConfig sc;
  sc.seed = 42;
  std::vector<HeteroGraph> graphs = generate_dataset(sc, 40);

  Rng rng(7);
  FlowKanModel model(FlowKanConfig::defaults(), rng);
  fit_preprocessing(model, graphs);

  int hw = max_threads();
  std::printf("hardware threads available to OpenMP: %d\n\n", hw);

  // serial reference vs taped forward: same math, two implementations
  double max_diff = 0.0;
  {
    NoGradGuard guard;
    Rng fw_rng(0);
    for (const auto& g : graphs) {
      std::vector<double> plain = model.predict(g);
      Tensor taped = model.forward(g, false, fw_rng);
      for (size_t i = 0; i < plain.size(); ++i)
        max_diff = std::max(max_diff, std::fabs(plain[i] - taped.data()[i]));
    }
  }
  std::printf("serial pipeline vs taped forward, max |diff|: %.3e\n\n", max_diff);

  // dataset prediction: 1 thread vs all
  for (int rep = 0; rep < 2; ++rep) {
    int threads = rep == 0 ? 1 : hw;
    set_threads(threads);
    double t0 = now_s();
    std::vector<double> pred = predict_dataset(model, graphs);
    double dt = now_s() - t0;
    std::printf("predict_dataset  threads=%d  %.3f s  (%zu flows)\n", threads, dt, pred.size());
  }
  std::printf("\n");

  // GP fitness evaluation: 1 thread vs all
  Rng data_rng(11);
  std::vector<std::vector<double>> X;
  std::vector<double> y;
  for (int i = 0; i < 400; ++i) {
    std::vector<double> row = {data_rng.uniform(-2, 2), data_rng.uniform(-2, 2),
                               data_rng.uniform(-2, 2)};
    y.push_back(row[0] * row[1] - row[2]);
    X.push_back(std::move(row));
  }
  GpConfig gc;
  gc.population = 256;
  gc.generations = 40;
  for (int rep = 0; rep < 2; ++rep) {
    int threads = rep == 0 ? 1 : hw;
    set_threads(threads);
    double t0 = now_s();
    auto front = gp_search(X, y, gc, 3);
    double dt = now_s() - t0;
    std::printf("gp_search        threads=%d  %.3f s  (best mse %.3e)\n", threads, dt,
                front.front().mse);
  }
  set_threads(hw);
  return 0;
}
