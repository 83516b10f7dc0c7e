#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "netkan/flowkan.hpp"
#include "netkan/netgraph.hpp"
#include "netkan/tensor.hpp"

namespace netkan {

double mse(const std::vector<double>& pred, const std::vector<double>& truth);
// 1 - SSE/SST; throws on constant truth (SST == 0).
double r2(const std::vector<double>& pred, const std::vector<double>& truth);

std::vector<double> graph_labels(const HeteroGraph& g);
std::vector<double> dataset_labels(const std::vector<HeteroGraph>& graphs);

struct TrainConfig {
  double lr = 0.002;
  int max_epochs = 150;
  int patience = 20;
  std::uint64_t seed = 0;
};

struct TrainHistory {
  std::vector<double> train_mse, val_mse;  // per epoch
  int best_epoch = -1;
  double best_val_mse = std::numeric_limits<double>::infinity();

  std::string to_csv() const;  // epoch,train_mse,val_mse
};

struct EvalResult {
  double mse = 0.0;
  double r2 = 0.0;
};

// Fits feature normalizers on the training split and sets output_scale to the
// mean training label, so softplus outputs start near the label magnitude.
template <class Model>
void fit_preprocessing(Model& model, const std::vector<HeteroGraph>& train_graphs) {
  model.flow_norm = fit_flow_normalizer(train_graphs);
  model.link_norm = fit_link_normalizer(train_graphs);
  double sum = 0.0;
  long long n = 0;
  for (const auto& g : train_graphs)
    for (const auto& f : g.flows) {
      sum += f.delay_label;
      ++n;
    }
  double mean = n > 0 ? sum / static_cast<double>(n) : 1.0;
  model.output_scale = (std::isfinite(mean) && mean > 0.0) ? mean : 1.0;
}

// Predictions for every flow of every graph, flattened in dataset order.
template <class Model>
std::vector<double> predict_dataset(Model& model, const std::vector<HeteroGraph>& graphs) {
  std::vector<std::vector<double>> per_graph(graphs.size());
  int n = static_cast<int>(graphs.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) per_graph[i] = model.predict(graphs[i]);
  std::vector<double> out;
  for (const auto& p : per_graph) out.insert(out.end(), p.begin(), p.end());
  return out;
}

template <class Model>
EvalResult evaluate_model(Model& model, const std::vector<HeteroGraph>& graphs) {
  std::vector<double> pred = predict_dataset(model, graphs);
  std::vector<double> truth = dataset_labels(graphs);
  return {mse(pred, truth), r2(pred, truth)};
}

// One Adam step per graph, epoch-wise shuffling, early stopping on validation
// MSE with best-parameter restoration. Deterministic under seed.
// The loss is computed in output_scale units (labels are ~1e-5 s; an O(1)
// loss keeps gradient magnitudes well above Adam's eps), but the recorded
// history is converted back to squared seconds.
template <class Model>
TrainHistory train_model(Model& model, const std::vector<HeteroGraph>& train_graphs,
                         const std::vector<HeteroGraph>& val_graphs, const TrainConfig& cfg) {
  if (cfg.lr < 0.0) throw std::invalid_argument("train: lr must be >= 0");
  if (cfg.patience < 1) throw std::invalid_argument("train: patience must be >= 1");
  if (train_graphs.empty()) throw std::invalid_argument("train: empty training set");
  if (val_graphs.empty()) throw std::invalid_argument("train: empty validation set");

  Rng rng(cfg.seed);
  AdamOptimizer opt(cfg.lr);
  TrainHistory hist;
  std::vector<std::vector<double>> best_params;
  const std::vector<double> val_truth = dataset_labels(val_graphs);

  auto snapshot = [&]() {
    best_params.clear();
    for (const auto& [name, t] : model.params().items) best_params.push_back(t.data());
  };
  snapshot();

  int epochs_since_best = 0;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::vector<int> order(train_graphs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_index(i)]);

    double out_scale = model.output_scale > 0.0 ? model.output_scale : 1.0;
    double sse = 0.0;
    long long n = 0;
    for (int gi : order) {
      const HeteroGraph& g = train_graphs[gi];
      if (g.flows.empty()) continue;
      std::vector<double> labels = graph_labels(g);
      for (double& v : labels) v /= out_scale;
      model.params().zero_grad();
      Tensor pred = scale(model.forward(g, true, rng), 1.0 / out_scale);
      Tensor loss = mse_loss(pred, labels);
      double lv = loss.item();
      if (!std::isfinite(lv))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", graph " + std::to_string(gi));
      backward(loss);
      opt.step(model.params());
      sse += lv * static_cast<double>(labels.size());
      n += static_cast<long long>(labels.size());
    }
    hist.train_mse.push_back(n > 0 ? sse / static_cast<double>(n) * out_scale * out_scale : 0.0);

    std::vector<double> val_pred = predict_dataset(model, val_graphs);
    double vm = mse(val_pred, val_truth);
    hist.val_mse.push_back(vm);

    if (vm < hist.best_val_mse) {
      hist.best_val_mse = vm;
      hist.best_epoch = epoch;
      snapshot();
      epochs_since_best = 0;
    } else if (++epochs_since_best >= cfg.patience) {
      break;
    }
  }

  size_t i = 0;
  for (auto& [name, t] : model.params().items) t.data() = best_params[i++];
  return hist;
}

// ---- random hyperparameter search ----

struct SearchSpace {
  std::vector<int> flow_hidden = {4, 6, 8, 12, 16};
  std::vector<int> link_hidden = {2, 3, 4};
  std::vector<int> rounds = {1, 2, 3};
  std::vector<double> dropout = {0.0, 0.05, 0.1, 0.2};
  std::vector<Activation> acts = {Activation::Tanh, Activation::Silu, Activation::Relu};
  std::vector<ActMode> act_modes = {ActMode::FinalOnly, ActMode::ExceptMp, ActMode::All,
                                    ActMode::NoActivation};
  double lr_lo = 5e-4, lr_hi = 5e-3;  // log-uniform
  int grid_lo = 4, grid_hi = 10;      // per-block G
  int order_lo = 2, order_hi = 5;     // per-block k
  double sigma_lo = 0.1, sigma_hi = 2.0;
};

struct TrialPoint {
  int index = 0;
  FlowKanConfig cfg;
  double lr = 0.002;
  std::uint64_t seed = 0;
};

struct TrialRecord {
  TrialPoint point;
  double val_mse = std::numeric_limits<double>::infinity();
  bool ok = false;
  std::string error;
};

struct SearchResult {
  int best_trial = -1;
  std::vector<TrialRecord> trials;

  const TrialRecord& best() const { return trials.at(best_trial); }
};

TrialPoint sample_trial_point(const SearchSpace& space, Rng& rng, int index);

using TrialObjective = std::function<double(const TrialPoint&)>;

// Samples `budget` points, evaluates each, returns argmin validation MSE
// (ties broken by earliest trial). Throws if every trial fails.
SearchResult random_search(const SearchSpace& space, int budget, std::uint64_t seed,
                           const TrialObjective& objective);

// Objective that trains a FlowKanModel from scratch on the given splits.
TrialObjective train_objective(const std::vector<HeteroGraph>& train_graphs,
                               const std::vector<HeteroGraph>& val_graphs, int epoch_cap,
                               int patience = 10);

std::string trial_log_csv(const SearchResult& result);

}  // namespace netkan
