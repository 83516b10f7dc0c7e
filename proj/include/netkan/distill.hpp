#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "netkan/flowkan.hpp"
#include "netkan/gp.hpp"

namespace netkan {

// One distilled block: a closed-form expression per output dimension.
struct SymbolicBlock {
  std::string name;
  std::vector<Expr> exprs;

  std::vector<double> eval(const std::vector<double>& in) const;
  nlohmann::json to_json() const;
  static SymbolicBlock from_json(const nlohmann::json& j);
};

// Input/output widths of a canonical pipeline block under a configuration.
int block_in_width(const FlowKanConfig& cfg, const std::string& name);
int block_out_width(const FlowKanConfig& cfg, const std::string& name);

// FlowKANet with a symbolic prefix: blocks earlier in the canonical order may
// be replaced by expressions while downstream blocks stay neural.
class HybridModel {
 public:
  explicit HybridModel(const FlowKanModel* model);

  const std::vector<std::string>& block_order() const { return order_; }
  // First block in canonical order that is still neural; "" if none.
  std::string next_neural_block() const;
  bool is_symbolic(const std::string& name) const { return symbolic_.count(name) > 0; }
  bool fully_symbolic() const { return symbolic_.size() == order_.size(); }

  // Enforces the prefix property: name must be the earliest neural block.
  void set_symbolic(SymbolicBlock block);

  BlockFn block_fn() const;
  std::vector<double> predict(const HeteroGraph& g) const;

  const FlowKanModel& model() const { return *model_; }
  const std::map<std::string, SymbolicBlock>& symbolic_blocks() const { return symbolic_; }

 private:
  const FlowKanModel* model_;
  std::vector<std::string> order_;
  std::map<std::string, SymbolicBlock> symbolic_;
};

struct IoSamples {
  std::vector<std::pair<std::vector<double>, std::vector<double>>> fit, holdout;
};

// Runs the hybrid pipeline over the graphs recording the named block's exact
// input/output pairs (one per invocation), then splits fit/holdout by gamma
// with seeded shuffling.
IoSamples sample_block_io(const HybridModel& hybrid, const std::vector<HeteroGraph>& graphs,
                          const std::string& block, double gamma, std::uint64_t seed);

struct DistillConfig {
  int trials_per_block = 25;
  double gamma = 0.5;            // fit fraction of sampled I/O
  std::uint64_t seed = 0;
  int max_fit_samples = 192;     // per-dimension GP sample cap
  int max_holdout_samples = 256;
  int max_sample_graphs = 60;    // graphs traced per block
  std::vector<int> populations = {32, 48, 64};
  std::vector<int> generations = {16, 24, 32};
  double parsimony_lo = 1e-8, parsimony_hi = 1e-4;  // log-uniform

  void validate() const;
};

struct BlockDistillReport {
  std::string block;
  double val_mse = 0.0;       // full-model validation MSE after splicing
  bool constant_fallback = false;
  int best_trial = -1;
};

// Distills the earliest remaining neural block: random GpConfig search over
// the operator menus, per-output-dimension gp_search, candidate bundles
// spliced into the full model and ranked by validation MSE. Falls back to
// per-dimension constants when nothing beats the constant baseline.
BlockDistillReport distill_block(HybridModel& hybrid, const std::string& block,
                                 const std::vector<HeteroGraph>& train_graphs,
                                 const std::vector<HeteroGraph>& val_graphs,
                                 const DistillConfig& cfg);

// Fully symbolic surrogate: configuration + expressions only, no tensors.
struct SymbolicSurrogate {
  FlowKanConfig cfg;
  Normalizer flow_norm, link_norm;
  double output_scale = 1.0;
  std::map<std::string, SymbolicBlock> blocks;

  std::vector<double> predict(const HeteroGraph& g) const;
  long long constant_count() const;
  long long trainable_param_count() const { return 0; }

  nlohmann::json to_json() const;
  static SymbolicSurrogate from_json(const nlohmann::json& j);
};

struct TraceEntry {
  std::string label;  // bundled: flow_init, link_init, L0.f2l, ..., fuse, final
  double full_mse = 0.0;
};

struct DistillResult {
  SymbolicSurrogate surrogate;
  std::vector<TraceEntry> trace;
  std::vector<BlockDistillReport> reports;
  long long constant_count = 0;
};

// Sequentially distills every block in canonical order, recording the
// full-dataset (train + val) MSE after each bundled stage.
DistillResult distill_all(const FlowKanModel& model, const std::vector<HeteroGraph>& train_graphs,
                          const std::vector<HeteroGraph>& val_graphs, const DistillConfig& cfg);

// (a) human-readable equations with the graph-structured composition spelled
// out, (b) machine-readable JSON bundle whose reload is bit-exact.
void export_equations(const SymbolicSurrogate& surrogate, const std::string& text_path,
                      const std::string& json_path);
SymbolicSurrogate load_equations(const std::string& json_path);

std::string trace_to_csv(const std::vector<TraceEntry>& trace);

}  // namespace netkan
