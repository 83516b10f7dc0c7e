#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "netkan/checkpoint.hpp"
#include "netkan/netgraph.hpp"
#include "netkan/spline.hpp"

namespace netkan {

enum class ActMode { FinalOnly, ExceptMp, All, NoActivation };

ActMode act_mode_from_string(const std::string& s);
std::string act_mode_to_string(ActMode m);

struct BlockSpec {
  int G = 5;
  int k = 3;
  double sigma = 1.0;
};

struct FlowKanConfig {
  int flow_hidden = 8;
  int link_hidden = 2;
  int rounds = 3;  // K
  double dropout = 0.1;
  Activation act = Activation::Tanh;
  ActMode act_mode = ActMode::ExceptMp;
  // keys: flow_init, link_init, f2l.0..K-1, l2f.0..K-1, fuse, final
  std::map<std::string, BlockSpec> blocks;
  double enc_lo = -1.0, enc_hi = 1.5;  // encoder grid domain
  double hid_lo = -2.0, hid_hi = 2.0;  // hidden-block grid domain

  static FlowKanConfig defaults();
  void validate() const;
  nlohmann::json to_json() const;
  static FlowKanConfig from_json(const nlohmann::json& j);
};

// Canonical pipeline block names in distillation order:
// flow_init, link_init, L{i}.f2l.T, L{i}.f2l.A, L{i}.l2f.T, L{i}.l2f.A
// (i = 0..K-1), fuse, final. "final" is the composed readout (two stacked
// KAN layers) evaluated pre-softplus.
std::vector<std::string> canonical_block_names(const FlowKanConfig& cfg);

// Per-sample evaluator for one named block; vector in -> vector out.
using BlockFn =
    std::function<std::vector<double>(const std::string& name, const std::vector<double>& in)>;

// Records every (input, output) pair of one named block during a pipeline run.
struct BlockIoRecorder {
  std::string target;
  std::vector<std::pair<std::vector<double>, std::vector<double>>> samples;
};

// The FlowKANet dataflow in plain doubles with pluggable block evaluation.
// Structural math (LeakyReLU edge mix, segmented softmax, residual updates,
// neighbor sums, post-block activations, terminal softplus) lives here.
std::vector<double> flowkan_pipeline(const FlowKanConfig& cfg, const HeteroGraph& g,
                                     const Normalizer& flow_norm, const Normalizer& link_norm,
                                     double output_scale, const BlockFn& block,
                                     BlockIoRecorder* recorder = nullptr);

class FlowKanModel {
 public:
  FlowKanModel(const FlowKanConfig& config, Rng& rng);

  // Taped forward for training: (n_flows, 1) delays in seconds.
  Tensor forward(const HeteroGraph& g, bool training, Rng& rng);
  // Plain-double forward through flowkan_pipeline (serial reference path).
  std::vector<double> predict(const HeteroGraph& g) const;

  // Neural per-block evaluator usable in hybrid pipelines.
  std::vector<double> eval_block(const std::string& name, const std::vector<double>& in) const;

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  long long param_count() const;
  const FlowKanConfig& config() const { return cfg_; }
  const KanLayer& layer(const std::string& checkpoint_name) const;

  Normalizer flow_norm, link_norm;
  double output_scale = 1.0;

  Checkpoint to_checkpoint() const;
  static FlowKanModel from_checkpoint(const Checkpoint& ckpt);

 private:
  FlowKanConfig cfg_;
  ParamSet params_;
  KanLayer flow_init_, link_init_;
  std::vector<KanLayer> t_f2l_, a_f2l_, t_l2f_, a_l2f_;
  KanLayer fuse_, final0_, final1_;
};

}  // namespace netkan
