#pragma once

#include <json.hpp>

#include "netkan/checkpoint.hpp"
#include "netkan/netgraph.hpp"
#include "netkan/tensor.hpp"

namespace netkan {

struct BaselineConfig {
  int flow_hidden = 48;
  int link_hidden = 16;
  int encoder_hidden = 64;
  int readout_hidden = 64;
  int rounds = 3;  // K
  double dropout = 0.1;
  Activation act = Activation::Tanh;
  bool gru_per_round = true;  // false: single GRU refinement after the loop

  void validate() const;
  nlohmann::json to_json() const;
  static BaselineConfig from_json(const nlohmann::json& j);
};

// Heterogeneous GNN: MLP encoders, K rounds of bidirectional attention
// message passing, GRU flow refinement, fuse + readout MLP with softplus.
class BaselineModel {
 public:
  BaselineModel(const BaselineConfig& config, Rng& rng);

  // (n_flows, 1) predicted delays in seconds
  Tensor forward(const HeteroGraph& g, bool training, Rng& rng);
  std::vector<double> predict(const HeteroGraph& g);

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  long long param_count() const { return params_.scalar_count(); }
  const BaselineConfig& config() const { return cfg_; }

  Normalizer flow_norm, link_norm;
  double output_scale = 1.0;

  Checkpoint to_checkpoint() const;
  static BaselineModel from_checkpoint(const Checkpoint& ckpt);

 private:
  struct AttnParams {
    Tensor w_send, w_recv, attn;  // attn is (1, 2*recv_dim)
  };

  BaselineConfig cfg_;
  ParamSet params_;
  Tensor ef_w1, ef_b1, ef_w2, ef_b2;  // flow encoder
  Tensor el_w1, el_b1, el_w2, el_b2;  // link encoder
  std::vector<AttnParams> f2l_, l2f_;
  std::vector<Tensor> link_u_, link_bu_;  // link update per round
  std::vector<GruParams> gru_;            // flow refinement
  Tensor ro_w1, ro_b1, ro_w2, ro_b2;      // readout
};

}  // namespace netkan
