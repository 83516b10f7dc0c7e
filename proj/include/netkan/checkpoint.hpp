#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "netkan/netgraph.hpp"
#include "netkan/tensor.hpp"

namespace netkan {

// Versioned container shared by both model tiers: named parameter tensors,
// architecture config, normalization buffers, output scale.
struct Checkpoint {
  std::string kind;  // "baseline" | "flowkan"
  nlohmann::json config;
  std::vector<std::pair<std::string, Tensor>> tensors;
  Normalizer flow_norm, link_norm;
  double output_scale = 1.0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

nlohmann::json normalizer_to_json(const Normalizer& n);
Normalizer normalizer_from_json(const nlohmann::json& j);

// Copies checkpoint tensor data into an already-constructed parameter set;
// names and shapes must match exactly.
void load_params_from(const Checkpoint& ckpt, ParamSet& params);
void store_params_into(const ParamSet& params, Checkpoint& ckpt);

}  // namespace netkan
