#include "netkan/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace netkan {

using nlohmann::json;

nlohmann::json normalizer_to_json(const Normalizer& n) {
  return json{{"min_feat", n.min_feat}, {"inv_range", n.inv_range}};
}

Normalizer normalizer_from_json(const nlohmann::json& j) {
  Normalizer n;
  n.min_feat = j.at("min_feat").get<std::vector<double>>();
  n.inv_range = j.at("inv_range").get<std::vector<double>>();
  return n;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  json j;
  j["format"] = "netkan-checkpoint";
  j["version"] = 1;
  j["kind"] = ckpt.kind;
  j["config"] = ckpt.config;
  j["flow_norm"] = normalizer_to_json(ckpt.flow_norm);
  j["link_norm"] = normalizer_to_json(ckpt.link_norm);
  j["output_scale"] = ckpt.output_scale;
  json tensors = json::array();
  for (const auto& [name, t] : ckpt.tensors)
    tensors.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()},
                       {"data", t.data()}});
  j["tensors"] = std::move(tensors);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << j.dump() << "\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("checkpoint parse error in " + path + ": " + e.what());
  }
  if (j.value("format", "") != "netkan-checkpoint" || j.value("version", 0) != 1)
    throw std::runtime_error("checkpoint format/version mismatch in " + path);
  Checkpoint c;
  c.kind = j.at("kind").get<std::string>();
  c.config = j.at("config");
  c.flow_norm = normalizer_from_json(j.at("flow_norm"));
  c.link_norm = normalizer_from_json(j.at("link_norm"));
  c.output_scale = j.at("output_scale").get<double>();
  for (const auto& jt : j.at("tensors")) {
    int r = jt.at("rows").get<int>(), cc = jt.at("cols").get<int>();
    auto data = jt.at("data").get<std::vector<double>>();
    c.tensors.emplace_back(jt.at("name").get<std::string>(),
                           Tensor::from(r, cc, std::move(data), true));
  }
  return c;
}

void load_params_from(const Checkpoint& ckpt, ParamSet& params) {
  if (ckpt.tensors.size() != params.items.size())
    throw std::runtime_error("checkpoint/config mismatch: tensor count differs");
  for (const auto& [name, t] : ckpt.tensors) {
    Tensor* dst = params.find(name);
    if (!dst) throw std::runtime_error("checkpoint/config mismatch: unknown tensor " + name);
    if (dst->rows() != t.rows() || dst->cols() != t.cols())
      throw std::runtime_error("checkpoint/config mismatch: shape differs for " + name);
    dst->data() = t.data();
  }
}

void store_params_into(const ParamSet& params, Checkpoint& ckpt) {
  ckpt.tensors.clear();
  for (const auto& [name, t] : params.items) ckpt.tensors.emplace_back(name, t.clone());
}

}  // namespace netkan
