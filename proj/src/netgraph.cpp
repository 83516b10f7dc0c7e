#include "netkan/netgraph.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace netkan {

using nlohmann::json;

const std::array<std::string, kFlowFeatureCount>& flow_feature_names() {
  static const std::array<std::string, kFlowFeatureCount> names = {
      "flow_traffic", "flow_packets", "flow_packet_size", "flow_type",
      "flow_length", "flow_p10PktSize", "flow_tos", "flow_packet_loss",
      "ibg", "rate", "flow_bitrate_per_burst", "flow_ipg_mean",
      "flow_ipg_var", "ipg_p11", "ipg_p99", "ipg_p100"};
  return names;
}

std::array<double, kFlowFeatureCount> FlowRecord::features() const {
  return {flow_traffic, flow_packets, flow_packet_size, flow_type,
          flow_length, flow_p10_pkt_size, flow_tos, flow_packet_loss,
          ibg, rate, flow_bitrate_per_burst, flow_ipg_mean,
          flow_ipg_var, ipg_p11, ipg_p99, ipg_p100};
}

void FlowRecord::set_feature(int index, double value) {
  double* slots[kFlowFeatureCount] = {
      &flow_traffic, &flow_packets, &flow_packet_size, &flow_type,
      &flow_length, &flow_p10_pkt_size, &flow_tos, &flow_packet_loss,
      &ibg, &rate, &flow_bitrate_per_burst, &flow_ipg_mean,
      &flow_ipg_var, &ipg_p11, &ipg_p99, &ipg_p100};
  if (index < 0 || index >= kFlowFeatureCount)
    throw std::out_of_range("FlowRecord::set_feature: bad index");
  *slots[index] = value;
}

double compute_link_load(const std::vector<FlowRecord>& flows, int link, double capacity_gbps) {
  if (capacity_gbps <= 0.0) throw std::invalid_argument("compute_link_load: capacity must be > 0");
  constexpr double eps = 1e-9;
  double total = 0.0;
  for (const auto& f : flows)
    for (int l : f.path)
      if (l == link) total += f.flow_traffic;
  return total / (capacity_gbps * 1e9 + eps);
}

HeteroGraph build_graph(const Scenario& scenario) {
  HeteroGraph g;
  int n_links = static_cast<int>(scenario.link_capacities.size());
  for (size_t fi = 0; fi < scenario.flows.size(); ++fi) {
    const auto& f = scenario.flows[fi];
    if (f.path.empty())
      throw std::invalid_argument("build_graph: flow " + std::to_string(fi) + " has empty path");
    std::set<int> seen;
    for (int l : f.path) {
      if (l < 0 || l >= n_links)
        throw std::invalid_argument("build_graph: flow " + std::to_string(fi) +
                                    " references unknown link " + std::to_string(l));
      if (!seen.insert(l).second)
        throw std::invalid_argument("build_graph: flow " + std::to_string(fi) +
                                    " traverses link " + std::to_string(l) + " twice");
    }
  }
  g.flows = scenario.flows;
  g.links.resize(n_links);
  for (int l = 0; l < n_links; ++l) {
    g.links[l].capacity = scenario.link_capacities[l];
    g.links[l].load = compute_link_load(g.flows, l, g.links[l].capacity);
  }
  for (size_t fi = 0; fi < g.flows.size(); ++fi)
    for (int l : g.flows[fi].path) {
      g.edges_f2l.emplace_back(static_cast<int>(fi), l);
      g.edges_l2f.emplace_back(l, static_cast<int>(fi));
    }
  return g;
}

std::vector<double> Normalizer::apply(const std::vector<double>& features) const {
  if (features.size() != min_feat.size())
    throw std::invalid_argument("Normalizer: width mismatch");
  std::vector<double> out(features.size());
  for (size_t i = 0; i < features.size(); ++i)
    out[i] = (features[i] - min_feat[i]) * inv_range[i];
  return out;
}

Normalizer fit_normalizer(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw std::invalid_argument("fit_normalizer: empty training set");
  size_t w = rows[0].size();
  Normalizer n;
  n.min_feat.assign(w, 0.0);
  n.inv_range.assign(w, 0.0);
  std::vector<double> mx(w);
  for (size_t j = 0; j < w; ++j) n.min_feat[j] = mx[j] = rows[0][j];
  for (const auto& r : rows) {
    if (r.size() != w) throw std::invalid_argument("fit_normalizer: ragged rows");
    for (size_t j = 0; j < w; ++j) {
      n.min_feat[j] = std::min(n.min_feat[j], r[j]);
      mx[j] = std::max(mx[j], r[j]);
    }
  }
  for (size_t j = 0; j < w; ++j) {
    double range = mx[j] - n.min_feat[j];
    n.inv_range[j] = range > 0.0 ? 1.0 / range : 0.0;
  }
  return n;
}

Normalizer fit_flow_normalizer(const std::vector<HeteroGraph>& graphs) {
  std::vector<std::vector<double>> rows;
  for (const auto& g : graphs)
    for (const auto& f : g.flows) {
      auto a = f.features();
      rows.emplace_back(a.begin(), a.end());
    }
  return fit_normalizer(rows);
}

Normalizer fit_link_normalizer(const std::vector<HeteroGraph>& graphs) {
  std::vector<std::vector<double>> rows;
  for (const auto& g : graphs)
    for (const auto& l : g.links) {
      auto a = l.features();
      rows.emplace_back(a.begin(), a.end());
    }
  return fit_normalizer(rows);
}

namespace {

constexpr const char* kDatasetHeader = "# netkan-dataset v1";

json flow_to_json(const FlowRecord& f) {
  json j;
  auto feats = f.features();
  const auto& names = flow_feature_names();
  for (int i = 0; i < kFlowFeatureCount; ++i) j[names[i]] = feats[i];
  j["path"] = f.path;
  j["delay_label"] = f.delay_label;
  return j;
}

FlowRecord flow_from_json(const json& j) {
  FlowRecord f;
  const auto& names = flow_feature_names();
  for (int i = 0; i < kFlowFeatureCount; ++i) f.set_feature(i, j.at(names[i]).get<double>());
  f.path = j.at("path").get<std::vector<int>>();
  f.delay_label = j.at("delay_label").get<double>();
  return f;
}

json graph_to_json(const HeteroGraph& g) {
  json j;
  json flows = json::array();
  for (const auto& f : g.flows) flows.push_back(flow_to_json(f));
  j["flows"] = std::move(flows);
  json links = json::array();
  for (const auto& l : g.links) links.push_back({{"capacity", l.capacity}, {"load", l.load}});
  j["links"] = std::move(links);
  json edges = json::array();
  for (const auto& [f, l] : g.edges_f2l) edges.push_back({f, l});
  j["edges_f2l"] = std::move(edges);
  return j;
}

HeteroGraph graph_from_json(const json& j) {
  HeteroGraph g;
  for (const auto& jf : j.at("flows")) g.flows.push_back(flow_from_json(jf));
  for (const auto& jl : j.at("links")) {
    LinkRecord l;
    l.capacity = jl.at("capacity").get<double>();
    l.load = jl.at("load").get<double>();
    g.links.push_back(l);
  }
  for (const auto& je : j.at("edges_f2l")) {
    int f = je.at(0).get<int>(), l = je.at(1).get<int>();
    g.edges_f2l.emplace_back(f, l);
    g.edges_l2f.emplace_back(l, f);
  }
  return g;
}

}  // namespace

std::string dataset_to_string(const std::vector<HeteroGraph>& graphs) {
  std::ostringstream out;
  out << kDatasetHeader << "\n";
  for (const auto& g : graphs) out << graph_to_json(g).dump() << "\n";
  return out.str();
}

std::vector<HeteroGraph> dataset_from_string(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kDatasetHeader)
    throw std::runtime_error("dataset parse error: missing or bad header line");
  std::vector<HeteroGraph> graphs;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      graphs.push_back(graph_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error("dataset parse error at line " + std::to_string(line_no) + ": " +
                               e.what());
    }
  }
  return graphs;
}

void save_dataset(const std::vector<HeteroGraph>& graphs, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << dataset_to_string(graphs);
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<HeteroGraph> load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return dataset_from_string(buf.str());
}

}  // namespace netkan
