#include "netkan/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <queue>
#include <sstream>
#include <stdexcept>

namespace netkan {

void ScenarioConfig::validate() const {
  if (n_nodes_min < 2 || n_nodes_max < n_nodes_min)
    throw std::invalid_argument("ScenarioConfig: bad node range");
  if (n_links_min < 1 || n_links_max < n_links_min)
    throw std::invalid_argument("ScenarioConfig: bad link range");
  if (n_flows_min < 0 || n_flows_max < n_flows_min)
    throw std::invalid_argument("ScenarioConfig: bad flow range");
  if (capacity_choices.empty()) throw std::invalid_argument("ScenarioConfig: no capacities");
  if (!(utilization_cap > 0.0 && utilization_cap < 1.0))
    throw std::invalid_argument("ScenarioConfig: utilization cap must be in (0,1)");
  if (rate_min <= 0 || rate_max < rate_min) throw std::invalid_argument("ScenarioConfig: bad rates");
  if (pkt_size_min <= 0 || pkt_size_max < pkt_size_min)
    throw std::invalid_argument("ScenarioConfig: bad packet sizes");
}

namespace {

struct LinkTraffic {
  double lambda = 0.0;  // pkt/s
  double bits = 0.0;    // bits/s
};

std::vector<LinkTraffic> link_traffic(const std::vector<FlowRecord>& flows, size_t n_links) {
  std::vector<LinkTraffic> t(n_links);
  for (const auto& f : flows) {
    double pkt_rate = f.flow_traffic / (8.0 * f.flow_packet_size);
    for (int l : f.path) {
      t[l].lambda += pkt_rate;
      t[l].bits += f.flow_traffic;
    }
  }
  return t;
}

// Nominal service packet size. Keeping mu independent of the traffic mix makes
// the oracle strictly monotone in any traversing flow's traffic; arrival rates
// still use the flows' actual packet sizes.
constexpr double kServicePktBytes = 500.0;

double link_mu(const LinkTraffic&, double capacity_gbps) {
  return capacity_gbps * 1e9 / (8.0 * kServicePktBytes);
}

}  // namespace

double delay_oracle(const FlowRecord& flow, const std::vector<FlowRecord>& all_flows,
                    const std::vector<LinkRecord>& links, const std::vector<double>& prop_delays) {
  auto traffic = link_traffic(all_flows, links.size());
  double delay = 0.0;
  for (int l : flow.path) {
    double mu = link_mu(traffic[l], links[l].capacity);
    double lambda = traffic[l].lambda;
    if (lambda >= mu)
      throw std::runtime_error("delay_oracle: unstable link " + std::to_string(l) +
                               " (lambda >= mu)");
    double prop = l < static_cast<int>(prop_delays.size()) ? prop_delays[l] : 0.0;
    delay += 1.0 / (mu - lambda) + prop;
  }
  return delay;
}

HeteroGraph generate_scenario(const ScenarioConfig& config, Rng& rng) {
  config.validate();
  int n_nodes = rng.uniform_int(config.n_nodes_min, config.n_nodes_max);
  int max_links = n_nodes * (n_nodes - 1) / 2;
  int n_links = std::clamp(rng.uniform_int(config.n_links_min, config.n_links_max),
                           n_nodes - 1, max_links);

  // random spanning tree, then extra distinct edges
  std::vector<std::pair<int, int>> node_edges;
  std::vector<int> perm(n_nodes);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = n_nodes - 1; i > 0; --i)
    std::swap(perm[i], perm[rng.uniform_int(0, i)]);
  for (int i = 1; i < n_nodes; ++i) {
    int j = rng.uniform_int(0, i - 1);
    int a = std::min(perm[i], perm[j]), b = std::max(perm[i], perm[j]);
    node_edges.emplace_back(a, b);
  }
  auto has_edge = [&](int a, int b) {
    return std::find(node_edges.begin(), node_edges.end(), std::make_pair(a, b)) !=
           node_edges.end();
  };
  int guard = 0;
  while (static_cast<int>(node_edges.size()) < n_links && guard++ < 10000) {
    int a = rng.uniform_int(0, n_nodes - 1);
    int b = rng.uniform_int(0, n_nodes - 1);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (!has_edge(a, b)) node_edges.emplace_back(a, b);
  }
  n_links = static_cast<int>(node_edges.size());

  Scenario scenario;
  scenario.link_capacities.resize(n_links);
  for (int l = 0; l < n_links; ++l)
    scenario.link_capacities[l] =
        config.capacity_choices[rng.uniform_index(config.capacity_choices.size())];

  // adjacency for BFS routing (deterministic neighbor order: link index)
  std::vector<std::vector<std::pair<int, int>>> adj(n_nodes);  // (neighbor node, link id)
  for (int l = 0; l < n_links; ++l) {
    auto [a, b] = node_edges[l];
    adj[a].emplace_back(b, l);
    adj[b].emplace_back(a, l);
  }
  auto shortest_path = [&](int src, int dst) -> std::vector<int> {
    std::vector<int> prev_node(n_nodes, -1), prev_link(n_nodes, -1);
    std::queue<int> q;
    q.push(src);
    prev_node[src] = src;
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      if (u == dst) break;
      for (auto [v, l] : adj[u])
        if (prev_node[v] == -1) {
          prev_node[v] = u;
          prev_link[v] = l;
          q.push(v);
        }
    }
    std::vector<int> path;
    for (int u = dst; u != src; u = prev_node[u]) path.push_back(prev_link[u]);
    std::reverse(path.begin(), path.end());
    return path;
  };

  int n_flows = rng.uniform_int(config.n_flows_min, config.n_flows_max);
  std::vector<FlowRecord> flows;
  flows.reserve(n_flows);
  for (int i = 0; i < n_flows; ++i) {
    FlowRecord f;
    int src = rng.uniform_int(0, n_nodes - 1);
    int dst = src;
    while (dst == src) dst = rng.uniform_int(0, n_nodes - 1);
    f.path = shortest_path(src, dst);
    // log-uniform traffic rate
    f.flow_traffic = std::exp(rng.uniform(std::log(config.rate_min), std::log(config.rate_max)));
    f.flow_packet_size = std::round(rng.uniform(config.pkt_size_min, config.pkt_size_max));
    f.flow_type = rng.bernoulli(config.mb_fraction) ? 1.0 : 0.0;
    f.flow_tos = static_cast<double>(8 * rng.uniform_int(0, 31));
    flows.push_back(std::move(f));
  }

  // rescale all rates so every link's utilization stays below the cap
  {
    std::vector<LinkTraffic> t = link_traffic(flows, n_links);
    double worst = 0.0;
    for (int l = 0; l < n_links; ++l) {
      double rho = t[l].lambda / link_mu(t[l], scenario.link_capacities[l]);
      worst = std::max(worst, rho);
    }
    if (worst > config.utilization_cap) {
      double shrink = config.utilization_cap / worst;
      for (auto& f : flows) f.flow_traffic *= shrink;
    }
  }

  // derived per-flow descriptors
  std::vector<double> prop_delays(n_links, config.prop_delay);
  for (auto& f : flows) {
    bool bursty = f.flow_type > 0.5;
    double pkt_rate = f.flow_traffic / (8.0 * f.flow_packet_size);
    f.flow_packets = std::round(pkt_rate * config.duration);
    f.flow_length = static_cast<double>(f.path.size());
    f.flow_p10_pkt_size = std::round(f.flow_packet_size * rng.uniform(0.7, 1.0));
    f.flow_packet_loss = 0.0;  // infinite-buffer M/M/1 regime
    f.rate = f.flow_traffic * rng.uniform(0.98, 1.02);
    f.flow_ipg_mean = 1.0 / pkt_rate;
    double cv = bursty ? rng.uniform(0.5, 1.5) : rng.uniform(0.01, 0.1);
    f.flow_ipg_var = (cv * f.flow_ipg_mean) * (cv * f.flow_ipg_mean);
    f.ipg_p11 = f.flow_ipg_mean * std::max(0.05, 1.0 - 1.2 * cv);
    f.ipg_p99 = f.flow_ipg_mean * (1.0 + 2.3 * cv);
    f.ipg_p100 = f.ipg_p99 * (1.0 + 0.5 * cv);
    if (bursty) {
      double burst_len = rng.uniform(4.0, 32.0);
      f.ibg = burst_len * f.flow_ipg_mean * rng.uniform(1.5, 4.0);
      f.flow_bitrate_per_burst = f.flow_traffic * rng.uniform(1.5, 4.0);
    } else {
      f.ibg = f.flow_ipg_mean;
      f.flow_bitrate_per_burst = f.flow_traffic;
    }
  }

  scenario.flows = std::move(flows);
  HeteroGraph g = build_graph(scenario);
  for (auto& f : g.flows) f.delay_label = delay_oracle(f, g.flows, g.links, prop_delays);
  return g;
}

std::vector<HeteroGraph> generate_dataset(const ScenarioConfig& config, int n_graphs) {
  std::vector<HeteroGraph> out(n_graphs);
  Rng root(config.seed);
  for (int i = 0; i < n_graphs; ++i) {
    Rng child = root.split(static_cast<std::uint64_t>(i));
    out[i] = generate_scenario(config, child);
  }
  return out;
}

CandidateTable candidate_features(const std::vector<HeteroGraph>& graphs, int n_distractors,
                                  std::uint64_t seed) {
  CandidateTable t;
  const auto& real = flow_feature_names();
  t.names.assign(real.begin(), real.end());
  for (int d = 0; d < n_distractors; ++d) t.names.push_back("distractor_" + std::to_string(d));
  Rng rng(seed ^ 0xd15c0ull);
  for (const auto& g : graphs)
    for (const auto& f : g.flows) {
      auto feats = f.features();
      std::vector<double> row(feats.begin(), feats.end());
      for (int d = 0; d < n_distractors; ++d) {
        // mix of pure noise and label-independent derived columns
        double v;
        switch (d % 4) {
          case 0: v = rng.normal(0.0, 1.0); break;
          case 1: v = rng.uniform(0.0, 100.0); break;
          case 2: v = std::sin(feats[d % kFlowFeatureCount]) + rng.normal(0.0, 0.5); break;
          default: v = rng.bernoulli(0.5) ? 1.0 : 0.0; break;
        }
        row.push_back(v);
      }
      t.X.push_back(std::move(row));
      t.y.push_back(f.delay_label);
    }
  return t;
}

void save_candidate_table(const CandidateTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "# netkan-candidates v1\n";
  out.precision(17);
  for (size_t i = 0; i < table.names.size(); ++i)
    out << table.names[i] << (i + 1 < table.names.size() ? ',' : '\n');
  out << "target\n";  // marker line: last column in data rows is the target
  for (size_t r = 0; r < table.X.size(); ++r) {
    for (double v : table.X[r]) out << v << ',';
    out << table.y[r] << "\n";
  }
}

CandidateTable load_candidate_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "# netkan-candidates v1")
    throw std::runtime_error("candidate table parse error: bad header");
  CandidateTable t;
  if (!std::getline(in, line)) throw std::runtime_error("candidate table: missing names");
  std::stringstream names(line);
  std::string tok;
  while (std::getline(names, tok, ',')) t.names.push_back(tok);
  if (!std::getline(in, line) || line != "target")
    throw std::runtime_error("candidate table: missing target marker");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::vector<double> vals;
    while (std::getline(row, tok, ',')) vals.push_back(std::stod(tok));
    if (vals.size() != t.names.size() + 1)
      throw std::runtime_error("candidate table: bad row width");
    t.y.push_back(vals.back());
    vals.pop_back();
    t.X.push_back(std::move(vals));
  }
  return t;
}

}  // namespace netkan
