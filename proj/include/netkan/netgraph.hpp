#pragma once

#include <array>
#include <string>
#include <vector>

namespace netkan {

inline constexpr int kFlowFeatureCount = 16;
inline constexpr int kLinkFeatureCount = 2;

// Canonical flow feature ordering used everywhere (feature vectors,
// normalizers, selection files).
const std::array<std::string, kFlowFeatureCount>& flow_feature_names();

struct FlowRecord {
  double flow_traffic = 0;           // bits/s
  double flow_packets = 0;           // count
  double flow_packet_size = 0;       // bytes
  double flow_type = 0;              // CBR=0, MB=1
  double flow_length = 0;            // hop count
  double flow_p10_pkt_size = 0;      // bytes
  double flow_tos = 0;               // raw integer
  double flow_packet_loss = 0;       // percent
  double ibg = 0;                    // seconds
  double rate = 0;                   // bits/s
  double flow_bitrate_per_burst = 0; // bits/s
  double flow_ipg_mean = 0;          // seconds
  double flow_ipg_var = 0;           // seconds^2
  double ipg_p11 = 0;                // seconds
  double ipg_p99 = 0;
  double ipg_p100 = 0;

  std::vector<int> path;    // ordered link ids
  double delay_label = 0;   // seconds (training only)

  std::array<double, kFlowFeatureCount> features() const;
  void set_feature(int index, double value);
};

struct LinkRecord {
  double capacity = 1.0;  // Gbit/s
  double load = 0.0;      // dimensionless fraction

  std::array<double, kLinkFeatureCount> features() const { return {capacity, load}; }
};

struct HeteroGraph {
  std::vector<FlowRecord> flows;
  std::vector<LinkRecord> links;
  std::vector<std::pair<int, int>> edges_f2l;  // (flow idx, link idx)
  std::vector<std::pair<int, int>> edges_l2f;  // exact mirror (link idx, flow idx)
};

// Eq-style link load: sum of traversing flow traffic over C*1e9 + eps.
double compute_link_load(const std::vector<FlowRecord>& flows, int link, double capacity_gbps);

// Scenario: flows with paths over a set of links; loads and edges derived.
struct Scenario {
  std::vector<FlowRecord> flows;
  std::vector<double> link_capacities;  // Gbit/s, indexed by link id
};

// Validates paths, computes loads, creates bidirectional edges.
HeteroGraph build_graph(const Scenario& scenario);

struct Normalizer {
  std::vector<double> min_feat;
  std::vector<double> inv_range;  // 0 where max == min

  std::vector<double> apply(const std::vector<double>& features) const;
  int width() const { return static_cast<int>(min_feat.size()); }
};

// Per-feature min/max over rows; constant features get inv_range 0.
Normalizer fit_normalizer(const std::vector<std::vector<double>>& rows);
Normalizer fit_flow_normalizer(const std::vector<HeteroGraph>& graphs);
Normalizer fit_link_normalizer(const std::vector<HeteroGraph>& graphs);

// Line-delimited dataset file: version header line, then one JSON graph per line.
void save_dataset(const std::vector<HeteroGraph>& graphs, const std::string& path);
std::vector<HeteroGraph> load_dataset(const std::string& path);

std::string dataset_to_string(const std::vector<HeteroGraph>& graphs);
std::vector<HeteroGraph> dataset_from_string(const std::string& text);

}  // namespace netkan
