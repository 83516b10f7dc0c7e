#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "netkan/netgraph.hpp"
#include "netkan/rng.hpp"

namespace netkan {

struct ScenarioConfig {
  int n_nodes_min = 5, n_nodes_max = 9;
  int n_links_min = 4, n_links_max = 12;
  int n_flows_min = 5, n_flows_max = 20;
  std::vector<double> capacity_choices = {1.0, 2.5, 5.0, 10.0};  // Gbit/s
  double rate_min = 2e6, rate_max = 2e8;        // bits/s
  double pkt_size_min = 300, pkt_size_max = 1500;  // bytes
  double utilization_cap = 0.85;                // per-link, must stay < 1
  double prop_delay = 2e-6;                     // seconds, per link
  double mb_fraction = 0.3;                     // bursty-flow probability
  double duration = 10.0;                       // nominal seconds, sets packet counts
  std::uint64_t seed = 1;

  void validate() const;
};

// Per-link M/M/1 sojourn time plus propagation, summed over the flow's path.
// Service rate mu_l = C_l*1e9 / (8*E[pkt bytes]); arrival lambda_l is the
// aggregate packet rate of traversing flows. Throws if any link has
// lambda >= mu (the generator must prevent this).
double delay_oracle(const FlowRecord& flow, const std::vector<FlowRecord>& all_flows,
                    const std::vector<LinkRecord>& links, const std::vector<double>& prop_delays);

// One labeled graph: random connected topology, shortest-path routing,
// feature synthesis, utilization rescaling, M/M/1 labels.
HeteroGraph generate_scenario(const ScenarioConfig& config, Rng& rng);

// n graphs with per-index derived seeds (order independent of scheduling).
std::vector<HeteroGraph> generate_dataset(const ScenarioConfig& config, int n_graphs);

// Candidate feature table for feature selection: the 16 real flow features
// plus engineered distractor columns, with delay targets.
struct CandidateTable {
  std::vector<std::string> names;
  std::vector<std::vector<double>> X;  // rows = flows
  std::vector<double> y;               // delays
};

CandidateTable candidate_features(const std::vector<HeteroGraph>& graphs, int n_distractors,
                                  std::uint64_t seed);

void save_candidate_table(const CandidateTable& table, const std::string& path);
CandidateTable load_candidate_table(const std::string& path);

}  // namespace netkan
