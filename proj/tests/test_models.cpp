#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "netkan/baseline.hpp"
#include "netkan/datagen.hpp"
#include "netkan/distill.hpp"
#include "netkan/flowkan.hpp"
#include "netkan/trainer.hpp"

using namespace netkan;
using netkan::testing::max_grad_rel_error;

namespace {

HeteroGraph tiny_graph() {
  Scenario s;
  s.link_capacities = {1.0, 2.5};
  FlowRecord f0;
  f0.flow_traffic = 5e6;
  f0.flow_packet_size = 1000;
  f0.flow_packets = 625;
  f0.flow_length = 2;
  f0.rate = 5.1e6;
  f0.flow_ipg_mean = 1.6e-3;
  f0.path = {0, 1};
  f0.delay_label = 1.2e-5;
  FlowRecord f1;
  f1.flow_traffic = 2e7;
  f1.flow_packet_size = 400;
  f1.flow_packets = 62500;
  f1.flow_length = 1;
  f1.flow_type = 1.0;
  f1.rate = 2.02e7;
  f1.flow_ipg_mean = 1.6e-4;
  f1.path = {1};
  f1.delay_label = 6.0e-6;
  s.flows = {f0, f1};
  return build_graph(s);
}

template <class Model>
void prep(Model& m, const HeteroGraph& g) {
  fit_preprocessing(m, std::vector<HeteroGraph>{g});
}

// consistent relabeling of flows and links; returns permuted graph plus the
// flow index map (new index -> old index)
HeteroGraph permuted(const HeteroGraph& g, const std::vector<int>& flow_perm,
                     const std::vector<int>& link_perm) {
  std::vector<int> link_old_to_new(g.links.size());
  for (size_t i = 0; i < link_perm.size(); ++i) link_old_to_new[link_perm[i]] = static_cast<int>(i);
  Scenario s;
  s.link_capacities.resize(g.links.size());
  for (size_t i = 0; i < link_perm.size(); ++i)
    s.link_capacities[i] = g.links[link_perm[i]].capacity;
  for (int old_f : flow_perm) {
    FlowRecord f = g.flows[old_f];
    for (int& l : f.path) l = link_old_to_new[l];
    s.flows.push_back(std::move(f));
  }
  return build_graph(s);
}

}  // namespace

TEST_CASE("both models produce strictly positive finite predictions") {
  ScenarioConfig sc;
  sc.seed = 31;
  auto graphs = generate_dataset(sc, 6);
  Rng rng(1);
  FlowKanModel fk(FlowKanConfig::defaults(), rng);
  prep(fk, graphs[0]);
  Rng rng2(2);
  BaselineModel bl(BaselineConfig{}, rng2);
  prep(bl, graphs[0]);
  for (const auto& g : graphs) {
    for (double p : fk.predict(g)) {
      CHECK(p > 0.0);
      CHECK(std::isfinite(p));
    }
    for (double p : bl.predict(g)) {
      CHECK(p > 0.0);
      CHECK(std::isfinite(p));
    }
  }
}

TEST_CASE("node and edge permutation invariance within 1e-9") {
  ScenarioConfig sc;
  sc.seed = 13;
  Rng grng(sc.seed);
  HeteroGraph g = generate_scenario(sc, grng);
  REQUIRE(g.flows.size() >= 3);
  std::vector<int> fperm(g.flows.size()), lperm(g.links.size());
  for (size_t i = 0; i < fperm.size(); ++i) fperm[i] = static_cast<int>(fperm.size() - 1 - i);
  for (size_t i = 0; i < lperm.size(); ++i) lperm[i] = static_cast<int>(lperm.size() - 1 - i);
  HeteroGraph gp = permuted(g, fperm, lperm);

  Rng rng(7);
  FlowKanModel fk(FlowKanConfig::defaults(), rng);
  prep(fk, g);
  auto base = fk.predict(g);
  auto perm = fk.predict(gp);
  for (size_t i = 0; i < fperm.size(); ++i)
    CHECK(std::fabs(perm[i] - base[fperm[i]]) < 1e-9 * std::max(1.0, std::fabs(base[fperm[i]])));

  Rng rng2(8);
  BaselineModel bl(BaselineConfig{}, rng2);
  prep(bl, g);
  auto base_b = bl.predict(g);
  auto perm_b = bl.predict(gp);
  for (size_t i = 0; i < fperm.size(); ++i)
    CHECK(std::fabs(perm_b[i] - base_b[fperm[i]]) <
          1e-9 * std::max(1.0, std::fabs(base_b[fperm[i]])));
}

TEST_CASE("residual identity: zeroed transforms leave embeddings at their encodings") {
  HeteroGraph g = tiny_graph();
  Rng rng(3);
  FlowKanModel fk(FlowKanConfig::defaults(), rng);
  prep(fk, g);

  // run the pipeline with all message transforms forced to zero and capture
  // the fuse input, which is [h_f, c_f] after all rounds
  BlockFn zeroed = [&](const std::string& name, const std::vector<double>& in) {
    if (name.find(".T") != std::string::npos)
      return std::vector<double>(block_out_width(fk.config(), name), 0.0);
    return fk.eval_block(name, in);
  };
  BlockIoRecorder rec;
  rec.target = "fuse";
  flowkan_pipeline(fk.config(), g, fk.flow_norm, fk.link_norm, fk.output_scale, zeroed, &rec);
  REQUIRE(rec.samples.size() == g.flows.size());

  int fh = fk.config().flow_hidden;
  for (size_t fi = 0; fi < g.flows.size(); ++fi) {
    auto feats = g.flows[fi].features();
    std::vector<double> enc =
        fk.eval_block("flow_init", fk.flow_norm.apply({feats.begin(), feats.end()}));
    for (auto& v : enc) v = std::tanh(v);  // except_mp mode activates encoders
    for (int j = 0; j < fh; ++j) CHECK(rec.samples[fi].first[j] == enc[j]);
  }
}

TEST_CASE("taped forward equals the serial pipeline") {
  ScenarioConfig sc;
  sc.seed = 21;
  auto graphs = generate_dataset(sc, 4);
  Rng rng(5);
  FlowKanModel fk(FlowKanConfig::defaults(), rng);
  prep(fk, graphs[0]);
  NoGradGuard guard;
  Rng fw(0);
  for (const auto& g : graphs) {
    auto plain = fk.predict(g);
    Tensor taped = fk.forward(g, false, fw);
    REQUIRE(static_cast<size_t>(taped.rows()) == plain.size());
    for (size_t i = 0; i < plain.size(); ++i)
      CHECK(std::fabs(plain[i] - taped.data()[i]) < 1e-15);
  }
}

TEST_CASE("parameter counts match independent enumeration") {
  Rng rng(9);
  FlowKanModel fk(FlowKanConfig::defaults(), rng);
  const auto& cfg = fk.config();
  auto kan_params = [&](const std::string& key, int in, int out) {
    const BlockSpec& b = cfg.blocks.at(key);
    return static_cast<long long>(out) * in * (b.G + b.k + 2);
  };
  long long expect = kan_params("flow_init", kFlowFeatureCount, cfg.flow_hidden) +
                     kan_params("link_init", kLinkFeatureCount, cfg.link_hidden);
  for (int i = 0; i < cfg.rounds; ++i) {
    std::string f2l = "f2l." + std::to_string(i), l2f = "l2f." + std::to_string(i);
    expect += kan_params(f2l, cfg.flow_hidden, cfg.link_hidden) +
              kan_params(f2l, cfg.link_hidden, 1) +
              kan_params(l2f, cfg.link_hidden, cfg.flow_hidden) +
              kan_params(l2f, cfg.flow_hidden, 1);
  }
  expect += kan_params("fuse", cfg.flow_hidden + cfg.link_hidden, cfg.flow_hidden);
  expect += kan_params("final", cfg.flow_hidden, cfg.flow_hidden) +
            kan_params("final", cfg.flow_hidden, 1);
  CHECK(fk.param_count() == expect);

  // brute force over the stored tensors
  long long brute = 0;
  for (const auto& [name, t] : fk.params().items) brute += t.size();
  CHECK(fk.param_count() == brute);

  Rng rng2(10);
  BaselineModel bl(BaselineConfig{}, rng2);
  long long brute_b = 0;
  for (const auto& [name, t] : bl.params().items) brute_b += t.size();
  CHECK(bl.param_count() == brute_b);
  CHECK(fk.param_count() * 4 < bl.param_count());
}

TEST_CASE("checkpoint round trip is exact; kind mismatch rejected") {
  HeteroGraph g = tiny_graph();
  Rng rng(15);
  FlowKanModel fk(FlowKanConfig::defaults(), rng);
  prep(fk, g);
  std::string path = "/tmp/netkan_test_fk.ckpt.json";
  save_checkpoint(fk.to_checkpoint(), path);
  FlowKanModel back = FlowKanModel::from_checkpoint(load_checkpoint(path));
  auto p0 = fk.predict(g);
  auto p1 = back.predict(g);
  for (size_t i = 0; i < p0.size(); ++i) CHECK(p0[i] == p1[i]);

  CHECK_THROWS_WITH_AS(BaselineModel::from_checkpoint(load_checkpoint(path)),
                       doctest::Contains("kind mismatch"), std::runtime_error);

  Rng rng2(16);
  BaselineModel bl(BaselineConfig{}, rng2);
  prep(bl, g);
  std::string bpath = "/tmp/netkan_test_bl.ckpt.json";
  save_checkpoint(bl.to_checkpoint(), bpath);
  BaselineModel bback = BaselineModel::from_checkpoint(load_checkpoint(bpath));
  auto b0 = bl.predict(g);
  auto b1 = bback.predict(g);
  for (size_t i = 0; i < b0.size(); ++i) CHECK(b0[i] == b1[i]);

  // config mismatch: different rounds means different tensor inventory
  Checkpoint ck = load_checkpoint(path);
  ck.config["rounds"] = 1;
  CHECK_THROWS_WITH_AS(FlowKanModel::from_checkpoint(ck),
                       doctest::Contains("checkpoint/config mismatch"), std::runtime_error);
}

TEST_CASE("gradcheck: full FlowKANet on the tiny graph") {
  HeteroGraph g = tiny_graph();
  FlowKanConfig cfg = FlowKanConfig::defaults();
  cfg.dropout = 0.0;
  Rng rng(41);
  FlowKanModel fk(cfg, rng);
  prep(fk, g);
  std::vector<double> target = {1.1e-5, 0.7e-5};
  Rng fw(0);
  auto loss = [&]() {
    return mse_loss(scale(fk.forward(g, false, fw), 1.0 / fk.output_scale),
                    {target[0] / fk.output_scale, target[1] / fk.output_scale});
  };
  Rng probe(2);
  CHECK(max_grad_rel_error(fk.params(), loss, 100, probe) < 1e-3);
}

TEST_CASE("gradcheck: full baseline on the tiny graph") {
  HeteroGraph g = tiny_graph();
  BaselineConfig cfg;
  cfg.dropout = 0.0;
  Rng rng(43);
  BaselineModel bl(cfg, rng);
  prep(bl, g);
  std::vector<double> target = {1.1e-5, 0.7e-5};
  Rng fw(0);
  auto loss = [&]() {
    return mse_loss(scale(bl.forward(g, false, fw), 1.0 / bl.output_scale),
                    {target[0] / bl.output_scale, target[1] / bl.output_scale});
  };
  Rng probe(4);
  CHECK(max_grad_rel_error(bl.params(), loss, 100, probe) < 1e-3);
}

TEST_CASE("rounds=0 degenerate config still predicts through encoders/fuse/final") {
  FlowKanConfig cfg = FlowKanConfig::defaults();
  cfg.rounds = 0;
  Rng rng(51);
  FlowKanModel fk(cfg, rng);
  HeteroGraph g = tiny_graph();
  prep(fk, g);
  auto pred = fk.predict(g);
  REQUIRE(pred.size() == 2);
  for (double p : pred) CHECK(p > 0.0);
  NoGradGuard guard;
  Rng fw(0);
  Tensor taped = fk.forward(g, false, fw);
  for (size_t i = 0; i < pred.size(); ++i) CHECK(std::fabs(pred[i] - taped.data()[i]) < 1e-15);
}

TEST_CASE("config validation and JSON round trip") {
  FlowKanConfig cfg = FlowKanConfig::defaults();
  FlowKanConfig back = FlowKanConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  cfg.blocks.erase("fuse");
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  FlowKanConfig bad = FlowKanConfig::defaults();
  bad.dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK(canonical_block_names(FlowKanConfig::defaults()).size() == 16);
}
