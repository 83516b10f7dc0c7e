#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "netkan/datagen.hpp"
#include "netkan/distill.hpp"
#include "netkan/gp.hpp"
#include "netkan/trainer.hpp"

using namespace netkan;

TEST_CASE("safe_eval guard hand values") {
  Expr x0 = make_input(0);
  // log is floored at 1e-8
  CHECK(safe_eval(make_unary(UnOp::Log, make_const(0.0)), {}) ==
        doctest::Approx(std::log(1e-8)).epsilon(1e-15));
  CHECK(safe_eval(make_unary(UnOp::Log, make_const(-3.0)), {}) ==
        doctest::Approx(std::log(1e-8)).epsilon(1e-15));
  // exp argument clips at +/-50
  CHECK(safe_eval(make_unary(UnOp::Exp, make_const(1e6)), {}) ==
        doctest::Approx(std::exp(50.0)).epsilon(1e-15));
  CHECK(safe_eval(make_unary(UnOp::Exp, make_const(-1e6)), {}) ==
        doctest::Approx(std::exp(-50.0)).epsilon(1e-15));
  // division by (near) zero yields 0
  CHECK(safe_eval(make_binary(BinOp::Div, x0, make_const(0.0)), {7.0}) == 0.0);
  CHECK(safe_eval(make_binary(BinOp::Div, x0, make_const(1e-13)), {7.0}) == 0.0);
  CHECK(safe_eval(make_binary(BinOp::Div, make_const(6.0), make_const(3.0)), {}) == 2.0);
  // pow uses |base| and clamps the exponent to [-1, 2]
  CHECK(safe_eval(make_binary(BinOp::Pow, make_const(-3.0), make_const(5.0)), {}) ==
        doctest::Approx(9.0).epsilon(1e-15));
  CHECK(safe_eval(make_binary(BinOp::Pow, make_const(4.0), make_const(-7.0)), {}) ==
        doctest::Approx(0.25).epsilon(1e-15));
  CHECK(safe_eval(make_binary(BinOp::Pow, make_const(0.0), make_const(-1.0)), {}) == 0.0);
  // tan near a pole stays finite through the non-finite guard
  double t = safe_eval(make_unary(UnOp::Tan, make_const(1.57079632679)), {});
  CHECK(std::isfinite(t));
}

TEST_CASE("random expressions evaluate totally (fuzz)") {
  Rng rng(123);
  const auto& bins = binop_menus().back();
  const auto& uns = unop_menus().back();
  // grow a random tree of the given depth budget
  std::function<Expr(int)> grow = [&](int depth) -> Expr {
    if (depth == 0 || rng.bernoulli(0.3))
      return rng.bernoulli(0.5) ? make_input(static_cast<int>(rng.uniform_index(3)))
                                : make_const(rng.uniform(-10.0, 10.0));
    if (rng.bernoulli(0.4)) return make_unary(uns[rng.uniform_index(uns.size())], grow(depth - 1));
    return make_binary(bins[rng.uniform_index(bins.size())], grow(depth - 1), grow(depth - 1));
  };
  for (int i = 0; i < 20000; ++i) {
    Expr e = grow(4);
    std::vector<double> in = {rng.uniform(-1e6, 1e6), rng.uniform(-1.0, 1.0), 0.0};
    if (i % 3 == 0) in[2] = std::numeric_limits<double>::infinity();
    CHECK(std::isfinite(safe_eval(e, in)));
  }
}

TEST_CASE("expression JSON round trip is exact") {
  Expr e = make_binary(
      BinOp::Mul, make_unary(UnOp::Tanh, make_binary(BinOp::Add, make_input(1), make_const(0.1 + 0.2))),
      make_binary(BinOp::Pow, make_input(0), make_const(1.5)));
  Expr back = expr_from_json(expr_to_json(e));
  CHECK(expr_size(back) == expr_size(e));
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> in = {rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0)};
    CHECK(safe_eval(back, in) == safe_eval(e, in));
  }
  CHECK(expr_to_json(back) == expr_to_json(e));
  std::string s = expr_to_string(e, {"a", "b"});
  CHECK(s.find("tanh") != std::string::npos);
  CHECK(s.find("b") != std::string::npos);
}

TEST_CASE("gp recovers a constant target") {
  Rng rng(3);
  std::vector<std::vector<double>> X;
  std::vector<double> y;
  for (int i = 0; i < 50; ++i) {
    X.push_back({rng.uniform(-1.0, 1.0)});
    y.push_back(2.5);
  }
  GpConfig cfg;
  cfg.population = 60;
  cfg.generations = 10;
  auto front = gp_search(X, y, cfg, 7);
  REQUIRE(!front.empty());
  CHECK(front[0].mse < 1e-9);
}

TEST_CASE("huge parsimony collapses the front to single-node expressions") {
  Rng rng(4);
  std::vector<std::vector<double>> X;
  std::vector<double> y;
  for (int i = 0; i < 60; ++i) {
    double a = rng.uniform(-1.0, 1.0), b = rng.uniform(-1.0, 1.0);
    X.push_back({a, b});
    y.push_back(a * b + 0.3);
  }
  GpConfig cfg;
  cfg.population = 60;
  cfg.generations = 8;
  cfg.parsimony = 1e9;
  auto front = gp_search(X, y, cfg, 11);
  REQUIRE(!front.empty());
  // the archive always holds a single-node candidate; under overwhelming
  // parsimony the evolved population cannot push anything larger ahead of it
  int min_complexity = front[0].complexity;
  for (const auto& s : front) min_complexity = std::min(min_complexity, s.complexity);
  CHECK(min_complexity == 1);
}

TEST_CASE("gp recovers x1*x2 - x3 and respects maxsize") {
  Rng rng(9);
  std::vector<std::vector<double>> X;
  std::vector<double> y;
  for (int i = 0; i < 200; ++i) {
    std::vector<double> r = {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0),
                             rng.uniform(-2.0, 2.0)};
    y.push_back(r[0] * r[1] - r[2]);
    X.push_back(std::move(r));
  }
  GpConfig cfg;  // default menu {+,-,*}, maxsize 14
  auto front = gp_search(X, y, cfg, 1);
  REQUIRE(!front.empty());
  CHECK(front[0].mse < 1e-10);
  for (const auto& s : front) {
    CHECK(s.complexity <= cfg.maxsize);
    CHECK(s.complexity == expr_size(s.expr));
  }
  // front is sorted by mse then complexity and deterministic under seed
  for (size_t i = 1; i < front.size(); ++i) {
    bool ordered = front[i - 1].mse < front[i].mse ||
                   (front[i - 1].mse == front[i].mse &&
                    front[i - 1].complexity <= front[i].complexity);
    CHECK(ordered);
  }
  auto again = gp_search(X, y, cfg, 1);
  REQUIRE(again.size() == front.size());
  for (size_t i = 0; i < front.size(); ++i)
    CHECK(expr_to_json(again[i].expr) == expr_to_json(front[i].expr));
}

TEST_CASE("block I/O sampling: widths, gamma edge case, bit-exact replay") {
  ScenarioConfig sc;
  sc.seed = 61;
  auto graphs = generate_dataset(sc, 5);
  FlowKanConfig mc = FlowKanConfig::defaults();
  mc.rounds = 1;
  Rng rng(2);
  FlowKanModel model(mc, rng);
  fit_preprocessing(model, graphs);
  HybridModel hybrid(&model);
  CHECK(hybrid.next_neural_block() == "flow_init");

  IoSamples io = sample_block_io(hybrid, graphs, "flow_init", 0.5, 17);
  size_t total = io.fit.size() + io.holdout.size();
  size_t flows = 0;
  for (const auto& g : graphs) flows += g.flows.size();
  CHECK(total == flows);  // flow_init fires once per flow
  REQUIRE(!io.fit.empty());
  CHECK(io.fit[0].first.size() == static_cast<size_t>(kFlowFeatureCount));
  CHECK(io.fit[0].second.size() == static_cast<size_t>(mc.flow_hidden));
  // replaying the neural block reproduces the recorded outputs exactly
  for (const auto& [in, out] : io.fit) {
    auto replay = model.eval_block("flow_init", in);
    REQUIRE(replay.size() == out.size());
    for (size_t i = 0; i < out.size(); ++i) CHECK(replay[i] == out[i]);
  }

  IoSamples all_fit = sample_block_io(hybrid, graphs, "flow_init", 1.0, 17);
  CHECK(all_fit.holdout.empty());
  CHECK(all_fit.fit.size() == flows);

  // messages fire once per (flow, link) edge
  IoSamples edge_io = sample_block_io(hybrid, graphs, "L0.f2l.T", 1.0, 17);
  size_t edges = 0;
  for (const auto& g : graphs) edges += g.edges_f2l.size();
  CHECK(edge_io.fit.size() == edges);
}

TEST_CASE("hybrid prefix property is enforced") {
  FlowKanConfig mc = FlowKanConfig::defaults();
  mc.rounds = 1;
  Rng rng(21);
  FlowKanModel model(mc, rng);
  HybridModel hybrid(&model);

  SymbolicBlock out_of_order;
  out_of_order.name = "fuse";
  out_of_order.exprs.assign(block_out_width(mc, "fuse"), make_const(0.0));
  CHECK_THROWS_AS(hybrid.set_symbolic(out_of_order), std::invalid_argument);

  SymbolicBlock wrong_width;
  wrong_width.name = "flow_init";
  wrong_width.exprs = {make_const(0.0)};
  CHECK_THROWS_AS(hybrid.set_symbolic(wrong_width), std::invalid_argument);

  SymbolicBlock ok;
  ok.name = "flow_init";
  ok.exprs.assign(block_out_width(mc, "flow_init"), make_const(0.1));
  hybrid.set_symbolic(ok);
  CHECK(hybrid.is_symbolic("flow_init"));
  CHECK(hybrid.next_neural_block() == "link_init");
}

TEST_CASE("distillation produces a working surrogate that reloads bit-exactly") {
  ScenarioConfig sc;
  sc.seed = 71;
  auto graphs = generate_dataset(sc, 10);
  std::vector<HeteroGraph> train(graphs.begin(), graphs.begin() + 8);
  std::vector<HeteroGraph> val(graphs.begin() + 8, graphs.end());

  FlowKanConfig mc = FlowKanConfig::defaults();
  mc.rounds = 1;
  Rng rng(33);
  FlowKanModel model(mc, rng);
  fit_preprocessing(model, train);

  DistillConfig dc;
  dc.trials_per_block = 2;
  dc.seed = 5;
  dc.populations = {24};
  dc.generations = {8};
  DistillResult res = distill_all(model, train, val, dc);

  CHECK(res.surrogate.blocks.size() == canonical_block_names(mc).size());
  CHECK(res.surrogate.trainable_param_count() == 0);
  CHECK(res.constant_count == res.surrogate.constant_count());
  CHECK(res.constant_count > 0);
  // bundled trace: flow_init, link_init, L0.f2l, L0.l2f, fuse, final
  REQUIRE(res.trace.size() == 6);
  CHECK(res.trace[0].label == "flow_init");
  CHECK(res.trace[2].label == "L0.f2l");
  CHECK(res.trace.back().label == "final");
  for (const auto& t : res.trace) CHECK(std::isfinite(t.full_mse));
  std::string csv = trace_to_csv(res.trace);
  CHECK(csv.rfind("block,full_mse", 0) == 0);

  for (const auto& g : graphs)
    for (double p : res.surrogate.predict(g)) {
      CHECK(p > 0.0);
      CHECK(std::isfinite(p));
    }

  export_equations(res.surrogate, "/tmp/netkan_test_eq.txt", "/tmp/netkan_test_eq.json");
  SymbolicSurrogate back = load_equations("/tmp/netkan_test_eq.json");
  CHECK(back.to_json() == res.surrogate.to_json());
  for (const auto& g : graphs) {
    auto a = res.surrogate.predict(g);
    auto b = back.predict(g);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  }

  // every exported expression respects the largest tuned size budget
  int cap = maxsize_menu().back();
  for (const auto& [name, blk] : res.surrogate.blocks)
    for (const auto& e : blk.exprs) CHECK(expr_size(e) <= cap);

  // surrogate missing a block refuses to predict
  SymbolicSurrogate broken = res.surrogate;
  broken.blocks.erase("fuse");
  CHECK_THROWS_WITH_AS(broken.predict(graphs[0]), doctest::Contains("missing block"),
                       std::runtime_error);
}

TEST_CASE("distillation determinism: same seed, same equations") {
  ScenarioConfig sc;
  sc.seed = 81;
  auto graphs = generate_dataset(sc, 6);
  std::vector<HeteroGraph> train(graphs.begin(), graphs.begin() + 5);
  std::vector<HeteroGraph> val(graphs.begin() + 5, graphs.end());
  FlowKanConfig mc = FlowKanConfig::defaults();
  mc.rounds = 1;
  DistillConfig dc;
  dc.trials_per_block = 1;
  dc.seed = 9;
  dc.populations = {16};
  dc.generations = {4};
  auto run = [&]() {
    Rng rng(33);
    FlowKanModel model(mc, rng);
    fit_preprocessing(model, train);
    return distill_all(model, train, val, dc).surrogate.to_json().dump();
  };
  CHECK(run() == run());
}
