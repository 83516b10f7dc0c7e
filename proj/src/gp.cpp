#include "netkan/gp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace netkan {

const std::vector<std::vector<BinOp>>& binop_menus() {
  static const std::vector<std::vector<BinOp>> menus = {
      {BinOp::Add, BinOp::Sub, BinOp::Mul},
      {BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div},
      {BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow},
  };
  return menus;
}

const std::vector<std::vector<UnOp>>& unop_menus() {
  static const std::vector<std::vector<UnOp>> menus = {
      {UnOp::Exp, UnOp::Log, UnOp::Abs},
      {UnOp::Exp, UnOp::Log, UnOp::Tanh, UnOp::Abs},
      {UnOp::Exp, UnOp::Log, UnOp::Tan, UnOp::Tanh, UnOp::Abs},
      {UnOp::Exp, UnOp::Log, UnOp::Sin, UnOp::Cos, UnOp::Tan, UnOp::Tanh, UnOp::Abs},
  };
  return menus;
}

const std::vector<int>& maxsize_menu() {
  static const std::vector<int> sizes = {7, 14, 21, 28, 35};
  return sizes;
}

void GpConfig::validate() const {
  if (population < 4) throw std::invalid_argument("GpConfig: population must be >= 4");
  if (generations < 1) throw std::invalid_argument("GpConfig: generations must be >= 1");
  if (crossover_rate < 0 || crossover_rate > 1 || mutation_rate < 0 || mutation_rate > 1)
    throw std::invalid_argument("GpConfig: rates must be in [0,1]");
  if (parsimony < 0) throw std::invalid_argument("GpConfig: parsimony must be >= 0");
  const auto& sizes = maxsize_menu();
  if (std::find(sizes.begin(), sizes.end(), maxsize) == sizes.end())
    throw std::invalid_argument("GpConfig: maxsize must be one of {7,14,21,28,35}");
  if (binary_ops.empty()) throw std::invalid_argument("GpConfig: need at least one binary op");
}

double expr_mse(const Expr& e, const std::vector<std::vector<double>>& X,
                const std::vector<double>& y) {
  double s = 0.0;
  for (size_t i = 0; i < X.size(); ++i) {
    double d = safe_eval(e, X[i]) - y[i];
    s += d * d;
  }
  double m = s / static_cast<double>(X.size());
  return std::isfinite(m) ? m : std::numeric_limits<double>::infinity();
}

namespace {

Expr random_leaf(Rng& rng, int n_inputs, const GpConfig& cfg) {
  if (n_inputs > 0 && rng.bernoulli(0.6))
    return make_input(static_cast<int>(rng.uniform_index(static_cast<size_t>(n_inputs))));
  return make_const(rng.uniform(cfg.const_lo, cfg.const_hi));
}

Expr random_expr(Rng& rng, int n_inputs, const GpConfig& cfg, int budget) {
  if (budget <= 1 || rng.bernoulli(0.25)) return random_leaf(rng, n_inputs, cfg);
  bool use_unary = !cfg.unary_ops.empty() && budget >= 2 && rng.bernoulli(0.25);
  if (use_unary || budget < 3) {
    if (cfg.unary_ops.empty()) return random_leaf(rng, n_inputs, cfg);
    UnOp op = cfg.unary_ops[rng.uniform_index(cfg.unary_ops.size())];
    return make_unary(op, random_expr(rng, n_inputs, cfg, budget - 1));
  }
  BinOp op = cfg.binary_ops[rng.uniform_index(cfg.binary_ops.size())];
  int left = 1 + static_cast<int>(rng.uniform_index(static_cast<size_t>(budget - 2)));
  return make_binary(op, random_expr(rng, n_inputs, cfg, left),
                     random_expr(rng, n_inputs, cfg, budget - 1 - left));
}

// Replace the node at depth-first index `target` (counting from 0 at the
// root) with `repl`; returns the rewritten tree.
Expr replace_at(const Expr& e, int& counter, int target, const Expr& repl) {
  if (counter++ == target) return clone_expr(repl);
  auto n = std::make_shared<ExprNode>(*e);
  if (e->a) n->a = replace_at(e->a, counter, target, repl);
  if (e->b) n->b = replace_at(e->b, counter, target, repl);
  return n;
}

const Expr& subtree_at(const Expr& e, int& counter, int target) {
  if (counter++ == target) return e;
  if (e->a) {
    const Expr& r = subtree_at(e->a, counter, target);
    if (counter > target) return r;
  }
  if (e->b) {
    const Expr& r = subtree_at(e->b, counter, target);
    if (counter > target) return r;
  }
  return e;
}

Expr crossover(const Expr& a, const Expr& b, Rng& rng, int maxsize) {
  for (int attempt = 0; attempt < 8; ++attempt) {
    int na = expr_size(a), nb = expr_size(b);
    int ia = static_cast<int>(rng.uniform_index(static_cast<size_t>(na)));
    int ib = static_cast<int>(rng.uniform_index(static_cast<size_t>(nb)));
    int c1 = 0, c2 = 0;
    const Expr& donor = subtree_at(b, c1, ib);
    Expr child = replace_at(a, c2, ia, donor);
    if (expr_size(child) <= maxsize) return child;
  }
  return clone_expr(a);
}

Expr mutate(const Expr& e, Rng& rng, int n_inputs, const GpConfig& cfg) {
  for (int attempt = 0; attempt < 8; ++attempt) {
    Expr m = clone_expr(e);
    int n = expr_size(m);
    switch (rng.uniform_index(4)) {
      case 0: {  // perturb a constant
        std::vector<ExprNode*> consts;
        collect_constants(m, consts);
        if (consts.empty()) continue;
        ExprNode* c = consts[rng.uniform_index(consts.size())];
        c->value += rng.normal() * std::max(std::fabs(c->value), 0.5);
        break;
      }
      case 1: {  // swap an operator for one of the same arity
        std::vector<ExprNode*> ops;
        std::function<void(const Expr&)> walk = [&](const Expr& x) {
          if (!x) return;
          if (x->kind == ExprNode::Kind::Unary || x->kind == ExprNode::Kind::Binary)
            ops.push_back(x.get());
          walk(x->a);
          walk(x->b);
        };
        walk(m);
        if (ops.empty()) continue;
        ExprNode* o = ops[rng.uniform_index(ops.size())];
        if (o->kind == ExprNode::Kind::Binary)
          o->bin = cfg.binary_ops[rng.uniform_index(cfg.binary_ops.size())];
        else
          o->un = cfg.unary_ops[rng.uniform_index(cfg.unary_ops.size())];
        break;
      }
      case 2: {  // replace a random subtree with a fresh one
        int idx = static_cast<int>(rng.uniform_index(static_cast<size_t>(n)));
        int budget = std::max(1, cfg.maxsize - n + 1);
        Expr fresh = random_expr(rng, n_inputs, cfg, std::min(budget, 5));
        int c = 0;
        m = replace_at(m, c, idx, fresh);
        break;
      }
      case 3: {  // wrap a random subtree in a unary op
        if (cfg.unary_ops.empty() || n + 1 > cfg.maxsize) continue;
        int idx = static_cast<int>(rng.uniform_index(static_cast<size_t>(n)));
        int c = 0;
        Expr target = clone_expr(subtree_at(m, c, idx));
        UnOp op = cfg.unary_ops[rng.uniform_index(cfg.unary_ops.size())];
        c = 0;
        m = replace_at(m, c, idx, make_unary(op, target));
        break;
      }
    }
    if (expr_size(m) <= cfg.maxsize) return m;
  }
  return clone_expr(e);
}

void refine_constants(Expr& e, const std::vector<std::vector<double>>& X,
                      const std::vector<double>& y, int sweeps) {
  std::vector<ExprNode*> consts;
  collect_constants(e, consts);
  if (consts.empty()) return;
  double best = expr_mse(e, X, y);
  static const double factors[] = {0.5, 0.8, 0.9, 0.95, 1.05, 1.1, 1.25, 2.0, -1.0};
  static const double deltas[] = {1.0, -1.0, 0.1, -0.1, 0.01, -0.01};
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    for (ExprNode* c : consts) {
      double orig = c->value;
      double best_v = orig;
      for (double f : factors) {
        c->value = orig * f;
        double m = expr_mse(e, X, y);
        if (m < best) {
          best = m;
          best_v = c->value;
        }
      }
      for (double d : deltas) {
        c->value = orig + d;
        double m = expr_mse(e, X, y);
        if (m < best) {
          best = m;
          best_v = c->value;
        }
      }
      c->value = best_v;
    }
  }
}

}  // namespace

std::vector<ScoredExpr> gp_search(const std::vector<std::vector<double>>& X,
                                  const std::vector<double>& y, const GpConfig& cfg,
                                  std::uint64_t seed) {
  cfg.validate();
  if (X.size() != y.size()) throw std::invalid_argument("gp_search: X/y length mismatch");
  if (X.size() < 10) throw std::invalid_argument("gp_search: need at least 10 samples");
  int n_inputs = static_cast<int>(X[0].size());

  Rng rng(seed);
  double mean_y = 0.0;
  for (double v : y) mean_y += v;
  mean_y /= static_cast<double>(y.size());

  std::vector<Expr> pop;
  pop.push_back(make_const(mean_y));
  for (int i = 0; i < n_inputs && static_cast<int>(pop.size()) < cfg.population; ++i)
    pop.push_back(make_input(i));
  while (static_cast<int>(pop.size()) < cfg.population) {
    int budget = 2 + static_cast<int>(rng.uniform_index(static_cast<size_t>(cfg.maxsize - 1)));
    pop.push_back(random_expr(rng, n_inputs, cfg, budget));
  }

  // Pareto archive: per complexity, the lowest-mse expression seen.
  std::map<int, ScoredExpr> archive;
  auto archive_add = [&](const Expr& e, double m) {
    int c = expr_size(e);
    auto it = archive.find(c);
    if (it == archive.end() || m < it->second.mse) archive[c] = {clone_expr(e), m, c};
  };

  std::vector<double> mses(pop.size()), fits(pop.size());
  auto eval_all = [&]() {
    int n = static_cast<int>(pop.size());
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) {
      mses[i] = expr_mse(pop[i], X, y);
      fits[i] = mses[i] + cfg.parsimony * expr_size(pop[i]);
    }
    for (int i = 0; i < n; ++i) archive_add(pop[i], mses[i]);
  };
  eval_all();

  auto tournament = [&]() -> int {
    int best = static_cast<int>(rng.uniform_index(pop.size()));
    for (int t = 1; t < cfg.tournament; ++t) {
      int c = static_cast<int>(rng.uniform_index(pop.size()));
      if (fits[c] < fits[best]) best = c;
    }
    return best;
  };

  for (int gen = 0; gen < cfg.generations; ++gen) {
    std::vector<Expr> next;
    next.reserve(pop.size());
    // elitism: carry the two best individuals
    int b0 = 0;
    for (size_t i = 1; i < pop.size(); ++i)
      if (fits[i] < fits[b0]) b0 = static_cast<int>(i);
    int b1 = b0 == 0 ? 1 : 0;
    for (size_t i = 0; i < pop.size(); ++i)
      if (static_cast<int>(i) != b0 && fits[i] < fits[b1]) b1 = static_cast<int>(i);
    next.push_back(clone_expr(pop[b0]));
    next.push_back(clone_expr(pop[b1]));
    while (next.size() < pop.size()) {
      Expr child;
      int pa = tournament();
      if (rng.bernoulli(cfg.crossover_rate)) {
        int pb = tournament();
        child = crossover(pop[pa], pop[pb], rng, cfg.maxsize);
      } else {
        child = clone_expr(pop[pa]);
      }
      if (rng.bernoulli(cfg.mutation_rate)) child = mutate(child, rng, n_inputs, cfg);
      next.push_back(std::move(child));
    }
    pop = std::move(next);
    eval_all();
  }

  // refine constants on the best archive entries, then fold back in
  std::vector<ScoredExpr> ranked;
  for (auto& [c, se] : archive) ranked.push_back({clone_expr(se.expr), se.mse, se.complexity});
  std::sort(ranked.begin(), ranked.end(), [](const ScoredExpr& a, const ScoredExpr& b) {
    if (a.mse != b.mse) return a.mse < b.mse;
    return a.complexity < b.complexity;
  });
  int n_refine = std::min<int>(cfg.refine_top, static_cast<int>(ranked.size()));
  for (int i = 0; i < n_refine; ++i) {
    Expr e = clone_expr(ranked[i].expr);
    refine_constants(e, X, y, cfg.refine_sweeps);
    archive_add(e, expr_mse(e, X, y));
  }

  // Pareto front: keep entries not dominated by a simpler one.
  std::vector<ScoredExpr> front;
  double best_so_far = std::numeric_limits<double>::infinity();
  for (auto& [c, se] : archive) {
    if (se.mse < best_so_far) {
      front.push_back({clone_expr(se.expr), se.mse, se.complexity});
      best_so_far = se.mse;
    }
  }
  std::sort(front.begin(), front.end(), [](const ScoredExpr& a, const ScoredExpr& b) {
    if (a.mse != b.mse) return a.mse < b.mse;
    return a.complexity < b.complexity;
  });
  return front;
}

}  // namespace netkan
