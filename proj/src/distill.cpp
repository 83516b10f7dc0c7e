#include "netkan/distill.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "netkan/trainer.hpp"

namespace netkan {

using nlohmann::json;

std::vector<double> SymbolicBlock::eval(const std::vector<double>& in) const {
  std::vector<double> out(exprs.size());
  for (size_t d = 0; d < exprs.size(); ++d) out[d] = safe_eval(exprs[d], in);
  return out;
}

json SymbolicBlock::to_json() const {
  json je = json::array();
  for (const auto& e : exprs) je.push_back(expr_to_json(e));
  return json{{"name", name}, {"exprs", je}};
}

SymbolicBlock SymbolicBlock::from_json(const json& j) {
  SymbolicBlock b;
  b.name = j.at("name").get<std::string>();
  for (const auto& je : j.at("exprs")) b.exprs.push_back(expr_from_json(je));
  return b;
}

int block_in_width(const FlowKanConfig& cfg, const std::string& name) {
  if (name == "flow_init") return kFlowFeatureCount;
  if (name == "link_init") return kLinkFeatureCount;
  if (name == "fuse") return cfg.flow_hidden + cfg.link_hidden;
  if (name == "final") return cfg.flow_hidden;
  if (name.size() > 3 && name[0] == 'L') {
    std::string rest = name.substr(3);
    if (rest == "f2l.T") return cfg.flow_hidden;
    if (rest == "f2l.A") return cfg.link_hidden;
    if (rest == "l2f.T") return cfg.link_hidden;
    if (rest == "l2f.A") return cfg.flow_hidden;
  }
  throw std::invalid_argument("unknown block name: " + name);
}

int block_out_width(const FlowKanConfig& cfg, const std::string& name) {
  if (name == "flow_init") return cfg.flow_hidden;
  if (name == "link_init") return cfg.link_hidden;
  if (name == "fuse") return cfg.flow_hidden;
  if (name == "final") return 1;
  if (name.size() > 3 && name[0] == 'L') {
    std::string rest = name.substr(3);
    if (rest == "f2l.T") return cfg.link_hidden;
    if (rest == "f2l.A" || rest == "l2f.A") return 1;
    if (rest == "l2f.T") return cfg.flow_hidden;
  }
  throw std::invalid_argument("unknown block name: " + name);
}

HybridModel::HybridModel(const FlowKanModel* model)
    : model_(model), order_(canonical_block_names(model->config())) {}

std::string HybridModel::next_neural_block() const {
  for (const auto& name : order_)
    if (!symbolic_.count(name)) return name;
  return "";
}

void HybridModel::set_symbolic(SymbolicBlock block) {
  std::string expected = next_neural_block();
  if (block.name != expected)
    throw std::invalid_argument("distill order violation: expected block " + expected + ", got " +
                                block.name);
  int want = block_out_width(model_->config(), block.name);
  if (static_cast<int>(block.exprs.size()) != want)
    throw std::invalid_argument("symbolic block " + block.name + ": expected " +
                                std::to_string(want) + " expressions");
  symbolic_[block.name] = std::move(block);
}

BlockFn HybridModel::block_fn() const {
  return [this](const std::string& name, const std::vector<double>& in) {
    auto it = symbolic_.find(name);
    if (it != symbolic_.end()) return it->second.eval(in);
    return model_->eval_block(name, in);
  };
}

std::vector<double> HybridModel::predict(const HeteroGraph& g) const {
  return flowkan_pipeline(model_->config(), g, model_->flow_norm, model_->link_norm,
                          model_->output_scale, block_fn());
}

IoSamples sample_block_io(const HybridModel& hybrid, const std::vector<HeteroGraph>& graphs,
                          const std::string& block, double gamma, std::uint64_t seed) {
  if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("sample_block_io: gamma in [0,1]");
  block_out_width(hybrid.model().config(), block);  // validates the name
  BlockIoRecorder rec;
  rec.target = block;
  const FlowKanModel& m = hybrid.model();
  BlockFn fn = hybrid.block_fn();
  for (const auto& g : graphs)
    flowkan_pipeline(m.config(), g, m.flow_norm, m.link_norm, m.output_scale, fn, &rec);
  Rng rng(seed);
  auto& s = rec.samples;
  for (size_t i = s.size(); i > 1; --i) std::swap(s[i - 1], s[rng.uniform_index(i)]);
  size_t n_fit = static_cast<size_t>(std::llround(gamma * static_cast<double>(s.size())));
  IoSamples out;
  out.fit.assign(s.begin(), s.begin() + n_fit);
  out.holdout.assign(s.begin() + n_fit, s.end());
  return out;
}

void DistillConfig::validate() const {
  if (trials_per_block < 1) throw std::invalid_argument("DistillConfig: trials >= 1");
  if (gamma <= 0.0 || gamma > 1.0) throw std::invalid_argument("DistillConfig: gamma in (0,1]");
  if (max_fit_samples < 10) throw std::invalid_argument("DistillConfig: max_fit_samples >= 10");
  if (populations.empty() || generations.empty())
    throw std::invalid_argument("DistillConfig: empty GP menus");
}

namespace {

double hybrid_val_mse(const HybridModel& hybrid, const std::string& block,
                      const SymbolicBlock* candidate, const std::vector<HeteroGraph>& val_graphs,
                      const std::vector<double>& val_truth) {
  BlockFn base = hybrid.block_fn();
  BlockFn fn = base;
  if (candidate)
    fn = [&base, &block, candidate](const std::string& name, const std::vector<double>& in) {
      if (name == block) return candidate->eval(in);
      return base(name, in);
    };
  const FlowKanModel& m = hybrid.model();
  std::vector<std::vector<double>> per_graph(val_graphs.size());
  int n = static_cast<int>(val_graphs.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i)
    per_graph[i] = flowkan_pipeline(m.config(), val_graphs[i], m.flow_norm, m.link_norm,
                                    m.output_scale, fn);
  std::vector<double> pred;
  for (const auto& p : per_graph) pred.insert(pred.end(), p.begin(), p.end());
  return mse(pred, val_truth);
}

double holdout_mse_of(const Expr& e, const std::vector<std::vector<double>>& X,
                      const std::vector<double>& y) {
  if (X.empty()) return std::numeric_limits<double>::infinity();
  return expr_mse(e, X, y);
}

}  // namespace

BlockDistillReport distill_block(HybridModel& hybrid, const std::string& block,
                                 const std::vector<HeteroGraph>& train_graphs,
                                 const std::vector<HeteroGraph>& val_graphs,
                                 const DistillConfig& cfg) {
  cfg.validate();
  if (block != hybrid.next_neural_block())
    throw std::invalid_argument("distill_block: " + block + " is not the earliest neural block");

  Rng rng(cfg.seed);
  Rng block_rng = rng.split(std::hash<std::string>{}(block));

  size_t n_graphs = std::min<size_t>(train_graphs.size(),
                                     static_cast<size_t>(cfg.max_sample_graphs));
  std::vector<HeteroGraph> subset(train_graphs.begin(), train_graphs.begin() + n_graphs);
  IoSamples io = sample_block_io(hybrid, subset, block, cfg.gamma, block_rng.next_u64());
  if (io.fit.size() < 10)
    throw std::runtime_error("distill_block: too few fit samples for block " + block);

  size_t n_fit = std::min<size_t>(io.fit.size(), static_cast<size_t>(cfg.max_fit_samples));
  size_t n_hold = std::min<size_t>(io.holdout.size(),
                                   static_cast<size_t>(cfg.max_holdout_samples));
  std::vector<std::vector<double>> Xfit, Xhold;
  for (size_t i = 0; i < n_fit; ++i) Xfit.push_back(io.fit[i].first);
  for (size_t i = 0; i < n_hold; ++i) Xhold.push_back(io.holdout[i].first);
  int out_dim = static_cast<int>(io.fit[0].second.size());

  std::vector<std::vector<double>> yfit(out_dim), yhold(out_dim);
  for (int d = 0; d < out_dim; ++d) {
    for (size_t i = 0; i < n_fit; ++i) yfit[d].push_back(io.fit[i].second[d]);
    for (size_t i = 0; i < n_hold; ++i) yhold[d].push_back(io.holdout[i].second[d]);
  }

  const std::vector<double> val_truth = dataset_labels(val_graphs);

  // constant baseline: per-dimension mean of the fit outputs
  SymbolicBlock const_block;
  const_block.name = block;
  for (int d = 0; d < out_dim; ++d) {
    double m = 0.0;
    for (double v : yfit[d]) m += v;
    const_block.exprs.push_back(make_const(m / static_cast<double>(n_fit)));
  }
  double const_mse = hybrid_val_mse(hybrid, block, &const_block, val_graphs, val_truth);

  SymbolicBlock best_block = const_block;
  double best_mse = const_mse;
  int best_trial = -1;

  for (int t = 0; t < cfg.trials_per_block; ++t) {
    Rng trial_rng = block_rng.split(static_cast<std::uint64_t>(t) + 1);
    GpConfig gc;
    gc.binary_ops = binop_menus()[trial_rng.uniform_index(binop_menus().size())];
    gc.unary_ops = trial_rng.bernoulli(0.5)
                       ? std::vector<UnOp>{}
                       : unop_menus()[trial_rng.uniform_index(unop_menus().size())];
    gc.maxsize = maxsize_menu()[trial_rng.uniform_index(maxsize_menu().size())];
    gc.population = cfg.populations[trial_rng.uniform_index(cfg.populations.size())];
    gc.generations = cfg.generations[trial_rng.uniform_index(cfg.generations.size())];
    gc.parsimony = std::exp(
        trial_rng.uniform(std::log(cfg.parsimony_lo), std::log(cfg.parsimony_hi)));

    SymbolicBlock cand;
    cand.name = block;
    for (int d = 0; d < out_dim; ++d) {
      auto front = gp_search(Xfit, yfit[d], gc, trial_rng.next_u64());
      // pick the front entry generalizing best to the holdout I/O
      size_t pick = 0;
      double pick_mse = std::numeric_limits<double>::infinity();
      for (size_t i = 0; i < front.size(); ++i) {
        double hm = Xhold.empty() ? front[i].mse : holdout_mse_of(front[i].expr, Xhold, yhold[d]);
        if (hm < pick_mse) {
          pick_mse = hm;
          pick = i;
        }
      }
      cand.exprs.push_back(clone_expr(front[pick].expr));
    }
    double vm = hybrid_val_mse(hybrid, block, &cand, val_graphs, val_truth);
    if (std::isfinite(vm) && vm < best_mse) {
      best_mse = vm;
      best_block = std::move(cand);
      best_trial = t;
    }
  }

  BlockDistillReport rep;
  rep.block = block;
  rep.val_mse = best_mse;
  rep.constant_fallback = (best_trial < 0);
  rep.best_trial = best_trial;
  hybrid.set_symbolic(std::move(best_block));
  return rep;
}

std::vector<double> SymbolicSurrogate::predict(const HeteroGraph& g) const {
  return flowkan_pipeline(cfg, g, flow_norm, link_norm, output_scale,
                          [this](const std::string& name, const std::vector<double>& in) {
                            auto it = blocks.find(name);
                            if (it == blocks.end())
                              throw std::runtime_error("surrogate missing block " + name);
                            return it->second.eval(in);
                          });
}

long long SymbolicSurrogate::constant_count() const {
  long long n = 0;
  for (const auto& [name, b] : blocks)
    for (const auto& e : b.exprs) {
      std::vector<ExprNode*> consts;
      collect_constants(e, consts);
      n += static_cast<long long>(consts.size());
    }
  return n;
}

json SymbolicSurrogate::to_json() const {
  json jb = json::array();
  for (const auto& [name, b] : blocks) jb.push_back(b.to_json());
  return json{{"format", "netkan-equations"},
              {"version", 1},
              {"config", cfg.to_json()},
              {"flow_norm", normalizer_to_json(flow_norm)},
              {"link_norm", normalizer_to_json(link_norm)},
              {"output_scale", output_scale},
              {"blocks", jb}};
}

SymbolicSurrogate SymbolicSurrogate::from_json(const json& j) {
  if (j.value("format", "") != "netkan-equations" || j.value("version", 0) != 1)
    throw std::runtime_error("equation bundle format/version mismatch");
  SymbolicSurrogate s;
  s.cfg = FlowKanConfig::from_json(j.at("config"));
  s.flow_norm = normalizer_from_json(j.at("flow_norm"));
  s.link_norm = normalizer_from_json(j.at("link_norm"));
  s.output_scale = j.at("output_scale").get<double>();
  for (const auto& jb : j.at("blocks")) {
    SymbolicBlock b = SymbolicBlock::from_json(jb);
    s.blocks[b.name] = std::move(b);
  }
  return s;
}

namespace {

std::vector<std::string> bundle_labels(const FlowKanConfig& cfg) {
  std::vector<std::string> labels = {"flow_init", "link_init"};
  for (int i = 0; i < cfg.rounds; ++i) {
    labels.push_back("L" + std::to_string(i) + ".f2l");
    labels.push_back("L" + std::to_string(i) + ".l2f");
  }
  labels.push_back("fuse");
  labels.push_back("final");
  return labels;
}

std::vector<std::string> bundle_units(const std::string& label) {
  if (label == "flow_init" || label == "link_init" || label == "fuse" || label == "final")
    return {label};
  return {label + ".T", label + ".A"};
}

}  // namespace

DistillResult distill_all(const FlowKanModel& model, const std::vector<HeteroGraph>& train_graphs,
                          const std::vector<HeteroGraph>& val_graphs, const DistillConfig& cfg) {
  cfg.validate();
  HybridModel hybrid(&model);
  DistillResult res;

  std::vector<HeteroGraph> full_set = train_graphs;
  full_set.insert(full_set.end(), val_graphs.begin(), val_graphs.end());
  const std::vector<double> full_truth = dataset_labels(full_set);

  for (const auto& label : bundle_labels(model.config())) {
    for (const auto& unit : bundle_units(label))
      res.reports.push_back(distill_block(hybrid, unit, train_graphs, val_graphs, cfg));
    std::vector<std::vector<double>> per_graph(full_set.size());
    int n = static_cast<int>(full_set.size());
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) per_graph[i] = hybrid.predict(full_set[i]);
    std::vector<double> pred;
    for (const auto& p : per_graph) pred.insert(pred.end(), p.begin(), p.end());
    res.trace.push_back({label, mse(pred, full_truth)});
  }

  if (!hybrid.fully_symbolic()) throw std::logic_error("distill_all: blocks left neural");
  res.surrogate.cfg = model.config();
  res.surrogate.flow_norm = model.flow_norm;
  res.surrogate.link_norm = model.link_norm;
  res.surrogate.output_scale = model.output_scale;
  res.surrogate.blocks = hybrid.symbolic_blocks();
  res.constant_count = res.surrogate.constant_count();
  return res;
}

namespace {

std::vector<std::string> block_input_names(const FlowKanConfig& cfg, const std::string& name) {
  std::vector<std::string> names;
  if (name == "flow_init") {
    for (const auto& n : flow_feature_names()) names.push_back(n + "_norm");
  } else if (name == "link_init") {
    names = {"capacity_norm", "load_norm"};
  } else if (name == "fuse") {
    for (int i = 0; i < cfg.flow_hidden; ++i) names.push_back("h" + std::to_string(i));
    for (int i = 0; i < cfg.link_hidden; ++i) names.push_back("c" + std::to_string(i));
  } else {
    for (int i = 0; i < block_in_width(cfg, name); ++i) names.push_back("h" + std::to_string(i));
  }
  return names;
}

}  // namespace

void export_equations(const SymbolicSurrogate& surrogate, const std::string& text_path,
                      const std::string& json_path) {
  {
    std::ofstream out(text_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + text_path);
    out << "Symbolic delay surrogate\n"
        << "========================\n\n"
        << "Composition (per graph):\n"
        << "  h_f = flow_init(normalized flow features)          per flow\n"
        << "  h_l = link_init(normalized link features)          per link\n"
        << "  for each round i:\n"
        << "    per edge (f,l):  t = Li.f2l.T(h_f);  s = Li.f2l.A(leaky_relu(h_l + t))\n"
        << "    alpha = softmax of s over the links' incident edges\n"
        << "    h_l += sum over incident edges of alpha * t      (residual)\n"
        << "    symmetric l2f pass updating h_f\n"
        << "  c_f = sum of h_l over the flow's path links N(f)\n"
        << "  z   = fuse([h_f, c_f]);  delay = softplus(final(h_f + z)) * output_scale\n\n"
        << "output_scale = " << surrogate.output_scale << "\n\n";
    for (const auto& [name, b] : surrogate.blocks) {
      auto in_names = block_input_names(surrogate.cfg, name);
      out << "[" << name << "]\n";
      for (size_t d = 0; d < b.exprs.size(); ++d)
        out << "  y" << d << " = " << expr_to_string(b.exprs[d], in_names) << "\n";
      out << "\n";
    }
    if (!out) throw std::runtime_error("write failed: " + text_path);
  }
  {
    std::ofstream out(json_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + json_path);
    out << surrogate.to_json().dump() << "\n";
    if (!out) throw std::runtime_error("write failed: " + json_path);
  }
}

SymbolicSurrogate load_equations(const std::string& json_path) {
  std::ifstream in(json_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + json_path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("equation bundle parse error in " + json_path + ": " + e.what());
  }
  return SymbolicSurrogate::from_json(j);
}

std::string trace_to_csv(const std::vector<TraceEntry>& trace) {
  std::ostringstream os;
  os.precision(17);
  os << "block,full_mse\n";
  for (const auto& t : trace) os << t.label << "," << t.full_mse << "\n";
  return os.str();
}

}  // namespace netkan
