#include "netkan/trainer.hpp"

#include <cmath>
#include <sstream>

namespace netkan {

double mse(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.size() != truth.size())
    throw std::invalid_argument("mse: length mismatch");
  if (pred.empty()) throw std::invalid_argument("mse: empty vectors");
  double s = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    double d = pred[i] - truth[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

double r2(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.size() != truth.size())
    throw std::invalid_argument("r2: length mismatch");
  if (pred.size() < 2) throw std::invalid_argument("r2: need at least 2 points");
  double mean = 0.0;
  for (double t : truth) mean += t;
  mean /= static_cast<double>(truth.size());
  double sse = 0.0, sst = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    double e = pred[i] - truth[i];
    double d = truth[i] - mean;
    sse += e * e;
    sst += d * d;
  }
  if (sst == 0.0) throw std::invalid_argument("r2: undefined for constant truth");
  return 1.0 - sse / sst;
}

std::vector<double> graph_labels(const HeteroGraph& g) {
  std::vector<double> out;
  out.reserve(g.flows.size());
  for (const auto& f : g.flows) out.push_back(f.delay_label);
  return out;
}

std::vector<double> dataset_labels(const std::vector<HeteroGraph>& graphs) {
  std::vector<double> out;
  for (const auto& g : graphs)
    for (const auto& f : g.flows) out.push_back(f.delay_label);
  return out;
}

std::string TrainHistory::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,train_mse,val_mse\n";
  for (size_t e = 0; e < train_mse.size(); ++e)
    os << e << "," << train_mse[e] << "," << val_mse[e] << "\n";
  return os.str();
}

namespace {

template <class T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  if (v.empty()) throw std::invalid_argument("search space: empty choice list");
  return v[rng.uniform_index(v.size())];
}

}  // namespace

TrialPoint sample_trial_point(const SearchSpace& space, Rng& rng, int index) {
  TrialPoint p;
  p.index = index;
  FlowKanConfig& c = p.cfg;
  c.flow_hidden = pick(space.flow_hidden, rng);
  c.link_hidden = pick(space.link_hidden, rng);
  c.rounds = pick(space.rounds, rng);
  c.dropout = pick(space.dropout, rng);
  c.act = pick(space.acts, rng);
  c.act_mode = pick(space.act_modes, rng);
  c.blocks.clear();
  std::vector<std::string> keys = {"flow_init", "link_init", "fuse", "final"};
  for (int i = 0; i < c.rounds; ++i) {
    keys.push_back("f2l." + std::to_string(i));
    keys.push_back("l2f." + std::to_string(i));
  }
  for (const auto& key : keys) {
    BlockSpec b;
    b.G = rng.uniform_int(space.grid_lo, space.grid_hi);
    b.k = rng.uniform_int(space.order_lo, space.order_hi);
    b.sigma = rng.uniform(space.sigma_lo, space.sigma_hi);
    c.blocks[key] = b;
  }
  p.lr = std::exp(rng.uniform(std::log(space.lr_lo), std::log(space.lr_hi)));
  p.seed = rng.next_u64();
  c.validate();
  return p;
}

SearchResult random_search(const SearchSpace& space, int budget, std::uint64_t seed,
                           const TrialObjective& objective) {
  if (budget < 1) throw std::invalid_argument("random_search: budget must be >= 1");
  Rng rng(seed);
  SearchResult res;
  for (int t = 0; t < budget; ++t) {
    TrialRecord rec;
    rec.point = sample_trial_point(space, rng, t);
    try {
      rec.val_mse = objective(rec.point);
      rec.ok = std::isfinite(rec.val_mse);
      if (!rec.ok) rec.error = "non-finite objective";
    } catch (const std::exception& e) {
      rec.error = e.what();
    }
    res.trials.push_back(std::move(rec));
    const TrialRecord& r = res.trials.back();
    if (r.ok && (res.best_trial < 0 || r.val_mse < res.trials[res.best_trial].val_mse))
      res.best_trial = t;
  }
  if (res.best_trial < 0) {
    std::ostringstream os;
    os << "random_search: all " << budget << " trials failed:";
    for (const auto& r : res.trials) os << "\n  trial " << r.point.index << ": " << r.error;
    throw std::runtime_error(os.str());
  }
  return res;
}

TrialObjective train_objective(const std::vector<HeteroGraph>& train_graphs,
                               const std::vector<HeteroGraph>& val_graphs, int epoch_cap,
                               int patience) {
  return [&train_graphs, &val_graphs, epoch_cap, patience](const TrialPoint& p) {
    Rng init_rng(p.seed);
    FlowKanModel model(p.cfg, init_rng);
    fit_preprocessing(model, train_graphs);
    TrainConfig tc;
    tc.lr = p.lr;
    tc.max_epochs = epoch_cap;
    tc.patience = patience;
    tc.seed = p.seed;
    TrainHistory h = train_model(model, train_graphs, val_graphs, tc);
    return h.best_val_mse;
  };
}

std::string trial_log_csv(const SearchResult& result) {
  std::ostringstream os;
  os.precision(17);
  os << "# seeded uniform random search (simplification of adaptive samplers)\n";
  os << "trial,flow_hidden,link_hidden,rounds,dropout,act,act_mode,lr,val_mse,ok,error\n";
  for (const auto& r : result.trials) {
    const FlowKanConfig& c = r.point.cfg;
    std::string err = r.error;
    for (char& ch : err)
      if (ch == ',' || ch == '\n') ch = ';';
    os << r.point.index << "," << c.flow_hidden << "," << c.link_hidden << "," << c.rounds << ","
       << c.dropout << "," << activation_to_string(c.act) << "," << act_mode_to_string(c.act_mode)
       << "," << r.point.lr << "," << r.val_mse << "," << (r.ok ? 1 : 0) << "," << err << "\n";
  }
  os << "# best_trial=" << result.best_trial << "\n";
  return os.str();
}

}  // namespace netkan
