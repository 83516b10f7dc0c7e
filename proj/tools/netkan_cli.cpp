#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "netkan/baseline.hpp"
#include "netkan/datagen.hpp"
#include "netkan/distill.hpp"
#include "netkan/featsel.hpp"
#include "netkan/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace netkan;

namespace {

constexpr const char* kToolVersion = "netkan 1.0.0";

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct ManifestTimer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

// Every artifact-producing command drops a manifest holding the full argv, so
// the run can be repeated verbatim (see `rerun`).
void write_manifest(const std::string& path, const std::string& command,
                    const std::vector<std::string>& argv, const json& config,
                    std::uint64_t seed, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs, double wall_s) {
  json j;
  j["command"] = command;
  j["argv"] = argv;
  j["config"] = config;
  j["seed"] = seed;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["tool_version"] = kToolVersion;
  j["wall_clock_s"] = wall_s;
  write_text(path, j.dump(2) + "\n");
}

std::string fmt4(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

// Deterministic train/val split of a dataset file's graphs.
void split_train_val(const std::vector<HeteroGraph>& all, double val_frac, std::uint64_t seed,
                     std::vector<HeteroGraph>& train, std::vector<HeteroGraph>& val) {
  std::vector<size_t> idx(all.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  for (size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
  size_t n_val = std::max<size_t>(1, static_cast<size_t>(val_frac * all.size()));
  if (n_val >= all.size()) throw std::runtime_error("val split leaves no training graphs");
  for (size_t i = 0; i < idx.size(); ++i)
    (i < n_val ? val : train).push_back(all[idx[i]]);
}

std::vector<std::string> capture_argv(int argc, char** argv) {
  std::vector<std::string> v;
  for (int i = 0; i < argc; ++i) v.emplace_back(argv[i]);
  return v;
}

std::string scatter_csv(const std::vector<double>& truth, const std::vector<double>& pred) {
  std::ostringstream os;
  os.precision(17);
  os << "true,predicted\n";
  for (size_t i = 0; i < truth.size(); ++i) os << truth[i] << "," << pred[i] << "\n";
  return os.str();
}

int run(int argc, char** argv);  // forward, used by `rerun`

// ---- subcommand payloads ----

struct DatagenArgs {
  std::string out_dir = ".";
  int graphs = 310;
  double train_frac = 0.8;
  std::uint64_t seed = 1;
  int distractors = 8;
  ScenarioConfig scen;
};

void cmd_datagen(const DatagenArgs& a, const std::vector<std::string>& argv) {
  ManifestTimer timer;
  if (a.graphs < 0) throw CLI::ValidationError("--graphs must be >= 0");
  if (a.train_frac < 0.0 || a.train_frac > 1.0)
    throw CLI::ValidationError("--train-frac must be in [0,1]");
  fs::create_directories(a.out_dir);
  ScenarioConfig sc = a.scen;
  sc.seed = a.seed;
  sc.validate();

  std::vector<HeteroGraph> graphs = generate_dataset(sc, a.graphs);
  int n_train = static_cast<int>(std::llround(a.train_frac * a.graphs));
  std::vector<HeteroGraph> train(graphs.begin(), graphs.begin() + n_train);
  std::vector<HeteroGraph> test(graphs.begin() + n_train, graphs.end());

  std::string train_path = a.out_dir + "/train.nkds";
  std::string test_path = a.out_dir + "/test.nkds";
  std::string cand_path = a.out_dir + "/candidates.csv";
  save_dataset(train, train_path);
  save_dataset(test, test_path);
  CandidateTable table = candidate_features(train, a.distractors, a.seed ^ 0xfeedULL);
  save_candidate_table(table, cand_path);

  json cfg{{"graphs", a.graphs}, {"train_frac", a.train_frac}, {"distractors", a.distractors}};
  write_manifest(a.out_dir + "/manifest_datagen.json", "datagen", argv, cfg, a.seed, {},
                 {train_path, test_path, cand_path}, timer.seconds());
  std::cout << "datagen: " << train.size() << " train / " << test.size() << " test graphs -> "
            << a.out_dir << "\n";
}

struct FeatselArgs {
  std::string candidates, out_dir = ".";
  SfsConfig sfs;
};

void cmd_featsel(const FeatselArgs& a, const std::vector<std::string>& argv) {
  ManifestTimer timer;
  fs::create_directories(a.out_dir);
  CandidateTable table = load_candidate_table(a.candidates);
  SfsResult res = sfs(table.X, table.y, a.sfs);

  std::ostringstream os;
  os.precision(17);
  os << "step,feature_index,feature_name,cv_mse\n";
  for (size_t s = 0; s < res.selected.size(); ++s)
    os << s << "," << res.selected[s] << "," << table.names[res.selected[s]] << ","
       << res.cv_mse_trace[s] << "\n";
  std::string sel_path = a.out_dir + "/selection.csv";
  write_text(sel_path, os.str());

  json cfg{{"k_folds", a.sfs.k_folds},
           {"max_features", a.sfs.max_features},
           {"rel_improvement_threshold", a.sfs.rel_improvement_threshold}};
  write_manifest(a.out_dir + "/manifest_featsel.json", "featsel", argv, cfg, a.sfs.seed,
                 {a.candidates}, {sel_path}, timer.seconds());
  std::cout << "featsel: selected " << res.selected.size() << " features -> " << sel_path << "\n";
}

struct TrainArgs {
  std::string train_path, out_dir = ".";
  double val_frac = 0.1;
  TrainConfig tc;
};

template <class Model, class Config>
void cmd_train(const TrainArgs& a, const Config& mc, const std::string& name,
               const std::vector<std::string>& argv) {
  ManifestTimer timer;
  fs::create_directories(a.out_dir);
  std::vector<HeteroGraph> all = load_dataset(a.train_path);
  std::vector<HeteroGraph> train, val;
  split_train_val(all, a.val_frac, a.tc.seed, train, val);

  Rng init_rng(a.tc.seed);
  Model model(mc, init_rng);
  fit_preprocessing(model, train);
  TrainHistory hist = train_model(model, train, val, a.tc);

  std::string ckpt_path = a.out_dir + "/" + name + ".ckpt.json";
  std::string hist_path = a.out_dir + "/" + name + ".history.csv";
  save_checkpoint(model.to_checkpoint(), ckpt_path);
  write_text(hist_path, hist.to_csv());

  json cfg{{"model", mc.to_json()}, {"lr", a.tc.lr}, {"max_epochs", a.tc.max_epochs},
           {"patience", a.tc.patience}, {"val_frac", a.val_frac}};
  write_manifest(a.out_dir + "/manifest_train_" + name + ".json", "train-" + name, argv, cfg,
                 a.tc.seed, {a.train_path}, {ckpt_path, hist_path}, timer.seconds());
  std::cout << "train-" << name << ": best val MSE " << fmt4(hist.best_val_mse * 1e6)
            << "e-6 at epoch " << hist.best_epoch << " (" << hist.train_mse.size()
            << " epochs run) -> " << ckpt_path << "\n";
}

struct SearchArgs {
  std::string train_path, out_dir = ".";
  double val_frac = 0.1;
  int budget = 30;
  int epoch_cap = 30;
  std::uint64_t seed = 1;
};

void cmd_search(const SearchArgs& a, const std::vector<std::string>& argv) {
  ManifestTimer timer;
  fs::create_directories(a.out_dir);
  std::vector<HeteroGraph> all = load_dataset(a.train_path);
  std::vector<HeteroGraph> train, val;
  split_train_val(all, a.val_frac, a.seed, train, val);

  SearchSpace space;
  SearchResult res =
      random_search(space, a.budget, a.seed, train_objective(train, val, a.epoch_cap));

  std::string log_path = a.out_dir + "/trials.csv";
  std::string best_path = a.out_dir + "/best_config.json";
  write_text(log_path, trial_log_csv(res));
  json best{{"config", res.best().point.cfg.to_json()}, {"lr", res.best().point.lr},
            {"val_mse", res.best().val_mse}, {"trial", res.best_trial}};
  write_text(best_path, best.dump(2) + "\n");

  json cfg{{"budget", a.budget}, {"epoch_cap", a.epoch_cap}, {"val_frac", a.val_frac}};
  write_manifest(a.out_dir + "/manifest_search.json", "search", argv, cfg, a.seed,
                 {a.train_path}, {log_path, best_path}, timer.seconds());
  std::cout << "search: best trial " << res.best_trial << " val MSE "
            << fmt4(res.best().val_mse * 1e6) << "e-6 -> " << best_path << "\n";
}

struct DistillArgs {
  std::string checkpoint, train_path, out_dir = ".";
  double val_frac = 0.1;
  DistillConfig dc;
};

void cmd_distill(const DistillArgs& a, const std::vector<std::string>& argv) {
  ManifestTimer timer;
  fs::create_directories(a.out_dir);
  FlowKanModel model = FlowKanModel::from_checkpoint(load_checkpoint(a.checkpoint));
  std::vector<HeteroGraph> all = load_dataset(a.train_path);
  std::vector<HeteroGraph> train, val;
  split_train_val(all, a.val_frac, a.dc.seed, train, val);

  DistillResult res = distill_all(model, train, val, a.dc);

  std::string txt_path = a.out_dir + "/equations.txt";
  std::string json_path = a.out_dir + "/equations.json";
  std::string trace_path = a.out_dir + "/trace.csv";
  export_equations(res.surrogate, txt_path, json_path);
  write_text(trace_path, trace_to_csv(res.trace));

  json cfg{{"trials_per_block", a.dc.trials_per_block}, {"gamma", a.dc.gamma},
           {"val_frac", a.val_frac}};
  write_manifest(a.out_dir + "/manifest_distill.json", "distill", argv, cfg, a.dc.seed,
                 {a.checkpoint, a.train_path}, {txt_path, json_path, trace_path},
                 timer.seconds());
  std::cout << "distill: " << res.reports.size() << " blocks, " << res.constant_count
            << " constants -> " << json_path << "\n";
}

struct EvalArgs {
  std::string checkpoint, equations, data_path, out_dir = ".";
};

void cmd_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
  ManifestTimer timer;
  fs::create_directories(a.out_dir);
  if (a.checkpoint.empty() == a.equations.empty())
    throw CLI::ValidationError("pass exactly one of --checkpoint / --equations");
  std::vector<HeteroGraph> data = load_dataset(a.data_path);
  std::vector<double> truth = dataset_labels(data);

  std::vector<double> pred;
  std::string kind;
  long long params = 0, constants = 0;
  std::string model_path;
  if (!a.checkpoint.empty()) {
    model_path = a.checkpoint;
    Checkpoint ckpt = load_checkpoint(a.checkpoint);
    kind = ckpt.kind;
    if (ckpt.kind == "baseline") {
      BaselineModel m = BaselineModel::from_checkpoint(ckpt);
      params = m.param_count();
      pred = predict_dataset(m, data);
    } else if (ckpt.kind == "flowkan") {
      FlowKanModel m = FlowKanModel::from_checkpoint(ckpt);
      params = m.param_count();
      pred = predict_dataset(m, data);
    } else {
      throw std::runtime_error("unknown checkpoint kind: " + ckpt.kind);
    }
  } else {
    model_path = a.equations;
    SymbolicSurrogate s = load_equations(a.equations);
    kind = "surrogate";
    constants = s.constant_count();
    pred = predict_dataset(s, data);
  }

  double m = mse(pred, truth);
  double r = r2(pred, truth);
  std::string scatter_path = a.out_dir + "/" + kind + ".scatter.csv";
  write_text(scatter_path, scatter_csv(truth, pred));

  std::ostringstream rep;
  rep << "model: " << kind << "\n"
      << "flows: " << truth.size() << "\n"
      << "mse: " << fmt4(m * 1e9) << "e-9\n"
      << "r2: " << fmt4(r) << "\n"
      << "trainable_params: " << params << "\n"
      << "equation_constants: " << constants << "\n";
  std::string report_path = a.out_dir + "/" + kind + ".eval.txt";
  write_text(report_path, rep.str());
  std::cout << rep.str();

  write_manifest(a.out_dir + "/manifest_eval_" + kind + ".json", "eval", argv,
                 json{{"kind", kind}}, 0, {model_path, a.data_path},
                 {scatter_path, report_path}, timer.seconds());
}

struct ReportArgs {
  std::string baseline_ckpt, flowkan_ckpt, equations, data_path, out_dir = ".";
};

void cmd_report(const ReportArgs& a, const std::vector<std::string>& argv) {
  ManifestTimer timer;
  fs::create_directories(a.out_dir);
  std::vector<HeteroGraph> data = load_dataset(a.data_path);
  std::vector<double> truth = dataset_labels(data);

  struct Row {
    std::string name;
    double mse, r2;
    long long params, constants;
  };
  std::vector<Row> rows;
  long long baseline_params = 0, flowkan_params = 0;
  if (!a.baseline_ckpt.empty()) {
    BaselineModel m = BaselineModel::from_checkpoint(load_checkpoint(a.baseline_ckpt));
    auto pred = predict_dataset(m, data);
    baseline_params = m.param_count();
    rows.push_back({"baseline", mse(pred, truth), r2(pred, truth), m.param_count(), 0});
  }
  if (!a.flowkan_ckpt.empty()) {
    FlowKanModel m = FlowKanModel::from_checkpoint(load_checkpoint(a.flowkan_ckpt));
    auto pred = predict_dataset(m, data);
    flowkan_params = m.param_count();
    rows.push_back({"flowkan", mse(pred, truth), r2(pred, truth), m.param_count(), 0});
  }
  if (!a.equations.empty()) {
    SymbolicSurrogate s = load_equations(a.equations);
    auto pred = predict_dataset(s, data);
    rows.push_back({"surrogate", mse(pred, truth), r2(pred, truth), 0, s.constant_count()});
  }
  if (rows.empty()) throw CLI::ValidationError("nothing to report: pass at least one model");

  std::ostringstream os;
  os << "model       mse(e-9)    r2        params    constants\n";
  for (const auto& r : rows)
    os << std::left << std::setw(12) << r.name << std::setw(12) << fmt4(r.mse * 1e9)
       << std::setw(10) << fmt4(r.r2) << std::setw(10) << r.params << r.constants << "\n";
  if (baseline_params > 0 && flowkan_params > 0)
    os << "param ratio baseline/flowkan: "
       << fmt4(static_cast<double>(baseline_params) / static_cast<double>(flowkan_params))
       << "\n";
  std::string report_path = a.out_dir + "/report.txt";
  write_text(report_path, os.str());
  std::cout << os.str();

  std::vector<std::string> inputs = {a.data_path};
  for (const std::string& p : {a.baseline_ckpt, a.flowkan_ckpt, a.equations})
    if (!p.empty()) inputs.push_back(p);
  write_manifest(a.out_dir + "/manifest_report.json", "report", argv, json::object(), 0, inputs,
                 {report_path}, timer.seconds());
}

void cmd_rerun(const std::string& manifest_path) {
  json j = json::parse(read_text(manifest_path));
  std::vector<std::string> argv_s = j.at("argv").get<std::vector<std::string>>();
  std::vector<char*> argv_c;
  for (auto& s : argv_s) argv_c.push_back(s.data());
  int rc = run(static_cast<int>(argv_c.size()), argv_c.data());
  if (rc != 0) throw std::runtime_error("rerun failed with exit code " + std::to_string(rc));
}

int run(int argc, char** argv) {
  CLI::App app{"Per-flow delay prediction on flow-link graphs: data generation, GNN/KAN "
               "training, and symbolic distillation"};
  app.require_subcommand(1);
  app.set_config("--config");
  std::vector<std::string> argv_copy = capture_argv(argc, argv);

  DatagenArgs dg;
  auto* c_dg = app.add_subcommand("datagen", "Generate a synthetic queueing dataset");
  c_dg->add_option("--out-dir", dg.out_dir);
  c_dg->add_option("--graphs", dg.graphs);
  c_dg->add_option("--train-frac", dg.train_frac);
  c_dg->add_option("--seed", dg.seed);
  c_dg->add_option("--distractors", dg.distractors);
  c_dg->add_option("--min-flows", dg.scen.n_flows_min);
  c_dg->add_option("--max-flows", dg.scen.n_flows_max);
  c_dg->add_option("--min-nodes", dg.scen.n_nodes_min);
  c_dg->add_option("--max-nodes", dg.scen.n_nodes_max);
  c_dg->callback([&] { cmd_datagen(dg, argv_copy); });

  FeatselArgs fsa;
  auto* c_fs = app.add_subcommand("featsel", "Sequential forward feature selection");
  c_fs->add_option("--candidates", fsa.candidates)->required();
  c_fs->add_option("--out-dir", fsa.out_dir);
  c_fs->add_option("--k-folds", fsa.sfs.k_folds);
  c_fs->add_option("--max-features", fsa.sfs.max_features);
  c_fs->add_option("--seed", fsa.sfs.seed);
  c_fs->callback([&] { cmd_featsel(fsa, argv_copy); });

  TrainArgs tb;
  BaselineConfig bc;
  auto* c_tb = app.add_subcommand("train-baseline", "Train the attention GNN baseline");
  c_tb->add_option("--train", tb.train_path)->required();
  c_tb->add_option("--out-dir", tb.out_dir);
  c_tb->add_option("--val-frac", tb.val_frac);
  c_tb->add_option("--epochs", tb.tc.max_epochs);
  c_tb->add_option("--patience", tb.tc.patience);
  c_tb->add_option("--lr", tb.tc.lr);
  c_tb->add_option("--seed", tb.tc.seed);
  c_tb->add_option("--rounds", bc.rounds);
  c_tb->callback([&] { cmd_train<BaselineModel>(tb, bc, "baseline", argv_copy); });

  TrainArgs tf;
  FlowKanConfig fc = FlowKanConfig::defaults();
  auto* c_tf = app.add_subcommand("train-flowkan", "Train the KAN-based model");
  c_tf->add_option("--train", tf.train_path)->required();
  c_tf->add_option("--out-dir", tf.out_dir);
  c_tf->add_option("--val-frac", tf.val_frac);
  c_tf->add_option("--epochs", tf.tc.max_epochs);
  c_tf->add_option("--patience", tf.tc.patience);
  c_tf->add_option("--lr", tf.tc.lr);
  c_tf->add_option("--seed", tf.tc.seed);
  c_tf->add_option("--rounds", fc.rounds);
  std::string fc_json;
  c_tf->add_option("--model-config", fc_json, "JSON file overriding the model configuration");
  c_tf->callback([&] {
    if (!fc_json.empty()) fc = FlowKanConfig::from_json(json::parse(read_text(fc_json)));
    cmd_train<FlowKanModel>(tf, fc, "flowkan", argv_copy);
  });

  SearchArgs sa;
  auto* c_se = app.add_subcommand("search", "Random hyperparameter search (KAN model)");
  c_se->add_option("--train", sa.train_path)->required();
  c_se->add_option("--out-dir", sa.out_dir);
  c_se->add_option("--val-frac", sa.val_frac);
  c_se->add_option("--budget", sa.budget);
  c_se->add_option("--epoch-cap", sa.epoch_cap);
  c_se->add_option("--seed", sa.seed);
  c_se->callback([&] { cmd_search(sa, argv_copy); });

  DistillArgs da;
  auto* c_di = app.add_subcommand("distill", "Distill a trained KAN model into equations");
  c_di->add_option("--checkpoint", da.checkpoint)->required();
  c_di->add_option("--train", da.train_path)->required();
  c_di->add_option("--out-dir", da.out_dir);
  c_di->add_option("--val-frac", da.val_frac);
  c_di->add_option("--trials", da.dc.trials_per_block);
  c_di->add_option("--gamma", da.dc.gamma);
  c_di->add_option("--seed", da.dc.seed);
  c_di->add_option("--max-sample-graphs", da.dc.max_sample_graphs);
  c_di->callback([&] { cmd_distill(da, argv_copy); });

  EvalArgs ea;
  auto* c_ev = app.add_subcommand("eval", "Evaluate a checkpoint or equation bundle");
  c_ev->add_option("--checkpoint", ea.checkpoint);
  c_ev->add_option("--equations", ea.equations);
  c_ev->add_option("--data", ea.data_path)->required();
  c_ev->add_option("--out-dir", ea.out_dir);
  c_ev->callback([&] { cmd_eval(ea, argv_copy); });

  ReportArgs ra;
  auto* c_rp = app.add_subcommand("report", "Side-by-side model comparison");
  c_rp->add_option("--baseline-checkpoint", ra.baseline_ckpt);
  c_rp->add_option("--flowkan-checkpoint", ra.flowkan_ckpt);
  c_rp->add_option("--equations", ra.equations);
  c_rp->add_option("--data", ra.data_path)->required();
  c_rp->add_option("--out-dir", ra.out_dir);
  c_rp->callback([&] { cmd_report(ra, argv_copy); });

  std::string manifest_path;
  auto* c_rr = app.add_subcommand("rerun", "Repeat a command from its manifest");
  c_rr->add_option("--manifest", manifest_path)->required();
  c_rr->callback([&] { cmd_rerun(manifest_path); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
