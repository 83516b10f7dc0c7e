#include "netkan/flowkan.hpp"

#include <cmath>
#include <stdexcept>

namespace netkan {

using nlohmann::json;

ActMode act_mode_from_string(const std::string& s) {
  if (s == "final_only") return ActMode::FinalOnly;
  if (s == "except_mp") return ActMode::ExceptMp;
  if (s == "all") return ActMode::All;
  if (s == "no_activation") return ActMode::NoActivation;
  throw std::invalid_argument("unknown activation mode: " + s);
}

std::string act_mode_to_string(ActMode m) {
  switch (m) {
    case ActMode::FinalOnly: return "final_only";
    case ActMode::ExceptMp: return "except_mp";
    case ActMode::All: return "all";
    case ActMode::NoActivation: return "no_activation";
  }
  throw std::logic_error("bad act mode");
}

FlowKanConfig FlowKanConfig::defaults() {
  FlowKanConfig c;
  c.blocks = {
      {"flow_init", {9, 3, 0.93}}, {"link_init", {7, 5, 1.66}},
      {"f2l.0", {5, 3, 0.55}},     {"f2l.1", {6, 4, 0.70}},  {"f2l.2", {8, 4, 0.82}},
      {"l2f.0", {7, 3, 0.73}},     {"l2f.1", {7, 5, 0.77}},  {"l2f.2", {10, 3, 0.33}},
      {"fuse", {6, 5, 1.15}},      {"final", {10, 5, 2.28}},
  };
  return c;
}

void FlowKanConfig::validate() const {
  if (flow_hidden < 1 || link_hidden < 1) throw std::invalid_argument("FlowKanConfig: widths >= 1");
  if (rounds < 0) throw std::invalid_argument("FlowKanConfig: rounds >= 0");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("FlowKanConfig: bad dropout");
  std::vector<std::string> needed = {"flow_init", "link_init", "fuse", "final"};
  for (int i = 0; i < rounds; ++i) {
    needed.push_back("f2l." + std::to_string(i));
    needed.push_back("l2f." + std::to_string(i));
  }
  for (const auto& key : needed)
    if (!blocks.count(key))
      throw std::invalid_argument("FlowKanConfig: missing block spec for " + key);
}

json FlowKanConfig::to_json() const {
  json jb;
  for (const auto& [name, b] : blocks)
    jb[name] = {{"G", b.G}, {"k", b.k}, {"sigma", b.sigma}};
  return json{{"flow_hidden", flow_hidden}, {"link_hidden", link_hidden}, {"rounds", rounds},
              {"dropout", dropout},         {"act", activation_to_string(act)},
              {"act_mode", act_mode_to_string(act_mode)}, {"blocks", jb},
              {"enc_lo", enc_lo},           {"enc_hi", enc_hi},
              {"hid_lo", hid_lo},           {"hid_hi", hid_hi}};
}

FlowKanConfig FlowKanConfig::from_json(const json& j) {
  FlowKanConfig c;
  c.flow_hidden = j.at("flow_hidden").get<int>();
  c.link_hidden = j.at("link_hidden").get<int>();
  c.rounds = j.at("rounds").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.act = activation_from_string(j.at("act").get<std::string>());
  c.act_mode = act_mode_from_string(j.at("act_mode").get<std::string>());
  c.blocks.clear();
  for (auto it = j.at("blocks").begin(); it != j.at("blocks").end(); ++it)
    c.blocks[it.key()] = {it.value().at("G").get<int>(), it.value().at("k").get<int>(),
                          it.value().at("sigma").get<double>()};
  c.enc_lo = j.at("enc_lo").get<double>();
  c.enc_hi = j.at("enc_hi").get<double>();
  c.hid_lo = j.at("hid_lo").get<double>();
  c.hid_hi = j.at("hid_hi").get<double>();
  return c;
}

std::vector<std::string> canonical_block_names(const FlowKanConfig& cfg) {
  std::vector<std::string> names = {"flow_init", "link_init"};
  for (int i = 0; i < cfg.rounds; ++i) {
    std::string li = "L" + std::to_string(i);
    names.push_back(li + ".f2l.T");
    names.push_back(li + ".f2l.A");
    names.push_back(li + ".l2f.T");
    names.push_back(li + ".l2f.A");
  }
  names.push_back("fuse");
  names.push_back("final");
  return names;
}

namespace {

bool act_after_encoder(ActMode m) { return m == ActMode::ExceptMp || m == ActMode::All; }
bool act_after_mp(ActMode m) { return m == ActMode::All; }
bool act_after_fuse(ActMode m) { return m != ActMode::NoActivation; }
bool act_inside_final(ActMode m) { return m == ActMode::ExceptMp || m == ActMode::All; }

double apply_act_scalar(double x, Activation a) {
  switch (a) {
    case Activation::Relu: return x > 0 ? x : 0.0;
    case Activation::Silu: return x / (1.0 + std::exp(-x));
    case Activation::Softplus: return x > 30 ? x : std::log1p(std::exp(x));
    case Activation::Tanh: return std::tanh(x);
    case Activation::LeakyRelu: return x > 0 ? x : 0.01 * x;
    case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
  }
  return x;
}

void apply_act_vec(std::vector<double>& v, Activation a) {
  for (double& x : v) x = apply_act_scalar(x, a);
}

double softplus_scalar(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

}  // namespace

std::vector<double> flowkan_pipeline(const FlowKanConfig& cfg, const HeteroGraph& g,
                                     const Normalizer& flow_norm, const Normalizer& link_norm,
                                     double output_scale, const BlockFn& block,
                                     BlockIoRecorder* recorder) {
  int n_f = static_cast<int>(g.flows.size());
  int n_l = static_cast<int>(g.links.size());
  auto call = [&](const std::string& name, const std::vector<double>& in) {
    std::vector<double> out = block(name, in);
    if (recorder && recorder->target == name) recorder->samples.emplace_back(in, out);
    return out;
  };

  std::vector<std::vector<double>> h_f(n_f), h_l(n_l);
  for (int i = 0; i < n_f; ++i) {
    auto feats = g.flows[i].features();
    h_f[i] = call("flow_init", flow_norm.apply({feats.begin(), feats.end()}));
    if (act_after_encoder(cfg.act_mode)) apply_act_vec(h_f[i], cfg.act);
  }
  for (int i = 0; i < n_l; ++i) {
    auto feats = g.links[i].features();
    h_l[i] = call("link_init", link_norm.apply({feats.begin(), feats.end()}));
    if (act_after_encoder(cfg.act_mode)) apply_act_vec(h_l[i], cfg.act);
  }

  for (int round = 0; round < cfg.rounds; ++round) {
    std::string li = "L" + std::to_string(round);
    // flow -> link
    {
      std::vector<std::vector<double>> msg(g.edges_f2l.size());
      std::vector<double> score(g.edges_f2l.size());
      for (size_t e = 0; e < g.edges_f2l.size(); ++e) {
        auto [f, l] = g.edges_f2l[e];
        msg[e] = call(li + ".f2l.T", h_f[f]);
        if (act_after_mp(cfg.act_mode)) apply_act_vec(msg[e], cfg.act);
        std::vector<double> pre(msg[e].size());
        for (size_t j = 0; j < pre.size(); ++j) {
          double v = h_l[l][j] + msg[e][j];
          pre[j] = v > 0 ? v : 0.01 * v;
        }
        auto s = call(li + ".f2l.A", pre);
        score[e] = act_after_mp(cfg.act_mode) ? apply_act_scalar(s[0], cfg.act) : s[0];
      }
      // segmented softmax per receiving link, then residual update
      std::vector<double> denom(n_l, 0.0), mx(n_l, -1e300);
      for (size_t e = 0; e < g.edges_f2l.size(); ++e)
        mx[g.edges_f2l[e].second] = std::max(mx[g.edges_f2l[e].second], score[e]);
      for (size_t e = 0; e < g.edges_f2l.size(); ++e)
        denom[g.edges_f2l[e].second] += std::exp(score[e] - mx[g.edges_f2l[e].second]);
      for (size_t e = 0; e < g.edges_f2l.size(); ++e) {
        auto [f, l] = g.edges_f2l[e];
        double alpha = std::exp(score[e] - mx[l]) / denom[l];
        for (size_t j = 0; j < h_l[l].size(); ++j) h_l[l][j] += alpha * msg[e][j];
      }
    }
    // link -> flow
    {
      std::vector<std::vector<double>> msg(g.edges_f2l.size());
      std::vector<double> score(g.edges_f2l.size());
      for (size_t e = 0; e < g.edges_f2l.size(); ++e) {
        auto [f, l] = g.edges_f2l[e];
        msg[e] = call(li + ".l2f.T", h_l[l]);
        if (act_after_mp(cfg.act_mode)) apply_act_vec(msg[e], cfg.act);
        std::vector<double> pre(msg[e].size());
        for (size_t j = 0; j < pre.size(); ++j) {
          double v = h_f[f][j] + msg[e][j];
          pre[j] = v > 0 ? v : 0.01 * v;
        }
        auto s = call(li + ".l2f.A", pre);
        score[e] = act_after_mp(cfg.act_mode) ? apply_act_scalar(s[0], cfg.act) : s[0];
      }
      std::vector<double> denom(n_f, 0.0), mx(n_f, -1e300);
      for (size_t e = 0; e < g.edges_f2l.size(); ++e)
        mx[g.edges_f2l[e].first] = std::max(mx[g.edges_f2l[e].first], score[e]);
      for (size_t e = 0; e < g.edges_f2l.size(); ++e)
        denom[g.edges_f2l[e].first] += std::exp(score[e] - mx[g.edges_f2l[e].first]);
      for (size_t e = 0; e < g.edges_f2l.size(); ++e) {
        auto [f, l] = g.edges_f2l[e];
        double alpha = std::exp(score[e] - mx[f]) / denom[f];
        for (size_t j = 0; j < h_f[f].size(); ++j) h_f[f][j] += alpha * msg[e][j];
      }
    }
  }

  std::vector<double> out(n_f, 0.0);
  for (int i = 0; i < n_f; ++i) {
    std::vector<double> c_f(cfg.link_hidden, 0.0);
    for (int l : g.flows[i].path)
      for (int j = 0; j < cfg.link_hidden; ++j) c_f[j] += h_l[l][j];
    std::vector<double> fused = h_f[i];
    fused.insert(fused.end(), c_f.begin(), c_f.end());
    std::vector<double> z = call("fuse", fused);
    if (act_after_fuse(cfg.act_mode)) apply_act_vec(z, cfg.act);
    std::vector<double> pre(h_f[i].size());
    for (size_t j = 0; j < pre.size(); ++j) pre[j] = h_f[i][j] + z[j];
    std::vector<double> y = call("final", pre);
    out[i] = softplus_scalar(y[0]) * output_scale;
  }
  return out;
}

FlowKanModel::FlowKanModel(const FlowKanConfig& config, Rng& rng) : cfg_(config) {
  cfg_.validate();
  int fh = cfg_.flow_hidden, lh = cfg_.link_hidden;
  auto make = [&](const std::string& spec_key, int in, int out, bool encoder,
                  const std::string& name) {
    const BlockSpec& b = cfg_.blocks.at(spec_key);
    double lo = encoder ? cfg_.enc_lo : cfg_.hid_lo;
    double hi = encoder ? cfg_.enc_hi : cfg_.hid_hi;
    KanLayer layer = kan_init(in, out, b.G, b.k, b.sigma, rng, lo, hi);
    layer.register_params(params_, name);
    return layer;
  };
  flow_init_ = make("flow_init", kFlowFeatureCount, fh, true, "flow_init");
  link_init_ = make("link_init", kLinkFeatureCount, lh, true, "link_init");
  for (int i = 0; i < cfg_.rounds; ++i) {
    std::string li = "L" + std::to_string(i);
    t_f2l_.push_back(make("f2l." + std::to_string(i), fh, lh, false, li + ".f2l.T"));
    a_f2l_.push_back(make("f2l." + std::to_string(i), lh, 1, false, li + ".f2l.A"));
    t_l2f_.push_back(make("l2f." + std::to_string(i), lh, fh, false, li + ".l2f.T"));
    a_l2f_.push_back(make("l2f." + std::to_string(i), fh, 1, false, li + ".l2f.A"));
  }
  fuse_ = make("fuse", fh + lh, fh, false, "fuse");
  final0_ = make("final", fh, fh, false, "final.0");
  final1_ = make("final", fh, 1, false, "final.1");
}

Tensor FlowKanModel::forward(const HeteroGraph& g, bool training, Rng& rng) {
  if (g.flows.empty()) throw std::invalid_argument("flowkan forward: graph has no flows");
  if (flow_norm.width() != kFlowFeatureCount || link_norm.width() != kLinkFeatureCount)
    throw std::invalid_argument("flowkan forward: normalizer not fitted");
  int n_f = static_cast<int>(g.flows.size());
  int n_l = static_cast<int>(g.links.size());

  std::vector<double> fdata, ldata;
  for (const auto& f : g.flows) {
    auto feats = f.features();
    auto norm = flow_norm.apply({feats.begin(), feats.end()});
    for (double v : norm) {
      if (!std::isfinite(v)) throw std::invalid_argument("flowkan forward: non-finite feature");
      fdata.push_back(v);
    }
  }
  for (const auto& l : g.links) {
    auto feats = l.features();
    auto norm = link_norm.apply({feats.begin(), feats.end()});
    ldata.insert(ldata.end(), norm.begin(), norm.end());
  }
  Tensor F = Tensor::from(n_f, kFlowFeatureCount, std::move(fdata));
  Tensor L = Tensor::from(n_l, kLinkFeatureCount, std::move(ldata));

  auto maybe_act = [&](Tensor t, bool on) { return on ? activation(t, cfg_.act) : t; };

  Tensor h_f = maybe_act(flow_init_.forward(F), act_after_encoder(cfg_.act_mode));
  Tensor h_l = maybe_act(link_init_.forward(L), act_after_encoder(cfg_.act_mode));
  h_f = dropout(h_f, cfg_.dropout, training, rng);
  h_l = dropout(h_l, cfg_.dropout, training, rng);

  std::vector<int> send, recv;  // flow idx, link idx per edge
  for (const auto& [f, l] : g.edges_f2l) {
    send.push_back(f);
    recv.push_back(l);
  }
  bool have_edges = !g.edges_f2l.empty();

  for (int i = 0; i < cfg_.rounds && have_edges; ++i) {
    {
      Tensor t_all = maybe_act(t_f2l_[i].forward(h_f), act_after_mp(cfg_.act_mode));
      Tensor t_e = gather_rows(t_all, send);
      Tensor pre = activation(add(gather_rows(h_l, recv), t_e), Activation::LeakyRelu);
      Tensor s = maybe_act(a_f2l_[i].forward(pre), act_after_mp(cfg_.act_mode));
      Tensor alpha = segmented_softmax(s, recv);
      h_l = add(h_l, scatter_add_rows(row_scale(t_e, alpha), recv, n_l));
    }
    {
      Tensor t_all = maybe_act(t_l2f_[i].forward(h_l), act_after_mp(cfg_.act_mode));
      Tensor t_e = gather_rows(t_all, recv);
      Tensor pre = activation(add(gather_rows(h_f, send), t_e), Activation::LeakyRelu);
      Tensor s = maybe_act(a_l2f_[i].forward(pre), act_after_mp(cfg_.act_mode));
      Tensor alpha = segmented_softmax(s, send);
      h_f = add(h_f, scatter_add_rows(row_scale(t_e, alpha), send, n_f));
    }
  }

  Tensor c_f = have_edges ? scatter_add_rows(gather_rows(h_l, recv), send, n_f)
                          : Tensor::zeros(n_f, cfg_.link_hidden);
  Tensor z = maybe_act(fuse_.forward(concat_cols(h_f, c_f)), act_after_fuse(cfg_.act_mode));
  z = dropout(z, cfg_.dropout, training, rng);
  Tensor pre_final = add(h_f, z);
  Tensor y0 = maybe_act(final0_.forward(pre_final), act_inside_final(cfg_.act_mode));
  Tensor out = activation(final1_.forward(y0), Activation::Softplus);
  return scale(out, output_scale);
}

std::vector<double> FlowKanModel::eval_block(const std::string& name,
                                             const std::vector<double>& in) const {
  if (name == "flow_init") return flow_init_.forward_plain(in);
  if (name == "link_init") return link_init_.forward_plain(in);
  if (name == "fuse") return fuse_.forward_plain(in);
  if (name == "final") {
    std::vector<double> y0 = final0_.forward_plain(in);
    if (act_inside_final(cfg_.act_mode)) apply_act_vec(y0, cfg_.act);
    return final1_.forward_plain(y0);
  }
  if (name.size() > 2 && name[0] == 'L') {
    int round = name[1] - '0';
    if (round >= 0 && round < cfg_.rounds) {
      std::string rest = name.substr(3);
      if (rest == "f2l.T") return t_f2l_[round].forward_plain(in);
      if (rest == "f2l.A") return a_f2l_[round].forward_plain(in);
      if (rest == "l2f.T") return t_l2f_[round].forward_plain(in);
      if (rest == "l2f.A") return a_l2f_[round].forward_plain(in);
    }
  }
  throw std::invalid_argument("unknown block name: " + name);
}

std::vector<double> FlowKanModel::predict(const HeteroGraph& g) const {
  return flowkan_pipeline(cfg_, g, flow_norm, link_norm, output_scale,
                          [this](const std::string& n, const std::vector<double>& in) {
                            return eval_block(n, in);
                          });
}

long long FlowKanModel::param_count() const { return params_.scalar_count(); }

const KanLayer& FlowKanModel::layer(const std::string& name) const {
  if (name == "flow_init") return flow_init_;
  if (name == "link_init") return link_init_;
  if (name == "fuse") return fuse_;
  if (name == "final.0") return final0_;
  if (name == "final.1") return final1_;
  if (name.size() > 2 && name[0] == 'L') {
    int round = name[1] - '0';
    if (round >= 0 && round < cfg_.rounds) {
      std::string rest = name.substr(3);
      if (rest == "f2l.T") return t_f2l_[round];
      if (rest == "f2l.A") return a_f2l_[round];
      if (rest == "l2f.T") return t_l2f_[round];
      if (rest == "l2f.A") return a_l2f_[round];
    }
  }
  throw std::invalid_argument("unknown layer name: " + name);
}

Checkpoint FlowKanModel::to_checkpoint() const {
  Checkpoint c;
  c.kind = "flowkan";
  c.config = cfg_.to_json();
  c.flow_norm = flow_norm;
  c.link_norm = link_norm;
  c.output_scale = output_scale;
  store_params_into(params_, c);
  return c;
}

FlowKanModel FlowKanModel::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "flowkan")
    throw std::runtime_error("checkpoint kind mismatch: expected flowkan, got " + ckpt.kind);
  Rng rng(0);
  FlowKanModel m(FlowKanConfig::from_json(ckpt.config), rng);
  load_params_from(ckpt, m.params_);
  m.flow_norm = ckpt.flow_norm;
  m.link_norm = ckpt.link_norm;
  m.output_scale = ckpt.output_scale;
  return m;
}

}  // namespace netkan
