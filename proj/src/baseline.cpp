#include "netkan/baseline.hpp"

#include <cmath>
#include <stdexcept>

namespace netkan {

using nlohmann::json;

void BaselineConfig::validate() const {
  if (flow_hidden < 1 || link_hidden < 1 || encoder_hidden < 1 || readout_hidden < 1)
    throw std::invalid_argument("BaselineConfig: widths must be >= 1");
  if (rounds < 1) throw std::invalid_argument("BaselineConfig: rounds must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("BaselineConfig: bad dropout");
}

json BaselineConfig::to_json() const {
  return json{{"flow_hidden", flow_hidden},   {"link_hidden", link_hidden},
              {"encoder_hidden", encoder_hidden}, {"readout_hidden", readout_hidden},
              {"rounds", rounds},             {"dropout", dropout},
              {"act", activation_to_string(act)}, {"gru_per_round", gru_per_round}};
}

BaselineConfig BaselineConfig::from_json(const json& j) {
  BaselineConfig c;
  c.flow_hidden = j.at("flow_hidden").get<int>();
  c.link_hidden = j.at("link_hidden").get<int>();
  c.encoder_hidden = j.at("encoder_hidden").get<int>();
  c.readout_hidden = j.at("readout_hidden").get<int>();
  c.rounds = j.at("rounds").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.act = activation_from_string(j.at("act").get<std::string>());
  c.gru_per_round = j.at("gru_per_round").get<bool>();
  return c;
}

namespace {

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_rowvec(matmul(x, w, false, true), b);
}

}  // namespace

BaselineModel::BaselineModel(const BaselineConfig& config, Rng& rng) : cfg_(config) {
  cfg_.validate();
  int fh = cfg_.flow_hidden, lh = cfg_.link_hidden, eh = cfg_.encoder_hidden;
  auto dense = [&](int out, int in) {
    return Tensor::randn(out, in, rng, 1.0 / std::sqrt(static_cast<double>(in)), true);
  };
  ef_w1 = params_.add("enc_f.w1", dense(eh, kFlowFeatureCount));
  ef_b1 = params_.add("enc_f.b1", Tensor::zeros(1, eh, true));
  ef_w2 = params_.add("enc_f.w2", dense(fh, eh));
  ef_b2 = params_.add("enc_f.b2", Tensor::zeros(1, fh, true));
  el_w1 = params_.add("enc_l.w1", dense(eh, kLinkFeatureCount));
  el_b1 = params_.add("enc_l.b1", Tensor::zeros(1, eh, true));
  el_w2 = params_.add("enc_l.w2", dense(lh, eh));
  el_b2 = params_.add("enc_l.b2", Tensor::zeros(1, lh, true));
  for (int r = 0; r < cfg_.rounds; ++r) {
    std::string p = "round" + std::to_string(r);
    AttnParams f2l;
    f2l.w_send = params_.add(p + ".f2l.w_send", dense(lh, fh));
    f2l.w_recv = params_.add(p + ".f2l.w_recv", dense(lh, lh));
    f2l.attn = params_.add(p + ".f2l.attn", dense(1, 2 * lh));
    f2l_.push_back(f2l);
    link_u_.push_back(params_.add(p + ".link_update.w", dense(lh, lh)));
    link_bu_.push_back(params_.add(p + ".link_update.b", Tensor::zeros(1, lh, true)));
    AttnParams l2f;
    l2f.w_send = params_.add(p + ".l2f.w_send", dense(fh, lh));
    l2f.w_recv = params_.add(p + ".l2f.w_recv", dense(fh, fh));
    l2f.attn = params_.add(p + ".l2f.attn", dense(1, 2 * fh));
    l2f_.push_back(l2f);
  }
  int n_grus = cfg_.gru_per_round ? cfg_.rounds : 1;
  for (int r = 0; r < n_grus; ++r) {
    GruParams g = gru_init(fh, fh, rng);
    std::string p = "gru" + std::to_string(r);
    params_.add(p + ".wz", g.wz); params_.add(p + ".uz", g.uz); params_.add(p + ".bz", g.bz);
    params_.add(p + ".wr", g.wr); params_.add(p + ".ur", g.ur); params_.add(p + ".br", g.br);
    params_.add(p + ".wc", g.wc); params_.add(p + ".uc", g.uc); params_.add(p + ".bc", g.bc);
    gru_.push_back(g);
  }
  ro_w1 = params_.add("readout.w1", dense(cfg_.readout_hidden, fh + lh));
  ro_b1 = params_.add("readout.b1", Tensor::zeros(1, cfg_.readout_hidden, true));
  ro_w2 = params_.add("readout.w2", dense(1, cfg_.readout_hidden));
  ro_b2 = params_.add("readout.b2", Tensor::zeros(1, 1, true));
}

Tensor BaselineModel::forward(const HeteroGraph& g, bool training, Rng& rng) {
  if (g.flows.empty()) throw std::invalid_argument("baseline forward: graph has no flows");
  if (flow_norm.width() != kFlowFeatureCount || link_norm.width() != kLinkFeatureCount)
    throw std::invalid_argument("baseline forward: normalizer not fitted");
  int n_f = static_cast<int>(g.flows.size());
  int n_l = static_cast<int>(g.links.size());

  std::vector<double> fdata, ldata;
  fdata.reserve(static_cast<size_t>(n_f) * kFlowFeatureCount);
  for (const auto& f : g.flows) {
    auto feats = f.features();
    auto norm = flow_norm.apply({feats.begin(), feats.end()});
    for (double v : norm) {
      if (!std::isfinite(v)) throw std::invalid_argument("baseline forward: non-finite feature");
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

  Tensor h_f = activation(linear(activation(linear(F, ef_w1, ef_b1), cfg_.act), ef_w2, ef_b2),
                          cfg_.act);
  Tensor h_l = activation(linear(activation(linear(L, el_w1, el_b1), cfg_.act), el_w2, el_b2),
                          cfg_.act);
  h_f = dropout(h_f, cfg_.dropout, training, rng);
  h_l = dropout(h_l, cfg_.dropout, training, rng);

  std::vector<int> f2l_send, f2l_recv;  // flows -> links
  for (const auto& [f, l] : g.edges_f2l) {
    f2l_send.push_back(f);
    f2l_recv.push_back(l);
  }
  bool have_edges = !g.edges_f2l.empty();

  Tensor last_msg_f = Tensor::zeros(n_f, cfg_.flow_hidden);
  for (int r = 0; r < cfg_.rounds; ++r) {
    if (have_edges && n_l > 0) {
      // flow -> link
      const auto& ap = f2l_[r];
      Tensor msg_all = matmul(h_f, ap.w_send, false, true);
      Tensor msg_e = gather_rows(msg_all, f2l_send);
      Tensor recv_all = matmul(h_l, ap.w_recv, false, true);
      Tensor recv_e = gather_rows(recv_all, f2l_recv);
      Tensor scores = activation(matmul(concat_cols(recv_e, msg_e), ap.attn, false, true),
                                 Activation::LeakyRelu);
      Tensor alpha = segmented_softmax(scores, f2l_recv);
      Tensor m_l = scatter_add_rows(row_scale(msg_e, alpha), f2l_recv, n_l);
      h_l = activation(add(linear(h_l, link_u_[r], link_bu_[r]), m_l), cfg_.act);

      // link -> flow
      const auto& bp = l2f_[r];
      Tensor msg_all2 = matmul(h_l, bp.w_send, false, true);
      Tensor msg_e2 = gather_rows(msg_all2, f2l_recv);  // sender is the link
      Tensor recv_all2 = matmul(h_f, bp.w_recv, false, true);
      Tensor recv_e2 = gather_rows(recv_all2, f2l_send);
      Tensor scores2 = activation(matmul(concat_cols(recv_e2, msg_e2), bp.attn, false, true),
                                  Activation::LeakyRelu);
      Tensor alpha2 = segmented_softmax(scores2, f2l_send);
      Tensor m_f = scatter_add_rows(row_scale(msg_e2, alpha2), f2l_send, n_f);
      last_msg_f = m_f;
      if (cfg_.gru_per_round)
        h_f = gru_cell(h_f, m_f, gru_[r]);
      else
        h_f = add(h_f, m_f);
    }
  }
  if (!cfg_.gru_per_round) h_f = gru_cell(h_f, last_msg_f, gru_[0]);

  Tensor c_f = have_edges
                   ? scatter_add_rows(gather_rows(h_l, f2l_recv), f2l_send, n_f)
                   : Tensor::zeros(n_f, cfg_.link_hidden);
  Tensor fused = dropout(concat_cols(h_f, c_f), cfg_.dropout, training, rng);
  Tensor hidden = activation(linear(fused, ro_w1, ro_b1), cfg_.act);
  Tensor out = activation(linear(hidden, ro_w2, ro_b2), Activation::Softplus);
  return scale(out, output_scale);
}

std::vector<double> BaselineModel::predict(const HeteroGraph& g) {
  NoGradGuard guard;
  Rng dummy(0);
  Tensor out = forward(g, false, dummy);
  return out.data();
}

Checkpoint BaselineModel::to_checkpoint() const {
  Checkpoint c;
  c.kind = "baseline";
  c.config = cfg_.to_json();
  c.flow_norm = flow_norm;
  c.link_norm = link_norm;
  c.output_scale = output_scale;
  store_params_into(params_, c);
  return c;
}

BaselineModel BaselineModel::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "baseline")
    throw std::runtime_error("checkpoint kind mismatch: expected baseline, got " + ckpt.kind);
  Rng rng(0);
  BaselineModel m(BaselineConfig::from_json(ckpt.config), rng);
  load_params_from(ckpt, m.params_);
  m.flow_norm = ckpt.flow_norm;
  m.link_norm = ckpt.link_norm;
  m.output_scale = ckpt.output_scale;
  return m;
}

}  // namespace netkan
