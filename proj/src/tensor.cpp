#include "netkan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

namespace netkan {

namespace {

thread_local bool g_grad_enabled = true;

void ensure_grad(TensorNode* n) {
  if (n->g.size() != n->x.size()) n->g.assign(n->x.size(), 0.0);
}

std::shared_ptr<TensorNode> make_node(int r, int c) {
  auto n = std::make_shared<TensorNode>();
  n->r = r;
  n->c = c;
  n->x.assign(static_cast<size_t>(r) * c, 0.0);
  return n;
}

bool record(std::initializer_list<const Tensor*> parents) {
  if (!g_grad_enabled) return false;
  for (const Tensor* p : parents)
    if (p->node()->rg) return true;
  return false;
}

void check(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

double sigmoid_stable(double x) {
  if (x >= 0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_stable(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "silu") return Activation::Silu;
  if (name == "softplus") return Activation::Softplus;
  if (name == "tanh") return Activation::Tanh;
  if (name == "leaky_relu") return Activation::LeakyRelu;
  if (name == "sigmoid") return Activation::Sigmoid;
  throw std::invalid_argument("unknown activation: " + name);
}

std::string activation_to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Silu: return "silu";
    case Activation::Softplus: return "softplus";
    case Activation::Tanh: return "tanh";
    case Activation::LeakyRelu: return "leaky_relu";
    case Activation::Sigmoid: return "sigmoid";
  }
  throw std::logic_error("bad activation tag");
}

Tensor wrap(std::shared_ptr<TensorNode> n) { return Tensor(std::move(n)); }

Tensor Tensor::zeros(int r, int c, bool requires_grad) {
  auto n = make_node(r, c);
  n->rg = requires_grad;
  return wrap(n);
}

Tensor Tensor::full(int r, int c, double v, bool requires_grad) {
  auto n = make_node(r, c);
  std::fill(n->x.begin(), n->x.end(), v);
  n->rg = requires_grad;
  return wrap(n);
}

Tensor Tensor::from(int r, int c, std::vector<double> data, bool requires_grad) {
  check(static_cast<size_t>(r) * c == data.size(), "Tensor::from: data length != r*c");
  auto n = std::make_shared<TensorNode>();
  n->r = r;
  n->c = c;
  n->x = std::move(data);
  n->rg = requires_grad;
  return wrap(n);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from(1, 1, {v}, requires_grad);
}

Tensor Tensor::randn(int r, int c, Rng& rng, double sd, bool requires_grad) {
  auto n = make_node(r, c);
  for (auto& v : n->x) v = rng.normal(0.0, sd);
  n->rg = requires_grad;
  return wrap(n);
}

double Tensor::item() const {
  check(size() == 1, "item() on non-scalar tensor");
  return node_->x[0];
}

const std::vector<double>& Tensor::grad() const {
  ensure_grad(node_.get());
  return node_->g;
}

Tensor Tensor::clone() const {
  auto n = make_node(rows(), cols());
  n->x = node_->x;
  n->rg = node_->rg;
  return wrap(n);
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  auto out = make_node(a.rows(), a.cols());
  for (size_t i = 0; i < out->x.size(); ++i) out->x[i] = a.data()[i] + b.data()[i];
  if (record({&a, &b})) {
    out->rg = true;
    auto pa = a.node(), pb = b.node();
    out->parents = {pa, pb};
    TensorNode* o = out.get();
    out->back = [o, pa, pb]() {
      if (pa->rg) {
        ensure_grad(pa.get());
        for (size_t i = 0; i < o->g.size(); ++i) pa->g[i] += o->g[i];
      }
      if (pb->rg) {
        ensure_grad(pb.get());
        for (size_t i = 0; i < o->g.size(); ++i) pb->g[i] += o->g[i];
      }
    };
  }
  return wrap(out);
}

Tensor add_rowvec(const Tensor& a, const Tensor& bias) {
  check(bias.rows() == 1 && bias.cols() == a.cols(), "add_rowvec: bias shape mismatch");
  auto out = make_node(a.rows(), a.cols());
  int c = a.cols();
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < c; ++j)
      out->x[static_cast<size_t>(i) * c + j] = a.at(i, j) + bias.at(0, j);
  if (record({&a, &bias})) {
    out->rg = true;
    auto pa = a.node(), pb = bias.node();
    out->parents = {pa, pb};
    TensorNode* o = out.get();
    out->back = [o, pa, pb, c]() {
      if (pa->rg) {
        ensure_grad(pa.get());
        for (size_t i = 0; i < o->g.size(); ++i) pa->g[i] += o->g[i];
      }
      if (pb->rg) {
        ensure_grad(pb.get());
        for (int i = 0; i < o->r; ++i)
          for (int j = 0; j < c; ++j) pb->g[j] += o->g[static_cast<size_t>(i) * c + j];
      }
    };
  }
  return wrap(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  auto out = make_node(a.rows(), a.cols());
  for (size_t i = 0; i < out->x.size(); ++i) out->x[i] = a.data()[i] - b.data()[i];
  if (record({&a, &b})) {
    out->rg = true;
    auto pa = a.node(), pb = b.node();
    out->parents = {pa, pb};
    TensorNode* o = out.get();
    out->back = [o, pa, pb]() {
      if (pa->rg) {
        ensure_grad(pa.get());
        for (size_t i = 0; i < o->g.size(); ++i) pa->g[i] += o->g[i];
      }
      if (pb->rg) {
        ensure_grad(pb.get());
        for (size_t i = 0; i < o->g.size(); ++i) pb->g[i] -= o->g[i];
      }
    };
  }
  return wrap(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  auto out = make_node(a.rows(), a.cols());
  for (size_t i = 0; i < out->x.size(); ++i) out->x[i] = a.data()[i] * b.data()[i];
  if (record({&a, &b})) {
    out->rg = true;
    auto pa = a.node(), pb = b.node();
    out->parents = {pa, pb};
    TensorNode* o = out.get();
    out->back = [o, pa, pb]() {
      if (pa->rg) {
        ensure_grad(pa.get());
        for (size_t i = 0; i < o->g.size(); ++i) pa->g[i] += o->g[i] * pb->x[i];
      }
      if (pb->rg) {
        ensure_grad(pb.get());
        for (size_t i = 0; i < o->g.size(); ++i) pb->g[i] += o->g[i] * pa->x[i];
      }
    };
  }
  return wrap(out);
}

Tensor scale(const Tensor& a, double k) {
  auto out = make_node(a.rows(), a.cols());
  for (size_t i = 0; i < out->x.size(); ++i) out->x[i] = a.data()[i] * k;
  if (record({&a})) {
    out->rg = true;
    auto pa = a.node();
    out->parents = {pa};
    TensorNode* o = out.get();
    out->back = [o, pa, k]() {
      ensure_grad(pa.get());
      for (size_t i = 0; i < o->g.size(); ++i) pa->g[i] += o->g[i] * k;
    };
  }
  return wrap(out);
}

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  int am = trans_a ? a.cols() : a.rows();
  int ak = trans_a ? a.rows() : a.cols();
  int bk = trans_b ? b.cols() : b.rows();
  int bn = trans_b ? b.rows() : b.cols();
  check(ak == bk, "matmul: inner dimension mismatch");
  auto out = make_node(am, bn);
  auto ael = [&](int i, int k) { return trans_a ? a.at(k, i) : a.at(i, k); };
  auto bel = [&](int k, int j) { return trans_b ? b.at(j, k) : b.at(k, j); };
  for (int i = 0; i < am; ++i)
    for (int k = 0; k < ak; ++k) {
      double av = ael(i, k);
      if (av == 0.0) continue;
      for (int j = 0; j < bn; ++j) out->x[static_cast<size_t>(i) * bn + j] += av * bel(k, j);
    }
  if (record({&a, &b})) {
    out->rg = true;
    auto pa = a.node(), pb = b.node();
    out->parents = {pa, pb};
    TensorNode* o = out.get();
    out->back = [o, pa, pb, trans_a, trans_b, am, ak, bn]() {
      auto go = [&](int i, int j) { return o->g[static_cast<size_t>(i) * bn + j]; };
      if (pa->rg) {
        ensure_grad(pa.get());
        // dA[i,k] += sum_j gO[i,j] * B[k,j]
        for (int i = 0; i < am; ++i)
          for (int k = 0; k < ak; ++k) {
            double s = 0.0;
            for (int j = 0; j < bn; ++j) {
              double bv = trans_b ? pb->x[static_cast<size_t>(j) * pb->c + k]
                                  : pb->x[static_cast<size_t>(k) * pb->c + j];
              s += go(i, j) * bv;
            }
            if (trans_a)
              pa->g[static_cast<size_t>(k) * pa->c + i] += s;
            else
              pa->g[static_cast<size_t>(i) * pa->c + k] += s;
          }
      }
      if (pb->rg) {
        ensure_grad(pb.get());
        // dB[k,j] += sum_i A[i,k] * gO[i,j]
        for (int k = 0; k < ak; ++k)
          for (int j = 0; j < bn; ++j) {
            double s = 0.0;
            for (int i = 0; i < am; ++i) {
              double av = trans_a ? pa->x[static_cast<size_t>(k) * pa->c + i]
                                  : pa->x[static_cast<size_t>(i) * pa->c + k];
              s += av * go(i, j);
            }
            if (trans_b)
              pb->g[static_cast<size_t>(j) * pb->c + k] += s;
            else
              pb->g[static_cast<size_t>(k) * pb->c + j] += s;
          }
      }
    };
  }
  return wrap(out);
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  check(a.rows() == b.rows(), "concat_cols: row mismatch");
  int ca = a.cols(), cb = b.cols();
  auto out = make_node(a.rows(), ca + cb);
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < ca; ++j) out->x[static_cast<size_t>(i) * (ca + cb) + j] = a.at(i, j);
    for (int j = 0; j < cb; ++j) out->x[static_cast<size_t>(i) * (ca + cb) + ca + j] = b.at(i, j);
  }
  if (record({&a, &b})) {
    out->rg = true;
    auto pa = a.node(), pb = b.node();
    out->parents = {pa, pb};
    TensorNode* o = out.get();
    out->back = [o, pa, pb, ca, cb]() {
      for (int i = 0; i < o->r; ++i) {
        if (pa->rg) {
          ensure_grad(pa.get());
          for (int j = 0; j < ca; ++j)
            pa->g[static_cast<size_t>(i) * ca + j] += o->g[static_cast<size_t>(i) * (ca + cb) + j];
        }
        if (pb->rg) {
          ensure_grad(pb.get());
          for (int j = 0; j < cb; ++j)
            pb->g[static_cast<size_t>(i) * cb + j] +=
                o->g[static_cast<size_t>(i) * (ca + cb) + ca + j];
        }
      }
    };
  }
  return wrap(out);
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& idx) {
  int c = a.cols();
  for (int i : idx) check(i >= 0 && i < a.rows(), "gather_rows: index out of range");
  auto out = make_node(static_cast<int>(idx.size()), c);
  for (size_t i = 0; i < idx.size(); ++i)
    for (int j = 0; j < c; ++j) out->x[i * c + j] = a.at(idx[i], j);
  if (record({&a})) {
    out->rg = true;
    auto pa = a.node();
    out->parents = {pa};
    TensorNode* o = out.get();
    auto ids = idx;
    out->back = [o, pa, ids, c]() {
      ensure_grad(pa.get());
      for (size_t i = 0; i < ids.size(); ++i)
        for (int j = 0; j < c; ++j)
          pa->g[static_cast<size_t>(ids[i]) * c + j] += o->g[i * c + j];
    };
  }
  return wrap(out);
}

Tensor scatter_add_rows(const Tensor& a, const std::vector<int>& idx, int n_rows) {
  check(static_cast<int>(idx.size()) == a.rows(), "scatter_add_rows: index count != rows");
  int c = a.cols();
  for (int i : idx) check(i >= 0 && i < n_rows, "scatter_add_rows: index out of range");
  auto out = make_node(n_rows, c);
  for (size_t i = 0; i < idx.size(); ++i)
    for (int j = 0; j < c; ++j)
      out->x[static_cast<size_t>(idx[i]) * c + j] += a.data()[i * c + j];
  if (record({&a})) {
    out->rg = true;
    auto pa = a.node();
    out->parents = {pa};
    TensorNode* o = out.get();
    auto ids = idx;
    out->back = [o, pa, ids, c]() {
      ensure_grad(pa.get());
      for (size_t i = 0; i < ids.size(); ++i)
        for (int j = 0; j < c; ++j)
          pa->g[i * c + j] += o->g[static_cast<size_t>(ids[i]) * c + j];
    };
  }
  return wrap(out);
}

Tensor row_scale(const Tensor& a, const Tensor& s) {
  check(s.cols() == 1 && s.rows() == a.rows(), "row_scale: scale must be (n,1)");
  int c = a.cols();
  auto out = make_node(a.rows(), c);
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < c; ++j) out->x[static_cast<size_t>(i) * c + j] = a.at(i, j) * s.at(i, 0);
  if (record({&a, &s})) {
    out->rg = true;
    auto pa = a.node(), ps = s.node();
    out->parents = {pa, ps};
    TensorNode* o = out.get();
    out->back = [o, pa, ps, c]() {
      if (pa->rg) {
        ensure_grad(pa.get());
        for (int i = 0; i < o->r; ++i)
          for (int j = 0; j < c; ++j)
            pa->g[static_cast<size_t>(i) * c + j] +=
                o->g[static_cast<size_t>(i) * c + j] * ps->x[i];
      }
      if (ps->rg) {
        ensure_grad(ps.get());
        for (int i = 0; i < o->r; ++i) {
          double sum = 0.0;
          for (int j = 0; j < c; ++j)
            sum += o->g[static_cast<size_t>(i) * c + j] * pa->x[static_cast<size_t>(i) * c + j];
          ps->g[i] += sum;
        }
      }
    };
  }
  return wrap(out);
}

Tensor repeat_interleave_cols(const Tensor& a, int m) {
  check(m >= 1, "repeat_interleave_cols: m >= 1");
  int c = a.cols();
  auto out = make_node(a.rows(), c * m);
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < c; ++j)
      for (int t = 0; t < m; ++t)
        out->x[(static_cast<size_t>(i) * c + j) * m + t] = a.at(i, j);
  if (record({&a})) {
    out->rg = true;
    auto pa = a.node();
    out->parents = {pa};
    TensorNode* o = out.get();
    out->back = [o, pa, c, m]() {
      ensure_grad(pa.get());
      for (int i = 0; i < o->r; ++i)
        for (int j = 0; j < c; ++j) {
          double s = 0.0;
          for (int t = 0; t < m; ++t) s += o->g[(static_cast<size_t>(i) * c + j) * m + t];
          pa->g[static_cast<size_t>(i) * c + j] += s;
        }
    };
  }
  return wrap(out);
}

Tensor activation(const Tensor& a, Activation kind) {
  auto out = make_node(a.rows(), a.cols());
  const double slope = 0.01;  // leaky relu
  for (size_t i = 0; i < out->x.size(); ++i) {
    double x = a.data()[i];
    switch (kind) {
      case Activation::Relu: out->x[i] = x > 0 ? x : 0.0; break;
      case Activation::Silu: out->x[i] = x * sigmoid_stable(x); break;
      case Activation::Softplus: out->x[i] = softplus_stable(x); break;
      case Activation::Tanh: out->x[i] = std::tanh(x); break;
      case Activation::LeakyRelu: out->x[i] = x > 0 ? x : slope * x; break;
      case Activation::Sigmoid: out->x[i] = sigmoid_stable(x); break;
    }
  }
  if (record({&a})) {
    out->rg = true;
    auto pa = a.node();
    out->parents = {pa};
    TensorNode* o = out.get();
    out->back = [o, pa, kind, slope]() {
      ensure_grad(pa.get());
      for (size_t i = 0; i < o->g.size(); ++i) {
        double x = pa->x[i];
        double d = 0.0;
        switch (kind) {
          case Activation::Relu: d = x > 0 ? 1.0 : 0.0; break;
          case Activation::Silu: {
            double s = sigmoid_stable(x);
            d = s * (1.0 + x * (1.0 - s));
            break;
          }
          case Activation::Softplus: d = sigmoid_stable(x); break;
          case Activation::Tanh: {
            double t = std::tanh(x);
            d = 1.0 - t * t;
            break;
          }
          case Activation::LeakyRelu: d = x > 0 ? 1.0 : slope; break;
          case Activation::Sigmoid: {
            double s = sigmoid_stable(x);
            d = s * (1.0 - s);
            break;
          }
        }
        pa->g[i] += o->g[i] * d;
      }
    };
  }
  return wrap(out);
}

Tensor sum_all(const Tensor& a) {
  auto out = make_node(1, 1);
  double s = 0.0;
  for (double v : a.data()) s += v;
  out->x[0] = s;
  if (record({&a})) {
    out->rg = true;
    auto pa = a.node();
    out->parents = {pa};
    TensorNode* o = out.get();
    out->back = [o, pa]() {
      ensure_grad(pa.get());
      for (auto& gv : pa->g) gv += o->g[0];
    };
  }
  return wrap(out);
}

Tensor mean_all(const Tensor& a) { return scale(sum_all(a), 1.0 / a.size()); }

Tensor mse_loss(const Tensor& pred, const std::vector<double>& target) {
  check(static_cast<size_t>(pred.size()) == target.size(), "mse_loss: length mismatch");
  check(!target.empty(), "mse_loss: empty target");
  auto out = make_node(1, 1);
  double s = 0.0;
  for (size_t i = 0; i < target.size(); ++i) {
    double d = pred.data()[i] - target[i];
    s += d * d;
  }
  out->x[0] = s / static_cast<double>(target.size());
  if (record({&pred})) {
    out->rg = true;
    auto pa = pred.node();
    out->parents = {pa};
    TensorNode* o = out.get();
    auto tgt = target;
    out->back = [o, pa, tgt]() {
      ensure_grad(pa.get());
      double inv = 2.0 / static_cast<double>(tgt.size());
      for (size_t i = 0; i < tgt.size(); ++i)
        pa->g[i] += o->g[0] * inv * (pa->x[i] - tgt[i]);
    };
  }
  return wrap(out);
}

Tensor dropout(const Tensor& a, double p, bool training, Rng& rng) {
  check(p >= 0.0 && p < 1.0, "dropout: p must be in [0,1)");
  if (!training || p == 0.0) return a;
  auto out = make_node(a.rows(), a.cols());
  std::vector<double> mask(a.data().size());
  double inv_keep = 1.0 / (1.0 - p);
  for (size_t i = 0; i < mask.size(); ++i) mask[i] = rng.bernoulli(p) ? 0.0 : inv_keep;
  for (size_t i = 0; i < mask.size(); ++i) out->x[i] = a.data()[i] * mask[i];
  if (record({&a})) {
    out->rg = true;
    auto pa = a.node();
    out->parents = {pa};
    TensorNode* o = out.get();
    out->back = [o, pa, mask]() {
      ensure_grad(pa.get());
      for (size_t i = 0; i < mask.size(); ++i) pa->g[i] += o->g[i] * mask[i];
    };
  }
  return wrap(out);
}

Tensor segmented_softmax(const Tensor& scores, const std::vector<int>& segment_ids) {
  check(scores.cols() == 1, "segmented_softmax: scores must be (n,1)");
  check(static_cast<size_t>(scores.rows()) == segment_ids.size(),
        "segmented_softmax: ids length mismatch");
  int n = scores.rows();
  // segment id -> member row indices, in input order
  std::unordered_map<int, std::vector<int>> groups;
  for (int i = 0; i < n; ++i) groups[segment_ids[i]].push_back(i);

  auto out = make_node(n, 1);
  for (auto& [id, rows] : groups) {
    double mx = -1e300;
    for (int i : rows) mx = std::max(mx, scores.data()[i]);
    double denom = 0.0;
    for (int i : rows) denom += std::exp(scores.data()[i] - mx);
    for (int i : rows) out->x[i] = std::exp(scores.data()[i] - mx) / denom;
  }
  if (record({&scores})) {
    out->rg = true;
    auto pa = scores.node();
    out->parents = {pa};
    TensorNode* o = out.get();
    out->back = [o, pa, groups]() {
      ensure_grad(pa.get());
      for (const auto& [id, rows] : groups) {
        double dot = 0.0;
        for (int i : rows) dot += o->x[i] * o->g[i];
        for (int i : rows) pa->g[i] += o->x[i] * (o->g[i] - dot);
      }
    };
  }
  return wrap(out);
}

GruParams gru_init(int input_dim, int hidden_dim, Rng& rng) {
  double sx = 1.0 / std::sqrt(static_cast<double>(input_dim));
  double sh = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  GruParams p;
  p.wz = Tensor::randn(hidden_dim, input_dim, rng, sx, true);
  p.uz = Tensor::randn(hidden_dim, hidden_dim, rng, sh, true);
  p.bz = Tensor::zeros(1, hidden_dim, true);
  p.wr = Tensor::randn(hidden_dim, input_dim, rng, sx, true);
  p.ur = Tensor::randn(hidden_dim, hidden_dim, rng, sh, true);
  p.br = Tensor::zeros(1, hidden_dim, true);
  p.wc = Tensor::randn(hidden_dim, input_dim, rng, sx, true);
  p.uc = Tensor::randn(hidden_dim, hidden_dim, rng, sh, true);
  p.bc = Tensor::zeros(1, hidden_dim, true);
  return p;
}

Tensor gru_cell(const Tensor& h_prev, const Tensor& x, const GruParams& p) {
  check(h_prev.cols() == p.uz.cols(), "gru_cell: hidden width mismatch");
  check(x.cols() == p.wz.cols(), "gru_cell: input width mismatch");
  check(h_prev.rows() == x.rows(), "gru_cell: batch mismatch");
  Tensor z = activation(add_rowvec(add(matmul(x, p.wz, false, true),
                                       matmul(h_prev, p.uz, false, true)), p.bz),
                        Activation::Sigmoid);
  Tensor r = activation(add_rowvec(add(matmul(x, p.wr, false, true),
                                       matmul(h_prev, p.ur, false, true)), p.br),
                        Activation::Sigmoid);
  Tensor c = activation(add_rowvec(add(matmul(x, p.wc, false, true),
                                       matmul(mul(r, h_prev), p.uc, false, true)), p.bc),
                        Activation::Tanh);
  Tensor one_minus_z = sub(Tensor::full(z.rows(), z.cols(), 1.0), z);
  return add(mul(one_minus_z, h_prev), mul(z, c));
}

void backward(const Tensor& loss) {
  if (loss.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
  // reverse topological order over the recorded graph
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.push_back({loss.node().get(), 0});
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, child] = stack.back();
    if (child < node->parents.size()) {
      TensorNode* p = node->parents[child++].get();
      if (!visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (TensorNode* n : visited) ensure_grad(n);
  loss.node()->g[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->back) (*it)->back();
}

Tensor ParamSet::add(const std::string& name, Tensor t) {
  items.emplace_back(name, t);
  return t;
}

Tensor* ParamSet::find(const std::string& name) {
  for (auto& [n, t] : items)
    if (n == name) return &t;
  return nullptr;
}

const Tensor* ParamSet::find(const std::string& name) const {
  for (auto& [n, t] : items)
    if (n == name) return &t;
  return nullptr;
}

long long ParamSet::scalar_count() const {
  long long s = 0;
  for (auto& [n, t] : items) s += t.size();
  return s;
}

void ParamSet::zero_grad() {
  for (auto& [n, t] : items) {
    auto node = t.node();
    node->g.assign(node->x.size(), 0.0);
  }
}

void AdamOptimizer::step(ParamSet& params) {
  if (m.empty()) {
    m.resize(params.items.size());
    v.resize(params.items.size());
    for (size_t i = 0; i < params.items.size(); ++i) {
      m[i].assign(params.items[i].second.data().size(), 0.0);
      v[i].assign(params.items[i].second.data().size(), 0.0);
    }
  }
  if (m.size() != params.items.size()) throw std::invalid_argument("adam: parameter set changed");
  ++step_count;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
  for (size_t i = 0; i < params.items.size(); ++i) {
    auto node = params.items[i].second.node();
    if (m[i].size() != node->x.size()) throw std::invalid_argument("adam: shape mismatch");
    ensure_grad(node.get());
    for (size_t j = 0; j < node->x.size(); ++j) {
      double g = node->g[j];
      m[i][j] = beta1 * m[i][j] + (1.0 - beta1) * g;
      v[i][j] = beta2 * v[i][j] + (1.0 - beta2) * g * g;
      double mhat = m[i][j] / bc1;
      double vhat = v[i][j] / bc2;
      node->x[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

}  // namespace netkan
