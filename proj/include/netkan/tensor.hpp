#pragma once

#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "netkan/rng.hpp"

namespace netkan {

enum class Activation { Relu, Silu, Softplus, Tanh, LeakyRelu, Sigmoid };

Activation activation_from_string(const std::string& name);
std::string activation_to_string(Activation a);

// Overflow-safe scalar activations shared by the taped ops and the plain
// serial reference paths (both must evaluate the same expressions).
double sigmoid_stable(double x);
double softplus_stable(double x);

// All tensors are 2-D (rows x cols), row-major, double precision.
// Scalars are (1,1), column vectors (n,1), row vectors / biases (1,n).
struct TensorNode {
  int r = 0, c = 0;
  std::vector<double> x;  // values
  std::vector<double> g;  // gradient, sized lazily by backward()
  bool rg = false;        // requires grad
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void()> back;  // accumulates into parents' g
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(int r, int c, bool requires_grad = false);
  static Tensor full(int r, int c, double v, bool requires_grad = false);
  static Tensor from(int r, int c, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor randn(int r, int c, Rng& rng, double sd, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  int rows() const { return node_->r; }
  int cols() const { return node_->c; }
  int size() const { return node_->r * node_->c; }
  bool requires_grad() const { return node_->rg; }

  double& at(int i, int j) { return node_->x[static_cast<size_t>(i) * node_->c + j]; }
  double at(int i, int j) const { return node_->x[static_cast<size_t>(i) * node_->c + j]; }
  double item() const;

  std::vector<double>& data() { return node_->x; }
  const std::vector<double>& data() const { return node_->x; }
  const std::vector<double>& grad() const;

  std::shared_ptr<TensorNode> node() const { return node_; }

  // Detached deep copy (no tape history).
  Tensor clone() const;

 private:
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}
  std::shared_ptr<TensorNode> node_;
  friend Tensor wrap(std::shared_ptr<TensorNode>);
};

Tensor wrap(std::shared_ptr<TensorNode> n);

// Scoped guard disabling tape recording (forward-only evaluation).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

// ---- ops ----
Tensor add(const Tensor& a, const Tensor& b);            // same shape
Tensor add_rowvec(const Tensor& a, const Tensor& bias);  // bias is (1,c)
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double k);
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor gather_rows(const Tensor& a, const std::vector<int>& idx);
Tensor scatter_add_rows(const Tensor& a, const std::vector<int>& idx, int n_rows);
Tensor row_scale(const Tensor& a, const Tensor& s);  // s is (n,1)
Tensor repeat_interleave_cols(const Tensor& a, int m);
Tensor activation(const Tensor& a, Activation kind);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor mse_loss(const Tensor& pred, const std::vector<double>& target);
Tensor dropout(const Tensor& a, double p, bool training, Rng& rng);

// Softmax over segments: scores is (n,1), segment_ids[i] names the segment of
// row i (ids arbitrary, segments need not be contiguous). Within each segment
// the outputs are positive and sum to 1.
Tensor segmented_softmax(const Tensor& scores, const std::vector<int>& segment_ids);

struct GruParams {
  Tensor wz, uz, bz;  // update gate
  Tensor wr, ur, br;  // reset gate
  Tensor wc, uc, bc;  // candidate
};

GruParams gru_init(int input_dim, int hidden_dim, Rng& rng);
// h_prev: (n, hidden), x: (n, input) -> (n, hidden)
Tensor gru_cell(const Tensor& h_prev, const Tensor& x, const GruParams& p);

// Reverse-mode sweep from a scalar loss. Gradients accumulate into each
// reachable node's g buffer; parameters not on the tape keep zero grads.
void backward(const Tensor& loss);

// Named parameter collection shared by models and the optimizer.
struct ParamSet {
  std::vector<std::pair<std::string, Tensor>> items;

  Tensor add(const std::string& name, Tensor t);
  Tensor* find(const std::string& name);
  const Tensor* find(const std::string& name) const;
  long long scalar_count() const;
  void zero_grad();
};

struct AdamOptimizer {
  double lr = 0.002, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long long step_count = 0;
  std::vector<std::vector<double>> m, v;

  explicit AdamOptimizer(double learning_rate = 0.002) : lr(learning_rate) {}
  void step(ParamSet& params);
};

}  // namespace netkan
