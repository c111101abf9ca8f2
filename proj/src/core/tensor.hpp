#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cantm::core {

// Dense row-major matrix of doubles. Row vectors (1 x n) double as vectors.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int r, int c, double fill = 0.0)
      : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, fill) {}

  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const {
    return v[static_cast<std::size_t>(r) * cols + c];
  }
  int size() const { return rows * cols; }
  bool same_shape(const Tensor& o) const {
    return rows == o.rows && cols == o.cols;
  }
  bool finite() const;
};

// Reverse-mode autodiff tape. Nodes are created in topological order; a
// backward pass walks them in reverse. Leaves created with input() are
// constants (no gradient); leaves created with param() collect gradients
// under a name so the optimizer can find them.
class Tape {
 public:
  using Ref = int;

  Ref input(Tensor t);
  Ref param(const std::string& name, const Tensor& t);

  // c = a b, shapes (m,k)(k,n).
  Ref matmul(Ref a, Ref b);
  // c = a b^T, shapes (m,k)(n,k).
  Ref matmul_nt(Ref a, Ref b);
  Ref add(Ref a, Ref b);
  // Adds a 1 x n row vector to every row of a.
  Ref add_rowvec(Ref a, Ref v);
  Ref mul(Ref a, Ref b);
  Ref scale(Ref a, double s);
  Ref tanh_(Ref a);
  Ref exp_(Ref a);
  Ref gelu(Ref a);
  Ref row_softmax(Ref a);
  Ref row_layernorm(Ref a, Ref gamma, Ref beta, double eps = 1e-12);
  Ref concat_cols(Ref a, Ref b);
  Ref slice_cols(Ref a, int c0, int c1);
  Ref pick_row(Ref a, int r);
  Ref sum_all(Ref a);
  // sum_w weights[w] * log(a[w] + eps); weights is a constant.
  Ref weighted_log_sum(const Tensor& weights, Ref a, double eps);
  // -log(probs[label] + eps) for a 1 x C probability row.
  Ref cross_entropy_index(Ref probs, int label, double eps);
  // KL(N(mu, exp(logsigma)^2) || N(0, I)) in closed form; 1 x 1 output.
  Ref kl_std_normal(Ref mu, Ref logsigma);

  const Tensor& value(Ref r) const { return nodes_[r].val; }
  const Tensor& grad(Ref r) const { return nodes_[r].grad; }
  bool requires_grad(Ref r) const { return nodes_[r].rg; }
  const std::string& param_name(Ref r) const { return nodes_[r].name; }
  const std::vector<Ref>& params() const { return param_refs_; }

  // root must be 1 x 1; seeds its gradient with 1 and propagates.
  void backward(Ref root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor val;
    Tensor grad;
    bool rg = false;
    std::string name;
    std::function<void(Tape&)> back;
  };

  Ref make(Tensor val, bool rg, std::function<void(Tape&)> back);
  Tensor& grad_mut(Ref r) { return nodes_[r].grad; }

  std::vector<Node> nodes_;
  std::vector<Ref> param_refs_;
};

}  // namespace cantm::core
