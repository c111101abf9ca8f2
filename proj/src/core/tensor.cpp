#include "core/tensor.hpp"

#include <cmath>

namespace cantm::core {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

bool Tensor::finite() const {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

Tape::Ref Tape::make(Tensor val, bool rg, std::function<void(Tape&)> back) {
  Node n;
  n.val = std::move(val);
  n.rg = rg;
  n.back = std::move(back);
  if (rg) n.grad = Tensor(n.val.rows, n.val.cols, 0.0);
  nodes_.push_back(std::move(n));
  return static_cast<Ref>(nodes_.size()) - 1;
}

Tape::Ref Tape::input(Tensor t) { return make(std::move(t), false, nullptr); }

Tape::Ref Tape::param(const std::string& name, const Tensor& t) {
  Ref r = make(t, true, nullptr);
  nodes_[r].name = name;
  param_refs_.push_back(r);
  return r;
}

Tape::Ref Tape::matmul(Ref a, Ref b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.cols != B.rows) throw std::runtime_error("matmul: shape mismatch");
  Tensor C(A.rows, B.cols, 0.0);
  for (int i = 0; i < A.rows; ++i)
    for (int k = 0; k < A.cols; ++k) {
      const double aik = A.at(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < B.cols; ++j) C.at(i, j) += aik * B.at(k, j);
    }
  bool rg = requires_grad(a) || requires_grad(b);
  Ref c = make(std::move(C), rg, nullptr);
  if (rg) {
    nodes_[c].back = [c, a, b](Tape& t) {
      const Tensor& G = t.grad(c);
      const Tensor& A = t.value(a);
      const Tensor& B = t.value(b);
      if (t.requires_grad(a)) {
        Tensor& dA = t.grad_mut(a);
        for (int i = 0; i < A.rows; ++i)
          for (int k = 0; k < A.cols; ++k) {
            double s = 0.0;
            for (int j = 0; j < B.cols; ++j) s += G.at(i, j) * B.at(k, j);
            dA.at(i, k) += s;
          }
      }
      if (t.requires_grad(b)) {
        Tensor& dB = t.grad_mut(b);
        for (int k = 0; k < A.cols; ++k)
          for (int j = 0; j < B.cols; ++j) {
            double s = 0.0;
            for (int i = 0; i < A.rows; ++i) s += A.at(i, k) * G.at(i, j);
            dB.at(k, j) += s;
          }
      }
    };
  }
  return c;
}

Tape::Ref Tape::matmul_nt(Ref a, Ref b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.cols != B.cols) throw std::runtime_error("matmul_nt: shape mismatch");
  Tensor C(A.rows, B.rows, 0.0);
  for (int i = 0; i < A.rows; ++i)
    for (int j = 0; j < B.rows; ++j) {
      double s = 0.0;
      for (int k = 0; k < A.cols; ++k) s += A.at(i, k) * B.at(j, k);
      C.at(i, j) = s;
    }
  bool rg = requires_grad(a) || requires_grad(b);
  Ref c = make(std::move(C), rg, nullptr);
  if (rg) {
    nodes_[c].back = [c, a, b](Tape& t) {
      const Tensor& G = t.grad(c);  // (m, n)
      const Tensor& A = t.value(a);  // (m, k)
      const Tensor& B = t.value(b);  // (n, k)
      if (t.requires_grad(a)) {
        Tensor& dA = t.grad_mut(a);
        for (int i = 0; i < A.rows; ++i)
          for (int k = 0; k < A.cols; ++k) {
            double s = 0.0;
            for (int j = 0; j < B.rows; ++j) s += G.at(i, j) * B.at(j, k);
            dA.at(i, k) += s;
          }
      }
      if (t.requires_grad(b)) {
        Tensor& dB = t.grad_mut(b);
        for (int j = 0; j < B.rows; ++j)
          for (int k = 0; k < B.cols; ++k) {
            double s = 0.0;
            for (int i = 0; i < A.rows; ++i) s += G.at(i, j) * A.at(i, k);
            dB.at(j, k) += s;
          }
      }
    };
  }
  return c;
}

Tape::Ref Tape::add(Ref a, Ref b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (!A.same_shape(B)) throw std::runtime_error("add: shape mismatch");
  Tensor C = A;
  for (int i = 0; i < C.size(); ++i) C.v[i] += B.v[i];
  bool rg = requires_grad(a) || requires_grad(b);
  Ref c = make(std::move(C), rg, nullptr);
  if (rg) {
    nodes_[c].back = [c, a, b](Tape& t) {
      const Tensor& G = t.grad(c);
      if (t.requires_grad(a)) {
        Tensor& dA = t.grad_mut(a);
        for (int i = 0; i < G.size(); ++i) dA.v[i] += G.v[i];
      }
      if (t.requires_grad(b)) {
        Tensor& dB = t.grad_mut(b);
        for (int i = 0; i < G.size(); ++i) dB.v[i] += G.v[i];
      }
    };
  }
  return c;
}

Tape::Ref Tape::add_rowvec(Ref a, Ref v) {
  const Tensor& A = value(a);
  const Tensor& V = value(v);
  if (V.rows != 1 || V.cols != A.cols)
    throw std::runtime_error("add_rowvec: shape mismatch");
  Tensor C = A;
  for (int i = 0; i < A.rows; ++i)
    for (int j = 0; j < A.cols; ++j) C.at(i, j) += V.at(0, j);
  bool rg = requires_grad(a) || requires_grad(v);
  Ref c = make(std::move(C), rg, nullptr);
  if (rg) {
    nodes_[c].back = [c, a, v](Tape& t) {
      const Tensor& G = t.grad(c);
      if (t.requires_grad(a)) {
        Tensor& dA = t.grad_mut(a);
        for (int i = 0; i < G.size(); ++i) dA.v[i] += G.v[i];
      }
      if (t.requires_grad(v)) {
        Tensor& dV = t.grad_mut(v);
        for (int i = 0; i < G.rows; ++i)
          for (int j = 0; j < G.cols; ++j) dV.at(0, j) += G.at(i, j);
      }
    };
  }
  return c;
}

Tape::Ref Tape::mul(Ref a, Ref b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (!A.same_shape(B)) throw std::runtime_error("mul: shape mismatch");
  Tensor C = A;
  for (int i = 0; i < C.size(); ++i) C.v[i] *= B.v[i];
  bool rg = requires_grad(a) || requires_grad(b);
  Ref c = make(std::move(C), rg, nullptr);
  if (rg) {
    nodes_[c].back = [c, a, b](Tape& t) {
      const Tensor& G = t.grad(c);
      const Tensor& A = t.value(a);
      const Tensor& B = t.value(b);
      if (t.requires_grad(a)) {
        Tensor& dA = t.grad_mut(a);
        for (int i = 0; i < G.size(); ++i) dA.v[i] += G.v[i] * B.v[i];
      }
      if (t.requires_grad(b)) {
        Tensor& dB = t.grad_mut(b);
        for (int i = 0; i < G.size(); ++i) dB.v[i] += G.v[i] * A.v[i];
      }
    };
  }
  return c;
}

Tape::Ref Tape::scale(Ref a, double s) {
  Tensor C = value(a);
  for (double& x : C.v) x *= s;
  bool rg = requires_grad(a);
  Ref c = make(std::move(C), rg, nullptr);
  if (rg) {
    nodes_[c].back = [c, a, s](Tape& t) {
      const Tensor& G = t.grad(c);
      Tensor& dA = t.grad_mut(a);
      for (int i = 0; i < G.size(); ++i) dA.v[i] += s * G.v[i];
    };
  }
  return c;
}

Tape::Ref Tape::tanh_(Ref a) {
  Tensor C = value(a);
  for (double& x : C.v) x = std::tanh(x);
  bool rg = requires_grad(a);
  Ref c = make(std::move(C), rg, nullptr);
  if (rg) {
    nodes_[c].back = [c, a](Tape& t) {
      const Tensor& G = t.grad(c);
      const Tensor& Y = t.value(c);
      Tensor& dA = t.grad_mut(a);
      for (int i = 0; i < G.size(); ++i)
        dA.v[i] += G.v[i] * (1.0 - Y.v[i] * Y.v[i]);
    };
  }
  return c;
}

Tape::Ref Tape::exp_(Ref a) {
  Tensor C = value(a);
  for (double& x : C.v) x = std::exp(x);
  bool rg = requires_grad(a);
  Ref c = make(std::move(C), rg, nullptr);
  if (rg) {
    nodes_[c].back = [c, a](Tape& t) {
      const Tensor& G = t.grad(c);
      const Tensor& Y = t.value(c);
      Tensor& dA = t.grad_mut(a);
      for (int i = 0; i < G.size(); ++i) dA.v[i] += G.v[i] * Y.v[i];
    };
  }
  return c;
}

Tape::Ref Tape::gelu(Ref a) {
  const Tensor& A = value(a);
  Tensor C(A.rows, A.cols);
  for (int i = 0; i < A.size(); ++i) {
    double x = A.v[i];
    C.v[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  bool rg = requires_grad(a);
  Ref c = make(std::move(C), rg, nullptr);
  if (rg) {
    nodes_[c].back = [c, a](Tape& t) {
      const Tensor& G = t.grad(c);
      const Tensor& X = t.value(a);
      Tensor& dA = t.grad_mut(a);
      for (int i = 0; i < G.size(); ++i) {
        double x = X.v[i];
        double phi = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        dA.v[i] += G.v[i] * (phi + x * pdf);
      }
    };
  }
  return c;
}

Tape::Ref Tape::row_softmax(Ref a) {
  Tensor C = value(a);
  for (int i = 0; i < C.rows; ++i) {
    double mx = C.at(i, 0);
    for (int j = 1; j < C.cols; ++j) mx = std::max(mx, C.at(i, j));
    double sum = 0.0;
    for (int j = 0; j < C.cols; ++j) {
      double e = std::exp(C.at(i, j) - mx);
      C.at(i, j) = e;
      sum += e;
    }
    for (int j = 0; j < C.cols; ++j) C.at(i, j) /= sum;
  }
  bool rg = requires_grad(a);
  Ref c = make(std::move(C), rg, nullptr);
  if (rg) {
    nodes_[c].back = [c, a](Tape& t) {
      const Tensor& G = t.grad(c);
      const Tensor& P = t.value(c);
      Tensor& dA = t.grad_mut(a);
      for (int i = 0; i < P.rows; ++i) {
        double dot = 0.0;
        for (int j = 0; j < P.cols; ++j) dot += G.at(i, j) * P.at(i, j);
        for (int j = 0; j < P.cols; ++j)
          dA.at(i, j) += P.at(i, j) * (G.at(i, j) - dot);
      }
    };
  }
  return c;
}

Tape::Ref Tape::row_layernorm(Ref a, Ref gamma, Ref beta, double eps) {
  const Tensor& A = value(a);
  const Tensor& Gm = value(gamma);
  const Tensor& Bt = value(beta);
  if (Gm.cols != A.cols || Bt.cols != A.cols || Gm.rows != 1 || Bt.rows != 1)
    throw std::runtime_error("layernorm: shape mismatch");
  Tensor C(A.rows, A.cols);
  // Keep inv-std and normalized values for the backward pass.
  Tensor xhat(A.rows, A.cols);
  std::vector<double> inv_std(A.rows);
  for (int i = 0; i < A.rows; ++i) {
    double m = 0.0;
    for (int j = 0; j < A.cols; ++j) m += A.at(i, j);
    m /= A.cols;
    double var = 0.0;
    for (int j = 0; j < A.cols; ++j) {
      double d = A.at(i, j) - m;
      var += d * d;
    }
    var /= A.cols;
    double inv = 1.0 / std::sqrt(var + eps);
    inv_std[i] = inv;
    for (int j = 0; j < A.cols; ++j) {
      double xh = (A.at(i, j) - m) * inv;
      xhat.at(i, j) = xh;
      C.at(i, j) = xh * Gm.at(0, j) + Bt.at(0, j);
    }
  }
  bool rg = requires_grad(a) || requires_grad(gamma) || requires_grad(beta);
  Ref c = make(std::move(C), rg, nullptr);
  if (rg) {
    nodes_[c].back = [c, a, gamma, beta, xhat = std::move(xhat),
                      inv_std = std::move(inv_std)](Tape& t) {
      const Tensor& G = t.grad(c);
      const Tensor& Gm = t.value(gamma);
      const int n = G.cols;
      if (t.requires_grad(beta)) {
        Tensor& dB = t.grad_mut(beta);
        for (int i = 0; i < G.rows; ++i)
          for (int j = 0; j < n; ++j) dB.at(0, j) += G.at(i, j);
      }
      if (t.requires_grad(gamma)) {
        Tensor& dG = t.grad_mut(gamma);
        for (int i = 0; i < G.rows; ++i)
          for (int j = 0; j < n; ++j) dG.at(0, j) += G.at(i, j) * xhat.at(i, j);
      }
      if (t.requires_grad(a)) {
        Tensor& dA = t.grad_mut(a);
        for (int i = 0; i < G.rows; ++i) {
          double mean_dxhat = 0.0;
          double mean_dxhat_xhat = 0.0;
          for (int j = 0; j < n; ++j) {
            double dxh = G.at(i, j) * Gm.at(0, j);
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xhat.at(i, j);
          }
          mean_dxhat /= n;
          mean_dxhat_xhat /= n;
          for (int j = 0; j < n; ++j) {
            double dxh = G.at(i, j) * Gm.at(0, j);
            dA.at(i, j) += inv_std[i] * (dxh - mean_dxhat -
                                         xhat.at(i, j) * mean_dxhat_xhat);
          }
        }
      }
    };
  }
  return c;
}

Tape::Ref Tape::concat_cols(Ref a, Ref b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.rows != B.rows) throw std::runtime_error("concat_cols: row mismatch");
  Tensor C(A.rows, A.cols + B.cols);
  for (int i = 0; i < A.rows; ++i) {
    for (int j = 0; j < A.cols; ++j) C.at(i, j) = A.at(i, j);
    for (int j = 0; j < B.cols; ++j) C.at(i, A.cols + j) = B.at(i, j);
  }
  bool rg = requires_grad(a) || requires_grad(b);
  Ref c = make(std::move(C), rg, nullptr);
  if (rg) {
    const int ac = A.cols;
    nodes_[c].back = [c, a, b, ac](Tape& t) {
      const Tensor& G = t.grad(c);
      if (t.requires_grad(a)) {
        Tensor& dA = t.grad_mut(a);
        for (int i = 0; i < dA.rows; ++i)
          for (int j = 0; j < ac; ++j) dA.at(i, j) += G.at(i, j);
      }
      if (t.requires_grad(b)) {
        Tensor& dB = t.grad_mut(b);
        for (int i = 0; i < dB.rows; ++i)
          for (int j = 0; j < dB.cols; ++j) dB.at(i, j) += G.at(i, ac + j);
      }
    };
  }
  return c;
}

Tape::Ref Tape::slice_cols(Ref a, int c0, int c1) {
  const Tensor& A = value(a);
  if (c0 < 0 || c1 > A.cols || c0 >= c1)
    throw std::runtime_error("slice_cols: bad range");
  Tensor C(A.rows, c1 - c0);
  for (int i = 0; i < A.rows; ++i)
    for (int j = c0; j < c1; ++j) C.at(i, j - c0) = A.at(i, j);
  bool rg = requires_grad(a);
  Ref c = make(std::move(C), rg, nullptr);
  if (rg) {
    nodes_[c].back = [c, a, c0](Tape& t) {
      const Tensor& G = t.grad(c);
      Tensor& dA = t.grad_mut(a);
      for (int i = 0; i < G.rows; ++i)
        for (int j = 0; j < G.cols; ++j) dA.at(i, c0 + j) += G.at(i, j);
    };
  }
  return c;
}

Tape::Ref Tape::pick_row(Ref a, int r) {
  const Tensor& A = value(a);
  if (r < 0 || r >= A.rows) throw std::runtime_error("pick_row: bad index");
  Tensor C(1, A.cols);
  for (int j = 0; j < A.cols; ++j) C.at(0, j) = A.at(r, j);
  bool rg = requires_grad(a);
  Ref c = make(std::move(C), rg, nullptr);
  if (rg) {
    nodes_[c].back = [c, a, r](Tape& t) {
      const Tensor& G = t.grad(c);
      Tensor& dA = t.grad_mut(a);
      for (int j = 0; j < G.cols; ++j) dA.at(r, j) += G.at(0, j);
    };
  }
  return c;
}

Tape::Ref Tape::sum_all(Ref a) {
  const Tensor& A = value(a);
  double s = 0.0;
  for (double x : A.v) s += x;
  Tensor C(1, 1);
  C.v[0] = s;
  bool rg = requires_grad(a);
  Ref c = make(std::move(C), rg, nullptr);
  if (rg) {
    nodes_[c].back = [c, a](Tape& t) {
      double g = t.grad(c).v[0];
      Tensor& dA = t.grad_mut(a);
      for (double& x : dA.v) x += g;
    };
  }
  return c;
}

Tape::Ref Tape::weighted_log_sum(const Tensor& weights, Ref a, double eps) {
  const Tensor& A = value(a);
  if (!weights.same_shape(A))
    throw std::runtime_error("weighted_log_sum: shape mismatch");
  double s = 0.0;
  for (int i = 0; i < A.size(); ++i) {
    if (weights.v[i] != 0.0) s += weights.v[i] * std::log(A.v[i] + eps);
  }
  Tensor C(1, 1);
  C.v[0] = s;
  bool rg = requires_grad(a);
  Ref c = make(std::move(C), rg, nullptr);
  if (rg) {
    nodes_[c].back = [c, a, weights, eps](Tape& t) {
      double g = t.grad(c).v[0];
      const Tensor& A = t.value(a);
      Tensor& dA = t.grad_mut(a);
      for (int i = 0; i < A.size(); ++i) {
        if (weights.v[i] != 0.0) dA.v[i] += g * weights.v[i] / (A.v[i] + eps);
      }
    };
  }
  return c;
}

Tape::Ref Tape::cross_entropy_index(Ref probs, int label, double eps) {
  const Tensor& P = value(probs);
  if (P.rows != 1 || label < 0 || label >= P.cols)
    throw std::runtime_error("cross_entropy_index: bad label");
  Tensor C(1, 1);
  C.v[0] = -std::log(P.at(0, label) + eps);
  bool rg = requires_grad(probs);
  Ref c = make(std::move(C), rg, nullptr);
  if (rg) {
    nodes_[c].back = [c, probs, label, eps](Tape& t) {
      double g = t.grad(c).v[0];
      const Tensor& P = t.value(probs);
      t.grad_mut(probs).at(0, label) -= g / (P.at(0, label) + eps);
    };
  }
  return c;
}

Tape::Ref Tape::kl_std_normal(Ref mu, Ref logsigma) {
  const Tensor& M = value(mu);
  const Tensor& L = value(logsigma);
  if (!M.same_shape(L)) throw std::runtime_error("kl: shape mismatch");
  double s = 0.0;
  for (int i = 0; i < M.size(); ++i) {
    double sig2 = std::exp(2.0 * L.v[i]);
    s += 0.5 * (M.v[i] * M.v[i] + sig2 - 1.0 - 2.0 * L.v[i]);
  }
  Tensor C(1, 1);
  C.v[0] = s;
  bool rg = requires_grad(mu) || requires_grad(logsigma);
  Ref c = make(std::move(C), rg, nullptr);
  if (rg) {
    nodes_[c].back = [c, mu, logsigma](Tape& t) {
      double g = t.grad(c).v[0];
      const Tensor& M = t.value(mu);
      const Tensor& L = t.value(logsigma);
      if (t.requires_grad(mu)) {
        Tensor& dM = t.grad_mut(mu);
        for (int i = 0; i < M.size(); ++i) dM.v[i] += g * M.v[i];
      }
      if (t.requires_grad(logsigma)) {
        Tensor& dL = t.grad_mut(logsigma);
        for (int i = 0; i < L.size(); ++i)
          dL.v[i] += g * (std::exp(2.0 * L.v[i]) - 1.0);
      }
    };
  }
  return c;
}

void Tape::backward(Ref root) {
  if (value(root).size() != 1)
    throw std::runtime_error("backward: root must be scalar");
  if (!requires_grad(root)) return;
  grad_mut(root).v[0] = 1.0;
  for (Ref i = root; i >= 0; --i) {
    if (nodes_[i].rg && nodes_[i].back) nodes_[i].back(*this);
  }
}

}  // namespace cantm::core
