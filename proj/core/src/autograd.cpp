#include "sasreid/autograd.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace sasreid::ag {
namespace {

void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(what);
}

void accumulate(const std::shared_ptr<Node>& n, const Matrix& g) {
  if (n->requires_grad) n->grad_buffer() += g;
}

template <typename F, typename D>
Var unary(const Var& a, F f, D df) {
  Matrix out = a.value().unaryExpr(f);
  return make_op(std::move(out), {a}, [df](Node& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->grad_buffer().array() += self.grad.array() * p->value.unaryExpr(df).array();
  });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var constant(Matrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var leaf(Matrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Var(std::move(n));
}

Var make_op(Matrix value, std::vector<Var> parents, std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (auto& p : parents) {
    n->requires_grad = n->requires_grad || p.requires_grad();
    n->parents.push_back(p.node());
  }
  if (n->requires_grad) {
    n->backward = std::move(backward);
  } else {
    n->parents.clear();
  }
  return Var(std::move(n));
}

void backward(const Var& root) {
  require(root.rows() == 1 && root.cols() == 1, "backward: root must be 1 x 1");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents before children).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() != 0) n->backward(*n);
  }
}

Var matmul(const Var& a, const Var& b) {
  require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  Matrix out = a.value() * b.value();
  return make_op(std::move(out), {a, b}, [](Node& self) {
    auto& a = self.parents[0];
    auto& b = self.parents[1];
    if (a->requires_grad) a->grad_buffer().noalias() += self.grad * b->value.transpose();
    if (b->requires_grad) b->grad_buffer().noalias() += a->value.transpose() * self.grad;
  });
}

Var add(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  Matrix out = a.value() + b.value();
  return make_op(std::move(out), {a, b}, [](Node& self) {
    accumulate(self.parents[0], self.grad);
    accumulate(self.parents[1], self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  Matrix out = a.value() - b.value();
  return make_op(std::move(out), {a, b}, [](Node& self) {
    accumulate(self.parents[0], self.grad);
    if (self.parents[1]->requires_grad) self.parents[1]->grad_buffer() -= self.grad;
  });
}

Var mul(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  Matrix out = a.value().cwiseProduct(b.value());
  return make_op(std::move(out), {a, b}, [](Node& self) {
    auto& a = self.parents[0];
    auto& b = self.parents[1];
    if (a->requires_grad) a->grad_buffer() += self.grad.cwiseProduct(b->value);
    if (b->requires_grad) b->grad_buffer() += self.grad.cwiseProduct(a->value);
  });
}

Var scale(const Var& a, double s) {
  Matrix out = a.value() * s;
  return make_op(std::move(out), {a}, [s](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->grad_buffer() += self.grad * s;
  });
}

Var add_row(const Var& a, const Var& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row: shape mismatch");
  Matrix out = a.value().rowwise() + row.value().row(0);
  return make_op(std::move(out), {a, row}, [](Node& self) {
    accumulate(self.parents[0], self.grad);
    if (self.parents[1]->requires_grad) self.parents[1]->grad_buffer() += self.grad.colwise().sum();
  });
}

Var mul_row(const Var& a, const Var& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "mul_row: shape mismatch");
  Matrix out = a.value().array().rowwise() * row.value().row(0).array();
  return make_op(std::move(out), {a, row}, [](Node& self) {
    auto& a = self.parents[0];
    auto& r = self.parents[1];
    if (a->requires_grad) {
      a->grad_buffer().array() += self.grad.array().rowwise() * r->value.row(0).array();
    }
    if (r->requires_grad) {
      r->grad_buffer() += self.grad.cwiseProduct(a->value).colwise().sum();
    }
  });
}

Var affine(const Var& x, const Var& w, const Var& b) {
  require(x.cols() == w.rows(), "affine: input width mismatch");
  require(b.rows() == 1 && b.cols() == w.cols(), "affine: bias shape mismatch");
  Matrix out = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  return make_op(std::move(out), {x, w, b}, [](Node& self) {
    auto& x = self.parents[0];
    auto& w = self.parents[1];
    auto& b = self.parents[2];
    if (x->requires_grad) x->grad_buffer().noalias() += self.grad * w->value.transpose();
    if (w->requires_grad) w->grad_buffer().noalias() += x->value.transpose() * self.grad;
    if (b->requires_grad) b->grad_buffer() += self.grad.colwise().sum();
  });
}

Var add_tiled(const Var& a, const Var& table) {
  const Eigen::Index g = table.rows();
  require(table.cols() == a.cols() && g > 0 && a.rows() % g == 0, "add_tiled: shape mismatch");
  Matrix out = a.value();
  for (Eigen::Index blk = 0; blk < a.rows(); blk += g) out.middleRows(blk, g) += table.value();
  return make_op(std::move(out), {a, table}, [g](Node& self) {
    accumulate(self.parents[0], self.grad);
    auto& t = self.parents[1];
    if (!t->requires_grad) return;
    auto& tg = t->grad_buffer();
    for (Eigen::Index blk = 0; blk < self.grad.rows(); blk += g) tg += self.grad.middleRows(blk, g);
  });
}

Var sigmoid(const Var& a) {
  return unary(
      a, [](double x) { return stable_sigmoid(x); },
      [](double x) {
        const double s = stable_sigmoid(x);
        return s * (1.0 - s);
      });
}

Var tanh(const Var& a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double x) {
        const double t = std::tanh(x);
        return 1.0 - t * t;
      });
}

Var softplus(const Var& a) {
  return unary(
      a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x) { return stable_sigmoid(x); });
}

Var relu(const Var& a) {
  return unary(
      a, [](double x) { return x > 0 ? x : 0.0; }, [](double x) { return x > 0 ? 1.0 : 0.0; });
}

Var gelu(const Var& a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x) {
        return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
      });
}

Var gather_rows(const Var& a, std::span<const Eigen::Index> idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] >= 0 && idx[i] < a.rows(), "gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(idx[i]);
  }
  std::vector<Eigen::Index> ids(idx.begin(), idx.end());
  return make_op(std::move(out), {a}, [ids = std::move(ids)](Node& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    auto& g = p->grad_buffer();
    for (std::size_t i = 0; i < ids.size(); ++i) g.row(ids[i]) += self.grad.row(static_cast<Eigen::Index>(i));
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows: no parts");
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts[0].cols();
  for (const auto& p : parts) {
    require(p.cols() == cols, "concat_rows: width mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return make_op(std::move(out), std::move(ps), [](Node& self) {
    Eigen::Index r = 0;
    for (auto& p : self.parents) {
      const Eigen::Index n = p->value.rows();
      if (p->requires_grad) p->grad_buffer() += self.grad.middleRows(r, n);
      r += n;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no parts");
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts[0].rows();
  for (const auto& p : parts) {
    require(p.rows() == rows, "concat_cols: height mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return make_op(std::move(out), std::move(ps), [](Node& self) {
    Eigen::Index c = 0;
    for (auto& p : self.parents) {
      const Eigen::Index n = p->value.cols();
      if (p->requires_grad) p->grad_buffer() += self.grad.middleCols(c, n);
      c += n;
    }
  });
}

Var group_mean(const Var& a, Eigen::Index group) {
  require(group > 0 && a.rows() % group == 0, "group_mean: rows not divisible by group");
  const Eigen::Index n = a.rows() / group;
  Matrix out(n, a.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    out.row(i) = a.value().middleRows(i * group, group).colwise().sum() / static_cast<double>(group);
  }
  return make_op(std::move(out), {a}, [group](Node& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    auto& g = p->grad_buffer();
    const double inv = 1.0 / static_cast<double>(group);
    for (Eigen::Index i = 0; i < self.grad.rows(); ++i) {
      g.middleRows(i * group, group).rowwise() += self.grad.row(i) * inv;
    }
  });
}

Var prepend_token(const Var& a, const Var& token, Eigen::Index group) {
  require(token.rows() == 1 && token.cols() == a.cols(), "prepend_token: token shape mismatch");
  require(group > 0 && a.rows() % group == 0, "prepend_token: rows not divisible by group");
  const Eigen::Index blocks = a.rows() / group;
  Matrix out(blocks * (group + 1), a.cols());
  for (Eigen::Index b = 0; b < blocks; ++b) {
    out.row(b * (group + 1)) = token.value().row(0);
    out.middleRows(b * (group + 1) + 1, group) = a.value().middleRows(b * group, group);
  }
  return make_op(std::move(out), {a, token}, [group, blocks](Node& self) {
    auto& a = self.parents[0];
    auto& t = self.parents[1];
    for (Eigen::Index b = 0; b < blocks; ++b) {
      if (t->requires_grad) t->grad_buffer() += self.grad.row(b * (group + 1));
      if (a->requires_grad) {
        a->grad_buffer().middleRows(b * group, group) += self.grad.middleRows(b * (group + 1) + 1, group);
      }
    }
  });
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make_op(std::move(out), {a}, [](Node& self) {
    auto& p = self.parents[0];
    if (p->requires_grad) p->grad_buffer().array() += self.grad(0, 0);
  });
}

Var mean(const Var& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Eigen::Index n = x.rows();
  const Eigen::Index c = x.cols();
  require(gamma.rows() == 1 && gamma.cols() == c && beta.rows() == 1 && beta.cols() == c,
          "layer_norm: affine shape mismatch");
  Matrix xhat(n, c);
  RowVector inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = x.value().row(i);
    const double mu = row.mean();
    const double var = (row.array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (row.array() - mu) * inv_std(i);
  }
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
  return make_op(std::move(out), {x, gamma, beta}, [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
    auto& x = self.parents[0];
    auto& gamma = self.parents[1];
    auto& beta = self.parents[2];
    if (gamma->requires_grad) gamma->grad_buffer() += self.grad.cwiseProduct(xhat).colwise().sum();
    if (beta->requires_grad) beta->grad_buffer() += self.grad.colwise().sum();
    if (!x->requires_grad) return;
    Matrix dxhat = self.grad.array().rowwise() * gamma->value.row(0).array();
    auto& g = x->grad_buffer();
    for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
      const double m1 = dxhat.row(i).mean();
      const double m2 = dxhat.row(i).cwiseProduct(xhat.row(i)).mean();
      g.row(i).array() += inv_std(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
    }
  });
}

Var l2_normalize_rows(const Var& a) {
  const Eigen::Index n = a.rows();
  RowVector norms(n);
  Matrix out(n, a.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    norms(i) = a.value().row(i).norm();
    require(norms(i) > 0.0, "l2_normalize_rows: zero-norm row");
    out.row(i) = a.value().row(i) / norms(i);
  }
  Matrix y = out;
  return make_op(std::move(out), {a}, [y = std::move(y), norms = std::move(norms)](Node& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    auto& g = p->grad_buffer();
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const double proj = y.row(i).dot(self.grad.row(i));
      g.row(i) += (self.grad.row(i) - y.row(i) * proj) / norms(i);
    }
  });
}

Matrix softmax_row(const Matrix& logits) {
  const double m = logits.maxCoeff();
  Matrix e = (logits.array() - m).exp();
  return e / e.sum();
}

Var block_attention(const Var& q, const Var& k, const Var& v, Eigen::Index group, int heads,
                    std::vector<Matrix>* weights_out) {
  const Eigen::Index n = q.rows();
  const Eigen::Index d = q.cols();
  require(k.rows() == n && v.rows() == n && k.cols() == d && v.cols() == d, "block_attention: shape mismatch");
  require(group > 0 && n % group == 0, "block_attention: rows not divisible by group");
  require(heads > 0 && d % heads == 0, "block_attention: width not divisible by heads");
  const Eigen::Index dh = d / heads;
  const Eigen::Index blocks = n / group;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<Matrix> probs;
  probs.reserve(static_cast<std::size_t>(blocks * heads));
  Matrix out(n, d);
  for (Eigen::Index b = 0; b < blocks; ++b) {
    for (int h = 0; h < heads; ++h) {
      const auto qh = q.value().block(b * group, h * dh, group, dh);
      const auto kh = k.value().block(b * group, h * dh, group, dh);
      const auto vh = v.value().block(b * group, h * dh, group, dh);
      Matrix s = (qh * kh.transpose()) * scale_factor;
      for (Eigen::Index r = 0; r < group; ++r) s.row(r) = softmax_row(s.row(r));
      out.block(b * group, h * dh, group, dh).noalias() = s * vh;
      probs.push_back(std::move(s));
    }
  }
  if (weights_out) *weights_out = probs;

  return make_op(std::move(out), {q, k, v}, [probs = std::move(probs), group, heads, dh, scale_factor](Node& self) {
    auto& q = self.parents[0];
    auto& k = self.parents[1];
    auto& v = self.parents[2];
    const Eigen::Index blocks = self.grad.rows() / group;
    for (Eigen::Index b = 0; b < blocks; ++b) {
      for (int h = 0; h < heads; ++h) {
        const Matrix& p = probs[static_cast<std::size_t>(b * heads + h)];
        const auto dout = self.grad.block(b * group, h * dh, group, dh);
        const auto qh = q->value.block(b * group, h * dh, group, dh);
        const auto kh = k->value.block(b * group, h * dh, group, dh);
        const auto vh = v->value.block(b * group, h * dh, group, dh);
        if (v->requires_grad) v->grad_buffer().block(b * group, h * dh, group, dh).noalias() += p.transpose() * dout;
        if (!q->requires_grad && !k->requires_grad) continue;
        Matrix dp = dout * vh.transpose();
        Matrix ds = p.cwiseProduct(dp);
        for (Eigen::Index r = 0; r < group; ++r) {
          const double rs = ds.row(r).sum();
          ds.row(r) -= p.row(r) * rs;
        }
        ds *= scale_factor;
        if (q->requires_grad) q->grad_buffer().block(b * group, h * dh, group, dh).noalias() += ds * kh;
        if (k->requires_grad) k->grad_buffer().block(b * group, h * dh, group, dh).noalias() += ds.transpose() * qh;
      }
    }
  });
}

}  // namespace sasreid::ag
