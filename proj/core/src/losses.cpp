#include "sasreid/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace sasreid::losses {
namespace {

struct IdTerm {
  double loss;
  RowVector grad;  // d loss / d logits
};

IdTerm id_term(const RowVector& logits, int y, double eps) {
  const Eigen::Index Y = logits.cols();
  if (Y < 2) throw std::invalid_argument("id_loss: need at least two classes");
  if (y < 0 || y >= Y) throw std::out_of_range("id_loss: label out of range");
  if (!(eps >= 0.0 && eps < 1.0)) throw std::invalid_argument("id_loss: smoothing must lie in [0, 1)");
  const double m = logits.maxCoeff();
  const RowVector shifted = logits.array() - m;
  const double lse = std::log(shifted.array().exp().sum());
  const RowVector log_p = shifted.array() - lse;
  RowVector target = RowVector::Constant(Y, eps / static_cast<double>(Y - 1));
  target(y) = 1.0 - eps;
  IdTerm t;
  t.loss = -(target.cwiseProduct(log_p)).sum();
  t.grad = log_p.array().exp().matrix() - target;
  return t;
}

struct Mining {
  double loss = 0;
  Matrix grad;
};

Mining batch_hard(const Matrix& e, std::span<const int> labels, double margin) {
  const Eigen::Index B = e.rows();
  if (static_cast<Eigen::Index>(labels.size()) != B) throw std::invalid_argument("triplet_loss: label count mismatch");
  bool two_ids = false;
  for (Eigen::Index i = 1; i < B; ++i) two_ids = two_ids || labels[static_cast<std::size_t>(i)] != labels[0];
  if (!two_ids) throw std::invalid_argument("triplet_loss: batch needs at least two identities");

  Matrix dist(B, B);
  for (Eigen::Index i = 0; i < B; ++i) {
    for (Eigen::Index j = 0; j < B; ++j) dist(i, j) = (e.row(i) - e.row(j)).norm();
  }

  Mining out;
  out.grad = Matrix::Zero(B, e.cols());
  int valid = 0;
  auto add_pair_grad = [&](Eigen::Index i, Eigen::Index j, double sign) {
    const double d = dist(i, j);
    if (d <= 0.0) return;  // coincident points: subgradient 0
    const RowVector u = (e.row(i) - e.row(j)) / d;
    out.grad.row(i) += sign * u;
    out.grad.row(j) -= sign * u;
  };
  for (Eigen::Index i = 0; i < B; ++i) {
    Eigen::Index pos = -1, neg = -1;
    for (Eigen::Index j = 0; j < B; ++j) {
      if (j == i) continue;
      if (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(i)]) {
        if (pos < 0 || dist(i, j) > dist(i, pos)) pos = j;
      } else if (neg < 0 || dist(i, j) < dist(i, neg)) {
        neg = j;
      }
    }
    if (pos < 0 || neg < 0) continue;
    ++valid;
    const double term = margin + dist(i, pos) - dist(i, neg);
    if (term > 0.0) {
      out.loss += term;
      add_pair_grad(i, pos, 1.0);
      add_pair_grad(i, neg, -1.0);
    }
  }
  if (valid == 0) throw std::invalid_argument("triplet_loss: no anchor has both a positive and a negative");
  out.loss /= valid;
  out.grad /= valid;
  return out;
}

}  // namespace

double id_loss_value(const RowVector& logits, int y, double eps) { return id_term(logits, y, eps).loss; }

Var id_loss(const Var& logits, std::span<const int> labels, double eps) {
  const Eigen::Index B = logits.rows();
  if (static_cast<Eigen::Index>(labels.size()) != B || B == 0) throw std::invalid_argument("id_loss: label count mismatch");
  Matrix grad(B, logits.cols());
  double total = 0;
  for (Eigen::Index i = 0; i < B; ++i) {
    const IdTerm t = id_term(logits.value().row(i), labels[static_cast<std::size_t>(i)], eps);
    total += t.loss;
    grad.row(i) = t.grad / static_cast<double>(B);
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(B);
  return ag::make_op(std::move(out), {logits}, [grad = std::move(grad)](ag::Node& self) {
    auto& p = self.parents[0];
    if (p->requires_grad) p->grad_buffer() += grad * self.grad(0, 0);
  });
}

double triplet_loss_value(const Matrix& embeddings, std::span<const int> labels, double margin) {
  return batch_hard(embeddings, labels, margin).loss;
}

Var triplet_loss(const Var& embeddings, std::span<const int> labels, double margin) {
  Mining m = batch_hard(embeddings.value(), labels, margin);
  Matrix out(1, 1);
  out(0, 0) = m.loss;
  return ag::make_op(std::move(out), {embeddings}, [grad = std::move(m.grad)](ag::Node& self) {
    auto& p = self.parents[0];
    if (p->requires_grad) p->grad_buffer() += grad * self.grad(0, 0);
  });
}

double total_loss(const LossParts& p, const LossWeights& w) {
  return p.triplet + w.lambda_id * p.id + w.lambda_me * p.memory + w.lambda_alpha * p.shape_prior;
}

Var total_loss(const Var& triplet, const Var& id, const Var& memory, const Var& shape_prior, const LossWeights& w) {
  Var l = triplet;
  if (id.defined()) l = ag::add(l, ag::scale(id, w.lambda_id));
  if (memory.defined()) l = ag::add(l, ag::scale(memory, w.lambda_me));
  if (shape_prior.defined()) l = ag::add(l, ag::scale(shape_prior, w.lambda_alpha));
  return l;
}

}  // namespace sasreid::losses
