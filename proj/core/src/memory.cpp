#include "sasreid/memory.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace sasreid::memory {
namespace {

RowVector normalized(const RowVector& v, const char* what) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw std::invalid_argument(std::string(what) + ": zero-norm or non-finite vector");
  return v / n;
}

// Similarities (pre-temperature) of a unit vector to every proxy row, returned
// with the loss and the softmax weights needed for the gradient.
struct Scores {
  double loss;
  RowVector dloss_dunit;  // d loss / d normalized v
};

Scores score(const RowVector& unit, int y, const ProxyBank& bank) {
  const Matrix& m = bank.table();
  const int P = bank.proxies_per_identity();
  const double tau = bank.temperature();
  const Eigen::VectorXd logits = (m * unit.transpose()) / tau;

  const double max_all = logits.maxCoeff();
  const Eigen::VectorXd e_all = (logits.array() - max_all).exp();
  const double z_all = e_all.sum();

  const auto pos = logits.segment(y * P, P);
  const double max_pos = pos.maxCoeff();
  const Eigen::VectorXd e_pos = (pos.array() - max_pos).exp();
  const double z_pos = e_pos.sum();

  Scores s;
  s.loss = (max_all + std::log(z_all)) - (max_pos + std::log(z_pos));
  // dL/dlogit = softmax_all - softmax_pos (positive block only).
  Eigen::VectorXd w = e_all / z_all;
  w.segment(y * P, P) -= e_pos / z_pos;
  s.dloss_dunit = (w.transpose() * m) / tau;
  return s;
}

}  // namespace

RowVector sequence_embed(const Matrix& frames) {
  if (frames.rows() == 0) throw std::invalid_argument("sequence_embed: empty sequence");
  return frames.colwise().sum() / static_cast<double>(frames.rows());
}

ProxyBank::ProxyBank(int identities, int proxies, int dim, double momentum, double temperature)
    : identities_(identities),
      proxies_(proxies),
      dim_(dim),
      momentum_(momentum),
      temperature_(temperature),
      table_(Matrix::Zero(static_cast<Eigen::Index>(identities) * proxies, dim)),
      initialized_(static_cast<std::size_t>(identities), false) {
  if (identities < 1 || proxies < 1 || dim < 1) throw std::invalid_argument("ProxyBank: sizes must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("ProxyBank: momentum must lie in [0, 1)");
  if (!(temperature > 0.0)) throw std::invalid_argument("ProxyBank: temperature must be positive");
}

void ProxyBank::check_index(int y, int p) const {
  if (y < 0 || y >= identities_ || p < 0 || p >= proxies_) {
    throw std::out_of_range("ProxyBank: index (" + std::to_string(y) + ", " + std::to_string(p) + ") out of range");
  }
}

RowVector ProxyBank::proxy(int y, int p) const {
  check_index(y, p);
  return table_.row(static_cast<Eigen::Index>(y) * proxies_ + p);
}

void ProxyBank::randomize(Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  for (Eigen::Index r = 0; r < table_.rows(); ++r) {
    RowVector v(dim_);
    do {
      for (Eigen::Index k = 0; k < dim_; ++k) v(k) = g(rng);
    } while (v.norm() == 0.0);
    table_.row(r) = v / v.norm();
  }
  std::fill(initialized_.begin(), initialized_.end(), false);
}

void ProxyBank::initialize_identity(int y, const RowVector& v) {
  check_index(y, 0);
  const RowVector u = normalized(v, "ProxyBank::initialize_identity");
  for (int p = 0; p < proxies_; ++p) table_.row(static_cast<Eigen::Index>(y) * proxies_ + p) = u;
  initialized_[static_cast<std::size_t>(y)] = true;
}

void ProxyBank::update(int y, int p, const RowVector& v_star) {
  check_index(y, p);
  if (v_star.cols() != dim_) throw std::invalid_argument("ProxyBank::update: dimension mismatch");
  if (std::abs(v_star.norm() - 1.0) > 1e-6) throw std::invalid_argument("ProxyBank::update: v_star must be unit-norm");
  auto row = table_.row(static_cast<Eigen::Index>(y) * proxies_ + p);
  const RowVector blended = momentum_ * row + (1.0 - momentum_) * v_star;
  const double n = blended.norm();
  // Antipodal blend: fall back to the new representative.
  row = n > 1e-12 ? RowVector(blended / n) : v_star;
}

void ProxyBank::restore(Matrix table, std::vector<bool> initialized) {
  if (table.rows() != table_.rows() || table.cols() != table_.cols() || initialized.size() != initialized_.size()) {
    throw std::invalid_argument("ProxyBank::restore: shape mismatch");
  }
  table_ = std::move(table);
  initialized_ = std::move(initialized);
}

Representatives select_representatives(const Matrix& features, const ProxyBank& bank, int y) {
  if (features.rows() == 0) throw std::invalid_argument("select_representatives: no features for identity");
  Representatives r;
  r.mean = normalized(features.colwise().sum() / static_cast<double>(features.rows()), "select_representatives");
  const RowVector anchor = bank.proxy(y, 0);
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const RowVector u = normalized(features.row(i), "select_representatives");
    const double c = u.dot(anchor);
    if (c < best) {
      best = c;
      r.hard_index = i;
      r.hard = u;
    }
  }
  return r;
}

double memory_loss_value(const RowVector& v, int y, const ProxyBank& bank) {
  if (y < 0 || y >= bank.identities()) throw std::out_of_range("memory_loss: label out of range");
  return score(normalized(v, "memory_loss"), y, bank).loss;
}

Var memory_loss(const Var& v, std::span<const int> labels, const ProxyBank& bank) {
  const Eigen::Index B = v.rows();
  if (static_cast<Eigen::Index>(labels.size()) != B || B == 0) throw std::invalid_argument("memory_loss: label count mismatch");
  if (v.cols() != bank.dim()) throw std::invalid_argument("memory_loss: dimension mismatch");

  Matrix grad(B, v.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < B; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= bank.identities()) throw std::out_of_range("memory_loss: label out of range");
    const RowVector raw = v.value().row(i);
    const double n = raw.norm();
    if (!(n > 0.0)) throw std::invalid_argument("memory_loss: zero-norm feature");
    const RowVector unit = raw / n;
    const Scores s = score(unit, y, bank);
    total += s.loss;
    // Chain through u = v / |v|.
    grad.row(i) = (s.dloss_dunit - unit * unit.dot(s.dloss_dunit)) / (n * static_cast<double>(B));
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(B);
  return ag::make_op(std::move(out), {v}, [grad = std::move(grad)](ag::Node& self) {
    auto& p = self.parents[0];
    if (p->requires_grad) p->grad_buffer() += grad * self.grad(0, 0);
  });
}

}  // namespace sasreid::memory
