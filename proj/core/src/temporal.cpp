#include "sasreid/temporal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace sasreid::temporal {

int sliced_length(int frames, int stride) {
  if (stride < 1 || stride > frames) {
    throw std::invalid_argument("slice: stride " + std::to_string(stride) + " invalid for " + std::to_string(frames) +
                                " frames");
  }
  return (frames + stride - 1) / stride;
}

Matrix slice(const Matrix& seq, int stride) {
  const int T = static_cast<int>(seq.rows());
  const int L = sliced_length(T, stride);
  Matrix out(L, seq.cols());
  for (int w = 0; w < L; ++w) {
    const int begin = w * stride;
    const int len = std::min(stride, T - begin);
    out.row(w) = seq.middleRows(begin, len).colwise().sum() / static_cast<double>(len);
  }
  return out;
}

Var slice(const Var& seq, int frames, int stride) {
  const int L = sliced_length(frames, stride);
  if (seq.rows() % frames != 0) throw std::invalid_argument("slice: rows not divisible by frame count");
  if (frames % stride == 0) return ag::group_mean(seq, stride);
  // Ragged final window: pool full windows and the remainder separately, then interleave.
  const Eigen::Index B = seq.rows() / frames;
  std::vector<Var> windows;
  windows.reserve(static_cast<std::size_t>(B * L));
  for (Eigen::Index b = 0; b < B; ++b) {
    for (int w = 0; w < L; ++w) {
      const int begin = w * stride;
      const int len = std::min(stride, frames - begin);
      std::vector<Eigen::Index> idx(static_cast<std::size_t>(len));
      std::iota(idx.begin(), idx.end(), b * frames + begin);
      windows.push_back(ag::group_mean(ag::gather_rows(seq, idx), len));
    }
  }
  return ag::concat_rows(windows);
}

std::vector<Eigen::Index> reorder_permutation(const Matrix& seq, const RowVector& anchor) {
  const double an = anchor.norm();
  if (!(an > 0.0)) throw std::invalid_argument("reorder: zero anchor");
  std::vector<double> sim(static_cast<std::size_t>(seq.rows()));
  for (Eigen::Index i = 0; i < seq.rows(); ++i) {
    const double n = seq.row(i).norm();
    sim[static_cast<std::size_t>(i)] = n > 0.0 ? seq.row(i).dot(anchor) / (n * an) : 0.0;
  }
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(seq.rows()));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::stable_sort(perm.begin(), perm.end(), [&](Eigen::Index a, Eigen::Index b) {
    return sim[static_cast<std::size_t>(a)] > sim[static_cast<std::size_t>(b)];
  });
  return perm;
}

Matrix reorder(const Matrix& seq, const RowVector& anchor, std::vector<Eigen::Index>* perm_out) {
  const auto perm = reorder_permutation(seq, anchor);
  Matrix out(seq.rows(), seq.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = seq.row(perm[i]);
  if (perm_out) *perm_out = perm;
  return out;
}

SequenceMixer::SequenceMixer(nn::ParamRegistry& reg, const std::string& name, Eigen::Index dim, Rng& rng)
    : gate_a(reg, name + ".gate_a", dim, dim, rng),
      gate_b(reg, name + ".gate_b", dim, dim, rng),
      gate_c(reg, name + ".gate_c", dim, dim, rng),
      skip(reg.add(name + ".skip", Matrix::Ones(1, dim))) {}

std::vector<Var> SequenceMixer::operator()(std::span<const Var> steps) const {
  std::vector<Var> out;
  out.reserve(steps.size());
  Var h;
  for (const auto& x : steps) {
    const Var a = ag::sigmoid(gate_a(x));
    const Var b = ag::softplus(gate_b(x));
    const Var c = gate_c(x);
    const Var bx = ag::mul(b, x);
    h = h.defined() ? ag::add(ag::mul(a, h), bx) : bx;
    out.push_back(ag::add(ag::mul(c, h), ag::mul_row(x, skip)));
  }
  return out;
}

Matrix SequenceMixer::run(const Matrix& seq) const {
  std::vector<Var> steps;
  for (Eigen::Index t = 0; t < seq.rows(); ++t) steps.push_back(ag::constant(seq.row(t)));
  const auto ys = (*this)(steps);
  Matrix out(seq.rows(), seq.cols());
  for (std::size_t t = 0; t < ys.size(); ++t) out.row(static_cast<Eigen::Index>(t)) = ys[t].value();
  return out;
}

Var fuse(std::span<const Var> features, const Var& logits) {
  const std::size_t k = features.size();
  if (k == 0 || logits.rows() != 1 || static_cast<std::size_t>(logits.cols()) != k) {
    throw std::invalid_argument("fuse: expected one logit per stride feature");
  }
  const Matrix w = ag::softmax_row(logits.value());
  Matrix out = Matrix::Zero(features[0].rows(), features[0].cols());
  for (std::size_t s = 0; s < k; ++s) {
    if (features[s].rows() != out.rows() || features[s].cols() != out.cols()) throw std::invalid_argument("fuse: shape mismatch");
    out += w(0, static_cast<Eigen::Index>(s)) * features[s].value();
  }
  std::vector<Var> parents(features.begin(), features.end());
  parents.push_back(logits);
  return ag::make_op(std::move(out), std::move(parents), [w, k](ag::Node& self) {
    std::vector<double> inner(k);
    double weighted = 0.0;
    for (std::size_t s = 0; s < k; ++s) {
      inner[s] = self.grad.cwiseProduct(self.parents[s]->value).sum();
      weighted += w(0, static_cast<Eigen::Index>(s)) * inner[s];
    }
    for (std::size_t s = 0; s < k; ++s) {
      auto& h = self.parents[s];
      if (h->requires_grad) h->grad_buffer() += w(0, static_cast<Eigen::Index>(s)) * self.grad;
    }
    auto& a = self.parents[k];
    if (a->requires_grad) {
      auto& g = a->grad_buffer();
      for (std::size_t s = 0; s < k; ++s) {
        g(0, static_cast<Eigen::Index>(s)) += w(0, static_cast<Eigen::Index>(s)) * (inner[s] - weighted);
      }
    }
  });
}

TemporalModule::TemporalModule(std::vector<int> strides, Eigen::Index dim, nn::ParamRegistry& reg, Rng& rng)
    : strides_(std::move(strides)) {
  if (strides_.empty()) throw std::invalid_argument("temporal: empty stride set");
  for (int s : strides_) {
    if (s < 1) throw std::invalid_argument("temporal: strides must be positive");
    mixers_.emplace_back(reg, "temporal.mixer_s" + std::to_string(s), dim, rng);
  }
  logits_ = reg.add("temporal.fusion_logits", Matrix::Zero(1, static_cast<Eigen::Index>(strides_.size())));
}

Var TemporalModule::stride_feature(const Var& frames, const Var& anchor, int T, std::size_t stride_index) const {
  const int s = strides_.at(stride_index);
  const Var sliced = slice(frames, T, s);
  const int L = sliced_length(T, s);
  const Eigen::Index B = anchor.rows();
  if (sliced.rows() != B * L) throw std::invalid_argument("temporal: anchor count does not match tracklets");

  // Relevance ordering is a discrete decision made on values.
  std::vector<std::vector<Eigen::Index>> perms(static_cast<std::size_t>(B));
  for (Eigen::Index b = 0; b < B; ++b) {
    perms[static_cast<std::size_t>(b)] = reorder_permutation(sliced.value().middleRows(b * L, L), anchor.value().row(b));
  }
  std::vector<Var> forward_steps, reverse_steps;
  for (int t = 0; t < L; ++t) {
    std::vector<Eigen::Index> fwd(static_cast<std::size_t>(B)), rev(static_cast<std::size_t>(B));
    for (Eigen::Index b = 0; b < B; ++b) {
      const auto& p = perms[static_cast<std::size_t>(b)];
      fwd[static_cast<std::size_t>(b)] = b * L + p[static_cast<std::size_t>(t)];
      rev[static_cast<std::size_t>(b)] = b * L + p[static_cast<std::size_t>(L - 1 - t)];
    }
    forward_steps.push_back(ag::gather_rows(sliced, fwd));
    reverse_steps.push_back(ag::gather_rows(sliced, rev));
  }
  const auto& mixer = mixers_[stride_index];
  const auto yf = mixer(forward_steps);
  const auto yr = mixer(reverse_steps);
  Var acc = ag::add(yf[0], yr[0]);
  for (int t = 1; t < L; ++t) acc = ag::add(acc, ag::add(yf[static_cast<std::size_t>(t)], yr[static_cast<std::size_t>(t)]));
  return ag::scale(acc, 1.0 / L);
}

Var TemporalModule::forward(const Var& frames, const Var& anchor, int T) const {
  std::vector<Var> hs;
  hs.reserve(strides_.size());
  for (std::size_t i = 0; i < strides_.size(); ++i) hs.push_back(stride_feature(frames, anchor, T, i));
  return fuse(hs, logits_);
}

}  // namespace sasreid::temporal
