#include "sasreid/shape.hpp"

#include <numeric>
#include <stdexcept>

namespace sasreid::shape {

Var interleave_steps(std::span<const Var> steps) {
  if (steps.empty()) throw std::invalid_argument("interleave_steps: no steps");
  const Eigen::Index T = static_cast<Eigen::Index>(steps.size());
  const Eigen::Index B = steps[0].rows();
  const Var stacked = ag::concat_rows(steps);  // row t*B + b
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(B * T));
  for (Eigen::Index b = 0; b < B; ++b) {
    for (Eigen::Index t = 0; t < T; ++t) idx[static_cast<std::size_t>(b * T + t)] = t * B + b;
  }
  return ag::gather_rows(stacked, idx);
}

std::vector<Var> split_steps(const Var& tracklet_major, int T) {
  if (T < 1 || tracklet_major.rows() % T != 0) throw std::invalid_argument("split_steps: rows not divisible by T");
  const Eigen::Index B = tracklet_major.rows() / T;
  std::vector<Var> out;
  out.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(B));
    for (Eigen::Index b = 0; b < B; ++b) idx[static_cast<std::size_t>(b)] = b * T + t;
    out.push_back(ag::gather_rows(tracklet_major, idx));
  }
  return out;
}

ShapeBranch::ShapeBranch(const ShapeConfig& cfg, nn::ParamRegistry& reg, Rng& rng) : cfg_(cfg) {
  if (cfg_.regressor_hidden == 0) cfg_.regressor_hidden = cfg_.feature_dim / 2;
  const int d = cfg_.feature_dim;
  context_gru_ = nn::GruCell(reg, "shape.context_gru", d, d, rng);
  context_out_ = nn::Linear(reg, "shape.context_out", d, d, rng);
  regressor1_ = nn::Linear(reg, "shape.regressor.fc1", d, cfg_.regressor_hidden, rng);
  regressor2_ = nn::Linear(reg, "shape.regressor.fc2", cfg_.regressor_hidden, kShapeDim, rng);
  smoother_ = nn::GruCell(reg, "shape.smoother", kShapeDim, kShapeDim, rng);
  in_proj_ = nn::Linear(reg, "shape.interact.in_proj", kShapeDim, cfg_.width, rng);
  position_ = reg.add("shape.interact.position", nn::normal_matrix(rng, cfg_.max_frames, cfg_.width, 0.02));
  for (int i = 0; i < cfg_.layers; ++i) {
    layers_.emplace_back(reg, "shape.interact.layer" + std::to_string(i), cfg_.width, cfg_.heads, 4 * cfg_.width, rng);
  }
  final_norm_ = nn::LayerNorm(reg, "shape.interact.final_norm", cfg_.width);
  out_proj_ = nn::Linear(reg, "shape.interact.out_proj", cfg_.width, kShapeDim, rng);
}

std::vector<Var> ShapeBranch::temporal_encode(std::span<const Var> steps) const {
  const auto hidden = context_gru_.run(steps);
  std::vector<Var> out;
  out.reserve(steps.size());
  for (std::size_t t = 0; t < steps.size(); ++t) out.push_back(ag::add(steps[t], context_out_(hidden[t])));
  return out;
}

Var ShapeBranch::regress(const Var& x) const { return regressor2_(ag::relu(regressor1_(x))); }

std::vector<Var> ShapeBranch::smooth(std::span<const Var> alpha) const { return smoother_.run(alpha); }

Var ShapeBranch::global_interact(const Var& tokens, int T, std::vector<Matrix>* attention) const {
  if (T < 1 || T > cfg_.max_frames) throw std::invalid_argument("shape: sequence longer than position table");
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(T));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  Var x = ag::add_tiled(in_proj_(tokens), ag::gather_rows(position_, rows));
  std::vector<Matrix> layer_attn;
  for (const auto& layer : layers_) {
    x = layer(x, T, attention ? &layer_attn : nullptr);
    if (attention) attention->insert(attention->end(), layer_attn.begin(), layer_attn.end());
  }
  return out_proj_(final_norm_(x));
}

ShapeBranch::Output ShapeBranch::forward(const Var& frames, int T, bool keep_attention) const {
  Output out;
  const auto steps = split_steps(frames, T);
  out.encoded = temporal_encode(steps);
  out.alpha.reserve(steps.size());
  for (const auto& f : out.encoded) out.alpha.push_back(regress(f));
  out.alpha_smooth = smooth(out.alpha);
  out.alpha_bar = global_interact(interleave_steps(out.alpha_smooth), T, keep_attention ? &out.attention : nullptr);
  out.pooled = ag::group_mean(out.alpha_bar, T);
  return out;
}

RowVector pool_shape(const Matrix& alpha_bar) {
  if (alpha_bar.rows() == 0) throw std::invalid_argument("pool_shape: empty sequence");
  return alpha_bar.colwise().sum() / static_cast<double>(alpha_bar.rows());
}

double shape_prior_loss_value(const Matrix& alpha_bar, const RowVector& prior) {
  if (alpha_bar.cols() != prior.cols() || alpha_bar.rows() == 0) throw std::invalid_argument("shape_prior_loss: dimension mismatch");
  return (alpha_bar.rowwise() - prior).rowwise().squaredNorm().mean();
}

Var shape_prior_loss(const Var& alpha_bar, const RowVector& prior) {
  Matrix out(1, 1);
  out(0, 0) = shape_prior_loss_value(alpha_bar.value(), prior);
  Matrix grad = (alpha_bar.value().rowwise() - prior) * (2.0 / static_cast<double>(alpha_bar.rows()));
  return ag::make_op(std::move(out), {alpha_bar}, [grad = std::move(grad)](ag::Node& self) {
    auto& p = self.parents[0];
    if (p->requires_grad) p->grad_buffer() += grad * self.grad(0, 0);
  });
}

}  // namespace sasreid::shape
