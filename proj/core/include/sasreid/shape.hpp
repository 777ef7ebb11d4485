#pragma once

// Shape branch: GRU context encoder with residual, per-frame 10-d shape
// regressor, GRU smoother, transformer interaction, mean pooling, and the
// L2 prior towards the canonical mean shape.

#include "sasreid/nn.hpp"

#include <span>
#include <vector>

namespace sasreid::shape {

using ag::Matrix;
using ag::RowVector;
using ag::Var;

inline constexpr int kShapeDim = 10;

struct ShapeConfig {
  int feature_dim = 64;
  int regressor_hidden = 0;  // 0 -> feature_dim / 2
  int width = 64;
  int layers = 4;
  int heads = 4;
  int max_frames = 8;
};

/// Canonical mean shape: the zero vector.
inline RowVector canonical_prior() { return RowVector::Zero(kShapeDim); }

class ShapeBranch {
 public:
  ShapeBranch(const ShapeConfig& cfg, nn::ParamRegistry& reg, Rng& rng);

  struct Output {
    std::vector<Var> encoded;       // f^_t, each B x d
    std::vector<Var> alpha;         // per-frame raw shape, B x 10
    std::vector<Var> alpha_smooth;  // GRU-smoothed, B x 10
    Var alpha_bar;                  // (B*T) x 10, tracklet-major
    Var pooled;                     // f_S, B x 10
    std::vector<Matrix> attention;  // filled when requested
  };

  /// `frames` is (B*T) x d tracklet-major.
  Output forward(const Var& frames, int T, bool keep_attention = false) const;

  /// f^_t = f_t + W_o h_t + b_o over time-major steps.
  std::vector<Var> temporal_encode(std::span<const Var> steps) const;
  Var regress(const Var& x) const;
  std::vector<Var> smooth(std::span<const Var> alpha) const;
  /// Tokens (B*T) x 10 tracklet-major -> same shape.
  Var global_interact(const Var& tokens, int T, std::vector<Matrix>* attention = nullptr) const;

  const ShapeConfig& config() const { return cfg_; }
  nn::GruCell& context_gru() { return context_gru_; }
  nn::Linear& context_out() { return context_out_; }
  nn::Linear& regressor_hidden() { return regressor1_; }
  nn::Linear& regressor_out() { return regressor2_; }
  const nn::GruCell& smoother() const { return smoother_; }
  const Var& position() const { return position_; }
  Var& position() { return position_; }

 private:
  ShapeConfig cfg_;
  nn::GruCell context_gru_;
  nn::Linear context_out_;
  nn::Linear regressor1_, regressor2_;
  nn::GruCell smoother_;
  nn::Linear in_proj_;
  Var position_;
  std::vector<nn::EncoderLayer> layers_;
  nn::LayerNorm final_norm_;
  nn::Linear out_proj_;
};

/// Mean over rows of f_S inputs: (1/T) sum_t alpha_bar_t for a single tracklet.
RowVector pool_shape(const Matrix& alpha_bar);

/// Mean over rows of ||alpha_bar_row - prior||^2.
double shape_prior_loss_value(const Matrix& alpha_bar, const RowVector& prior);
Var shape_prior_loss(const Var& alpha_bar, const RowVector& prior);

/// Reorders time-major step matrices (each B x c) into one (B*T) x c tracklet-major matrix.
Var interleave_steps(std::span<const Var> steps);
/// Inverse of interleave_steps.
std::vector<Var> split_steps(const Var& tracklet_major, int T);

}  // namespace sasreid::shape
