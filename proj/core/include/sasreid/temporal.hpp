#pragma once

// Multi-granularity temporal modelling: stride slicing, relevance reordering,
// bidirectional selective recurrence, and softmax scale fusion.

#include "sasreid/nn.hpp"

#include <span>
#include <vector>

namespace sasreid::temporal {

using ag::Matrix;
using ag::RowVector;
using ag::Var;

/// Window count for stride s over T frames (a trailing partial window counts).
int sliced_length(int frames, int stride);

/// Mean-pools contiguous windows of length s (T x d -> ceil(T/s) x d).
Matrix slice(const Matrix& seq, int stride);
/// Batched form: `seq` holds B tracklets of `frames` rows each.
Var slice(const Var& seq, int frames, int stride);

/// Indices sorted by descending cosine similarity to `anchor`, ties by index.
/// Output position i holds input row perm[i].
std::vector<Eigen::Index> reorder_permutation(const Matrix& seq, const RowVector& anchor);
Matrix reorder(const Matrix& seq, const RowVector& anchor, std::vector<Eigen::Index>* perm = nullptr);

/// Diagonal selective recurrence, per channel:
///   a_t = sigmoid(x W_a + b_a), b_t = softplus(x W_b + b_b), c_t = x W_c + b_c
///   h_t = a_t * h_{t-1} + b_t * x_t,  y_t = c_t * h_t + g * x_t,  h_0 = 0.
struct SequenceMixer {
  nn::Linear gate_a, gate_b, gate_c;
  Var skip;  // 1 x d
  SequenceMixer() = default;
  SequenceMixer(nn::ParamRegistry& reg, const std::string& name, Eigen::Index dim, Rng& rng);
  /// Time-major steps, each B x d.
  std::vector<Var> operator()(std::span<const Var> steps) const;
  /// Single sequence convenience (L x d -> L x d).
  Matrix run(const Matrix& seq) const;
};

/// w = softmax(logits), h_M = sum_s w_s h_s. Each h_s is B x d, logits 1 x |S|.
Var fuse(std::span<const Var> features, const Var& logits);

class TemporalModule {
 public:
  TemporalModule(std::vector<int> strides, Eigen::Index dim, nn::ParamRegistry& reg, Rng& rng);

  const std::vector<int>& strides() const { return strides_; }
  const Var& fusion_logits() const { return logits_; }
  const SequenceMixer& mixer(std::size_t i) const { return mixers_[i]; }

  /// h^(s) for each stride: reorder(slice(F, s)) around `anchor`, mixed in both directions, mean-pooled.
  /// `frames` is B*T x d (tracklet-major), `anchor` B x d.
  Var stride_feature(const Var& frames, const Var& anchor, int T, std::size_t stride_index) const;
  /// Fused h_M (B x d).
  Var forward(const Var& frames, const Var& anchor, int T) const;

 private:
  std::vector<int> strides_;
  std::vector<SequenceMixer> mixers_;  // one per stride, shared by both directions
  Var logits_;
};

}  // namespace sasreid::temporal
