#pragma once

// Parameter registry and the handful of layers shared by the model branches.

#include "sasreid/autograd.hpp"
#include "sasreid/rng.hpp"

#include <span>
#include <string>
#include <vector>

namespace sasreid::nn {

using ag::Matrix;
using ag::Var;

struct NamedParam {
  std::string name;
  Var var;
};

/// Owns named trainable leaves in registration order.
class ParamRegistry {
 public:
  Var add(std::string name, Matrix init);
  std::span<const NamedParam> params() const { return params_; }
  std::size_t scalar_count() const;
  /// nullptr if absent.
  const NamedParam* find(std::string_view name) const;

 private:
  std::vector<NamedParam> params_;
};

Matrix normal_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev);

struct Linear {
  Var weight;  // in x out
  Var bias;    // 1 x out, may be undefined
  Linear() = default;
  Linear(ParamRegistry& reg, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng,
         bool with_bias = true);
  Var operator()(const Var& x) const;
};

struct LayerNorm {
  Var gamma;
  Var beta;
  LayerNorm() = default;
  LayerNorm(ParamRegistry& reg, const std::string& name, Eigen::Index width);
  Var operator()(const Var& x) const { return ag::layer_norm(x, gamma, beta); }
};

/// Pre-norm transformer encoder layer: x + MHA(LN(x)), then x + FFN(LN(x)).
struct EncoderLayer {
  LayerNorm norm1, norm2;
  Linear query, key, value, out, fc1, fc2;
  int heads = 1;
  EncoderLayer() = default;
  EncoderLayer(ParamRegistry& reg, const std::string& name, Eigen::Index width, int heads,
               Eigen::Index ffn_width, Rng& rng);
  /// Attention is restricted to consecutive blocks of `group` rows.
  Var operator()(const Var& x, Eigen::Index group, std::vector<Matrix>* attn = nullptr) const;
};

/// Standard GRU cell:
///   z = sigmoid(x Wz + h Uz + bz), r = sigmoid(x Wr + h Ur + br)
///   c = tanh(x Wh + (r * h) Uh + bh), h' = (1 - z) * h + z * c
struct GruCell {
  Linear input_update, input_reset, input_candidate;
  Linear hidden_update, hidden_reset, hidden_candidate;  // bias-free
  Eigen::Index hidden = 0;
  GruCell() = default;
  GruCell(ParamRegistry& reg, const std::string& name, Eigen::Index in, Eigen::Index hidden, Rng& rng);
  Var step(const Var& x, const Var& h) const;
  /// Runs over time-major steps (each B x in) from a zero state; returns every h_t.
  std::vector<Var> run(std::span<const Var> steps) const;
};

}  // namespace sasreid::nn
