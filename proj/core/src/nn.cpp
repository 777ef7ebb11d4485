#include "sasreid/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace sasreid::nn {

Var ParamRegistry::add(std::string name, Matrix init) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  Var v = ag::leaf(std::move(init));
  params_.push_back({std::move(name), v});
  return v;
}

std::size_t ParamRegistry::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.var.value().size());
  return n;
}

const NamedParam* ParamRegistry::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

Matrix normal_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Linear::Linear(ParamRegistry& reg, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng,
               bool with_bias) {
  weight = reg.add(name + ".weight", normal_matrix(rng, in, out, 1.0 / std::sqrt(static_cast<double>(in))));
  if (with_bias) bias = reg.add(name + ".bias", Matrix::Zero(1, out));
}

Var Linear::operator()(const Var& x) const {
  if (bias.defined()) return ag::affine(x, weight, bias);
  return ag::matmul(x, weight);
}

LayerNorm::LayerNorm(ParamRegistry& reg, const std::string& name, Eigen::Index width) {
  gamma = reg.add(name + ".gamma", Matrix::Ones(1, width));
  beta = reg.add(name + ".beta", Matrix::Zero(1, width));
}

EncoderLayer::EncoderLayer(ParamRegistry& reg, const std::string& name, Eigen::Index width, int heads_,
                           Eigen::Index ffn_width, Rng& rng)
    : norm1(reg, name + ".norm1", width),
      norm2(reg, name + ".norm2", width),
      query(reg, name + ".attn.query", width, width, rng),
      key(reg, name + ".attn.key", width, width, rng),
      value(reg, name + ".attn.value", width, width, rng),
      out(reg, name + ".attn.out", width, width, rng),
      fc1(reg, name + ".ffn.fc1", width, ffn_width, rng),
      fc2(reg, name + ".ffn.fc2", ffn_width, width, rng),
      heads(heads_) {
  if (width % heads != 0) throw std::invalid_argument(name + ": width not divisible by heads");
}

Var EncoderLayer::operator()(const Var& x, Eigen::Index group, std::vector<Matrix>* attn) const {
  const Var h = norm1(x);
  const Var a = ag::block_attention(query(h), key(h), value(h), group, heads, attn);
  const Var x1 = ag::add(x, out(a));
  return ag::add(x1, fc2(ag::gelu(fc1(norm2(x1)))));
}

GruCell::GruCell(ParamRegistry& reg, const std::string& name, Eigen::Index in, Eigen::Index hidden_, Rng& rng)
    : input_update(reg, name + ".input_update", in, hidden_, rng),
      input_reset(reg, name + ".input_reset", in, hidden_, rng),
      input_candidate(reg, name + ".input_candidate", in, hidden_, rng),
      hidden_update(reg, name + ".hidden_update", hidden_, hidden_, rng, false),
      hidden_reset(reg, name + ".hidden_reset", hidden_, hidden_, rng, false),
      hidden_candidate(reg, name + ".hidden_candidate", hidden_, hidden_, rng, false),
      hidden(hidden_) {}

Var GruCell::step(const Var& x, const Var& h) const {
  const Var z = ag::sigmoid(ag::add(input_update(x), hidden_update(h)));
  const Var r = ag::sigmoid(ag::add(input_reset(x), hidden_reset(h)));
  const Var c = ag::tanh(ag::add(input_candidate(x), hidden_candidate(ag::mul(r, h))));
  // (1 - z) * h + z * c == h + z * (c - h)
  return ag::add(h, ag::mul(z, ag::sub(c, h)));
}

std::vector<Var> GruCell::run(std::span<const Var> steps) const {
  std::vector<Var> out;
  if (steps.empty()) return out;
  out.reserve(steps.size());
  Var h = ag::constant(Matrix::Zero(steps[0].rows(), hidden));
  for (const auto& x : steps) {
    h = step(x, h);
    out.push_back(h);
  }
  return out;
}

}  // namespace sasreid::nn
