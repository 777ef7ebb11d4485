#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. Every value in a graph is a 2-d matrix; vectors are 1 x n rows.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sasreid::ag {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct Node {
  Matrix value;
  Matrix grad;  // empty until something is accumulated
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;

  Matrix& grad_buffer() {
    if (grad.size() == 0) grad = Matrix::Zero(value.rows(), value.cols());
    return grad;
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  bool requires_grad() const { return node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const { return node_->value(0, 0); }

  void zero_grad() { node_->grad.resize(0, 0); }

  const std::shared_ptr<Node>& node() const { return node_; }
  bool defined() const { return static_cast<bool>(node_); }

  friend bool operator==(const Var& a, const Var& b) { return a.node_ == b.node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Leaf that does not participate in gradients.
Var constant(Matrix value);
/// Leaf whose gradient is accumulated by backward().
Var leaf(Matrix value);

/// Builds an interior node. `backward` receives the node and must add into
/// parent grads through Node::grad_buffer(). Parents that do not require grad
/// are still passed; check requires_grad before accumulating.
Var make_op(Matrix value, std::vector<Var> parents, std::function<void(Node&)> backward);

/// Reverse sweep from a 1 x 1 root, seeding d(root)/d(root) = 1.
void backward(const Var& root);

// ---- arithmetic ----
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// a (n x c) + row (1 x c) broadcast over rows.
Var add_row(const Var& a, const Var& row);
/// a (n x c) * row (1 x c) broadcast over rows.
Var mul_row(const Var& a, const Var& row);
/// x @ w + b, with b a 1 x out row.
Var affine(const Var& x, const Var& w, const Var& b);
/// Adds table (g x c) to every consecutive block of g rows of a.
Var add_tiled(const Var& a, const Var& table);

// ---- elementwise nonlinearities ----
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var softplus(const Var& a);
Var relu(const Var& a);
Var gelu(const Var& a);

// ---- structure ----
/// Selects rows by index; repeated indices accumulate in backward.
Var gather_rows(const Var& a, std::span<const Eigen::Index> idx);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
/// Mean over consecutive groups of `group` rows: (n x c) -> (n/group x c).
Var group_mean(const Var& a, Eigen::Index group);
/// For each consecutive block of `group` rows, prepend `token` (1 x c).
Var prepend_token(const Var& a, const Var& token, Eigen::Index group);

// ---- reductions / normalization ----
Var sum(const Var& a);
Var mean(const Var& a);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var l2_normalize_rows(const Var& a);

/// Multi-head scaled dot-product attention applied independently to each
/// consecutive block of `group` rows. q, k, v are (n x d), d divisible by
/// heads. If `weights_out` is non-null it receives the attention
/// probabilities, one (group x group) matrix per (block, head).
Var block_attention(const Var& q, const Var& k, const Var& v, Eigen::Index group, int heads,
                    std::vector<Matrix>* weights_out = nullptr);

/// Softmax over the entries of a 1 x k row.
Matrix softmax_row(const Matrix& logits);

}  // namespace sasreid::ag
