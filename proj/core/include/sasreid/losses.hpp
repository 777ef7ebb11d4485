#pragma once

#include "sasreid/autograd.hpp"

#include <span>

namespace sasreid::losses {

using ag::Matrix;
using ag::RowVector;
using ag::Var;

struct LossWeights {
  double lambda_id = 0.25;
  double lambda_me = 1.0;
  double lambda_alpha = 1.0;
  double margin = 0.3;
  double smoothing = 0.1;
};

/// Cross-entropy of softmax(logits) against a target with 1 - eps on y and
/// eps / (Y - 1) on every other class.
double id_loss_value(const RowVector& logits, int y, double eps);
/// Batch mean over rows of `logits` (B x Y).
Var id_loss(const Var& logits, std::span<const int> labels, double eps);

/// Batch-hard triplet loss on Euclidean distances, averaged over anchors that
/// have at least one positive and one negative. Throws if none do.
double triplet_loss_value(const Matrix& embeddings, std::span<const int> labels, double margin);
Var triplet_loss(const Var& embeddings, std::span<const int> labels, double margin);

struct LossParts {
  double triplet = 0;
  double id = 0;
  double memory = 0;
  double shape_prior = 0;
};

/// L = L_tri + lambda_id L_id + lambda_me L_me + lambda_alpha L_alpha.
double total_loss(const LossParts& parts, const LossWeights& w);
Var total_loss(const Var& triplet, const Var& id, const Var& memory, const Var& shape_prior, const LossWeights& w);

}  // namespace sasreid::losses
