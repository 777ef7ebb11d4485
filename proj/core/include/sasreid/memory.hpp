#pragma once

// Multi-proxy identity memory with momentum updates and the proxy
// contrastive objective.

#include "sasreid/autograd.hpp"
#include "sasreid/rng.hpp"

#include <span>
#include <vector>

namespace sasreid::memory {

using ag::Matrix;
using ag::RowVector;
using ag::Var;

/// v = mean of the rows of `frames` (T x d).
RowVector sequence_embed(const Matrix& frames);

class ProxyBank {
 public:
  /// Throws std::invalid_argument unless 0 <= momentum < 1, temperature > 0,
  /// identities >= 1, proxies >= 1.
  ProxyBank(int identities, int proxies, int dim, double momentum, double temperature);

  int identities() const { return identities_; }
  int proxies_per_identity() const { return proxies_; }
  int dim() const { return dim_; }
  double momentum() const { return momentum_; }
  double temperature() const { return temperature_; }

  /// Rows are unit-norm; row y*P + p holds proxy p of identity y (0-based).
  const Matrix& table() const { return table_; }
  RowVector proxy(int y, int p) const;
  bool initialized(int y) const { return initialized_[static_cast<std::size_t>(y)]; }

  /// Every proxy becomes an independent random unit vector; all identities marked uninitialized.
  void randomize(Rng& rng);
  /// Sets all proxies of y to normalize(v) and marks y initialized.
  void initialize_identity(int y, const RowVector& v);
  /// M <- normalize(mu M + (1 - mu) v_star). v_star must be unit-norm.
  void update(int y, int p, const RowVector& v_star);

  /// Restores table and flags (checkpoint load).
  void restore(Matrix table, std::vector<bool> initialized);
  const std::vector<bool>& initialized_flags() const { return initialized_; }

 private:
  void check_index(int y, int p) const;

  int identities_;
  int proxies_;
  int dim_;
  double momentum_;
  double temperature_;
  Matrix table_;
  std::vector<bool> initialized_;
};

struct Representatives {
  RowVector mean;  // normalized batch mean
  RowVector hard;  // normalized feature least similar to proxy 0
  Eigen::Index hard_index = 0;
};

/// `features` holds the identity's sequence features in batch order (n x d, n >= 1).
Representatives select_representatives(const Matrix& features, const ProxyBank& bank, int y);

/// Per-sample loss  -log( sum_p e^{cos(v,M_y^p)/tau} / sum_{y',p} e^{cos(v,M_{y'}^p)/tau} ).
double memory_loss_value(const RowVector& v, int y, const ProxyBank& bank);

/// Batch mean of the per-sample loss over rows of v (B x d); no gradient reaches the bank.
Var memory_loss(const Var& v, std::span<const int> labels, const ProxyBank& bank);

}  // namespace sasreid::memory
