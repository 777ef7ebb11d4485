#pragma once

#include "sasreid/autograd.hpp"
#include "sasreid/image.hpp"
#include "sasreid/rng.hpp"

#include <random>

namespace testing {

inline sasreid::ag::Matrix random_matrix(sasreid::Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  sasreid::ag::Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline sasreid::Image random_image(sasreid::Rng& rng, int h, int w) {
  sasreid::Image img(h, w);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& v : img.data) v = u(rng);
  return img;
}

// Central difference of a scalar function of one matrix entry.
template <typename F>
double numeric_grad(sasreid::ag::Matrix& m, Eigen::Index i, F&& f, double h = 1e-6) {
  const double saved = m.data()[i];
  m.data()[i] = saved + h;
  const double up = f();
  m.data()[i] = saved - h;
  const double down = f();
  m.data()[i] = saved;
  return (up - down) / (2 * h);
}

}  // namespace testing
