#include "sasreid/gradcheck.hpp"

#include "sasreid/losses.hpp"
#include "sasreid/memory.hpp"
#include "sasreid/model.hpp"
#include "sasreid/rng.hpp"
#include "sasreid/shape.hpp"
#include "sasreid/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>

namespace sasreid::gradcheck {
namespace {

ag::Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  ag::Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

ag::Var find_param(const ReidModel& model, const std::string& name) {
  for (auto g : {ParamGroup::kBackbone, ParamGroup::kHead}) {
    for (const auto& p : model.parameters(g)) {
      if (p.name == name) return p.var;
    }
  }
  throw std::logic_error("gradcheck: no parameter named " + name);
}

// A small but complete model with every branch enabled.
struct ModelFixture {
  std::unique_ptr<ReidModel> model;
  std::unique_ptr<memory::ProxyBank> bank;
  ag::Matrix patches;
  std::vector<int> labels;
  losses::LossWeights weights;

  ag::Var total() const {
    const auto out = model->forward(patches);
    return train::compute_losses(out, labels, *bank, weights).total;
  }
};

std::shared_ptr<ModelFixture> make_fixture(std::uint64_t seed) {
  ModelConfig cfg;
  cfg.encoder.image_height = 28;
  cfg.encoder.image_width = 14;
  cfg.encoder.patch_size = 7;
  cfg.encoder.depth = 1;
  cfg.encoder.heads = 2;
  cfg.encoder.dim = 16;
  cfg.frames = 8;
  cfg.strides = {2, 4, 8};
  cfg.num_classes = 3;
  cfg.shape_width = 16;
  cfg.shape_layers = 1;
  cfg.shape_heads = 2;
  cfg.seed = seed;

  auto f = std::make_shared<ModelFixture>();
  f->model = std::make_unique<ReidModel>(cfg);
  Rng rng = derive_rng(seed, 77);
  const int B = 4;
  f->labels = {0, 0, 1, 2};
  f->patches = random_matrix(rng, B * cfg.frames * cfg.encoder.num_patches(), cfg.encoder.patch_width(), 0.5);
  f->bank = std::make_unique<memory::ProxyBank>(cfg.num_classes, 2, cfg.encoder.dim, 0.2, 1.0);
  f->bank->randomize(rng);
  // Fusion logits start at zero; move them off the symmetric point.
  auto logits = find_param(*f->model, "temporal.fusion_logits");
  logits.mutable_value() = random_matrix(rng, 1, logits.cols());
  return f;
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradResult check(const GradCase& c, double tolerance, double step) {
  for (auto v : c.inputs) v.zero_grad();
  ag::backward(c.loss());

  GradResult r;
  r.component = c.component;
  for (auto input : c.inputs) {
    const ag::Matrix analytic = input.has_grad() ? input.grad() : ag::Matrix::Zero(input.rows(), input.cols());
    std::vector<Eigen::Index> order(static_cast<std::size_t>(analytic.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    if (c.max_entries > 0 && static_cast<int>(order.size()) > c.max_entries) {
      std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return std::abs(analytic.data()[a]) > std::abs(analytic.data()[b]);
      });
      order.resize(static_cast<std::size_t>(c.max_entries));
    }
    for (Eigen::Index i : order) {
      double& x = input.mutable_value().data()[i];
      const double saved = x;
      x = saved + step;
      const double up = c.loss().item();
      x = saved - step;
      const double down = c.loss().item();
      x = saved;
      const double numeric = (up - down) / (2 * step);
      r.max_rel_error = std::max(r.max_rel_error, relative_error(analytic.data()[i], numeric));
      ++r.entries;
    }
  }
  r.passed = r.entries > 0 && r.max_rel_error <= tolerance;
  return r;
}

std::vector<GradCase> standard_cases(std::uint64_t seed) {
  std::vector<GradCase> cases;
  Rng rng = derive_rng(seed, 5);

  {
    auto bank = std::make_shared<memory::ProxyBank>(5, 2, 8, 0.2, 1.0);
    bank->randomize(rng);
    auto v = ag::leaf(random_matrix(rng, 4, 8));
    auto labels = std::make_shared<std::vector<int>>(std::vector<int>{0, 3, 3, 4});
    cases.push_back({"memory", [=] { return memory::memory_loss(v, *labels, *bank); }, {v}});
  }
  {
    auto logits = ag::leaf(random_matrix(rng, 6, 5));
    auto labels = std::make_shared<std::vector<int>>(std::vector<int>{0, 1, 4, 2, 2, 3});
    cases.push_back({"id", [=] { return losses::id_loss(logits, *labels, 0.1); }, {logits}});
  }
  {
    auto emb = ag::leaf(random_matrix(rng, 8, 6));
    auto labels = std::make_shared<std::vector<int>>(std::vector<int>{0, 0, 1, 1, 2, 2, 3, 3});
    // Margin large enough that every anchor stays active under the perturbation.
    cases.push_back({"triplet", [=] { return losses::triplet_loss(emb, *labels, 5.0); }, {emb}});
  }
  {
    auto alpha = ag::leaf(random_matrix(rng, 16, shape::kShapeDim));
    cases.push_back({"shape_prior", [=] { return shape::shape_prior_loss(alpha, shape::canonical_prior()); }, {alpha}});
  }

  auto fixture = make_fixture(seed);
  auto total = [fixture] { return fixture->total(); };
  cases.push_back({"fusion", total, {find_param(*fixture->model, "temporal.fusion_logits")}});
  cases.push_back({"mixer", total, {find_param(*fixture->model, "temporal.mixer_s2.gate_b.weight")}, 12});
  cases.push_back({"encoder", total, {find_param(*fixture->model, "encoder.layer0.attn.value.weight")}, 12});
  return cases;
}

std::vector<GradResult> run(const std::vector<GradCase>& cases, const std::string& only, double tolerance) {
  std::vector<GradResult> out;
  for (const auto& c : cases) {
    if (only.empty() || c.component == only) out.push_back(check(c, tolerance));
  }
  return out;
}

std::vector<std::string> component_names() {
  return {"memory", "id", "triplet", "shape_prior", "fusion", "mixer", "encoder"};
}

}  // namespace sasreid::gradcheck
