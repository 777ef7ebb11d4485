#include "helpers.hpp"
#include "sasreid/experiment.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace sasreid;
using namespace sasreid::experiment;

namespace {

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.dim = 32;
  cfg.depth = 1;
  return cfg;
}

const std::vector<synth::Tracklet>& tiny_data() {
  static const auto data = [] {
    synth::SynthConfig sc;
    sc.num_identities = 8;
    sc.tracklets_per_cell = 1;
    sc.frames_per_tracklet = 8;
    return synth::render_dataset(sc);
  }();
  return data;
}

eval::DescriptorMeta meta(int identity, int session) {
  return {"t", identity, synth::Platform::kGround, session};
}

}  // namespace

TEST_CASE("ladder layout") {
  const auto rows = ablation_ladder();
  REQUIRE(rows.size() == 5);
  CHECK(rows[0].name == "baseline");
  CHECK(rows[4].name == "+PRSD");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const int prev = rows[i - 1].mdlr + rows[i - 1].vccj + rows[i - 1].mgtm + rows[i - 1].prsd;
    const int cur = rows[i].mdlr + rows[i].vccj + rows[i].mgtm + rows[i].prsd;
    CHECK(cur == prev + 1);
  }
  const auto cfg = apply_row(TrainConfig{}, rows[0]);
  CHECK_FALSE(cfg.use_mdlr);
  CHECK_FALSE(cfg.use_prsd);
}

TEST_CASE("all-off row reproduces a plain baseline run bit for bit") {
  const auto& data = tiny_data();
  TrainConfig plain = tiny_config();
  plain.use_mdlr = plain.use_vccj = plain.use_mgtm = plain.use_prsd = false;
  const auto direct = train_and_evaluate(plain, data, {});

  const std::vector<std::uint64_t> seeds{0};
  std::optional<RunResult> baseline;
  const auto table = run_ablation(
      tiny_config(), seeds, [&](std::uint64_t) -> const std::vector<synth::Tracklet>& { return data; }, {},
      [&](const LadderRow& row, std::uint64_t, const RunResult& r) {
        if (row.name == "baseline") baseline = r;
      });
  REQUIRE(baseline.has_value());
  CHECK(baseline->descriptors.features == direct.descriptors.features);
  CHECK(table.map3[0][0] == direct.ranking.map3.value_or(0.0));
  REQUIRE(table.map3.size() == 5);

  std::ostringstream os;
  print_ablation(os, table);
  CHECK(os.str().find("+VC-CJ") != std::string::npos);
}

TEST_CASE("descriptor shrinks by the shape width without the shape branch") {
  TrainConfig with = tiny_config();
  TrainConfig without = tiny_config();
  without.use_prsd = false;
  with.epochs = without.epochs = 0;
  const auto a = train_and_evaluate(with, tiny_data(), {});
  const auto b = train_and_evaluate(without, tiny_data(), {});
  CHECK(a.descriptor_dim == 2 * 32 + 10);
  CHECK(b.descriptor_dim == a.descriptor_dim - 10);
  CHECK(a.descriptors.features.cols() == a.descriptor_dim);
}

TEST_CASE("pretrained backbone is loaded into a fresh trainer") {
  PretrainConfig pre;
  pre.identities = 8;
  pre.epochs = 1;
  synth::SynthConfig sc;
  sc.tracklets_per_cell = 1;
  sc.frames_per_tracklet = 8;
  const auto tensors = pretrain_backbone(pre, tiny_config(), sc);
  REQUIRE_FALSE(tensors.empty());
  train::Trainer trainer(tiny_config(), train::select_split(tiny_data(), true));
  init_backbone(trainer, tensors);
  for (const auto& p : trainer.model().parameters(ParamGroup::kBackbone)) {
    const auto* t = checkpoint::find(tensors, p.name);
    REQUIRE(t != nullptr);
    CHECK(t->value == p.var.value());
  }
}

TEST_CASE("clothing margin") {
  eval::DescriptorSet set;
  set.features = ag::Matrix{{0.0, 0.0}, {0.0, 1.0}, {3.0, 0.0}, {3.0, 1.0}};
  set.meta = {meta(1, 1), meta(1, 2), meta(2, 1), meta(2, 2)};
  // same-identity cross-session pairs: distance 1, 1; cross-identity: 3, sqrt(10), sqrt(10), 3
  const double cross = (6 + 2 * std::sqrt(10.0)) / 4;
  CHECK(clothing_margin(set, 0, 2) == doctest::Approx((cross - 1) / cross));
  CHECK(clothing_margin(set, 0, 1) == doctest::Approx(1.0));
  set.meta = {meta(1, 1), meta(1, 1), meta(2, 1), meta(2, 1)};
  CHECK_THROWS(clothing_margin(set, 0, 2));
}

TEST_CASE("median") {
  CHECK(median({3.0}) == 3.0);
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK_THROWS(median({}));
}
