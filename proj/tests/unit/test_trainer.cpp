#include "helpers.hpp"
#include "sasreid/trainer.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

using namespace sasreid;
using namespace sasreid::train;

namespace {

TrainConfig toy_config(std::uint64_t seed = 0) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.epochs = 2;
  cfg.dim = 32;
  cfg.depth = 1;
  cfg.decay_epochs = {1};
  return cfg;
}

std::vector<synth::Tracklet> toy_data(int identities = 8) {
  synth::SynthConfig sc;
  sc.num_identities = identities;
  sc.tracklets_per_cell = 1;
  sc.frames_per_tracklet = 8;
  return synth::render_dataset(sc);
}

double epoch_mean(const std::vector<MetricsRecord>& log, int epoch) {
  double s = 0;
  int n = 0;
  for (const auto& r : log) {
    if (r.epoch == epoch) {
      s += r.total;
      ++n;
    }
  }
  return s / n;
}

void check_logs_equal(const std::vector<MetricsRecord>& a, const std::vector<MetricsRecord>& b, double tol) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].epoch == b[i].epoch);
    CHECK(a[i].iter == b[i].iter);
    CHECK(std::abs(a[i].total - b[i].total) <= tol);
    CHECK(std::abs(a[i].memory - b[i].memory) <= tol);
    CHECK(a[i].lr_head == b[i].lr_head);
  }
}

std::vector<ag::Matrix> all_values(const ReidModel& model) {
  std::vector<ag::Matrix> out;
  for (ParamGroup g : {ParamGroup::kBackbone, ParamGroup::kHead})
    for (const auto& p : model.parameters(g)) out.push_back(p.var.value());
  return out;
}

}  // namespace

TEST_CASE("learning-rate schedule") {
  const TrainConfig cfg;
  const auto head = [&](int iter, int epoch) { return lr_at(cfg, iter, epoch, ParamGroup::kHead); };
  const auto back = [&](int iter, int epoch) { return lr_at(cfg, iter, epoch, ParamGroup::kBackbone); };
  CHECK(head(0, 0) == doctest::Approx(3.5e-5).epsilon(1e-12));
  CHECK(head(5, 0) == doctest::Approx(3.5e-5 + 0.5 * (3.5e-4 - 3.5e-5)).epsilon(1e-12));
  CHECK(head(100, 5) == doctest::Approx(3.5e-4).epsilon(1e-12));
  CHECK(head(1000, 15) == doctest::Approx(3.5e-5).epsilon(1e-12));
  CHECK(head(1000, 25) == doctest::Approx(3.5e-6).epsilon(1e-12));
  CHECK(head(1000, 35) == doctest::Approx(3.5e-7).epsilon(1e-12));
  CHECK(back(1000, 35) == doctest::Approx(5e-9).epsilon(1e-12));
  CHECK(back(0, 0) == doctest::Approx(5e-7).epsilon(1e-12));
  CHECK(lr_at(cfg, 1000, 15, "head") == head(1000, 15));
  CHECK_THROWS(lr_at(cfg, 0, 0, "decoder"));

  double prev = 1e300;
  for (int epoch = 0; epoch < 40; ++epoch) {
    const int iter = 10 + epoch * 7;
    CHECK(head(iter, epoch) <= prev);
    prev = head(iter, epoch);
    CHECK(head(iter, epoch) / back(iter, epoch) == doctest::Approx(70.0).epsilon(1e-12));
  }

  TrainConfig uniform = cfg;
  uniform.use_mdlr = false;
  CHECK(lr_at(uniform, 500, 5, ParamGroup::kBackbone) == lr_at(uniform, 500, 5, ParamGroup::kHead));
}

TEST_CASE("PK sampler") {
  SUBCASE("exact cover of 4 ids x 4 tracklets") {
    std::vector<int> ids;
    for (int id = 0; id < 4; ++id)
      for (int k = 0; k < 4; ++k) ids.push_back(id);
    PkSampler sampler(ids, 4, 4);
    Rng rng(1);
    for (int trial = 0; trial < 10; ++trial) {
      const auto batches = sampler.epoch(rng);
      REQUIRE(batches.size() == 1);
      std::multiset<std::size_t> seen(batches[0].begin(), batches[0].end());
      CHECK(seen.size() == 16);
      for (std::size_t i = 0; i < 16; ++i) CHECK(seen.count(i) == 1);
    }
  }
  SUBCASE("single tracklet is repeated") {
    PkSampler sampler({0, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3}, 4, 4);
    Rng rng(2);
    const auto batch = sampler.sample(rng);
    CHECK(batch.size() == 16);
    CHECK(std::count(batch.begin(), batch.end(), std::size_t{0}) == 4);
  }
  SUBCASE("batches hold P distinct identities with K each") {
    std::vector<int> ids;
    for (int id = 0; id < 10; ++id)
      for (int k = 0; k < 3 + id % 4; ++k) ids.push_back(id);
    PkSampler sampler(ids, 4, 4);
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      std::map<int, int> per_id;
      for (std::size_t i : sampler.sample(rng)) ++per_id[ids[i]];
      CHECK(per_id.size() == 4);
      for (const auto& [id, n] : per_id) CHECK(n == 4);
    }
  }
  SUBCASE("identity frequency is uniform") {
    std::vector<int> ids;
    for (int id = 0; id < 10; ++id)
      for (int k = 0; k < 4; ++k) ids.push_back(id);
    PkSampler sampler(ids, 4, 4);
    Rng rng(4);
    const int n = 10000;
    std::vector<int> hits(10, 0);
    for (int b = 0; b < n; ++b) {
      std::set<int> chosen;
      for (std::size_t i : sampler.sample(rng)) chosen.insert(ids[i]);
      for (int id : chosen) ++hits[static_cast<std::size_t>(id)];
    }
    const double p = 0.4;
    const double sigma = std::sqrt(n * p * (1 - p));
    for (int h : hits) CHECK(std::abs(h - n * p) < 3 * sigma);
  }
  SUBCASE("too few identities") { CHECK_THROWS(PkSampler({0, 0, 1, 1, 2}, 4, 4)); }
}

TEST_CASE("zero learning rate leaves parameters bit-identical") {
  TrainConfig cfg = toy_config();
  cfg.base_lr = 0;
  cfg.backbone_lr = 0;
  cfg.warmup_start_lr = 0;
  Trainer trainer(cfg, select_split(toy_data(), true));
  const auto before = all_values(trainer.model());
  trainer.run_epoch();
  CHECK(all_values(trainer.model()) == before);
}

TEST_CASE("toy training reduces the loss across seeds") {
  const auto data = toy_data();
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    TrainConfig cfg = toy_config(seed);
    cfg.epochs = 6;
    Trainer trainer(cfg, data);
    trainer.train_until(cfg.epochs);
    const auto& log = trainer.log();
    REQUIRE_FALSE(log.empty());
    CHECK(epoch_mean(log, cfg.epochs - 1) < log.front().total);
    for (const auto& r : log) CHECK(std::isfinite(r.total));
  }
}

TEST_CASE("determinism and resume") {
  const auto data = toy_data();
  TrainConfig cfg = toy_config(3);
  cfg.epochs = 3;

  Trainer full(cfg, data);
  full.train_until(3);

  SUBCASE("same seed, same log") {
    Trainer again(cfg, data);
    again.train_until(3);
    check_logs_equal(full.log(), again.log(), 1e-6);
  }
  SUBCASE("resume from saved state") {
    const auto path = std::filesystem::temp_directory_path() / "sasreid_test_trainer_state.bin";
    Trainer first(cfg, data);
    first.train_until(1);
    first.save_state(path);
    Trainer resumed(cfg, data);
    resumed.load_state(path);
    CHECK(resumed.epoch() == 1);
    CHECK(resumed.iteration() == first.iteration());
    resumed.train_until(3);
    std::vector<MetricsRecord> tail;
    for (const auto& r : full.log())
      if (r.epoch >= 1) tail.push_back(r);
    check_logs_equal(tail, resumed.log(), 1e-6);
    std::filesystem::remove(path);
  }
}

TEST_CASE("metrics record format") {
  std::ostringstream os;
  write_metrics(os, MetricsRecord{2, 17, 1.5, 0.5, 0.25, 0.5, 0.125, 3.5e-4, 5e-6});
  std::istringstream in(os.str());
  std::vector<std::string> fields;
  for (std::string f; in >> f;) fields.push_back(f);
  CHECK(fields.size() == 9);
  CHECK(fields[0] == "2");
  CHECK(fields[1] == "17");
  CHECK(std::stod(fields[2]) == 1.5);
}

TEST_CASE("identity split") {
  const auto data = toy_data();
  const auto train = select_split(data, true);
  const auto test = select_split(data, false);
  CHECK(train.size() + test.size() == data.size());
  for (const auto& t : train) CHECK(t.record.identity <= 4);
  for (const auto& t : test) CHECK(t.record.identity > 4);
}
