#pragma once

// Experiment drivers shared by the CLI and the acceptance suite: backbone
// pretraining, train-then-evaluate on held-out identities, and the ablation
// ladder.

#include "sasreid/checkpoint.hpp"
#include "sasreid/config.hpp"
#include "sasreid/eval.hpp"
#include "sasreid/synth.hpp"
#include "sasreid/trainer.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace sasreid::experiment {

using Tensors = std::vector<checkpoint::NamedTensor>;

/// Backbone pretraining on a separately seeded identity population. Runs the
/// full architecture at one uniform rate without colour jitter or erasing.
struct PretrainConfig {
  int identities = 96;
  int epochs = 40;
  double lr = 1e-3;
  double warmup_start_lr = 1e-4;
  std::vector<int> decay_epochs{25, 35};
  std::uint64_t data_seed = 999;
  std::uint64_t train_seed = 0;
};

/// `model` supplies architecture fields; `data` supplies rendering fields
/// (its identity count and seed are replaced).
Tensors pretrain_backbone(const PretrainConfig& pre, const TrainConfig& model, const synth::SynthConfig& data,
                          const std::function<void(int epoch, const train::Trainer&)>& on_epoch = {});

void init_backbone(train::Trainer& trainer, std::span<const checkpoint::NamedTensor> backbone);

struct RunResult {
  eval::DescriptorSet descriptors;  // held-out identities
  eval::RankingResult ranking;
  std::vector<train::MetricsRecord> log;
  int descriptor_dim = 0;
  int appearance_dim = 0;  // d; f_S starts at column 2d
};

/// Trains on the training identities of `dataset` and evaluates on the rest.
/// `backbone` may be empty (random initialisation).
RunResult train_and_evaluate(const TrainConfig& cfg, const std::vector<synth::Tracklet>& dataset,
                             std::span<const checkpoint::NamedTensor> backbone);

struct LadderRow {
  std::string name;
  bool mdlr = false, vccj = false, mgtm = false, prsd = false;
};

/// baseline, +MDLR, +VC-CJ, +MGTM, +PRSD; each row adds one module.
std::vector<LadderRow> ablation_ladder();
TrainConfig apply_row(TrainConfig base, const LadderRow& row);

struct AblationTable {
  std::vector<LadderRow> rows;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<double>> map3;  // [row][seed]
  double median(std::size_t row) const;
};

/// Every row is trained with each seed; `dataset_for(seed)` provides the data
/// shared by all rows of that seed.
AblationTable run_ablation(const TrainConfig& base, std::span<const std::uint64_t> seeds,
                           const std::function<const std::vector<synth::Tracklet>&(std::uint64_t)>& dataset_for,
                           std::span<const checkpoint::NamedTensor> backbone,
                           const std::function<void(const LadderRow&, std::uint64_t, const RunResult&)>& on_run = {});

void print_ablation(std::ostream& os, const AblationTable& table);

/// Relative gap between the mean cross-identity distance and the mean
/// cross-session same-identity distance, over columns [first, first + count):
/// (cross_id - same_id) / cross_id.
double clothing_margin(const eval::DescriptorSet& set, int first, int count);

double median(std::vector<double> values);

}  // namespace sasreid::experiment
