#pragma once

// PK sampling, warmup + step schedule with per-group rates, Adam, and the
// training loop that ties the model, losses, augmentation and proxy bank.

#include "sasreid/augment.hpp"
#include "sasreid/config.hpp"
#include "sasreid/eval.hpp"
#include "sasreid/memory.hpp"
#include "sasreid/model.hpp"
#include "sasreid/synth.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

namespace sasreid::train {

/// Learning rate at a global iteration / epoch. Head: linear warmup from
/// warmup_start_lr to base_lr, then x decay_factor at each decay epoch
/// reached. Backbone: the same curve scaled by backbone_lr / base_lr when
/// MDLR is on, identical to head otherwise.
double lr_at(const TrainConfig& cfg, int iter, int epoch, ParamGroup group);
/// Group by name ("head" / "backbone"); throws std::invalid_argument otherwise.
double lr_at(const TrainConfig& cfg, int iter, int epoch, std::string_view group);

class PkSampler {
 public:
  /// `identities[i]` is the label of tracklet i.
  PkSampler(std::vector<int> identities, int ids_per_batch, int tracklets_per_id);

  /// One batch: P distinct identities chosen uniformly, K tracklets each
  /// (without replacement when possible, with replacement otherwise).
  std::vector<std::size_t> sample(Rng& rng) const;
  /// One pass: every identity's shuffled tracklets are cut into K-chunks
  /// (padded by resampling), and chunks are drawn P identities at a time
  /// until fewer than P identities have chunks left.
  std::vector<std::vector<std::size_t>> epoch(Rng& rng) const;

 private:
  int p_;
  int k_;
  std::map<int, std::vector<std::size_t>> by_identity_;
};

std::vector<std::size_t> pk_sample(std::span<const synth::TrackletRecord> manifest, int ids_per_batch,
                                   int tracklets_per_id, Rng& rng);

/// Adam (beta1 0.9, beta2 0.999, eps 1e-8, no weight decay).
class Adam {
 public:
  explicit Adam(std::span<const nn::NamedParam> params);
  void step(double lr);
  int steps() const { return t_; }
  std::vector<checkpoint::NamedTensor> state(const std::string& prefix) const;
  void load_state(std::span<const checkpoint::NamedTensor> tensors, const std::string& prefix);

 private:
  std::vector<nn::NamedParam> params_;
  std::vector<ag::Matrix> m_, v_;
  int t_ = 0;
};

struct MetricsRecord {
  int epoch = 0;
  int iter = 0;
  double total = 0, triplet = 0, id = 0, memory = 0, shape_prior = 0;
  double lr_head = 0, lr_backbone = 0;
};

void write_metrics(std::ostream& os, const MetricsRecord& r);

struct LossTerms {
  ag::Var triplet, id, memory, shape_prior;  // shape_prior undefined without the shape branch
  ag::Var total;
};

/// Triplet and ID terms sum over the temporal and (if present) shape branches;
/// the memory term uses the plain sequence mean v.
LossTerms compute_losses(const ReidModel::Output& out, std::span<const int> labels, const memory::ProxyBank& bank,
                         const losses::LossWeights& w);

class Trainer {
 public:
  /// `train_set` holds only training identities; labels are remapped to 0..Y-1.
  Trainer(TrainConfig cfg, std::vector<synth::Tracklet> train_set);

  /// Runs one epoch; appends one record per iteration to log().
  void run_epoch();
  /// Runs until `epochs` epochs have completed in total.
  void train_until(int epochs, const std::function<void(int epoch)>& on_epoch_end = {});
  /// One optimisation step on the given tracklet indices.
  MetricsRecord step(std::span<const std::size_t> batch);

  const std::vector<MetricsRecord>& log() const { return log_; }
  const TrainConfig& config() const { return cfg_; }
  ReidModel& model() { return *model_; }
  const ReidModel& model() const { return *model_; }
  const memory::ProxyBank& bank() const { return bank_; }
  int epoch() const { return epoch_; }
  int iteration() const { return iter_; }
  int class_of(int identity) const { return class_of_.at(identity); }

  /// Deployable checkpoint: model tensors plus bank, float32.
  void save_checkpoint(const std::filesystem::path& path) const;
  /// Full-precision resume state: parameters, Adam moments, bank, counters.
  void save_state(const std::filesystem::path& path) const;
  void load_state(const std::filesystem::path& path);

  /// Skip parameter updates for a group (used by probes).
  void freeze(ParamGroup g, bool frozen) { frozen_[g == ParamGroup::kBackbone ? 0 : 1] = frozen; }

 private:
  // Appends T augmented frames of `tracklet` to `storage`.
  void sample_frames(std::size_t tracklet, Rng& rng, std::vector<Image>& storage) const;

  TrainConfig cfg_;
  std::vector<synth::Tracklet> data_;
  std::map<int, int> class_of_;
  std::vector<int> labels_;  // class index per tracklet
  std::unique_ptr<ReidModel> model_;
  memory::ProxyBank bank_;
  Adam backbone_opt_;
  Adam head_opt_;
  PkSampler sampler_;
  Rgb mean_color_{};
  std::vector<MetricsRecord> log_;
  int epoch_ = 0;
  int iter_ = 0;
  bool frozen_[2] = {false, false};
};

/// Runs every tracklet through the model without augmentation (frames
/// evenly spaced from index 0) and fuses descriptors in input order.
eval::DescriptorSet embed(const ReidModel& model, std::span<const synth::Tracklet> tracklets, int batch_size = 32);

/// Splits a dataset by identity (first half trains).
std::vector<synth::Tracklet> select_split(const std::vector<synth::Tracklet>& all, bool train);

}  // namespace sasreid::train
