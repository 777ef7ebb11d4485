#pragma once

// Training/experiment configuration and its `key = value` text form.

#include "sasreid/losses.hpp"
#include "sasreid/model.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace sasreid {

struct TrainConfig {
  // schedule
  int epochs = 40;
  int ids_per_batch = 4;
  int tracklets_per_id = 4;
  int frames_per_tracklet = 8;
  double base_lr = 3.5e-4;
  double backbone_lr = 5e-6;
  int warmup_iters = 10;
  double warmup_start_lr = 3.5e-5;
  std::vector<int> decay_epochs{10, 20, 30};
  double decay_factor = 0.1;
  std::uint64_t seed = 0;

  // memory
  int proxies = 2;
  double momentum = 0.2;
  double temperature = 1.0;

  // augmentation
  double hue_bound = 0.3;
  double jitter_prob = 0.5;
  double flip_prob = 0.5;
  double erase_prob = 0.5;

  losses::LossWeights weights;

  // model
  int dim = 64;
  int depth = 2;
  int heads = 2;
  int patch_size = 14;
  int image_height = 56;
  int image_width = 28;
  std::vector<int> strides{2, 4, 8};

  // ablation toggles
  bool use_mdlr = true;
  bool use_vccj = true;
  bool use_mgtm = true;
  bool use_prsd = true;

  ModelConfig model_config(int num_classes) const;
  void validate() const;
};

/// Applies one `key = value` assignment. Throws ConfigError on unknown keys or bad values.
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);
/// Every recognised key with its current value, in a stable order.
std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& cfg);

/// Parses `key = value` lines; `#` starts a comment. Throws ConfigError naming the line.
void apply_config_text(TrainConfig& cfg, const std::string& text, const std::string& source = "<config>");
void apply_config_file(TrainConfig& cfg, const std::filesystem::path& path);

}  // namespace sasreid
