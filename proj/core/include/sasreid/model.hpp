#pragma once

// Full network: frame encoder -> {sequence mean v, temporal h_M, shape f_S}
// plus identity classifiers for the temporal and shape branches.

#include "sasreid/checkpoint.hpp"
#include "sasreid/encoder.hpp"
#include "sasreid/shape.hpp"
#include "sasreid/synth.hpp"
#include "sasreid/temporal.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

namespace sasreid {

struct ModelConfig {
  encoder::EncoderConfig encoder;
  std::vector<int> strides{2, 4, 8};
  int frames = 8;
  int num_classes = 16;
  bool use_mgtm = true;
  bool use_prsd = true;
  int shape_width = 64;
  int shape_layers = 4;
  int shape_heads = 4;
  std::uint64_t seed = 0;

  /// Width of the fused retrieval descriptor.
  int descriptor_dim() const { return 2 * encoder.dim + (use_prsd ? shape::kShapeDim : 0); }
  void validate() const;
};

enum class ParamGroup { kBackbone, kHead };

class ReidModel {
 public:
  explicit ReidModel(const ModelConfig& cfg);
  ReidModel(const ReidModel&) = delete;
  ReidModel& operator=(const ReidModel&) = delete;

  const ModelConfig& config() const { return cfg_; }

  struct Output {
    ag::Var frames;    // (B*T) x d
    ag::Var v;         // B x d
    ag::Var temporal;  // h_M, or v when the temporal module is disabled
    std::optional<shape::ShapeBranch::Output> shape;
    ag::Var temporal_logits;
    ag::Var shape_logits;
  };

  /// `patch_rows` covers B tracklets of config().frames frames each.
  Output forward(const ag::Matrix& patch_rows) const;
  Output forward(const std::vector<std::vector<const Image*>>& tracklets) const;

  /// Fused descriptors, one row per tracklet.
  ag::Matrix descriptors(const Output& out) const;

  std::span<const nn::NamedParam> parameters(ParamGroup g) const {
    return g == ParamGroup::kBackbone ? backbone_.params() : head_.params();
  }
  std::size_t parameter_count() const { return backbone_.scalar_count() + head_.scalar_count(); }

  encoder::FrameEncoder& encoder() { return *encoder_; }
  const encoder::FrameEncoder& encoder() const { return *encoder_; }
  temporal::TemporalModule* temporal() { return temporal_.get(); }
  shape::ShapeBranch* shape_branch() { return shape_.get(); }

  /// Architecture tensors ("meta.*") followed by every parameter.
  std::vector<checkpoint::NamedTensor> state() const;
  void load_state(std::span<const checkpoint::NamedTensor> tensors);
  /// Reads "meta.*" tensors back into a config.
  static ModelConfig config_from_state(std::span<const checkpoint::NamedTensor> tensors);

 private:
  ModelConfig cfg_;
  nn::ParamRegistry backbone_;
  nn::ParamRegistry head_;
  std::unique_ptr<encoder::FrameEncoder> encoder_;
  std::unique_ptr<temporal::TemporalModule> temporal_;
  std::unique_ptr<shape::ShapeBranch> shape_;
  nn::Linear temporal_classifier_;
  nn::Linear shape_classifier_;
};

/// Evenly spaced frame indices: phase + k * (total / count), k < count.
std::vector<int> frame_indices(int total, int count, int phase);

}  // namespace sasreid
