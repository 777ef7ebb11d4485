#pragma once

// Patch-attention frame encoder: a class token plus N = (H/p)(W/p) patch
// tokens, followed by a linear projection of the class token.

#include "sasreid/image.hpp"
#include "sasreid/nn.hpp"

#include <span>
#include <vector>

namespace sasreid::encoder {

using ag::Matrix;
using ag::Var;

struct EncoderConfig {
  int image_height = 56;
  int image_width = 28;
  int patch_size = 14;
  int depth = 2;
  int heads = 2;
  int dim = 64;

  void validate() const;
  int num_patches() const { return (image_height / patch_size) * (image_width / patch_size); }
  int patch_width() const { return patch_size * patch_size * 3; }
};

/// Value-level token output for one frame.
struct TokenSet {
  ag::RowVector cls;  // 1 x d
  Matrix patches;     // N x d
};

/// Flattens frames into patch rows: frame-major, patches in raster order,
/// each row laid out (y, x, channel) and mapped from [0,1] to [-1,1].
Matrix frames_to_patches(std::span<const Image* const> frames, const EncoderConfig& cfg);

class FrameEncoder {
 public:
  /// Attention stack registers into `backbone`; the projection into `head`.
  FrameEncoder(const EncoderConfig& cfg, nn::ParamRegistry& backbone, nn::ParamRegistry& head, Rng& rng);

  const EncoderConfig& config() const { return cfg_; }

  struct Tokens {
    Var cls;      // F x d
    Var patches;  // (F*N) x d
  };
  /// `patch_rows` from frames_to_patches.
  Tokens encode(const Var& patch_rows) const;
  Var project(const Var& cls) const { return projection_(cls); }
  /// Frame features f_t, one row per frame.
  Var forward(const Var& patch_rows) const { return project(encode(patch_rows).cls); }

  TokenSet encode_frame(const Image& frame) const;

  nn::Linear& projection() { return projection_; }
  nn::Linear& patch_embedding() { return patch_embed_; }

 private:
  EncoderConfig cfg_;
  nn::Linear patch_embed_;
  Var cls_token_;
  Var position_;  // (N + 1) x d, class slot first
  std::vector<nn::EncoderLayer> layers_;
  nn::LayerNorm final_norm_;
  nn::Linear projection_;
};

}  // namespace sasreid::encoder
