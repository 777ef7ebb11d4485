#include "sasreid/encoder.hpp"

#include <stdexcept>
#include <string>

namespace sasreid::encoder {

void EncoderConfig::validate() const {
  if (patch_size <= 0 || image_height <= 0 || image_width <= 0 || image_height % patch_size != 0 ||
      image_width % patch_size != 0) {
    throw std::invalid_argument("encoder: image dimensions must be positive multiples of patch_size");
  }
  if (depth < 0 || heads <= 0 || dim <= 0 || dim % heads != 0) {
    throw std::invalid_argument("encoder: dim must be a positive multiple of heads");
  }
}

Matrix frames_to_patches(std::span<const Image* const> frames, const EncoderConfig& cfg) {
  const int p = cfg.patch_size;
  const int gh = cfg.image_height / p;
  const int gw = cfg.image_width / p;
  const int n = cfg.num_patches();
  Matrix out(static_cast<Eigen::Index>(frames.size()) * n, cfg.patch_width());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const Image& img = *frames[f];
    if (img.height != cfg.image_height || img.width != cfg.image_width) {
      throw std::invalid_argument("encoder: frame is " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                                  ", expected " + std::to_string(cfg.image_height) + "x" +
                                  std::to_string(cfg.image_width));
    }
    for (int pr = 0; pr < gh; ++pr) {
      for (int pc = 0; pc < gw; ++pc) {
        const Eigen::Index row = static_cast<Eigen::Index>(f) * n + pr * gw + pc;
        Eigen::Index col = 0;
        for (int y = 0; y < p; ++y) {
          for (int x = 0; x < p; ++x) {
            for (int c = 0; c < 3; ++c) out(row, col++) = 2.0 * img.at(pr * p + y, pc * p + x, c) - 1.0;
          }
        }
      }
    }
  }
  return out;
}

FrameEncoder::FrameEncoder(const EncoderConfig& cfg, nn::ParamRegistry& backbone, nn::ParamRegistry& head, Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  const int d = cfg_.dim;
  patch_embed_ = nn::Linear(backbone, "encoder.patch_embed", cfg_.patch_width(), d, rng);
  cls_token_ = backbone.add("encoder.cls_token", nn::normal_matrix(rng, 1, d, 0.02));
  position_ = backbone.add("encoder.position", nn::normal_matrix(rng, cfg_.num_patches() + 1, d, 0.02));
  for (int i = 0; i < cfg_.depth; ++i) {
    layers_.emplace_back(backbone, "encoder.layer" + std::to_string(i), d, cfg_.heads, 4 * d, rng);
  }
  final_norm_ = nn::LayerNorm(backbone, "encoder.final_norm", d);
  projection_ = nn::Linear(head, "encoder.projection", d, d, rng);
}

FrameEncoder::Tokens FrameEncoder::encode(const Var& patch_rows) const {
  const Eigen::Index n = cfg_.num_patches();
  if (patch_rows.cols() != cfg_.patch_width() || patch_rows.rows() % n != 0) {
    throw std::invalid_argument("encoder: patch matrix shape mismatch");
  }
  const Eigen::Index frames = patch_rows.rows() / n;
  Var x = ag::prepend_token(patch_embed_(patch_rows), cls_token_, n);
  x = ag::add_tiled(x, position_);
  for (const auto& layer : layers_) x = layer(x, n + 1);
  x = final_norm_(x);

  std::vector<Eigen::Index> cls_rows;
  std::vector<Eigen::Index> patch_idx;
  cls_rows.reserve(static_cast<std::size_t>(frames));
  patch_idx.reserve(static_cast<std::size_t>(frames * n));
  for (Eigen::Index f = 0; f < frames; ++f) {
    cls_rows.push_back(f * (n + 1));
    for (Eigen::Index i = 1; i <= n; ++i) patch_idx.push_back(f * (n + 1) + i);
  }
  return {ag::gather_rows(x, cls_rows), ag::gather_rows(x, patch_idx)};
}

TokenSet FrameEncoder::encode_frame(const Image& frame) const {
  const Image* frames[] = {&frame};
  const Tokens t = encode(ag::constant(frames_to_patches(frames, cfg_)));
  return {t.cls.value().row(0), t.patches.value()};
}

}  // namespace sasreid::encoder
