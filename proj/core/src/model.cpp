#include "sasreid/model.hpp"

#include "sasreid/errors.hpp"
#include "sasreid/eval.hpp"

#include <cmath>
#include <stdexcept>

namespace sasreid {

void ModelConfig::validate() const {
  encoder.validate();
  if (frames < 1) throw std::invalid_argument("model: frames must be >= 1");
  for (int s : strides) {
    if (s < 1 || s > frames) throw std::invalid_argument("model: every stride must lie in [1, frames]");
  }
  if (num_classes < 2) throw std::invalid_argument("model: need at least two training identities");
  if (shape_width % shape_heads != 0) throw std::invalid_argument("model: shape width not divisible by heads");
}

ReidModel::ReidModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  // Separate init streams keep each module's weights independent of which others exist.
  Rng enc_rng = derive_rng(cfg_.seed, 11);
  encoder_ = std::make_unique<encoder::FrameEncoder>(cfg_.encoder, backbone_, head_, enc_rng);
  const int d = cfg_.encoder.dim;
  if (cfg_.use_mgtm) {
    Rng rng = derive_rng(cfg_.seed, 12);
    temporal_ = std::make_unique<temporal::TemporalModule>(cfg_.strides, d, head_, rng);
  }
  if (cfg_.use_prsd) {
    Rng rng = derive_rng(cfg_.seed, 13);
    shape::ShapeConfig sc;
    sc.feature_dim = d;
    sc.width = cfg_.shape_width;
    sc.layers = cfg_.shape_layers;
    sc.heads = cfg_.shape_heads;
    sc.max_frames = cfg_.frames;
    shape_ = std::make_unique<shape::ShapeBranch>(sc, head_, rng);
  }
  Rng cls_rng = derive_rng(cfg_.seed, 14);
  temporal_classifier_ = nn::Linear(head_, "classifier.temporal", d, cfg_.num_classes, cls_rng, false);
  if (cfg_.use_prsd) {
    shape_classifier_ = nn::Linear(head_, "classifier.shape", shape::kShapeDim, cfg_.num_classes, cls_rng, false);
  }
}

ReidModel::Output ReidModel::forward(const ag::Matrix& patch_rows) const {
  const int T = cfg_.frames;
  Output out;
  out.frames = encoder_->forward(ag::constant(patch_rows));
  if (out.frames.rows() % T != 0) throw std::invalid_argument("model: frame count not a multiple of T");
  out.v = ag::group_mean(out.frames, T);
  out.temporal = temporal_ ? temporal_->forward(out.frames, out.v, T) : out.v;
  out.temporal_logits = temporal_classifier_(out.temporal);
  if (shape_) {
    out.shape = shape_->forward(out.frames, T);
    out.shape_logits = shape_classifier_(out.shape->pooled);
  }
  return out;
}

ReidModel::Output ReidModel::forward(const std::vector<std::vector<const Image*>>& tracklets) const {
  std::vector<const Image*> flat;
  for (const auto& t : tracklets) {
    if (static_cast<int>(t.size()) != cfg_.frames) throw std::invalid_argument("model: tracklet has wrong frame count");
    flat.insert(flat.end(), t.begin(), t.end());
  }
  return forward(encoder::frames_to_patches(flat, cfg_.encoder));
}

ag::Matrix ReidModel::descriptors(const Output& out) const {
  const Eigen::Index B = out.v.rows();
  ag::Matrix d(B, cfg_.descriptor_dim());
  for (Eigen::Index b = 0; b < B; ++b) {
    ag::RowVector fs = out.shape ? ag::RowVector(out.shape->pooled.value().row(b)) : ag::RowVector(0);
    d.row(b) = eval::fuse_descriptor(out.v.value().row(b), out.temporal.value().row(b), fs);
  }
  return d;
}

namespace {

checkpoint::NamedTensor scalar(const std::string& name, double v) {
  ag::Matrix m(1, 1);
  m(0, 0) = v;
  return {name, m};
}

}  // namespace

std::vector<checkpoint::NamedTensor> ReidModel::state() const {
  std::vector<checkpoint::NamedTensor> out;
  out.push_back(scalar("meta.image_height", cfg_.encoder.image_height));
  out.push_back(scalar("meta.image_width", cfg_.encoder.image_width));
  out.push_back(scalar("meta.patch_size", cfg_.encoder.patch_size));
  out.push_back(scalar("meta.depth", cfg_.encoder.depth));
  out.push_back(scalar("meta.heads", cfg_.encoder.heads));
  out.push_back(scalar("meta.dim", cfg_.encoder.dim));
  out.push_back(scalar("meta.frames", cfg_.frames));
  out.push_back(scalar("meta.num_classes", cfg_.num_classes));
  out.push_back(scalar("meta.use_mgtm", cfg_.use_mgtm ? 1 : 0));
  out.push_back(scalar("meta.use_prsd", cfg_.use_prsd ? 1 : 0));
  out.push_back(scalar("meta.shape_width", cfg_.shape_width));
  out.push_back(scalar("meta.shape_layers", cfg_.shape_layers));
  out.push_back(scalar("meta.shape_heads", cfg_.shape_heads));
  ag::Matrix strides(1, static_cast<Eigen::Index>(cfg_.strides.size()));
  for (std::size_t i = 0; i < cfg_.strides.size(); ++i) strides(0, static_cast<Eigen::Index>(i)) = cfg_.strides[i];
  out.push_back({"meta.strides", strides});
  for (auto g : {ParamGroup::kBackbone, ParamGroup::kHead}) {
    auto s = checkpoint::snapshot(parameters(g));
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

void ReidModel::load_state(std::span<const checkpoint::NamedTensor> tensors) {
  checkpoint::load_into(backbone_.params(), tensors);
  checkpoint::load_into(head_.params(), tensors);
}

ModelConfig ReidModel::config_from_state(std::span<const checkpoint::NamedTensor> tensors) {
  auto get = [&](const char* name) -> int {
    const auto* t = checkpoint::find(tensors, name);
    if (!t || t->value.size() != 1) throw DataError(std::string("checkpoint is missing '") + name + "'");
    return static_cast<int>(std::lround(t->value(0, 0)));
  };
  ModelConfig c;
  c.encoder.image_height = get("meta.image_height");
  c.encoder.image_width = get("meta.image_width");
  c.encoder.patch_size = get("meta.patch_size");
  c.encoder.depth = get("meta.depth");
  c.encoder.heads = get("meta.heads");
  c.encoder.dim = get("meta.dim");
  c.frames = get("meta.frames");
  c.num_classes = get("meta.num_classes");
  c.use_mgtm = get("meta.use_mgtm") != 0;
  c.use_prsd = get("meta.use_prsd") != 0;
  c.shape_width = get("meta.shape_width");
  c.shape_layers = get("meta.shape_layers");
  c.shape_heads = get("meta.shape_heads");
  const auto* s = checkpoint::find(tensors, "meta.strides");
  if (!s) throw DataError("checkpoint is missing 'meta.strides'");
  c.strides.clear();
  for (Eigen::Index i = 0; i < s->value.size(); ++i) c.strides.push_back(static_cast<int>(std::lround(s->value.data()[i])));
  return c;
}

std::vector<int> frame_indices(int total, int count, int phase) {
  if (count < 1 || total < count) throw std::invalid_argument("frame_indices: need total >= count >= 1");
  const int step = total / count;
  if (phase < 0 || phase >= step) throw std::invalid_argument("frame_indices: phase out of range");
  std::vector<int> out(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) out[static_cast<std::size_t>(k)] = phase + k * step;
  return out;
}

}  // namespace sasreid
