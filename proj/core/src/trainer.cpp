#include "sasreid/trainer.hpp"

#include "sasreid/errors.hpp"
#include "sasreid/losses.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <set>
#include <stdexcept>

namespace sasreid::train {

double lr_at(const TrainConfig& cfg, int iter, int epoch, ParamGroup group) {
  if (iter < 0 || epoch < 0) throw std::invalid_argument("lr_at: counters must be non-negative");
  double lr = cfg.base_lr;
  if (iter < cfg.warmup_iters) {
    const double frac = static_cast<double>(iter) / cfg.warmup_iters;
    lr = cfg.warmup_start_lr + (cfg.base_lr - cfg.warmup_start_lr) * frac;
  }
  for (int e : cfg.decay_epochs) {
    if (epoch >= e) lr *= cfg.decay_factor;
  }
  if (group == ParamGroup::kBackbone && cfg.use_mdlr && cfg.base_lr > 0) lr *= cfg.backbone_lr / cfg.base_lr;
  return lr;
}

double lr_at(const TrainConfig& cfg, int iter, int epoch, std::string_view group) {
  if (group == "head") return lr_at(cfg, iter, epoch, ParamGroup::kHead);
  if (group == "backbone") return lr_at(cfg, iter, epoch, ParamGroup::kBackbone);
  throw std::invalid_argument("lr_at: unknown parameter group '" + std::string(group) + "'");
}

PkSampler::PkSampler(std::vector<int> identities, int ids_per_batch, int tracklets_per_id)
    : p_(ids_per_batch), k_(tracklets_per_id) {
  if (p_ < 1 || k_ < 1) throw std::invalid_argument("PkSampler: P and K must be positive");
  for (std::size_t i = 0; i < identities.size(); ++i) by_identity_[identities[i]].push_back(i);
  if (static_cast<int>(by_identity_.size()) < p_) {
    throw std::invalid_argument("PkSampler: need at least " + std::to_string(p_) + " identities, have " +
                                std::to_string(by_identity_.size()));
  }
}

std::vector<std::size_t> PkSampler::sample(Rng& rng) const {
  std::vector<int> ids;
  for (const auto& [id, _] : by_identity_) ids.push_back(id);
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<std::size_t> batch;
  batch.reserve(static_cast<std::size_t>(p_ * k_));
  for (int i = 0; i < p_; ++i) {
    auto pool = by_identity_.at(ids[static_cast<std::size_t>(i)]);
    if (static_cast<int>(pool.size()) >= k_) {
      std::shuffle(pool.begin(), pool.end(), rng);
      batch.insert(batch.end(), pool.begin(), pool.begin() + k_);
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      for (int k = 0; k < k_; ++k) batch.push_back(pool[pick(rng)]);
    }
  }
  return batch;
}

std::vector<std::vector<std::size_t>> PkSampler::epoch(Rng& rng) const {
  std::map<int, std::vector<std::vector<std::size_t>>> chunks;
  for (const auto& [id, pool_ref] : by_identity_) {
    auto pool = pool_ref;
    if (static_cast<int>(pool.size()) < k_) {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      while (static_cast<int>(pool.size()) < k_) pool.push_back(pool_ref[pick(rng)]);
    }
    std::shuffle(pool.begin(), pool.end(), rng);
    auto& list = chunks[id];
    for (std::size_t i = 0; i + static_cast<std::size_t>(k_) <= pool.size(); i += static_cast<std::size_t>(k_)) {
      list.emplace_back(pool.begin() + static_cast<std::ptrdiff_t>(i), pool.begin() + static_cast<std::ptrdiff_t>(i) + k_);
    }
  }
  std::vector<std::vector<std::size_t>> batches;
  std::vector<int> available;
  for (const auto& [id, list] : chunks) available.push_back(id);
  while (static_cast<int>(available.size()) >= p_) {
    std::shuffle(available.begin(), available.end(), rng);
    std::vector<std::size_t> batch;
    for (int i = 0; i < p_; ++i) {
      auto& list = chunks[available[static_cast<std::size_t>(i)]];
      batch.insert(batch.end(), list.back().begin(), list.back().end());
      list.pop_back();
    }
    batches.push_back(std::move(batch));
    std::erase_if(available, [&](int id) { return chunks[id].empty(); });
    std::sort(available.begin(), available.end());
  }
  return batches;
}

std::vector<std::size_t> pk_sample(std::span<const synth::TrackletRecord> manifest, int ids_per_batch,
                                   int tracklets_per_id, Rng& rng) {
  std::vector<int> ids;
  ids.reserve(manifest.size());
  for (const auto& r : manifest) ids.push_back(r.identity);
  return PkSampler(std::move(ids), ids_per_batch, tracklets_per_id).sample(rng);
}

Adam::Adam(std::span<const nn::NamedParam> params) : params_(params.begin(), params.end()) {
  for (const auto& p : params_) {
    m_.push_back(ag::Matrix::Zero(p.var.rows(), p.var.cols()));
    v_.push_back(ag::Matrix::Zero(p.var.rows(), p.var.cols()));
  }
}

void Adam::step(double lr) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++t_;
  const double c1 = 1.0 - std::pow(b1, t_);
  const double c2 = 1.0 - std::pow(b2, t_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto var = params_[i].var;
    if (!var.has_grad()) continue;
    const ag::Matrix& g = var.grad();
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g.cwiseProduct(g);
    if (lr == 0.0) continue;
    var.mutable_value().array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
  }
}

std::vector<checkpoint::NamedTensor> Adam::state(const std::string& prefix) const {
  std::vector<checkpoint::NamedTensor> out;
  ag::Matrix t(1, 1);
  t(0, 0) = t_;
  out.push_back({prefix + "step", t});
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.push_back({prefix + "m." + params_[i].name, m_[i]});
    out.push_back({prefix + "v." + params_[i].name, v_[i]});
  }
  return out;
}

void Adam::load_state(std::span<const checkpoint::NamedTensor> tensors, const std::string& prefix) {
  const auto* t = checkpoint::find(tensors, prefix + "step");
  if (!t) throw DataError("state is missing '" + prefix + "step'");
  t_ = static_cast<int>(std::lround(t->value(0, 0)));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto* m = checkpoint::find(tensors, prefix + "m." + params_[i].name);
    const auto* v = checkpoint::find(tensors, prefix + "v." + params_[i].name);
    if (!m || !v) throw DataError("state is missing optimizer moments for '" + params_[i].name + "'");
    m_[i] = m->value;
    v_[i] = v->value;
  }
}

void write_metrics(std::ostream& os, const MetricsRecord& r) {
  os << r.epoch << ' ' << r.iter << std::setprecision(10) << ' ' << r.total << ' ' << r.triplet << ' ' << r.id << ' '
     << r.memory << ' ' << r.shape_prior << ' ' << r.lr_head << ' ' << r.lr_backbone << '\n';
}

LossTerms compute_losses(const ReidModel::Output& out, std::span<const int> labels, const memory::ProxyBank& bank,
                         const losses::LossWeights& w) {
  LossTerms t;
  t.memory = memory::memory_loss(out.v, labels, bank);
  t.triplet = losses::triplet_loss(out.temporal, labels, w.margin);
  t.id = losses::id_loss(out.temporal_logits, labels, w.smoothing);
  if (out.shape) {
    t.triplet = ag::add(t.triplet, losses::triplet_loss(out.shape->pooled, labels, w.margin));
    t.id = ag::add(t.id, losses::id_loss(out.shape_logits, labels, w.smoothing));
    t.shape_prior = shape::shape_prior_loss(out.shape->alpha_bar, shape::canonical_prior());
  }
  t.total = losses::total_loss(t.triplet, t.id, t.memory, t.shape_prior, w);
  return t;
}

namespace {

std::vector<int> remap(const std::vector<synth::Tracklet>& data, std::map<int, int>& class_of) {
  std::set<int> ids;
  for (const auto& t : data) ids.insert(t.record.identity);
  int k = 0;
  for (int id : ids) class_of[id] = k++;
  std::vector<int> labels;
  labels.reserve(data.size());
  for (const auto& t : data) labels.push_back(class_of[t.record.identity]);
  return labels;
}

int count_classes(const std::vector<synth::Tracklet>& data) {
  std::set<int> ids;
  for (const auto& t : data) ids.insert(t.record.identity);
  return static_cast<int>(ids.size());
}

std::vector<std::vector<Image>> all_frames(const std::vector<synth::Tracklet>& data) {
  std::vector<std::vector<Image>> out;
  out.reserve(data.size());
  for (const auto& t : data) out.push_back(t.frames);
  return out;
}

}  // namespace

Trainer::Trainer(TrainConfig cfg, std::vector<synth::Tracklet> train_set)
    : cfg_((cfg.validate(), std::move(cfg))),
      data_(std::move(train_set)),
      labels_(remap(data_, class_of_)),
      model_(std::make_unique<ReidModel>(cfg_.model_config(count_classes(data_)))),
      bank_(count_classes(data_), cfg_.proxies, cfg_.dim, cfg_.momentum, cfg_.temperature),
      backbone_opt_(model_->parameters(ParamGroup::kBackbone)),
      head_opt_(model_->parameters(ParamGroup::kHead)),
      sampler_(labels_, cfg_.ids_per_batch, cfg_.tracklets_per_id),
      mean_color_(augment::mean_color(all_frames(data_))) {
  Rng rng = derive_rng(cfg_.seed, 15);
  bank_.randomize(rng);
}

void Trainer::sample_frames(std::size_t tracklet, Rng& rng, std::vector<Image>& storage) const {
  const auto& frames = data_[tracklet].frames;
  const int total = static_cast<int>(frames.size());
  const int T = cfg_.frames_per_tracklet;
  const int step = total / T;
  const int phase = std::uniform_int_distribution<int>(0, step - 1)(rng);
  std::vector<Image> picked;
  for (int i : frame_indices(total, T, phase)) picked.push_back(frames[static_cast<std::size_t>(i)]);

  const auto jitter = augment::sample_jitter(rng, cfg_.hue_bound, cfg_.use_vccj ? cfg_.jitter_prob : 0.0);
  picked = augment::apply_tracklet(picked, jitter);
  augment::FlipEraseOptions opts;
  opts.flip_probability = cfg_.flip_prob;
  opts.erase_probability = cfg_.erase_prob;
  opts.fill = mean_color_;
  picked = augment::flip_and_erase(picked, rng, opts);

  for (auto& img : picked) storage.push_back(std::move(img));
}

MetricsRecord Trainer::step(std::span<const std::size_t> batch) {
  Rng rng = derive_rng(cfg_.seed, 2'000'000 + static_cast<std::uint64_t>(iter_));
  const int T = cfg_.frames_per_tracklet;
  std::vector<Image> storage;
  storage.reserve(batch.size() * static_cast<std::size_t>(T));
  std::vector<int> labels;
  for (std::size_t idx : batch) {
    if (static_cast<int>(data_[idx].frames.size()) < T) {
      throw DataError("tracklet " + data_[idx].record.tracklet_id + " has fewer than " + std::to_string(T) + " frames");
    }
    sample_frames(idx, rng, storage);
    labels.push_back(labels_[idx]);
  }
  std::vector<const Image*> flat;
  flat.reserve(storage.size());
  for (const auto& img : storage) flat.push_back(&img);

  const ReidModel::Output out = model_->forward(encoder::frames_to_patches(flat, model_->config().encoder));

  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!bank_.initialized(labels[i])) bank_.initialize_identity(labels[i], out.v.value().row(static_cast<Eigen::Index>(i)));
  }

  const LossTerms terms = compute_losses(out, labels, bank_, cfg_.weights);

  MetricsRecord rec;
  rec.epoch = epoch_;
  rec.iter = iter_;
  rec.total = terms.total.item();
  rec.triplet = terms.triplet.item();
  rec.id = terms.id.item();
  rec.memory = terms.memory.item();
  rec.shape_prior = terms.shape_prior.defined() ? terms.shape_prior.item() : 0.0;
  rec.lr_head = lr_at(cfg_, iter_, epoch_, ParamGroup::kHead);
  rec.lr_backbone = lr_at(cfg_, iter_, epoch_, ParamGroup::kBackbone);

  const std::pair<const char*, double> parts[] = {
      {"triplet", rec.triplet}, {"id", rec.id}, {"memory", rec.memory}, {"shape_prior", rec.shape_prior}};
  for (const auto& [name, value] : parts) {
    if (!std::isfinite(value)) {
      throw NumericalError("non-finite " + std::string(name) + " loss at iteration " + std::to_string(iter_));
    }
  }

  for (auto g : {ParamGroup::kBackbone, ParamGroup::kHead}) {
    for (const auto& p : model_->parameters(g)) {
      auto v = p.var;
      v.zero_grad();
    }
  }
  ag::backward(terms.total);
  if (!frozen_[0]) backbone_opt_.step(rec.lr_backbone);
  if (!frozen_[1]) head_opt_.step(rec.lr_head);

  // Proxy refresh after the loss, from the batch's sequence features.
  std::map<int, std::vector<Eigen::Index>> rows_of;
  for (std::size_t i = 0; i < labels.size(); ++i) rows_of[labels[i]].push_back(static_cast<Eigen::Index>(i));
  for (const auto& [y, rows] : rows_of) {
    ag::Matrix feats(static_cast<Eigen::Index>(rows.size()), out.v.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) feats.row(static_cast<Eigen::Index>(k)) = out.v.value().row(rows[k]);
    const auto reps = memory::select_representatives(feats, bank_, y);
    bank_.update(y, 0, reps.mean);
    if (bank_.proxies_per_identity() > 1) bank_.update(y, 1, reps.hard);
  }

  ++iter_;
  log_.push_back(rec);
  return rec;
}

void Trainer::run_epoch() {
  Rng rng = derive_rng(cfg_.seed, 1'000'000 + static_cast<std::uint64_t>(epoch_));
  for (const auto& batch : sampler_.epoch(rng)) step(batch);
  ++epoch_;
}

void Trainer::train_until(int epochs, const std::function<void(int)>& on_epoch_end) {
  while (epoch_ < epochs) {
    run_epoch();
    if (on_epoch_end) on_epoch_end(epoch_);
  }
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  auto tensors = model_->state();
  tensors.push_back({"memory.proxies", bank_.table()});
  checkpoint::write_tensors(tensors, path, checkpoint::Precision::kFloat32);
}

void Trainer::save_state(const std::filesystem::path& path) const {
  auto tensors = model_->state();
  tensors.push_back({"memory.proxies", bank_.table()});
  ag::Matrix flags(1, bank_.identities());
  for (int y = 0; y < bank_.identities(); ++y) flags(0, y) = bank_.initialized(y) ? 1.0 : 0.0;
  tensors.push_back({"memory.initialized", flags});
  ag::Matrix counters(1, 2);
  counters << epoch_, iter_;
  tensors.push_back({"trainer.counters", counters});
  for (auto& t : backbone_opt_.state("adam.backbone.")) tensors.push_back(std::move(t));
  for (auto& t : head_opt_.state("adam.head.")) tensors.push_back(std::move(t));
  checkpoint::write_tensors(tensors, path, checkpoint::Precision::kFloat64);
}

void Trainer::load_state(const std::filesystem::path& path) {
  const auto tensors = checkpoint::read_tensors(path);
  model_->load_state(tensors);
  const auto* table = checkpoint::find(tensors, "memory.proxies");
  const auto* flags = checkpoint::find(tensors, "memory.initialized");
  const auto* counters = checkpoint::find(tensors, "trainer.counters");
  if (!table || !flags || !counters) throw DataError("resume state is incomplete: " + path.string());
  std::vector<bool> init(static_cast<std::size_t>(flags->value.size()));
  for (Eigen::Index i = 0; i < flags->value.size(); ++i) init[static_cast<std::size_t>(i)] = flags->value.data()[i] != 0.0;
  bank_.restore(table->value, std::move(init));
  epoch_ = static_cast<int>(std::lround(counters->value(0, 0)));
  iter_ = static_cast<int>(std::lround(counters->value(0, 1)));
  backbone_opt_.load_state(tensors, "adam.backbone.");
  head_opt_.load_state(tensors, "adam.head.");
}

eval::DescriptorSet embed(const ReidModel& model, std::span<const synth::Tracklet> tracklets, int batch_size) {
  const int T = model.config().frames;
  eval::DescriptorSet set;
  set.features.resize(static_cast<Eigen::Index>(tracklets.size()), model.config().descriptor_dim());
  for (std::size_t start = 0; start < tracklets.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(tracklets.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<std::vector<const Image*>> batch;
    for (std::size_t i = start; i < end; ++i) {
      const auto& frames = tracklets[i].frames;
      std::vector<const Image*> picked;
      for (int k : frame_indices(static_cast<int>(frames.size()), T, 0)) picked.push_back(&frames[static_cast<std::size_t>(k)]);
      batch.push_back(std::move(picked));
    }
    const auto out = model.forward(batch);
    set.features.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) = model.descriptors(out);
  }
  for (const auto& t : tracklets) {
    set.meta.push_back({t.record.tracklet_id, t.record.identity, t.record.platform, t.record.session});
  }
  return set;
}

std::vector<synth::Tracklet> select_split(const std::vector<synth::Tracklet>& all, bool train) {
  std::vector<synth::TrackletRecord> recs;
  for (const auto& t : all) recs.push_back(t.record);
  const int Y = synth::num_identities_in(recs);
  std::vector<synth::Tracklet> out;
  for (const auto& t : all) {
    if (synth::is_train_identity(t.record.identity, Y) == train) out.push_back(t);
  }
  return out;
}

}  // namespace sasreid::train
