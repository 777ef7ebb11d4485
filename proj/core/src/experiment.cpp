#include "sasreid/experiment.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace sasreid::experiment {

Tensors pretrain_backbone(const PretrainConfig& pre, const TrainConfig& model, const synth::SynthConfig& data,
                          const std::function<void(int, const train::Trainer&)>& on_epoch) {
  synth::SynthConfig pool = data;
  pool.num_identities = pre.identities;
  pool.seed = pre.data_seed;

  TrainConfig cfg = model;
  cfg.seed = pre.train_seed;
  cfg.use_mdlr = false;
  cfg.use_vccj = false;
  cfg.use_mgtm = true;
  cfg.use_prsd = true;
  cfg.erase_prob = 0.0;
  cfg.base_lr = pre.lr;
  cfg.warmup_start_lr = pre.warmup_start_lr;
  cfg.decay_epochs = pre.decay_epochs;

  train::Trainer trainer(cfg, synth::render_dataset(pool));
  trainer.train_until(pre.epochs, [&](int e) {
    if (on_epoch) on_epoch(e, trainer);
  });
  return checkpoint::snapshot(trainer.model().parameters(ParamGroup::kBackbone));
}

void init_backbone(train::Trainer& trainer, std::span<const checkpoint::NamedTensor> backbone) {
  checkpoint::load_into(trainer.model().parameters(ParamGroup::kBackbone), backbone);
}

RunResult train_and_evaluate(const TrainConfig& cfg, const std::vector<synth::Tracklet>& dataset,
                             std::span<const checkpoint::NamedTensor> backbone) {
  train::Trainer trainer(cfg, train::select_split(dataset, true));
  if (!backbone.empty()) init_backbone(trainer, backbone);
  trainer.train_until(cfg.epochs);

  RunResult r;
  r.descriptors = train::embed(trainer.model(), train::select_split(dataset, false));
  r.ranking = eval::evaluate(r.descriptors);
  r.log = trainer.log();
  r.descriptor_dim = trainer.model().config().descriptor_dim();
  r.appearance_dim = cfg.dim;
  return r;
}

std::vector<LadderRow> ablation_ladder() {
  return {
      {"baseline", false, false, false, false},
      {"+MDLR", true, false, false, false},
      {"+VC-CJ", true, true, false, false},
      {"+MGTM", true, true, true, false},
      {"+PRSD", true, true, true, true},
  };
}

TrainConfig apply_row(TrainConfig base, const LadderRow& row) {
  base.use_mdlr = row.mdlr;
  base.use_vccj = row.vccj;
  base.use_mgtm = row.mgtm;
  base.use_prsd = row.prsd;
  return base;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double AblationTable::median(std::size_t row) const { return experiment::median(map3.at(row)); }

AblationTable run_ablation(const TrainConfig& base, std::span<const std::uint64_t> seeds,
                           const std::function<const std::vector<synth::Tracklet>&(std::uint64_t)>& dataset_for,
                           std::span<const checkpoint::NamedTensor> backbone,
                           const std::function<void(const LadderRow&, std::uint64_t, const RunResult&)>& on_run) {
  AblationTable table;
  table.rows = ablation_ladder();
  table.seeds.assign(seeds.begin(), seeds.end());
  table.map3.assign(table.rows.size(), {});
  for (std::uint64_t seed : seeds) {
    const auto& data = dataset_for(seed);
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      TrainConfig cfg = apply_row(base, table.rows[i]);
      cfg.seed = seed;
      const RunResult r = train_and_evaluate(cfg, data, backbone);
      table.map3[i].push_back(r.ranking.map3.value_or(0.0));
      if (on_run) on_run(table.rows[i], seed, r);
    }
  }
  return table;
}

void print_ablation(std::ostream& os, const AblationTable& table) {
  os << std::left << std::setw(10) << "row" << std::setw(6) << "MDLR" << std::setw(7) << "VC-CJ" << std::setw(6)
     << "MGTM" << std::setw(6) << "PRSD";
  for (auto s : table.seeds) os << std::setw(10) << ("seed " + std::to_string(s));
  os << "median mAP-3\n";
  auto mark = [](bool on) { return on ? "x" : "-"; };
  os << std::fixed << std::setprecision(4);
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    os << std::setw(10) << r.name << std::setw(6) << mark(r.mdlr) << std::setw(7) << mark(r.vccj) << std::setw(6)
       << mark(r.mgtm) << std::setw(6) << mark(r.prsd);
    for (double m : table.map3[i]) os << std::setw(10) << m;
    os << table.median(i) << '\n';
  }
  os.unsetf(std::ios::floatfield);
}

double clothing_margin(const eval::DescriptorSet& set, int first, int count) {
  const ag::Matrix f = set.features.middleCols(first, count);
  double same = 0, cross = 0;
  long n_same = 0, n_cross = 0;
  for (Eigen::Index a = 0; a < f.rows(); ++a) {
    for (Eigen::Index b = a + 1; b < f.rows(); ++b) {
      const auto& ma = set.meta[static_cast<std::size_t>(a)];
      const auto& mb = set.meta[static_cast<std::size_t>(b)];
      const double d = (f.row(a) - f.row(b)).norm();
      if (ma.identity != mb.identity) {
        cross += d;
        ++n_cross;
      } else if (ma.session != mb.session) {
        same += d;
        ++n_same;
      }
    }
  }
  if (n_same == 0 || n_cross == 0) throw std::invalid_argument("clothing_margin: need cross-session pairs and several identities");
  cross /= static_cast<double>(n_cross);
  same /= static_cast<double>(n_same);
  return (cross - same) / cross;
}

}  // namespace sasreid::experiment
