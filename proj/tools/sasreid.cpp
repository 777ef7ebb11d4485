#include "sasreid/config.hpp"
#include "sasreid/errors.hpp"
#include "sasreid/eval.hpp"
#include "sasreid/experiment.hpp"
#include "sasreid/gradcheck.hpp"
#include "sasreid/synth.hpp"
#include "sasreid/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace sasreid;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

struct ConfigFlags {
  std::string file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", file, "key = value config file (default: $SASREID_CONFIG)");
    cmd->add_option("--set", sets, "override one config key, as key=value (repeatable)");
    cmd->add_option("--seed", seed, "random seed");
    cmd->add_option("--epochs", epochs, "number of training epochs");
  }

  // built-in defaults < config file < --set < dedicated flags
  TrainConfig resolve() const {
    TrainConfig cfg;
    std::string path = file;
    if (path.empty()) {
      if (const char* env = std::getenv("SASREID_CONFIG")) path = env;
    }
    if (!path.empty()) apply_config_file(cfg, path);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    if (seed) cfg.seed = *seed;
    if (epochs) cfg.epochs = *epochs;
    cfg.validate();
    return cfg;
  }
};

void write_config(const TrainConfig& cfg, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& [k, v] : config_entries(cfg)) out << k << " = " << v << '\n';
}

std::vector<synth::Tracklet> split_of(const std::vector<synth::Tracklet>& all, const std::string& split) {
  if (split == "all") return all;
  return train::select_split(all, split == "train");
}

experiment::Tensors read_backbone(const std::string& path) {
  if (path.empty()) return {};
  return checkpoint::read_tensors(path);
}

struct SynthCmd {
  synth::SynthConfig cfg;
  std::string out;

  void attach(CLI::App* cmd) {
    cmd->add_option("--out", out, "output directory")->required();
    cmd->add_option("--identities", cfg.num_identities, "number of identities")->capture_default_str();
    cmd->add_option("--tracklets-per-cell", cfg.tracklets_per_cell, "tracklets per (identity, platform, session)")
        ->capture_default_str();
    cmd->add_option("--frames", cfg.frames_per_tracklet, "frames per tracklet")->capture_default_str();
    cmd->add_option("--height", cfg.image_height, "frame height in pixels")->capture_default_str();
    cmd->add_option("--width", cfg.image_width, "frame width in pixels")->capture_default_str();
    cmd->add_option("--noise", cfg.noise_std, "pixel noise standard deviation")->capture_default_str();
    cmd->add_option("--blur", cfg.blur_aerial, "aerial blur radius in pixels")->capture_default_str();
    cmd->add_option("--hue-cast", cfg.hue_cast, "max per-tracklet camera hue rotation")->capture_default_str();
    cmd->add_option("--seed", cfg.seed, "generator seed")->capture_default_str();
  }

  int run() const {
    const fs::path dir = out;
    const auto records = synth::generate_dataset(cfg, dir);
    std::map<std::string, int> platforms;
    std::map<int, int> sessions;
    for (const auto& r : records) {
      ++platforms[std::string(synth::to_string(r.platform))];
      ++sessions[r.session];
    }
    std::cout << "manifest " << (dir / "manifest.tsv").string() << '\n';
    std::cout << "records " << records.size() << '\n';
    std::cout << "identities " << synth::num_identities_in(records) << '\n';
    for (const auto& [p, n] : platforms) std::cout << "platform " << p << ' ' << n << '\n';
    for (const auto& [s, n] : sessions) std::cout << "session " << s << ' ' << n << '\n';
    std::cout << "checksum " << std::hex << std::setw(16) << std::setfill('0')
              << synth::dataset_checksum(dir / "manifest.tsv") << std::dec << '\n';
    return 0;
  }
};

struct PretrainCmd {
  ConfigFlags flags;
  experiment::PretrainConfig pre;
  std::string out;

  void attach(CLI::App* cmd) {
    cmd->add_option("--out", out, "output tensor file for the backbone")->required();
    cmd->add_option("--config", flags.file, "config file for architecture keys (default: $SASREID_CONFIG)");
    cmd->add_option("--set", flags.sets, "override one config key, as key=value (repeatable)");
    cmd->add_option("--identities", pre.identities, "identities in the pretraining pool")->capture_default_str();
    cmd->add_option("--pretrain-epochs", pre.epochs, "pretraining epochs")->capture_default_str();
    cmd->add_option("--lr", pre.lr, "uniform learning rate")->capture_default_str();
    cmd->add_option("--data-seed", pre.data_seed, "seed of the pretraining population")->capture_default_str();
    cmd->add_option("--seed", pre.train_seed, "training seed")->capture_default_str();
  }

  int run() const {
    const TrainConfig cfg = flags.resolve();
    synth::SynthConfig data;
    data.image_height = cfg.image_height;
    data.image_width = cfg.image_width;
    const auto tensors = experiment::pretrain_backbone(pre, cfg, data, [](int e, const train::Trainer& t) {
      std::cerr << "pretrain epoch " << e << " loss " << t.log().back().total << '\n';
    });
    checkpoint::write_tensors(tensors, out, checkpoint::Precision::kFloat64);
    std::cout << "wrote " << tensors.size() << " backbone tensors to " << out << '\n';
    return 0;
  }
};

struct TrainCmd {
  ConfigFlags flags;
  std::string manifest, out, backbone, resume, split = "train";

  void attach(CLI::App* cmd) {
    flags.attach(cmd);
    cmd->add_option("--manifest", manifest, "dataset manifest")->required();
    cmd->add_option("--out", out, "output directory for metrics and checkpoints")->required();
    cmd->add_option("--backbone-init", backbone, "initial backbone tensors (from `pretrain`)");
    cmd->add_option("--resume", resume, "resume from a state file written by an earlier run");
    cmd->add_option("--split", split, "identities to train on")
        ->check(CLI::IsMember({"train", "all"}))
        ->capture_default_str();
  }

  int run() const {
    const TrainConfig cfg = flags.resolve();
    const fs::path dir = out;
    fs::create_directories(dir);
    write_config(cfg, dir / "config.txt");

    train::Trainer trainer(cfg, split_of(synth::load_dataset(manifest), split));
    if (!backbone.empty()) experiment::init_backbone(trainer, read_backbone(backbone));
    if (!resume.empty()) trainer.load_state(resume);

    std::ofstream log(dir / "metrics.log", resume.empty() ? std::ios::trunc : std::ios::app);
    if (!log) throw DataError("cannot write " + (dir / "metrics.log").string());
    std::size_t written = 0;
    trainer.train_until(cfg.epochs, [&](int epoch) {
      const auto& records = trainer.log();
      double total = 0;
      for (std::size_t i = written; i < records.size(); ++i) {
        train::write_metrics(log, records[i]);
        total += records[i].total;
      }
      log.flush();
      std::cerr << "epoch " << epoch << " mean loss " << total / static_cast<double>(records.size() - written) << '\n';
      written = records.size();
      if (std::find(cfg.decay_epochs.begin(), cfg.decay_epochs.end(), epoch) != cfg.decay_epochs.end()) {
        trainer.save_checkpoint(dir / ("checkpoint_epoch" + std::to_string(epoch) + ".bin"));
      }
    });
    trainer.save_checkpoint(dir / "model.bin");
    trainer.save_state(dir / "state.bin");
    std::cout << "trained " << trainer.epoch() << " epochs, " << trainer.iteration() << " iterations\n";
    std::cout << "checkpoint " << (dir / "model.bin").string() << '\n';
    return 0;
  }
};

struct EmbedCmd {
  std::string checkpoint_path, manifest, out, config, split = "all";

  void attach(CLI::App* cmd) {
    cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
    cmd->add_option("--manifest", manifest, "dataset manifest")->required();
    cmd->add_option("--out", out, "output embedding file")->required();
    cmd->add_option("--config", config, "config the checkpoint must agree with (default: $SASREID_CONFIG)");
    cmd->add_option("--split", split, "identities to embed")
        ->check(CLI::IsMember({"all", "train", "test"}))
        ->capture_default_str();
  }

  int run() const {
    const auto tensors = checkpoint::read_tensors(checkpoint_path);
    const ModelConfig mc = ReidModel::config_from_state(tensors);
    std::string path = config;
    if (path.empty()) {
      if (const char* env = std::getenv("SASREID_CONFIG")) path = env;
    }
    if (!path.empty()) {
      TrainConfig cfg;
      apply_config_file(cfg, path);
      if (cfg.dim != mc.encoder.dim) {
        throw DataError("checkpoint dim " + std::to_string(mc.encoder.dim) + " does not match config dim " +
                        std::to_string(cfg.dim));
      }
    }
    ReidModel model(mc);
    model.load_state(tensors);
    const auto data = split_of(synth::load_dataset(manifest), split);
    const auto set = train::embed(model, data);
    eval::write_embeddings(set, out);
    std::cout << "count " << set.features.rows() << " dim " << set.features.cols() << '\n';
    return 0;
  }
};

struct EvalCmd {
  std::vector<std::string> files;
  bool machine = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("embeddings", files, "embedding files (rows are concatenated)")->required();
    cmd->add_flag("--machine", machine, "print `protocol metric value` lines instead of the table");
  }

  int run() const {
    eval::DescriptorSet all;
    for (const auto& f : files) {
      auto part = eval::read_embeddings(f);
      if (all.meta.empty()) {
        all = std::move(part);
        continue;
      }
      if (part.features.cols() != all.features.cols()) throw DataError("dimension mismatch in " + f);
      ag::Matrix joined(all.features.rows() + part.features.rows(), all.features.cols());
      joined << all.features, part.features;
      all.features = std::move(joined);
      all.meta.insert(all.meta.end(), part.meta.begin(), part.meta.end());
    }
    const auto result = eval::evaluate(all);
    if (machine) {
      eval::print_machine(std::cout, result);
    } else {
      eval::print_report(std::cout, result);
    }
    return 0;
  }
};

struct GradcheckCmd {
  std::string component;
  double tolerance = 1e-3;
  std::uint64_t seed = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--component", component, "check one component only")
        ->check(CLI::IsMember(gradcheck::component_names()));
    cmd->add_option("--tolerance", tolerance, "max relative error")->capture_default_str();
    cmd->add_option("--seed", seed, "seed for the random inputs")->capture_default_str();
  }

  int run() const {
    const auto results = gradcheck::run(gradcheck::standard_cases(seed), component, tolerance);
    bool ok = true;
    for (const auto& r : results) {
      std::cout << std::left << std::setw(12) << r.component << " max_rel_error " << std::scientific
                << std::setprecision(3) << r.max_rel_error << std::defaultfloat << " entries " << r.entries << ' '
                << (r.passed ? "PASS" : "FAIL") << '\n';
      ok = ok && r.passed;
    }
    return ok ? 0 : kExitNumerical;
  }
};

struct AblateCmd {
  ConfigFlags flags;
  std::string manifest, backbone, table_out;
  std::vector<std::uint64_t> seeds{0, 1, 2};

  void attach(CLI::App* cmd) {
    flags.attach(cmd);
    cmd->add_option("--manifest", manifest, "dataset manifest (first half of the identities trains)")->required();
    cmd->add_option("--seeds", seeds, "training seeds shared by every row")->delimiter(',')->capture_default_str();
    cmd->add_option("--backbone-init", backbone, "initial backbone tensors shared by every row");
    cmd->add_option("--table", table_out, "also write the table to this file");
  }

  int run() const {
    const TrainConfig cfg = flags.resolve();
    const auto data = synth::load_dataset(manifest);
    const auto init = read_backbone(backbone);
    const auto table = experiment::run_ablation(
        cfg, seeds, [&](std::uint64_t) -> const std::vector<synth::Tracklet>& { return data; }, init,
        [](const experiment::LadderRow& row, std::uint64_t seed, const experiment::RunResult& r) {
          std::cerr << row.name << " seed " << seed << " mAP-3 " << r.ranking.map3.value_or(0.0) << '\n';
        });
    experiment::print_ablation(std::cout, table);
    if (!table_out.empty()) {
      std::ofstream f(table_out);
      if (!f) throw DataError("cannot write " + table_out);
      experiment::print_ablation(f, table);
    }
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic aerial-ground video person re-identification toolkit"};
  app.require_subcommand(1, 1);

  SynthCmd synth_cmd;
  PretrainCmd pretrain_cmd;
  TrainCmd train_cmd;
  EmbedCmd embed_cmd;
  EvalCmd eval_cmd;
  GradcheckCmd gradcheck_cmd;
  AblateCmd ablate_cmd;

  synth_cmd.attach(app.add_subcommand("synth", "generate a synthetic dataset"));
  pretrain_cmd.attach(app.add_subcommand("pretrain", "pretrain a backbone on a separate synthetic population"));
  train_cmd.attach(app.add_subcommand("train", "train a model on a dataset"));
  embed_cmd.attach(app.add_subcommand("embed", "write fused descriptors for every tracklet"));
  eval_cmd.attach(app.add_subcommand("eval", "evaluate embeddings under A->G, G->A and A->A"));
  gradcheck_cmd.attach(app.add_subcommand("gradcheck", "finite-difference gradient checks"));
  ablate_cmd.attach(app.add_subcommand("ablate", "train and evaluate the module ablation ladder"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (app.got_subcommand("synth")) return synth_cmd.run();
    if (app.got_subcommand("pretrain")) return pretrain_cmd.run();
    if (app.got_subcommand("train")) return train_cmd.run();
    if (app.got_subcommand("embed")) return embed_cmd.run();
    if (app.got_subcommand("eval")) return eval_cmd.run();
    if (app.got_subcommand("gradcheck")) return gradcheck_cmd.run();
    if (app.got_subcommand("ablate")) return ablate_cmd.run();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
