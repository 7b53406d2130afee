#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mstnet/checkpoint.hpp"
#include "mstnet/config.hpp"
#include "mstnet/data.hpp"
#include "mstnet/train.hpp"

namespace fs = std::filesystem;
using namespace mstnet;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
}

// A config file is either a flat model config, or an object with "model"
// and/or "data" sections.
nlohmann::json section(const nlohmann::json& file, const char* name) {
  if (file.contains("model") || file.contains("data")) {
    for (auto it = file.begin(); it != file.end(); ++it) {
      if (it.key() != "model" && it.key() != "data") {
        throw ConfigError("unknown config section '" + it.key() + "'");
      }
    }
    return file.value(name, nlohmann::json::object());
  }
  return std::string(name) == "model" ? file : nlohmann::json::object();
}

fs::path manifest_path(const std::string& p) {
  fs::path path(p);
  return fs::is_directory(path) ? path / "manifest.json" : path;
}

struct ModelFlags {
  std::string config_file;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "JSON config file");
    const nlohmann::json defaults = ModelConfig{};
    for (auto it = defaults.begin(); it != defaults.end(); ++it) {
      const std::string key = it.key();
      app->add_option("--" + key, overrides[key], "default " + it.value().dump())
          ->check([](const std::string&) { return std::string(); });
    }
  }

  ModelConfig resolve(CLI::App* app) const {
    ModelConfig c;
    if (!config_file.empty()) apply_json(section(read_json_file(config_file), "model"), c);
    for (const auto& [key, text] : overrides) {
      if (app->count("--" + key) > 0) set_config_value(c, key, text);
    }
    c.validate();
    return c;
  }
};

void print_summary(const data::Dataset& ds) {
  std::cout << "samples " << ds.samples.size() << " (train " << ds.train.size() << ", eval "
            << ds.eval.size() << ")\n"
            << "eeg " << ds.dims.eeg_length << "x" << ds.dims.eeg_channels << ", volume "
            << ds.dims.depth << "x" << ds.dims.height << "x" << ds.dims.width << "\n"
            << "tabular " << ds.schema.numerical.size() << " numerical, "
            << ds.schema.categorical.size() << " categorical\n";
}

int run_generate(const data::GeneratorConfig& g, const std::string& out) {
  const fs::path manifest = data::generate(g, out);
  std::cout << manifest.string() << "\n";
  return kOk;
}

int run_train(const ModelConfig& config, const std::string& data_path, const std::string& out,
              bool quiet) {
  const data::Dataset ds = data::load_dataset(manifest_path(data_path));
  train::TrainOptions opts;
  opts.run_dir = out;
  if (!quiet) {
    opts.on_epoch = [](const train::EpochRecord& r) {
      std::cout << "epoch " << r.epoch << "  loss " << r.train_loss << "  train_acc "
                << r.train_accuracy << "  eval_acc " << r.eval.accuracy << "  eval_mcc "
                << r.eval.mcc << "\n";
    };
  }
  const auto result = train::train(config, ds, opts);
  const auto& last = result.log.epochs.back();
  std::cout << "config_hash " << result.log.config_hash << "\nfinal_loss " << last.train_loss
            << "\ncheckpoint " << (fs::path(out) / "final.ckpt").string() << "\n";
  return kOk;
}

int run_eval(const std::string& ckpt, const std::string& data_path, const std::string& split,
             const std::string& out) {
  const auto model = checkpoint::load_checkpoint(ckpt);
  const data::Dataset ds = data::load_dataset(manifest_path(data_path));
  checkpoint::check_compatible(*model, ds);
  std::vector<std::size_t> idx;
  if (split == "train") {
    idx = ds.train;
  } else if (split == "eval") {
    idx = ds.eval;
  } else {
    for (std::size_t i = 0; i < ds.samples.size(); ++i) idx.push_back(i);
  }
  if (idx.empty()) throw DataError(DataError::Kind::kFormat, "split '" + split + "' is empty");
  const auto ev = train::evaluate(*model, ds, idx);
  std::ostringstream os;
  os << train::format_scores_table({{"MSTNet (" + split + ")", ev.scores}});
  os << "confusion (rows true NC/MCI/AD, cols predicted):\n";
  for (const auto& row : ev.confusion.counts) {
    os << "  " << row[0] << " " << row[1] << " " << row[2] << "\n";
  }
  std::cout << os.str();
  if (!out.empty()) {
    const nlohmann::json j{{"split", split},
                           {"samples", idx.size()},
                           {"precision", ev.scores.precision},
                           {"recall", ev.scores.recall},
                           {"f1", ev.scores.f1},
                           {"accuracy", ev.scores.accuracy},
                           {"mcc", ev.scores.mcc},
                           {"confusion", ev.confusion.counts}};
    data::detail::write_file(out, j.dump(2) + "\n");
  }
  return kOk;
}

int run_ablate(const ModelConfig& base, const std::string& data_path, const std::string& out) {
  const data::Dataset ds = data::load_dataset(manifest_path(data_path));
  std::vector<std::pair<std::string, metrics::Scores>> table;
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& row : train::ablation_rows(base)) {
    std::string dir = row.name;
    for (char& ch : dir) {
      if (!std::isalnum(static_cast<unsigned char>(ch))) ch = '_';
    }
    const auto result = train::train(row.config, ds, {fs::path(out) / dir, {}});
    const auto& last = result.log.epochs.back();
    table.emplace_back(row.name, last.eval);
    summary.push_back({{"name", row.name},
                       {"config_hash", result.log.config_hash},
                       {"parameters", result.log.trainable_parameters},
                       {"eval_accuracy", last.eval.accuracy},
                       {"eval_mcc", last.eval.mcc},
                       {"eval_f1", last.eval.f1}});
    std::cout << row.name << ": hash " << result.log.config_hash << ", "
              << result.log.trainable_parameters << " parameters, eval accuracy "
              << last.eval.accuracy << "\n";
  }
  const std::string text = train::format_scores_table(table);
  std::cout << text;
  data::detail::write_file(fs::path(out) / "ablation.txt", text);
  data::detail::write_file(fs::path(out) / "ablation.json", summary.dump(2) + "\n");
  return kOk;
}

int run_inspect(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::string head(32, '\0');
  in.read(head.data(), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(in.gcount()));
  if (head.rfind(checkpoint::kMagicLine, 0) == 0) {
    const auto h = checkpoint::read_header(path);
    std::size_t floats = 0;
    for (const auto& t : h.raw.at("tensors")) {
      std::size_t n = 1;
      for (auto e : t.at("shape")) n *= e.get<std::size_t>();
      floats += n;
    }
    std::cout << "checkpoint " << path << "\nconfig_hash " << h.config_hash << "\ntensors "
              << h.raw.at("tensors").size() << "\nparameters " << floats << "\nconfig "
              << nlohmann::json(h.config).dump() << "\n";
    return kOk;
  }
  const data::Dataset ds = data::load_dataset(manifest_path(path));
  std::cout << "dataset " << manifest_path(path).string() << "\nseed " << ds.seed << "\n";
  print_summary(ds);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MSTNet multimodal classifier: data generation, training and evaluation"};
  app.require_subcommand(1);

  data::GeneratorConfig gen;
  std::string gen_out, gen_config;
  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset");
  generate->add_option("--out", gen_out, "Output directory")->required();
  generate->add_option("--config", gen_config, "JSON file with a \"data\" section");
  generate->add_option("--n", gen.n, "Number of samples");
  generate->add_option("--seed", gen.seed, "Generator seed");
  generate->add_option("--noise", gen.noise, "Nuisance noise scale");
  generate->add_option("--train-fraction", gen.train_fraction, "Training split fraction");
  generate->add_option("--eeg-length", gen.eeg_length, "EEG time steps T");
  generate->add_option("--eeg-channels", gen.eeg_channels, "EEG channels C");
  generate->add_option("--volume-size", gen.volume_size, "Volume extent D = H = W");

  ModelFlags train_flags;
  std::string train_data, train_out;
  bool quiet = false;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a run directory");
  train_cmd->add_option("--data", train_data, "Dataset directory or manifest")->required();
  train_cmd->add_option("--out", train_out, "Run directory")->required();
  train_cmd->add_flag("--quiet", quiet, "Suppress per-epoch output");
  train_flags.attach(train_cmd);

  std::string eval_ckpt, eval_data, eval_split = "eval", eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--data", eval_data, "Dataset directory or manifest")->required();
  eval_cmd->add_option("--split", eval_split, "train, eval or all")
      ->check(CLI::IsMember({"train", "eval", "all"}));
  eval_cmd->add_option("--out", eval_out, "Write metrics JSON here");

  ModelFlags ablate_flags;
  std::string ablate_data, ablate_out;
  auto* ablate = app.add_subcommand("ablate", "Train the full model and the four ablations");
  ablate->add_option("--data", ablate_data, "Dataset directory or manifest")->required();
  ablate->add_option("--out", ablate_out, "Output directory")->required();
  ablate_flags.attach(ablate);

  std::string inspect_path;
  auto* inspect = app.add_subcommand("inspect", "Summarize a dataset manifest or checkpoint");
  inspect->add_option("path", inspect_path, "Manifest, dataset directory or checkpoint")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*generate) {
      if (!gen_config.empty()) {
        data::GeneratorConfig file_cfg = gen;
        from_json(section(read_json_file(gen_config), "data"), file_cfg);
        // Explicit flags win over the file.
        auto keep = [&](const char* flag, auto& dst, const auto& flag_value) {
          if (generate->count(flag) == 0) dst = flag_value;
        };
        keep("--n", gen.n, file_cfg.n);
        keep("--seed", gen.seed, file_cfg.seed);
        keep("--noise", gen.noise, file_cfg.noise);
        keep("--train-fraction", gen.train_fraction, file_cfg.train_fraction);
        keep("--eeg-length", gen.eeg_length, file_cfg.eeg_length);
        keep("--eeg-channels", gen.eeg_channels, file_cfg.eeg_channels);
        keep("--volume-size", gen.volume_size, file_cfg.volume_size);
        gen.eeg_frequencies = file_cfg.eeg_frequencies;
      }
      return run_generate(gen, gen_out);
    }
    if (*train_cmd) return run_train(train_flags.resolve(train_cmd), train_data, train_out, quiet);
    if (*eval_cmd) return run_eval(eval_ckpt, eval_data, eval_split, eval_out);
    if (*ablate) return run_ablate(ablate_flags.resolve(ablate), ablate_data, ablate_out);
    if (*inspect) return run_inspect(inspect_path);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
