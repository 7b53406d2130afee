#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mstnet/checkpoint.hpp"
#include "mstnet/config.hpp"
#include "mstnet/data.hpp"
#include "mstnet/metrics.hpp"
#include "mstnet/model.hpp"

namespace mstnet::train {

struct Evaluation {
  metrics::ConfusionMatrix confusion;
  metrics::Scores scores;
  std::vector<std::size_t> predictions;
};

template <typename Real>
Evaluation evaluate(const MstNet<Real>& model, const data::Dataset& ds,
                    const std::vector<std::size_t>& indices) {
  Evaluation ev;
  std::vector<std::size_t> labels;
  for (std::size_t i : indices) {
    labels.push_back(ds.samples[i].label);
    ev.predictions.push_back(model.predict(ds.samples[i]));
  }
  ev.confusion = metrics::confusion(labels, ev.predictions);
  if (!indices.empty()) ev.scores = metrics::evaluate(ev.confusion);
  return ev;
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;
  double train_accuracy = 0;  // running accuracy over the epoch's forwards
  metrics::Scores eval;
  double wall_seconds = 0;
};

struct RunLog {
  std::vector<EpochRecord> epochs;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::size_t trainable_parameters = 0;
};

inline std::string metrics_csv_header() {
  return "epoch,train_loss,train_accuracy,eval_precision,eval_recall,eval_f1,eval_accuracy,"
         "eval_mcc,wall_seconds,config_hash,seed\n";
}

inline std::string metrics_csv_row(const EpochRecord& r, const RunLog& log) {
  std::ostringstream os;
  os << std::setprecision(9) << r.epoch << ',' << r.train_loss << ',' << r.train_accuracy << ','
     << r.eval.precision << ',' << r.eval.recall << ',' << r.eval.f1 << ',' << r.eval.accuracy
     << ',' << r.eval.mcc << ',' << std::setprecision(4) << r.wall_seconds << ','
     << log.config_hash << ',' << log.seed << '\n';
  return os.str();
}

struct TrainOptions {
  // Run directory for config copy, checkpoints, metrics.csv and log.txt;
  // empty to keep everything in memory.
  std::filesystem::path run_dir;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  std::unique_ptr<MstNet<float>> model;
  RunLog log;
};

// Cross-entropy training with Adam. Batches are drawn from a seeded shuffle
// of the training split; each sample is run on a fresh tape and its scaled
// gradient accumulates into the parameters before one update per batch.
inline TrainResult train(const ModelConfig& config, const data::Dataset& ds,
                         const TrainOptions& options = {}) {
  config.validate();
  if (ds.train.empty()) throw ConfigError("training split is empty");
  const NormalizationStats stats = data::compute_stats(ds, ds.train);
  TrainResult result;
  result.model = std::make_unique<MstNet<float>>(config, ds.schema, ds.dims, stats);
  MstNet<float>& model = *result.model;

  RunLog& log = result.log;
  log.config_hash = config_hash(config);
  log.seed = config.seed;
  const ParameterList<float> params = model.parameters();
  log.trainable_parameters = parameter_count(params);

  namespace fs = std::filesystem;
  std::ofstream csv, text;
  if (!options.run_dir.empty()) {
    fs::create_directories(options.run_dir);
    std::ofstream(options.run_dir / "config.json") << nlohmann::json(config).dump(2) << "\n";
    csv.open(options.run_dir / "metrics.csv", std::ios::trunc);
    csv << metrics_csv_header();
    text.open(options.run_dir / "log.txt", std::ios::trunc);
    text << "config_hash " << log.config_hash << "\nseed " << config.seed
         << "\ntrainable_parameters " << log.trainable_parameters << "\ntrain_samples "
         << ds.train.size() << "\neval_samples " << ds.eval.size() << "\n";
  }

  Adam<float> optimizer(params, AdamOptions{config.learning_rate});
  std::mt19937_64 rng(config.seed ^ 0x5bd1e995ull);
  const std::size_t batch = std::min(config.batch_size, ds.train.size());
  std::vector<std::size_t> order = ds.train;
  double best_accuracy = -1;
  std::size_t step = 0;
  const auto t0 = std::chrono::steady_clock::now();

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const float inv = 1.0f / static_cast<float>(end - start);
      optimizer.zero_grad();
      for (std::size_t b = start; b < end; ++b) {
        const Sample& s = ds.samples[order[b]];
        Tape<float> tape;
        TapeScope<float> scope(tape);
        const Tensor<float> z = model.logits(s, &rng);
        const Tensor<float> loss = cross_entropy(z, s.label);
        const float value = loss.item();
        if (!std::isfinite(value)) {
          throw NumericError("non-finite loss at step " + std::to_string(step) + " (epoch " +
                             std::to_string(epoch) + ", sample " + s.id + ")");
        }
        loss_sum += value;
        std::size_t arg = 0;
        for (std::size_t k = 1; k < z.size(); ++k) {
          if (z[k] > z[arg]) arg = k;
        }
        correct += arg == s.label;
        tape.backward(scale(loss, inv));
      }
      optimizer.step();
      ++step;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    if (!ds.eval.empty()) rec.eval = evaluate(model, ds, ds.eval).scores;
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.epochs.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);

    if (!options.run_dir.empty()) {
      csv << metrics_csv_row(rec, log) << std::flush;
      text << "epoch " << epoch << " loss " << rec.train_loss << " eval_accuracy "
           << rec.eval.accuracy << "\n";
      if (!ds.eval.empty() && rec.eval.accuracy > best_accuracy) {
        best_accuracy = rec.eval.accuracy;
        checkpoint::save_checkpoint(model, options.run_dir / "best.ckpt");
      }
    }
  }
  if (!options.run_dir.empty()) {
    checkpoint::save_checkpoint(model, options.run_dir / "final.ckpt");
  }
  return result;
}

// The four ablation rows plus the full model, in a fixed order.
struct AblationRow {
  std::string name;
  ModelConfig config;
};

inline std::vector<AblationRow> ablation_rows(const ModelConfig& base) {
  std::vector<AblationRow> rows;
  ModelConfig full = base;
  full.no_denseblock = full.no_timesblock = full.no_cmaa = full.no_feature_biases = false;
  rows.push_back({"MSTNet (full)", full});
  ModelConfig c = full;
  c.no_denseblock = true;
  rows.push_back({"w/o DenseBlock", c});
  c = full;
  c.no_timesblock = true;
  rows.push_back({"w/o TimesBlock", c});
  c = full;
  c.no_cmaa = true;
  rows.push_back({"w/o CMAA", c});
  c = full;
  c.no_feature_biases = true;
  rows.push_back({"w/o Feature Biases", c});
  return rows;
}

inline std::string format_scores_table(
    const std::vector<std::pair<std::string, metrics::Scores>>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(22) << "Method" << std::right << std::setw(11) << "Precision"
     << std::setw(9) << "Recall" << std::setw(11) << "F1-score" << std::setw(11) << "Accuracy"
     << std::setw(9) << "MCC" << "\n";
  os << std::fixed << std::setprecision(2);
  for (const auto& [name, s] : rows) {
    os << std::left << std::setw(22) << name << std::right << std::setw(11) << 100 * s.precision
       << std::setw(9) << 100 * s.recall << std::setw(11) << 100 * s.f1 << std::setw(11)
       << 100 * s.accuracy << std::setw(9) << 100 * s.mcc << "\n";
  }
  return os.str();
}

}  // namespace mstnet::train
