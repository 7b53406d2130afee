// Generates a small synthetic dataset in memory, trains for a few epochs and
// prints the eval-split scores.
#include <iostream>

#include "mstnet/data.hpp"
#include "mstnet/train.hpp"

int main() {
  mstnet::data::GeneratorConfig g;
  g.n = 30;
  g.eeg_length = 32;
  g.eeg_channels = 4;
  g.volume_size = 8;
  g.eeg_frequencies = {6, 4, 2};
  const mstnet::data::Dataset ds = mstnet::data::generate_samples(g);

  mstnet::ModelConfig config;
  config.epochs = 5;
  config.batch_size = 8;
  config.learning_rate = 1e-3;

  const auto result = mstnet::train::train(config, ds, {{}, [](const auto& r) {
    std::cout << "epoch " << r.epoch << " loss " << r.train_loss << "\n";
  }});
  std::cout << mstnet::train::format_scores_table(
      {{"MSTNet", result.log.epochs.back().eval}});
}
