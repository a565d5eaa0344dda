#pragma once

#include "cmnt/dataset.hpp"
#include "cmnt/model.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace cmnt {

struct TrainOptions {
  int epochs = 10;
  int batch_size = 16;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  bool shuffle = true;
  // Called after every epoch with its mean per-token loss.
  std::function<void(int epoch, double loss)> on_epoch;
};

struct TrainResult {
  std::vector<double> epoch_losses;  // mean nats per target token
};

// Adam over every parameter of `model`; batches average the loss per token.
TrainResult train(Model& model, const std::vector<Example>& data, const TrainOptions& options);

// A constraint-aware model whose shared parameters are copied from `baseline`
// and whose new parameters are freshly drawn from `seed`.
Model init_from_baseline(const ModelConfig& variant, const Model& baseline, std::uint64_t seed);

}  // namespace cmnt
