#include "cmnt/trainer.hpp"

#include "cmnt/error.hpp"
#include "cmnt/optim.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace cmnt {

TrainResult train(Model& model, const std::vector<Example>& data, const TrainOptions& options) {
  if (data.empty()) throw DataError("train: empty corpus");
  if (options.epochs < 0) throw Error("train: epochs must be >= 0");
  if (options.batch_size < 1) throw Error("train: batch_size must be >= 1");

  std::mt19937_64 rng(options.seed);
  AdamState adam;
  adam.learning_rate = options.learning_rate;
  ParamStore& params = model.params();
  Model::ForwardOptions fwd;
  fwd.dropout_rng = &rng;

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  TrainResult result;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    if (options.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t epoch_tokens = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(options.batch_size));
      params.zero_grads();
      std::size_t tokens = 0;
      for (std::size_t i = start; i < stop; ++i) {
        const Example& ex = data[order[i]];
        Graph g;
        Var loss = model.sequence_loss(g, ex.source, ex.target, ex.constraints, fwd);
        g.backward(loss);
        epoch_loss += g.scalar(loss);
        tokens += ex.target.size();
      }
      const double inv = 1.0 / static_cast<double>(tokens);
      for (auto& e : params)
        for (double& gv : e.tensor.grad()) gv *= inv;
      adam_step(params, adam);
      epoch_tokens += tokens;
    }
    const double mean = epoch_loss / static_cast<double>(epoch_tokens);
    result.epoch_losses.push_back(mean);
    if (options.on_epoch) options.on_epoch(epoch, mean);
  }
  for (auto& e : params) e.tensor.drop_grad();
  return result;
}

Model init_from_baseline(const ModelConfig& variant, const Model& baseline, std::uint64_t seed) {
  const ModelConfig& base = baseline.config();
  if (base.uses_memory()) throw Error("init_from_baseline: source checkpoint is not a baseline model");
  Model out(variant, seed);
  for (const auto& e : baseline.params()) {
    if (!out.params().contains(e.name)) {
      throw DataError("init_from_baseline: baseline parameter '" + e.name + "' missing from variant");
    }
    Tensor& dst = out.params().at(e.name);
    if (dst.shape() != e.tensor.shape()) {
      throw DataError("init_from_baseline: '" + e.name + "' is " + e.tensor.shape_string() +
                      " in the baseline but " + dst.shape_string() + " in the variant");
    }
    std::copy(e.tensor.values().begin(), e.tensor.values().end(), dst.values().begin());
  }
  return out;
}

}  // namespace cmnt
