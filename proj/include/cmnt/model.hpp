#pragma once

#include "cmnt/constraint.hpp"
#include "cmnt/graph.hpp"
#include "cmnt/memory.hpp"
#include "cmnt/model_config.hpp"
#include "cmnt/params.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace cmnt {

struct EncodedSource {
  Matrix hidden;              // |x| x d, last encoder layer
  std::vector<int> ids;
  std::vector<bool> padding;  // true = padded position (never set for single sentences)
};

// Incremental decoder state. Per layer, the projected self-attention keys and
// values of every input fed so far stand in for the hidden history. With the
// self-attention integrator the projected memory rows follow them.
struct DecoderState {
  std::vector<Matrix> keys;
  std::vector<Matrix> values;
  std::vector<int> prefix;  // emitted target tokens, bos excluded
  int t = 0;                // inputs fed so far
};

class Model {
 public:
  // Fresh parameters drawn from `seed`.
  Model(const ModelConfig& config, std::uint64_t seed);
  // Adopts existing parameters; every expected name must be present with the right shape.
  Model(const ModelConfig& config, ParamStore params);

  const ModelConfig& config() const { return config_; }
  const ParamStore& params() const { return params_; }
  ParamStore& params() { return params_; }

  EncodedSource encode_source(std::span<const int> x) const;

  struct ForwardOptions {
    std::mt19937_64* dropout_rng = nullptr;  // null = dropout off
    bool mask_redundant = true;              // shallow-encoder redundancy masking under teacher forcing
  };

  // -sum_t log P(r_t | r_<t, x, c) on `graph`; gradients reach params() on backward.
  Var sequence_loss(Graph& graph, std::span<const int> x, std::span<const int> r,
                    const ConstraintSet& c, const ForwardOptions& options);
  double sequence_nll(std::span<const int> x, std::span<const int> r, const ConstraintSet& c) const;
  // |r| x V teacher-forced next-token distributions.
  Matrix teacher_forced_distributions(std::span<const int> x, std::span<const int> r,
                                      const ConstraintSet& c) const;

  // One full decoder layer under teacher forcing (causal mask). With the
  // self-attention integrator and a memory, keys/values are inputs || memory.
  // Per-head self-attention weights are written to `weights` when non-null.
  Matrix decoder_layer(int layer, const Matrix& inputs, const EncodedSource& src,
                       const ConstraintMemory* memory, std::vector<Matrix>* weights = nullptr) const;

 private:
  void add_parameters(std::uint64_t seed);

  ModelConfig config_;
  ParamStore params_;
};

// Decoder-layer output with the self-attention integrator over (prefix || E(c)).
Matrix integrate_attn(const Model& model, int layer, const Matrix& inputs,
                      const ConstraintMemory& memory, const EncodedSource& src,
                      std::vector<Matrix>* weights = nullptr);

// Read-only decoding context for one source sentence and constraint set.
// Safe to share between hypotheses; states are owned by the caller.
class DecodeSession {
 public:
  DecodeSession(const Model& model, std::span<const int> source,
                const ConstraintSet& constraints = ConstraintSet());

  const Model& model() const { return *model_; }
  const EncodedSource& source() const { return src_; }
  const ConstraintSet& constraints() const { return constraints_; }
  int vocab_size() const { return model_->config().target_vocab; }

  DecoderState initial_state() const;

  struct Step {
    std::vector<double> distribution;
    DecoderState state;
    Matrix hidden;  // 1 x d last decoder layer (after the gate, if any)
  };
  // Feeds `prev_token` (bos first) and returns P(next | ...).
  Step step(const DecoderState& state, int prev_token) const;

  // The memory as seen after `prefix` was emitted.
  ConstraintMemory memory_for(std::span<const int> prefix) const;

 private:
  const Model* model_;
  EncodedSource src_;
  ConstraintSet constraints_;
  std::vector<Matrix> cross_k_, cross_v_;
  std::optional<ConstraintMemory> memory_;
  MemoryProjections projections_;
};

}  // namespace cmnt
