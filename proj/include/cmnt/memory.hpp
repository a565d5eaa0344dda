#pragma once

// Constraint memories E(c) and the three ways of feeding them to the decoder:
// a vector gate on the last decoder layer, a scalar-gated copy distribution,
// and decoder self-attention over the prefix concatenated with the memory.

#include "cmnt/constraint.hpp"
#include "cmnt/kernels.hpp"
#include "cmnt/model_config.hpp"
#include "cmnt/params.hpp"

#include <span>
#include <vector>

namespace cmnt {

// Rows are one slot per constraint subword followed by a learned sentinel
// slot, which is always active.
struct ConstraintMemory {
  Matrix rows;
  std::vector<int> slot_constraint;  // -1 for the sentinel
  std::vector<int> slot_token;       // -1 for the sentinel
  std::vector<bool> active;
  EncoderKind encoder = EncoderKind::shallow;

  std::size_t slots() const { return slot_token.size(); }
  std::size_t active_constraint_slots() const;
};

// Word-embedding memory; slots of constraints already produced in `prefix`
// are masked.
ConstraintMemory encode_shallow(const ParamStore& params, const ConstraintSet& c,
                                std::span<const int> prefix);
// Encoder-stack memory over the concatenated constraint subwords. Never masked.
ConstraintMemory encode_deep(const ParamStore& params, const ModelConfig& config,
                             const ConstraintSet& c);
ConstraintMemory encode_memory(const ParamStore& params, const ModelConfig& config,
                               const ConstraintSet& c, std::span<const int> prefix);

// Active flags for every slot (sentinel included) given the emitted prefix.
std::vector<bool> memory_active(EncoderKind encoder, const ConstraintSet& c,
                                std::span<const int> slot_constraint, std::span<const int> prefix);

// Projections of the memory rows that do not depend on the decoder state.
struct MemoryProjections {
  Matrix gate_k1, gate_v1, gate_k2, gate_v2;
  Matrix copy_k1, copy_k2, copy_v2;
  std::vector<Matrix> layer_k, layer_v;
};

MemoryProjections project_memory(const ParamStore& params, const ModelConfig& config,
                                 const ConstraintMemory& mem);

// 1 x slots additive mask (0 or -inf) from the active flags.
Matrix memory_mask_row(const std::vector<bool>& active);

// h_hat = g * h + (1 - g) * f1(h, E), g = sigmoid(f2(h, E) + b), elementwise.
Matrix integrate_gate(const ParamStore& params, const MatrixRef& h, const ConstraintMemory& mem);
Matrix integrate_gate(const ParamStore& params, const MatrixRef& h, const MemoryProjections& proj,
                      const Matrix& mask_row);

// P = g * P_gen + (1 - g) * P_c with scalar g; P_c is a softmax over the active
// constraint slots scattered onto their subword ids. Rows of `p_gen` are
// returned unchanged when no constraint slot is active.
Matrix integrate_copy(const ParamStore& params, const MatrixRef& h, const ConstraintMemory& mem,
                      const Matrix& p_gen);
Matrix integrate_copy(const ParamStore& params, const MatrixRef& h, const ConstraintMemory& mem,
                      const MemoryProjections& proj, const Matrix& p_gen);
// P_c alone over the full vocabulary (all zeros when no constraint slot is active).
Matrix copy_distribution(const ParamStore& params, const MatrixRef& h, const ConstraintMemory& mem,
                         const MemoryProjections& proj, int vocab);

}  // namespace cmnt
