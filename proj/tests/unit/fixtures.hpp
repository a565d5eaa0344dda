#pragma once

#include "cmnt/constraint.hpp"
#include "cmnt/model.hpp"
#include "cmnt/vocab.hpp"

#include <random>
#include <string>
#include <vector>

namespace fixtures {

inline const std::vector<std::string> kVariants = {"baseline", "SE-Gate", "SE-Copy", "SE-Attn",
                                                   "DE-Gate",  "DE-Copy", "DE-Attn"};

inline cmnt::ModelConfig tiny_config(const std::string& variant, int vocab = 12, int dim = 8) {
  cmnt::ModelConfig c;
  c.encoder_layers = 2;
  c.decoder_layers = 2;
  c.model_dim = dim;
  c.heads = 2;
  c.ff_dim = 2 * dim;
  c.dropout = 0.0;
  c.source_vocab = vocab;
  c.target_vocab = vocab;
  c.max_length = 16;
  cmnt::apply_variant(c, variant);
  return c;
}

inline std::vector<int> random_ids(std::mt19937_64& rng, int vocab, int min_len, int max_len) {
  std::uniform_int_distribution<int> len(min_len, max_len);
  std::uniform_int_distribution<int> tok(cmnt::Vocabulary::kSpecials, vocab - 1);
  std::vector<int> out(static_cast<std::size_t>(len(rng)));
  for (int& t : out) t = tok(rng);
  return out;
}

inline std::vector<int> random_reference(std::mt19937_64& rng, int vocab, int min_len, int max_len) {
  auto r = random_ids(rng, vocab, min_len, max_len);
  r.push_back(cmnt::Vocabulary::kEos);
  return r;
}

// Up to `max_constraints` constraints of one or two subwords each.
inline cmnt::ConstraintSet random_constraints(std::mt19937_64& rng, int vocab, int max_constraints) {
  std::uniform_int_distribution<int> count(0, max_constraints);
  std::uniform_int_distribution<int> len(1, 2);
  cmnt::ConstraintSet c;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    const int l = len(rng);
    c.add({"w" + std::to_string(i), random_ids(rng, vocab, l, l)});
  }
  return c;
}

inline cmnt::ConstraintSet random_constraints_exact(std::mt19937_64& rng, int vocab, int n) {
  std::uniform_int_distribution<int> len(1, 2);
  cmnt::ConstraintSet c;
  for (int i = 0; i < n; ++i) {
    const int l = len(rng);
    c.add({"w" + std::to_string(i), random_ids(rng, vocab, l, l)});
  }
  return c;
}

// Moves every parameter away from its structured initialisation so that
// gates, sentinels and biases all carry signal.
inline void perturb(cmnt::Model& m, std::mt19937_64& rng, double scale = 0.3) {
  std::normal_distribution<double> d(0.0, scale);
  for (auto& e : m.params())
    for (double& v : e.tensor.values()) v += d(rng);
}

inline double incremental_nll(const cmnt::Model& m, const std::vector<int>& x, const std::vector<int>& r,
                              const cmnt::ConstraintSet& c) {
  cmnt::DecodeSession s(m, x, c);
  auto state = s.initial_state();
  int prev = cmnt::Vocabulary::kBos;
  double nll = 0.0;
  for (int tok : r) {
    auto step = s.step(state, prev);
    nll -= std::log(step.distribution[static_cast<std::size_t>(tok)]);
    state = std::move(step.state);
    prev = tok;
  }
  return nll;
}

}  // namespace fixtures
