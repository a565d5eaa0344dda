#pragma once

// Transformer building blocks shared by the source encoder, the deep
// constraint encoder and the decoder. Each block exists twice: on the
// differentiable graph (training, teacher forcing) and as plain matrix code
// (incremental decoding). The two must agree numerically.

#include "cmnt/graph.hpp"
#include "cmnt/params.hpp"

#include <cmath>
#include <random>
#include <span>
#include <string>
#include <unordered_map>

namespace cmnt::detail {

// Resolves parameter names to graph leaves, creating each leaf once per graph.
// A const store yields constant leaves (no gradients).
class Binder {
 public:
  Binder(Graph& graph, ParamStore& params) : graph_(graph), mutable_(&params), params_(params) {}
  Binder(Graph& graph, const ParamStore& params) : graph_(graph), params_(params) {}

  Graph& graph() { return graph_; }
  Var operator()(const std::string& name);
  Var embed(const std::string& table, std::span<const int> ids);
  const Tensor& tensor(const std::string& name) const { return params_.at(name); }

  // Dropout is active only when a generator is attached.
  void enable_dropout(double rate, std::mt19937_64* rng) {
    rate_ = rate;
    rng_ = rng;
  }
  Var drop(Var x) { return rng_ && rate_ > 0.0 ? graph_.dropout(x, rate_, *rng_) : x; }

 private:
  Graph& graph_;
  ParamStore* mutable_ = nullptr;
  const ParamStore& params_;
  std::unordered_map<std::string, Var> cache_;
  double rate_ = 0.0;
  std::mt19937_64* rng_ = nullptr;
};

// Tables are stored at unit-over-sqrt(d) scale and multiplied back on lookup.
inline double embedding_scale(Eigen::Index dim) { return std::sqrt(static_cast<double>(dim)); }

Matrix positional_encoding(Eigen::Index rows, Eigen::Index dim, Eigen::Index offset = 0);

void add_attention_params(ParamStore& p, const std::string& prefix, int dim, std::mt19937_64& rng);
void add_layer_norm_params(ParamStore& p, const std::string& prefix, int dim);
void add_ffn_params(ParamStore& p, const std::string& prefix, int dim, int ff, std::mt19937_64& rng);
void add_encoder_params(ParamStore& p, const std::string& prefix, int layers, int dim, int ff,
                        std::mt19937_64& rng);
Tensor xavier(std::size_t rows, std::size_t cols, std::mt19937_64& rng);

// ---- graph versions ----

Var attention_sublayer(Binder& b, const std::string& prefix, Var queries, Var memory,
                       const Matrix& mask, int heads, Var key_bias = {});
Var feed_forward(Binder& b, const std::string& prefix, Var x);
Var residual_norm(Binder& b, const std::string& ln_prefix, Var x, Var sublayer_out);
// Embeds ids from `table`, adds positions and runs `layers` encoder layers.
Var encoder_stack(Binder& b, const std::string& prefix, const std::string& table,
                  std::span<const int> ids, int layers, int heads);

// ---- plain versions ----

Matrix eager_attention_sublayer(const ParamStore& p, const std::string& prefix,
                                const Matrix& queries, const Matrix& memory, const Matrix& mask,
                                int heads, std::span<const double> key_bias = {});
Matrix eager_feed_forward(const ParamStore& p, const std::string& prefix, const Matrix& x);
Matrix eager_residual_norm(const ParamStore& p, const std::string& ln_prefix, const Matrix& x,
                           const Matrix& sublayer_out);
Matrix eager_encoder_stack(const ParamStore& p, const std::string& prefix, const std::string& table,
                           std::span<const int> ids, int layers, int heads);
Matrix embedding_rows(const ParamStore& p, const std::string& table, std::span<const int> ids);

}  // namespace cmnt::detail
