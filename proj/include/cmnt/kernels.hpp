#pragma once

// Forward numerical kernels shared by the differentiable graph and the
// incremental decoder.

#include "cmnt/tensor.hpp"

#include <span>
#include <vector>

namespace cmnt {

using MatrixRef = Eigen::Ref<const Matrix>;
// true = the query may attend to the key.
using AttentionMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kLayerNormEps = 1e-6;

std::vector<double> softmax(std::span<const double> v);

// Row-wise stable softmax in place. -inf entries get exactly zero weight.
// Throws if a row has no finite entry.
void softmax_rows(Matrix& m);

std::vector<double> layer_norm(std::span<const double> v, std::span<const double> gain,
                               std::span<const double> bias);

// Row-wise layer norm; gain and bias are 1 x cols. `normalized` receives the
// pre-gain values and `inv_std` the per-row 1/sqrt(var + eps) when non-null.
Matrix layer_norm_rows(const MatrixRef& x, const MatrixRef& gain, const MatrixRef& bias,
                       Matrix* normalized = nullptr, Eigen::VectorXd* inv_std = nullptr);

// -ln(dist[target]) in nats.
double cross_entropy(std::span<const double> dist, std::size_t target);

// Scaled dot-product attention over already projected q, k, v, split into
// `heads` column blocks. `additive_mask` (rows(q) x rows(k)) holds 0 or -inf and
// may be empty; `key_bias` (rows(k)) is added to every query's scores and may be
// empty. Per-head weight matrices are written to `weights` when non-null.
Matrix attend(const MatrixRef& q, const MatrixRef& k, const MatrixRef& v,
              const Matrix& additive_mask, std::span<const double> key_bias, int heads,
              std::vector<Matrix>* weights = nullptr);

Matrix additive_mask(const AttentionMask& allowed);

struct AttentionProjections {
  Matrix wq, wk, wv, wo;
};

// Full multi-head attention: project, attend per head, concatenate, project out.
Matrix multi_head_attention(const MatrixRef& queries, const MatrixRef& keys,
                            const MatrixRef& values, const AttentionMask& mask, int heads,
                            const AttentionProjections& proj,
                            std::vector<Matrix>* weights = nullptr);

inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace cmnt
