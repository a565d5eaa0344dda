#include "cmnt/kernels.hpp"

#include "cmnt/error.hpp"

#include <cmath>
#include <limits>

namespace cmnt {

namespace {

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (std::isnan(x)) throw Error(std::string(what) + ": NaN input");
  }
}

}  // namespace

std::vector<double> softmax(std::span<const double> v) {
  if (v.empty()) throw Error("softmax: empty input");
  check_finite(v, "softmax");
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = v[i];
  softmax_rows(m);
  return {m.data(), m.data() + m.size()};
}

void softmax_rows(Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const double mx = row.maxCoeff();
    if (!std::isfinite(mx)) {
      if (std::isnan(mx)) throw Error("softmax: NaN input");
      throw Error("softmax: row " + std::to_string(r) + " is fully masked");
    }
    double total = 0.0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double e = std::exp(row(c) - mx);
      row(c) = e;
      total += e;
    }
    row /= total;
  }
}

std::vector<double> layer_norm(std::span<const double> v, std::span<const double> gain,
                               std::span<const double> bias) {
  if (v.size() != gain.size() || v.size() != bias.size()) {
    throw Error("layer_norm: length mismatch (" + std::to_string(v.size()) + ", " +
                std::to_string(gain.size()) + ", " + std::to_string(bias.size()) + ")");
  }
  if (v.size() < 2) throw Error("layer_norm: need at least two features");
  const auto n = static_cast<Eigen::Index>(v.size());
  Matrix out = layer_norm_rows(ConstMatrixMap(v.data(), 1, n), ConstMatrixMap(gain.data(), 1, n),
                               ConstMatrixMap(bias.data(), 1, n));
  return {out.data(), out.data() + out.size()};
}

Matrix layer_norm_rows(const MatrixRef& x, const MatrixRef& gain, const MatrixRef& bias,
                       Matrix* normalized, Eigen::VectorXd* inv_std) {
  const auto n = static_cast<double>(x.cols());
  Matrix xhat(x.rows(), x.cols());
  Eigen::VectorXd istd(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).sum() / n;
    const auto centered = (x.row(r).array() - mean).matrix();
    const double var = centered.squaredNorm() / n;
    istd(r) = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(r) = centered * istd(r);
  }
  Matrix out = (xhat.array().rowwise() * gain.row(0).array()).matrix();
  out.rowwise() += bias.row(0);
  if (normalized) *normalized = std::move(xhat);
  if (inv_std) *inv_std = std::move(istd);
  return out;
}

double cross_entropy(std::span<const double> dist, std::size_t target) {
  if (target >= dist.size()) {
    throw Error("cross_entropy: target " + std::to_string(target) + " outside distribution of size " +
                std::to_string(dist.size()));
  }
  return -std::log(dist[target]);
}

Matrix additive_mask(const AttentionMask& allowed) {
  Matrix m(allowed.rows(), allowed.cols());
  const double ninf = -std::numeric_limits<double>::infinity();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = allowed(r, c) ? 0.0 : ninf;
  return m;
}

Matrix attend(const MatrixRef& q, const MatrixRef& k, const MatrixRef& v,
              const Matrix& mask, std::span<const double> key_bias, int heads,
              std::vector<Matrix>* weights) {
  const Eigen::Index d = q.cols();
  if (heads <= 0 || d % heads != 0) {
    throw Error("attention: model dim " + std::to_string(d) + " not divisible by " +
                std::to_string(heads) + " heads");
  }
  if (k.rows() != v.rows()) throw Error("attention: key/value row counts differ");
  if (k.cols() != d || v.cols() != d) throw Error("attention: projected widths differ");
  if (mask.size() != 0 && (mask.rows() != q.rows() || mask.cols() != k.rows())) {
    throw Error("attention: mask shape does not match queries x keys");
  }
  if (!key_bias.empty() && static_cast<Eigen::Index>(key_bias.size()) != k.rows()) {
    throw Error("attention: key bias length does not match keys");
  }
  const Eigen::Index dk = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  Matrix out(q.rows(), d);
  if (weights) weights->clear();
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index c0 = h * dk;
    Matrix scores = (q.middleCols(c0, dk) * k.middleCols(c0, dk).transpose()) * scale;
    if (mask.size() != 0) scores += mask;
    if (!key_bias.empty()) {
      for (Eigen::Index j = 0; j < scores.cols(); ++j) scores.col(j).array() += key_bias[j];
    }
    softmax_rows(scores);
    out.middleCols(c0, dk) = scores * v.middleCols(c0, dk);
    if (weights) weights->push_back(std::move(scores));
  }
  return out;
}

Matrix multi_head_attention(const MatrixRef& queries, const MatrixRef& keys,
                            const MatrixRef& values, const AttentionMask& mask, int heads,
                            const AttentionProjections& proj, std::vector<Matrix>* weights) {
  if (keys.rows() != values.rows()) throw Error("attention: key/value row counts differ");
  if (mask.rows() != queries.rows() || mask.cols() != keys.rows()) {
    throw Error("attention: mask shape does not match queries x keys");
  }
  const Matrix q = queries * proj.wq;
  const Matrix k = keys * proj.wk;
  const Matrix v = values * proj.wv;
  return attend(q, k, v, additive_mask(mask), {}, heads, weights) * proj.wo;
}

}  // namespace cmnt
