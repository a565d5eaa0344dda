#include "layers.hpp"

#include "cmnt/error.hpp"
#include "cmnt/kernels.hpp"

#include <cmath>

namespace cmnt::detail {

Var Binder::operator()(const std::string& name) {
  auto it = cache_.find(name);
  if (it != cache_.end()) return it->second;
  Var v = mutable_ ? graph_.param(mutable_->at(name)) : graph_.constant(Matrix(params_.at(name).mat()));
  cache_.emplace(name, v);
  return v;
}

Var Binder::embed(const std::string& table, std::span<const int> ids) {
  if (!mutable_) return graph_.constant(embedding_rows(params_, table, ids));
  Tensor& t = mutable_->at(table);
  return graph_.scale(graph_.embedding(t, ids), embedding_scale(t.mat().cols()));
}

Matrix embedding_rows(const ParamStore& p, const std::string& table, std::span<const int> ids) {
  const Tensor& t = p.at(table);
  const auto tab = t.mat();
  Matrix m(static_cast<Eigen::Index>(ids.size()), tab.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tab.rows()) {
      throw Error("embedding: id " + std::to_string(ids[i]) + " outside vocabulary of " +
                  std::to_string(tab.rows()));
    }
    m.row(static_cast<Eigen::Index>(i)) = tab.row(ids[i]);
  }
  return m * embedding_scale(tab.cols());
}

Matrix positional_encoding(Eigen::Index rows, Eigen::Index dim, Eigen::Index offset) {
  Matrix pe(rows, dim);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double pos = static_cast<double>(r + offset);
    for (Eigen::Index i = 0; i < dim; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(dim));
      pe(r, i) = std::sin(pos * freq);
      if (i + 1 < dim) pe(r, i + 1) = std::cos(pos * freq);
    }
  }
  return pe;
}

Tensor xavier(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-a, a);
  Tensor t({rows, cols});
  for (double& v : t.values()) v = dist(rng);
  return t;
}

void add_attention_params(ParamStore& p, const std::string& prefix, int dim, std::mt19937_64& rng) {
  const auto d = static_cast<std::size_t>(dim);
  for (const char* w : {".wq", ".wk", ".wv", ".wo"}) p.add(prefix + w, xavier(d, d, rng));
}

void add_layer_norm_params(ParamStore& p, const std::string& prefix, int dim) {
  const auto d = static_cast<std::size_t>(dim);
  p.add(prefix + ".g", Tensor({d}, std::vector<double>(d, 1.0)));
  p.add(prefix + ".b", Tensor({d}));
}

void add_ffn_params(ParamStore& p, const std::string& prefix, int dim, int ff, std::mt19937_64& rng) {
  const auto d = static_cast<std::size_t>(dim);
  const auto f = static_cast<std::size_t>(ff);
  p.add(prefix + ".w1", xavier(d, f, rng));
  p.add(prefix + ".b1", Tensor({f}));
  p.add(prefix + ".w2", xavier(f, d, rng));
  p.add(prefix + ".b2", Tensor({d}));
}

void add_encoder_params(ParamStore& p, const std::string& prefix, int layers, int dim, int ff,
                        std::mt19937_64& rng) {
  for (int l = 0; l < layers; ++l) {
    const std::string lp = prefix + "." + std::to_string(l);
    add_attention_params(p, lp + ".sa", dim, rng);
    add_layer_norm_params(p, lp + ".ln1", dim);
    add_ffn_params(p, lp + ".ff", dim, ff, rng);
    add_layer_norm_params(p, lp + ".ln2", dim);
  }
}

Var attention_sublayer(Binder& b, const std::string& prefix, Var queries, Var memory,
                       const Matrix& mask, int heads, Var key_bias) {
  Graph& g = b.graph();
  Var q = g.matmul(queries, b(prefix + ".wq"));
  Var k = g.matmul(memory, b(prefix + ".wk"));
  Var v = g.matmul(memory, b(prefix + ".wv"));
  Var o = g.attention(q, k, v, mask, heads, key_bias);
  return g.matmul(o, b(prefix + ".wo"));
}

Var feed_forward(Binder& b, const std::string& prefix, Var x) {
  Graph& g = b.graph();
  Var h = g.relu(g.add_row(g.matmul(x, b(prefix + ".w1")), b(prefix + ".b1")));
  return g.add_row(g.matmul(h, b(prefix + ".w2")), b(prefix + ".b2"));
}

Var residual_norm(Binder& b, const std::string& ln_prefix, Var x, Var sublayer_out) {
  Graph& g = b.graph();
  return g.layer_norm(g.add(x, b.drop(sublayer_out)), b(ln_prefix + ".g"), b(ln_prefix + ".b"));
}

Var encoder_stack(Binder& b, const std::string& prefix, const std::string& table,
                  std::span<const int> ids, int layers, int heads) {
  Graph& g = b.graph();
  Var emb = b.embed(table, ids);
  const Matrix& e = g.value(emb);
  Var x = b.drop(g.add(emb, g.constant(positional_encoding(e.rows(), e.cols()))));
  for (int l = 0; l < layers; ++l) {
    const std::string lp = prefix + "." + std::to_string(l);
    x = residual_norm(b, lp + ".ln1", x, attention_sublayer(b, lp + ".sa", x, x, Matrix(), heads));
    x = residual_norm(b, lp + ".ln2", x, feed_forward(b, lp + ".ff", x));
  }
  return x;
}

Matrix eager_attention_sublayer(const ParamStore& p, const std::string& prefix,
                                const Matrix& queries, const Matrix& memory, const Matrix& mask,
                                int heads, std::span<const double> key_bias) {
  const Matrix q = queries * p.at(prefix + ".wq").mat();
  const Matrix k = memory * p.at(prefix + ".wk").mat();
  const Matrix v = memory * p.at(prefix + ".wv").mat();
  return attend(q, k, v, mask, key_bias, heads) * p.at(prefix + ".wo").mat();
}

Matrix eager_feed_forward(const ParamStore& p, const std::string& prefix, const Matrix& x) {
  Matrix h = x * p.at(prefix + ".w1").mat();
  h.rowwise() += p.at(prefix + ".b1").mat().row(0);
  h = h.cwiseMax(0.0);
  Matrix o = h * p.at(prefix + ".w2").mat();
  o.rowwise() += p.at(prefix + ".b2").mat().row(0);
  return o;
}

Matrix eager_residual_norm(const ParamStore& p, const std::string& ln_prefix, const Matrix& x,
                           const Matrix& sublayer_out) {
  return layer_norm_rows(x + sublayer_out, p.at(ln_prefix + ".g").mat(), p.at(ln_prefix + ".b").mat());
}

Matrix eager_encoder_stack(const ParamStore& p, const std::string& prefix, const std::string& table,
                           std::span<const int> ids, int layers, int heads) {
  Matrix x = embedding_rows(p, table, ids);
  x += positional_encoding(x.rows(), x.cols());
  for (int l = 0; l < layers; ++l) {
    const std::string lp = prefix + "." + std::to_string(l);
    x = eager_residual_norm(p, lp + ".ln1", x, eager_attention_sublayer(p, lp + ".sa", x, x, Matrix(), heads));
    x = eager_residual_norm(p, lp + ".ln2", x, eager_feed_forward(p, lp + ".ff", x));
  }
  return x;
}

}  // namespace cmnt::detail
