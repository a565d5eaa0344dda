#include "cmnt/graph.hpp"

#include "cmnt/error.hpp"
#include "cmnt/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace cmnt {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                std::to_string(b.cols()));
  }
}

}  // namespace

Var Graph::push(Matrix value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename Expr>
void Graph::accumulate(Var v, const Expr& g) {
  Node& n = nodes_[v.id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

Var Graph::constant(Matrix value) { return push(std::move(value), false); }

Var Graph::param(Tensor& tensor) {
  Var v = push(Matrix(tensor.mat()), true);
  nodes_[v.id].param = &tensor;
  return v;
}

void Graph::backward(Var root) {
  if (nodes_[root.id].value.size() != 1) throw Error("backward: root must be a scalar");
  nodes_[root.id].grad = Matrix::Ones(1, 1);
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.param) {
      n.param->grad_mat() += n.grad;
    } else if (n.backward) {
      n.backward();
    }
  }
}

Var Graph::matmul(Var a, Var b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  if (A.cols() != B.rows()) throw Error("matmul: inner dimensions differ");
  Var out = push(A * B, needs(a) || needs(b));
  if (needs(out)) {
    nodes_[out.id].backward = [this, a, b, out] {
      const Matrix& g = grad_of(out);
      if (needs(a)) accumulate(a, g * value(b).transpose());
      if (needs(b)) accumulate(b, value(a).transpose() * g);
    };
  }
  return out;
}

Var Graph::matmul_nt(Var a, Var b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  if (A.cols() != B.cols()) throw Error("matmul_nt: inner dimensions differ");
  Var out = push(A * B.transpose(), needs(a) || needs(b));
  if (needs(out)) {
    nodes_[out.id].backward = [this, a, b, out] {
      const Matrix& g = grad_of(out);
      if (needs(a)) accumulate(a, g * value(b));
      if (needs(b)) accumulate(b, g.transpose() * value(a));
    };
  }
  return out;
}

Var Graph::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  Var out = push(value(a) + value(b), needs(a) || needs(b));
  if (needs(out)) {
    nodes_[out.id].backward = [this, a, b, out] {
      accumulate(a, grad_of(out));
      accumulate(b, grad_of(out));
    };
  }
  return out;
}

Var Graph::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "sub");
  Var out = push(value(a) - value(b), needs(a) || needs(b));
  if (needs(out)) {
    nodes_[out.id].backward = [this, a, b, out] {
      accumulate(a, grad_of(out));
      if (needs(b)) accumulate(b, -grad_of(out));
    };
  }
  return out;
}

Var Graph::add_row(Var a, Var row) {
  const Matrix& R = value(row);
  if (R.rows() != 1 || R.cols() != value(a).cols()) throw Error("add_row: bias shape mismatch");
  Matrix v = value(a);
  v.rowwise() += R.row(0);
  Var out = push(std::move(v), needs(a) || needs(row));
  if (needs(out)) {
    nodes_[out.id].backward = [this, a, row, out] {
      accumulate(a, grad_of(out));
      if (needs(row)) accumulate(row, grad_of(out).colwise().sum());
    };
  }
  return out;
}

Var Graph::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  Var out = push(value(a).cwiseProduct(value(b)), needs(a) || needs(b));
  if (needs(out)) {
    nodes_[out.id].backward = [this, a, b, out] {
      if (needs(a)) accumulate(a, grad_of(out).cwiseProduct(value(b)));
      if (needs(b)) accumulate(b, grad_of(out).cwiseProduct(value(a)));
    };
  }
  return out;
}

Var Graph::mul_col(Var a, Var col) {
  const Matrix& C = value(col);
  if (C.cols() != 1 || C.rows() != value(a).rows()) throw Error("mul_col: column shape mismatch");
  Matrix v = value(a).array().colwise() * C.col(0).array();
  Var out = push(std::move(v), needs(a) || needs(col));
  if (needs(out)) {
    nodes_[out.id].backward = [this, a, col, out] {
      const Matrix& g = grad_of(out);
      if (needs(a)) accumulate(a, Matrix(g.array().colwise() * value(col).col(0).array()));
      if (needs(col)) accumulate(col, g.cwiseProduct(value(a)).rowwise().sum());
    };
  }
  return out;
}

Var Graph::scale(Var a, double s) {
  Var out = push(value(a) * s, needs(a));
  if (needs(out)) {
    nodes_[out.id].backward = [this, a, out, s] { accumulate(a, grad_of(out) * s); };
  }
  return out;
}

Var Graph::add_scalar(Var a, double s) {
  Var out = push((value(a).array() + s).matrix(), needs(a));
  if (needs(out)) {
    nodes_[out.id].backward = [this, a, out] { accumulate(a, grad_of(out)); };
  }
  return out;
}

Var Graph::relu(Var a) {
  if (value(a).size() > 0) relu_margin_ = std::min(relu_margin_, value(a).cwiseAbs().minCoeff());
  Var out = push(value(a).cwiseMax(0.0), needs(a));
  if (needs(out)) {
    nodes_[out.id].backward = [this, a, out] {
      accumulate(a, Matrix((value(a).array() > 0.0).select(grad_of(out).array(), 0.0)));
    };
  }
  return out;
}

Var Graph::sigmoid(Var a) {
  Matrix v = value(a).unaryExpr([](double x) { return cmnt::sigmoid(x); });
  Var out = push(std::move(v), needs(a));
  if (needs(out)) {
    nodes_[out.id].backward = [this, a, out] {
      const Matrix& s = value(out);
      accumulate(a, Matrix(grad_of(out).array() * s.array() * (1.0 - s.array())));
    };
  }
  return out;
}

Var Graph::log(Var a) {
  Var out = push(value(a).array().log().matrix(), needs(a));
  if (needs(out)) {
    nodes_[out.id].backward = [this, a, out] {
      accumulate(a, Matrix(grad_of(out).array() / value(a).array()));
    };
  }
  return out;
}

Var Graph::sum(Var a) {
  Var out = push(Matrix::Constant(1, 1, value(a).sum()), needs(a));
  if (needs(out)) {
    nodes_[out.id].backward = [this, a, out] {
      const Matrix& A = value(a);
      accumulate(a, Matrix::Constant(A.rows(), A.cols(), grad_of(out)(0, 0)));
    };
  }
  return out;
}

Var Graph::layer_norm(Var x, Var gain, Var bias) {
  const Matrix& X = value(x);
  if (value(gain).cols() != X.cols() || value(bias).cols() != X.cols()) {
    throw Error("layer_norm: gain/bias width mismatch");
  }
  auto xhat = std::make_shared<Matrix>();
  auto istd = std::make_shared<Eigen::VectorXd>();
  Matrix y = layer_norm_rows(X, value(gain), value(bias), xhat.get(), istd.get());
  Var out = push(std::move(y), needs(x) || needs(gain) || needs(bias));
  if (needs(out)) {
    nodes_[out.id].backward = [this, x, gain, bias, out, xhat, istd] {
      const Matrix& g = grad_of(out);
      if (needs(gain)) accumulate(gain, g.cwiseProduct(*xhat).colwise().sum());
      if (needs(bias)) accumulate(bias, g.colwise().sum());
      if (needs(x)) {
        const Matrix gh = (g.array().rowwise() * value(gain).row(0).array()).matrix();
        const double n = static_cast<double>(gh.cols());
        Matrix dx(gh.rows(), gh.cols());
        for (Eigen::Index r = 0; r < gh.rows(); ++r) {
          const double mean_g = gh.row(r).sum() / n;
          const double mean_gx = gh.row(r).dot(xhat->row(r)) / n;
          dx.row(r) = (*istd)(r) *
                      (gh.row(r).array() - mean_g - xhat->row(r).array() * mean_gx).matrix();
        }
        accumulate(x, dx);
      }
    };
  }
  return out;
}

Var Graph::softmax_rows(Var a, const Matrix& mask) {
  Matrix s = value(a);
  if (mask.size() != 0) {
    require_same_shape(s, mask, "softmax_rows mask");
    s += mask;
  }
  cmnt::softmax_rows(s);
  Var out = push(std::move(s), needs(a));
  if (needs(out)) {
    nodes_[out.id].backward = [this, a, out] {
      const Matrix& y = value(out);
      const Matrix& g = grad_of(out);
      const Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
      accumulate(a, Matrix(y.array() * (g.array().colwise() - dot.array())));
    };
  }
  return out;
}

Var Graph::attention(Var q, Var k, Var v, const Matrix& mask, int heads, Var key_bias) {
  std::span<const double> kb;
  if (key_bias.valid()) {
    const Matrix& B = value(key_bias);
    if (B.rows() != 1) throw Error("attention: key bias must be a row");
    kb = std::span<const double>(B.data(), static_cast<std::size_t>(B.size()));
  }
  auto weights = std::make_shared<std::vector<Matrix>>();
  Matrix o = attend(value(q), value(k), value(v), mask, kb, heads, weights.get());
  const bool req = needs(q) || needs(k) || needs(v) || (key_bias.valid() && needs(key_bias));
  Var out = push(std::move(o), req);
  if (needs(out)) {
    nodes_[out.id].backward = [this, q, k, v, key_bias, out, heads, weights] {
      const Matrix& G = grad_of(out);
      const Matrix& Q = value(q);
      const Matrix& K = value(k);
      const Matrix& V = value(v);
      const Eigen::Index dk = Q.cols() / heads;
      const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
      Matrix dQ = Matrix::Zero(Q.rows(), Q.cols());
      Matrix dK = Matrix::Zero(K.rows(), K.cols());
      Matrix dV = Matrix::Zero(V.rows(), V.cols());
      Matrix dB = Matrix::Zero(1, K.rows());
      for (int h = 0; h < heads; ++h) {
        const Eigen::Index c0 = h * dk;
        const Matrix& W = (*weights)[static_cast<std::size_t>(h)];
        const auto Gh = G.middleCols(c0, dk);
        const Matrix dW = Gh * V.middleCols(c0, dk).transpose();
        dV.middleCols(c0, dk) += W.transpose() * Gh;
        const Eigen::VectorXd dot = dW.cwiseProduct(W).rowwise().sum();
        const Matrix dS = W.array() * (dW.array().colwise() - dot.array());
        dB += dS.colwise().sum();
        dQ.middleCols(c0, dk) += (dS * K.middleCols(c0, dk)) * scale;
        dK.middleCols(c0, dk) += (dS.transpose() * Q.middleCols(c0, dk)) * scale;
      }
      accumulate(q, dQ);
      accumulate(k, dK);
      accumulate(v, dV);
      if (key_bias.valid()) accumulate(key_bias, dB);
    };
  }
  return out;
}

Var Graph::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw Error("concat_rows: no inputs");
  const Eigen::Index cols = value(parts[0]).cols();
  Eigen::Index rows = 0;
  bool req = false;
  for (Var p : parts) {
    if (value(p).cols() != cols) throw Error("concat_rows: width mismatch");
    rows += value(p).rows();
    req = req || needs(p);
  }
  Matrix m(rows, cols);
  Eigen::Index r = 0;
  for (Var p : parts) {
    m.middleRows(r, value(p).rows()) = value(p);
    r += value(p).rows();
  }
  Var out = push(std::move(m), req);
  if (needs(out)) {
    std::vector<Var> ps(parts.begin(), parts.end());
    nodes_[out.id].backward = [this, ps, out] {
      Eigen::Index r0 = 0;
      for (Var p : ps) {
        const Eigen::Index n = value(p).rows();
        if (needs(p)) accumulate(p, Matrix(grad_of(out).middleRows(r0, n)));
        r0 += n;
      }
    };
  }
  return out;
}

Var Graph::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw Error("concat_cols: no inputs");
  const Eigen::Index rows = value(parts[0]).rows();
  Eigen::Index cols = 0;
  bool req = false;
  for (Var p : parts) {
    if (value(p).rows() != rows) throw Error("concat_cols: height mismatch");
    cols += value(p).cols();
    req = req || needs(p);
  }
  Matrix m(rows, cols);
  Eigen::Index c = 0;
  for (Var p : parts) {
    m.middleCols(c, value(p).cols()) = value(p);
    c += value(p).cols();
  }
  Var out = push(std::move(m), req);
  if (needs(out)) {
    std::vector<Var> ps(parts.begin(), parts.end());
    nodes_[out.id].backward = [this, ps, out] {
      Eigen::Index c0 = 0;
      for (Var p : ps) {
        const Eigen::Index n = value(p).cols();
        if (needs(p)) accumulate(p, Matrix(grad_of(out).middleCols(c0, n)));
        c0 += n;
      }
    };
  }
  return out;
}

Var Graph::slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  const Matrix& A = value(a);
  if (start < 0 || count < 0 || start + count > A.rows()) throw Error("slice_rows: out of range");
  Var out = push(Matrix(A.middleRows(start, count)), needs(a));
  if (needs(out)) {
    nodes_[out.id].backward = [this, a, out, start, count] {
      Matrix g = Matrix::Zero(value(a).rows(), value(a).cols());
      g.middleRows(start, count) = grad_of(out);
      accumulate(a, g);
    };
  }
  return out;
}

Var Graph::embedding(Tensor& table, std::span<const int> ids) {
  const auto rows = static_cast<Eigen::Index>(table.rows());
  const auto cols = static_cast<Eigen::Index>(table.cols());
  Matrix m(static_cast<Eigen::Index>(ids.size()), cols);
  const auto tab = table.mat();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= rows) {
      throw Error("embedding: id " + std::to_string(ids[i]) + " outside table of " +
                  std::to_string(rows) + " rows");
    }
    m.row(static_cast<Eigen::Index>(i)) = tab.row(ids[i]);
  }
  Var out = push(std::move(m), true);
  std::vector<int> idv(ids.begin(), ids.end());
  Tensor* t = &table;
  nodes_[out.id].backward = [this, out, idv, t] {
    auto g = t->grad_mat();
    const Matrix& go = grad_of(out);
    for (std::size_t i = 0; i < idv.size(); ++i) g.row(idv[i]) += go.row(static_cast<Eigen::Index>(i));
  };
  return out;
}

Var Graph::dropout(Var a, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) throw Error("dropout: rate must be < 1");
  const Matrix& A = value(a);
  std::bernoulli_distribution keep(1.0 - rate);
  Matrix mask(A.rows(), A.cols());
  const double s = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? s : 0.0;
  Var out = push(A.cwiseProduct(mask), needs(a));
  if (needs(out)) {
    nodes_[out.id].backward = [this, a, out, mask = std::move(mask)] {
      accumulate(a, grad_of(out).cwiseProduct(mask));
    };
  }
  return out;
}

Var Graph::scatter_cols(Var a, std::span<const int> map, Eigen::Index width) {
  const Matrix& A = value(a);
  if (static_cast<Eigen::Index>(map.size()) != A.cols()) throw Error("scatter_cols: map size mismatch");
  Matrix m = Matrix::Zero(A.rows(), width);
  for (std::size_t j = 0; j < map.size(); ++j) {
    if (map[j] < 0) continue;
    if (map[j] >= width) throw Error("scatter_cols: target column out of range");
    m.col(map[j]) += A.col(static_cast<Eigen::Index>(j));
  }
  Var out = push(std::move(m), needs(a));
  if (needs(out)) {
    std::vector<int> mv(map.begin(), map.end());
    nodes_[out.id].backward = [this, a, out, mv] {
      const Matrix& g = grad_of(out);
      Matrix ga = Matrix::Zero(value(a).rows(), value(a).cols());
      for (std::size_t j = 0; j < mv.size(); ++j) {
        if (mv[j] >= 0) ga.col(static_cast<Eigen::Index>(j)) = g.col(mv[j]);
      }
      accumulate(a, ga);
    };
  }
  return out;
}

Var Graph::pick(Var a, std::span<const int> cols) {
  const Matrix& A = value(a);
  if (static_cast<Eigen::Index>(cols.size()) != A.rows()) throw Error("pick: one column per row required");
  Matrix m(A.rows(), 1);
  for (Eigen::Index r = 0; r < A.rows(); ++r) {
    const int c = cols[static_cast<std::size_t>(r)];
    if (c < 0 || c >= A.cols()) throw Error("pick: column out of range");
    m(r, 0) = A(r, c);
  }
  Var out = push(std::move(m), needs(a));
  if (needs(out)) {
    std::vector<int> cv(cols.begin(), cols.end());
    nodes_[out.id].backward = [this, a, out, cv] {
      Matrix ga = Matrix::Zero(value(a).rows(), value(a).cols());
      for (std::size_t r = 0; r < cv.size(); ++r) {
        ga(static_cast<Eigen::Index>(r), cv[r]) = grad_of(out)(static_cast<Eigen::Index>(r), 0);
      }
      accumulate(a, ga);
    };
  }
  return out;
}

Var Graph::softmax_cross_entropy(Var logits, std::span<const int> targets) {
  const Matrix& L = value(logits);
  if (static_cast<Eigen::Index>(targets.size()) != L.rows()) {
    throw Error("softmax_cross_entropy: one target per row required");
  }
  auto probs = std::make_shared<Matrix>(L);
  cmnt::softmax_rows(*probs);
  double loss = 0.0;
  for (Eigen::Index r = 0; r < L.rows(); ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    if (t < 0 || t >= L.cols()) {
      throw Error("cross_entropy: target " + std::to_string(t) + " out of range");
    }
    const double mx = L.row(r).maxCoeff();
    const double lse = mx + std::log((L.row(r).array() - mx).exp().sum());
    loss += lse - L(r, t);
  }
  Var out = push(Matrix::Constant(1, 1, loss), needs(logits));
  if (needs(out)) {
    std::vector<int> tv(targets.begin(), targets.end());
    nodes_[out.id].backward = [this, logits, out, probs, tv] {
      Matrix g = *probs;
      for (std::size_t r = 0; r < tv.size(); ++r) g(static_cast<Eigen::Index>(r), tv[r]) -= 1.0;
      accumulate(logits, g * grad_of(out)(0, 0));
    };
  }
  return out;
}

}  // namespace cmnt
