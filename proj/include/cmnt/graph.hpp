#pragma once

// Tape-based reverse-mode differentiation over row-major matrices.
//
// Every operation appends a node holding its forward value and a closure that
// pushes the node's gradient back to its inputs. Leaves created with param()
// accumulate into the owning Tensor's gradient buffer during backward().

#include "cmnt/tensor.hpp"

#include <functional>
#include <limits>
#include <random>
#include <span>
#include <vector>

namespace cmnt {

struct Var {
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::size_t id = kNone;
  bool valid() const { return id != kNone; }
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  Var param(Tensor& tensor);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  double scalar(Var v) const { return nodes_[v.id].value(0, 0); }
  std::size_t size() const { return nodes_.size(); }
  // Smallest |input| seen by relu() so far (infinity if none). Finite
  // differences are only meaningful when this is well clear of zero.
  double relu_margin() const { return relu_margin_; }

  // Seeds d(root)/d(root) = 1 (root must be 1x1) and runs the tape backwards.
  void backward(Var root);

  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var add_row(Var a, Var row);
  Var mul(Var a, Var b);
  Var mul_col(Var a, Var col);
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var relu(Var a);
  Var sigmoid(Var a);
  Var log(Var a);
  Var sum(Var a);
  Var layer_norm(Var x, Var gain, Var bias);
  Var softmax_rows(Var a, const Matrix& additive_mask = {});
  // Scaled dot-product attention over projected inputs; see kernels attend().
  // `key_bias`, when valid, is a 1 x rows(k) row added to every query's scores.
  Var attention(Var q, Var k, Var v, const Matrix& additive_mask, int heads, Var key_bias = {});
  Var concat_rows(std::span<const Var> parts);
  Var concat_cols(std::span<const Var> parts);
  Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
  Var embedding(Tensor& table, std::span<const int> ids);
  Var dropout(Var a, double rate, std::mt19937_64& rng);
  // out(r, map[j]) += a(r, j); columns with map[j] < 0 are dropped.
  Var scatter_cols(Var a, std::span<const int> map, Eigen::Index width);
  // rows(a) x 1 column of a(r, cols[r]).
  Var pick(Var a, std::span<const int> cols);
  // Sum over rows of -log softmax(logits)(r, targets[r]).
  Var softmax_cross_entropy(Var logits, std::span<const int> targets);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Tensor* param = nullptr;
    std::function<void()> backward;
  };

  Var push(Matrix value, bool requires_grad);
  bool needs(Var v) const { return nodes_[v.id].requires_grad; }
  bool has_grad(Var v) const { return nodes_[v.id].grad.size() != 0; }
  const Matrix& grad_of(Var v) const { return nodes_[v.id].grad; }
  template <typename Expr>
  void accumulate(Var v, const Expr& g);

  std::vector<Node> nodes_;
  double relu_margin_ = std::numeric_limits<double>::infinity();
};

}  // namespace cmnt
