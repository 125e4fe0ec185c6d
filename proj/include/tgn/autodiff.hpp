#pragma once

#include "tgn/types.hpp"

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace tgn::ad {

class Tape;

// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Linear record of matrix-valued operations. backward() walks it in reverse,
// calling each node's adjoint rule once.
class Tape {
 public:
  using Adjoint = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);

  const Matrix& value(int id) const { return nodes_[id].value; }
  const Matrix& value(Var v) const { return value(v.id()); }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  bool needs_grad(Var v) const { return needs_grad(v.id()); }

  // Gradient of the last backward() root with respect to v. Zeros when v
  // received no gradient.
  Matrix grad(Var v) const;

  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

  // Appends an op node. The adjoint is dropped when no parent needs a grad.
  Var push(Matrix value, std::initializer_list<Var> parents, Adjoint adjoint);
  Var push(Matrix value, std::span<const Var> parents, Adjoint adjoint);

  // Upstream gradient of node `id` (valid inside adjoint rules).
  const Matrix& upstream(int id) const { return nodes_[id].grad; }

  template <typename Derived>
  void accumulate(int id, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  // Direct access for adjoints that scatter into rows.
  Matrix& grad_buffer(int id);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    Adjoint adjoint;
  };
  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }

// ---- Primitive ops -------------------------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
// Adds a 1 x n row to every row of a.
Var add_row(Var a, Var row);
Var scale(Var a, double s);
Var tanh(Var a);
Var relu(Var a);
Var sigmoid(Var a);
Var square(Var a);
// Sum of all entries, 1 x 1.
Var sum(Var a);
Var sum_squares(Var a);
// out.row(i) = a.row(index[i]).
Var gather_rows(Var a, std::vector<Index> index);
// out.row(segment[i]) += a.row(i); out has `segments` rows.
Var segment_sum(Var a, std::vector<Index> segment, Index segments);
Var hconcat(std::span<const Var> parts);
// Contiguous column block [first, first + count).
Var col_block(Var a, Index first, Index count);

// Mean over all entries of (pred - target)^2, 1 x 1.
Var mse_loss(Var pred, const Matrix& target);
// Mean over rows of -log softmax(logits)[label], 1 x 1.
Var softmax_cross_entropy(Var logits, std::span<const Index> labels);

// First dense layer of a distance network, evaluated directly from pair
// indices instead of materialising the (enc(k), enc(l), x_k, x_l) rows.
//
// weight has 2 * enc_width + 2 rows. Row p of the result equals
//   [onehot(src[p]), onehot(dst[p]), xs[p], xd[p]] * weight
// when enc_width > 0, and [xs[p], xd[p]] * weight when enc_width == 0.
Var pair_first_layer(Var weight, std::vector<Index> src, std::vector<Index> dst,
                     Vector xs, Vector xd, Index enc_width);

/// Pair indices and values shared by every distance network of a batch.
struct PairBatch {
  std::vector<Index> src;
  std::vector<Index> dst;
  Vector xs;
  Vector xd;
  Index enc_width = 0;

  Index size() const { return xs.size(); }
};

// A whole bias-free distance network over pair rows: the first layer as in
// pair_first_layer, tanh between layers, linear last layer. Rows are processed
// in tiles and the backward pass recomputes tile activations instead of
// keeping them, so memory stays proportional to the output.
Var pair_mlp(std::span<const Var> weights, std::shared_ptr<const PairBatch> pairs);

// Elementwise tanh as 1 - 2 / (exp(2x) + 1); vectorized and exact at 0.
Matrix tanh_values(const Matrix& x);

}  // namespace tgn::ad
