#include "tgn/autodiff.hpp"

#include <cmath>
#include <string>

namespace tgn::ad {

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw UsageError("scalar() on a " + std::to_string(v.rows()) + "x" +
                     std::to_string(v.cols()) + " node");
  }
  return v(0, 0);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), false, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), true, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::push(Matrix value, std::initializer_list<Var> parents, Adjoint adjoint) {
  return push(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
              std::move(adjoint));
}

Var Tape::push(Matrix value, std::span<const Var> parents, Adjoint adjoint) {
  bool needs = false;
  for (const Var& p : parents) {
    if (p.tape() != this) throw UsageError("operand belongs to another tape");
    needs = needs || nodes_[p.id()].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), Matrix(), needs, needs ? std::move(adjoint) : nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Matrix& Tape::grad_buffer(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw UsageError("backward root belongs to another tape");
  const Matrix& rv = nodes_[root.id()].value;
  if (rv.rows() != 1 || rv.cols() != 1) {
    throw UsageError("backward requires a scalar objective, got " + std::to_string(rv.rows()) +
                     "x" + std::to_string(rv.cols()));
  }
  for (Node& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[root.id()].needs_grad) return;
  nodes_[root.id()].grad = Matrix::Ones(1, 1);
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.adjoint && n.grad.size() != 0) n.adjoint(*this, id);
  }
}

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw UsageError("operation on an empty Var");
  return *a.tape();
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a);
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  Matrix out = a.value() * b.value();
  const int ia = a.id();
  const int ib = b.id();
  return t.push(std::move(out), {a, b}, [ia, ib](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    if (tp.needs_grad(ia)) tp.accumulate(ia, g * tp.value(ib).transpose());
    if (tp.needs_grad(ib)) tp.accumulate(ib, tp.value(ia).transpose() * g);
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a);
  require_same_shape(a.value(), b.value(), "add");
  Matrix out = a.value() + b.value();
  const int ia = a.id();
  const int ib = b.id();
  return t.push(std::move(out), {a, b}, [ia, ib](Tape& tp, int self) {
    tp.accumulate(ia, tp.upstream(self));
    tp.accumulate(ib, tp.upstream(self));
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a);
  require_same_shape(a.value(), b.value(), "sub");
  Matrix out = a.value() - b.value();
  const int ia = a.id();
  const int ib = b.id();
  return t.push(std::move(out), {a, b}, [ia, ib](Tape& tp, int self) {
    tp.accumulate(ia, tp.upstream(self));
    tp.accumulate(ib, -tp.upstream(self));
  });
}

Var add_row(Var a, Var row) {
  Tape& t = tape_of(a);
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ShapeError("add_row: row must be 1x" + std::to_string(a.cols()));
  }
  Matrix out = a.value().rowwise() + row.value().row(0);
  const int ia = a.id();
  const int ir = row.id();
  return t.push(std::move(out), {a, row}, [ia, ir](Tape& tp, int self) {
    tp.accumulate(ia, tp.upstream(self));
    if (tp.needs_grad(ir)) tp.accumulate(ir, tp.upstream(self).colwise().sum());
  });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  Matrix out = a.value() * s;
  const int ia = a.id();
  return t.push(std::move(out), {a},
                [ia, s](Tape& tp, int self) { tp.accumulate(ia, tp.upstream(self) * s); });
}

Matrix tanh_values(const Matrix& x) {
  return (1.0 - 2.0 / ((2.0 * x.array()).exp() + 1.0)).matrix();
}

Var tanh(Var a) {
  Tape& t = tape_of(a);
  Matrix out = tanh_values(a.value());
  const int ia = a.id();
  return t.push(std::move(out), {a}, [ia](Tape& tp, int self) {
    const auto y = tp.value(self).array();
    tp.accumulate(ia, (tp.upstream(self).array() * (1.0 - y * y)).matrix());
  });
}

Var relu(Var a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().cwiseMax(0.0);
  const int ia = a.id();
  return t.push(std::move(out), {a}, [ia](Tape& tp, int self) {
    const auto mask = (tp.value(ia).array() > 0.0).cast<double>();
    tp.accumulate(ia, (tp.upstream(self).array() * mask).matrix());
  });
}

Var sigmoid(Var a) {
  Tape& t = tape_of(a);
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  const int ia = a.id();
  return t.push(std::move(out), {a}, [ia](Tape& tp, int self) {
    const auto y = tp.value(self).array();
    tp.accumulate(ia, (tp.upstream(self).array() * y * (1.0 - y)).matrix());
  });
}

Var square(Var a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().array().square().matrix();
  const int ia = a.id();
  return t.push(std::move(out), {a}, [ia](Tape& tp, int self) {
    tp.accumulate(ia, (2.0 * tp.upstream(self).array() * tp.value(ia).array()).matrix());
  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const int ia = a.id();
  return t.push(std::move(out), {a}, [ia](Tape& tp, int self) {
    const double g = tp.upstream(self)(0, 0);
    const Matrix& v = tp.value(ia);
    tp.accumulate(ia, Matrix::Constant(v.rows(), v.cols(), g));
  });
}

Var sum_squares(Var a) {
  Tape& t = tape_of(a);
  Matrix out(1, 1);
  out(0, 0) = a.value().squaredNorm();
  const int ia = a.id();
  return t.push(std::move(out), {a}, [ia](Tape& tp, int self) {
    const double g = tp.upstream(self)(0, 0);
    tp.accumulate(ia, (2.0 * g) * tp.value(ia));
  });
}

Var gather_rows(Var a, std::vector<Index> index) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  Matrix out(static_cast<Index>(index.size()), av.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= av.rows()) throw ShapeError("gather_rows: index out of range");
    out.row(static_cast<Index>(i)) = av.row(index[i]);
  }
  const int ia = a.id();
  return t.push(std::move(out), {a}, [ia, index = std::move(index)](Tape& tp, int self) {
    Matrix& g = tp.grad_buffer(ia);
    const Matrix& up = tp.upstream(self);
    for (std::size_t i = 0; i < index.size(); ++i) g.row(index[i]) += up.row(static_cast<Index>(i));
  });
}

Var segment_sum(Var a, std::vector<Index> segment, Index segments) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  if (static_cast<Index>(segment.size()) != av.rows()) {
    throw ShapeError("segment_sum: one segment id per row required");
  }
  Matrix out = Matrix::Zero(segments, av.cols());
  for (std::size_t i = 0; i < segment.size(); ++i) {
    if (segment[i] < 0 || segment[i] >= segments) throw ShapeError("segment_sum: id out of range");
    out.row(segment[i]) += av.row(static_cast<Index>(i));
  }
  const int ia = a.id();
  return t.push(std::move(out), {a}, [ia, segment = std::move(segment)](Tape& tp, int self) {
    const Matrix& up = tp.upstream(self);
    Matrix g(static_cast<Index>(segment.size()), up.cols());
    for (std::size_t i = 0; i < segment.size(); ++i) g.row(static_cast<Index>(i)) = up.row(segment[i]);
    tp.accumulate(ia, g);
  });
}

Var hconcat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("hconcat: no operands");
  Tape& t = tape_of(parts.front());
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("hconcat: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Index>> layout;
  Index offset = 0;
  for (const Var& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    layout.emplace_back(p.id(), offset);
    offset += p.cols();
  }
  return t.push(std::move(out), parts, [layout = std::move(layout)](Tape& tp, int self) {
    const Matrix& up = tp.upstream(self);
    for (const auto& [id, off] : layout) {
      if (tp.needs_grad(id)) tp.accumulate(id, up.middleCols(off, tp.value(id).cols()));
    }
  });
}

Var col_block(Var a, Index first, Index count) {
  Tape& t = tape_of(a);
  if (first < 0 || count < 0 || first + count > a.cols()) throw ShapeError("col_block out of range");
  Matrix out = a.value().middleCols(first, count);
  const int ia = a.id();
  return t.push(std::move(out), {a}, [ia, first, count](Tape& tp, int self) {
    Matrix& g = tp.grad_buffer(ia);
    g.middleCols(first, count) += tp.upstream(self);
  });
}

Var mse_loss(Var pred, const Matrix& target) {
  Tape& t = tape_of(pred);
  require_same_shape(pred.value(), target, "mse_loss");
  const double n = static_cast<double>(target.size());
  Matrix residual = pred.value() - target;
  Matrix out(1, 1);
  out(0, 0) = residual.squaredNorm() / n;
  const int ip = pred.id();
  return t.push(std::move(out), {pred},
                [ip, residual = std::move(residual), n](Tape& tp, int self) {
                  tp.accumulate(ip, (2.0 * tp.upstream(self)(0, 0) / n) * residual);
                });
}

Var softmax_cross_entropy(Var logits, std::span<const Index> labels) {
  Tape& t = tape_of(logits);
  const Matrix& z = logits.value();
  if (static_cast<Index>(labels.size()) != z.rows()) {
    throw ShapeError("softmax_cross_entropy: one label per row required");
  }
  Matrix prob(z.rows(), z.cols());
  double total = 0.0;
  for (Index r = 0; r < z.rows(); ++r) {
    const Index y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= z.cols()) {
      throw InputError("class index " + std::to_string(y) + " outside [0, " +
                       std::to_string(z.cols()) + ")");
    }
    const double mx = z.row(r).maxCoeff();
    const auto e = (z.row(r).array() - mx).exp();
    const double s = e.sum();
    prob.row(r) = e / s;
    total += -(z(r, y) - mx - std::log(s));
  }
  const double n = static_cast<double>(z.rows());
  Matrix out(1, 1);
  out(0, 0) = total / n;
  const int il = logits.id();
  std::vector<Index> lab(labels.begin(), labels.end());
  return t.push(std::move(out), {logits},
                [il, prob = std::move(prob), lab = std::move(lab), n](Tape& tp, int self) {
                  Matrix g = prob;
                  for (std::size_t r = 0; r < lab.size(); ++r) g(static_cast<Index>(r), lab[r]) -= 1.0;
                  tp.accumulate(il, (tp.upstream(self)(0, 0) / n) * g);
                });
}

Var pair_first_layer(Var weight, std::vector<Index> src, std::vector<Index> dst, Vector xs,
                     Vector xd, Index enc_width) {
  Tape& t = tape_of(weight);
  const Matrix& w = weight.value();
  const std::size_t n = src.size();
  if (dst.size() != n || static_cast<std::size_t>(xs.size()) != n ||
      static_cast<std::size_t>(xd.size()) != n) {
    throw ShapeError("pair_first_layer: pair arrays disagree in length");
  }
  if (w.rows() != 2 * enc_width + 2) {
    throw ShapeError("pair_first_layer: weight has " + std::to_string(w.rows()) +
                     " rows, expected " + std::to_string(2 * enc_width + 2));
  }
  const Index vs = 2 * enc_width;
  Matrix out(static_cast<Index>(n), w.cols());
  for (std::size_t p = 0; p < n; ++p) {
    const Index r = static_cast<Index>(p);
    out.row(r) = xs[r] * w.row(vs) + xd[r] * w.row(vs + 1);
    if (enc_width > 0) out.row(r) += w.row(src[p]) + w.row(enc_width + dst[p]);
  }
  const int iw = weight.id();
  return t.push(std::move(out), {weight},
                [iw, src = std::move(src), dst = std::move(dst), xs = std::move(xs),
                 xd = std::move(xd), enc_width, vs](Tape& tp, int self) {
                  const Matrix& up = tp.upstream(self);
                  Matrix& g = tp.grad_buffer(iw);
                  g.row(vs).noalias() += xs.transpose() * up;
                  g.row(vs + 1).noalias() += xd.transpose() * up;
                  if (enc_width > 0) {
                    for (std::size_t p = 0; p < src.size(); ++p) {
                      const Index r = static_cast<Index>(p);
                      g.row(src[p]) += up.row(r);
                      g.row(enc_width + dst[p]) += up.row(r);
                    }
                  }
                });
}

namespace {

constexpr Index kPairTile = 512;

// Pre-activation of the first layer for pair rows [first, first + n), one
// pair per column. wt is the transposed first weight.
void pair_cols_first(const Matrix& wt, const PairBatch& pb, Index first, Index n, Matrix& out) {
  const Index vs = 2 * pb.enc_width;
  out.noalias() = wt.col(vs) * pb.xs.segment(first, n).transpose();
  out.noalias() += wt.col(vs + 1) * pb.xd.segment(first, n).transpose();
  if (pb.enc_width > 0) {
    for (Index r = 0; r < n; ++r) {
      const auto p = static_cast<std::size_t>(first + r);
      out.col(r) += wt.col(pb.src[p]) + wt.col(pb.enc_width + pb.dst[p]);
    }
  }
}

void tanh_in_place(Matrix& m) { m.array() = 1.0 - 2.0 / ((2.0 * m.array()).exp() + 1.0); }

}  // namespace

Var pair_mlp(std::span<const Var> weights, std::shared_ptr<const PairBatch> pairs) {
  if (weights.empty()) throw ShapeError("pair_mlp: no layers");
  Tape& t = tape_of(weights.front());
  const PairBatch& pb = *pairs;
  const Index n = pb.size();
  if (static_cast<Index>(pb.src.size()) != n || static_cast<Index>(pb.dst.size()) != n ||
      pb.xd.size() != n) {
    throw ShapeError("pair_mlp: pair arrays disagree in length");
  }
  if (weights.front().rows() != 2 * pb.enc_width + 2) {
    throw ShapeError("pair_mlp: first weight has " + std::to_string(weights.front().rows()) +
                     " rows, expected " + std::to_string(2 * pb.enc_width + 2));
  }
  for (std::size_t i = 1; i < weights.size(); ++i) {
    if (weights[i].rows() != weights[i - 1].cols()) throw ShapeError("pair_mlp: layer shapes do not chain");
  }
  const std::size_t depth = weights.size();
  std::vector<int> ids;
  for (const Var& w : weights) ids.push_back(w.id());

  const auto transposed = [depth](const auto& value_of) {
    std::vector<Matrix> wt(depth);
    for (std::size_t i = 0; i < depth; ++i) wt[i] = value_of(i).transpose();
    return wt;
  };

  Matrix out(n, weights.back().cols());
  {
    const auto wt = transposed([&](std::size_t i) -> const Matrix& { return weights[i].value(); });
    std::vector<Matrix> act(depth);
    for (Index first = 0; first < n; first += kPairTile) {
      const Index cols = std::min(kPairTile, n - first);
      act[0].resize(wt[0].rows(), cols);
      pair_cols_first(wt[0], pb, first, cols, act[0]);
      for (std::size_t i = 1; i < depth; ++i) {
        tanh_in_place(act[i - 1]);
        act[i].noalias() = wt[i] * act[i - 1];
      }
      out.middleRows(first, cols) = act[depth - 1].transpose();
    }
  }

  return t.push(std::move(out), weights, [ids, pairs, transposed](Tape& tp, int self) {
    const PairBatch& pb = *pairs;
    const std::size_t depth = ids.size();
    const Index n = pb.size();
    const Index vs = 2 * pb.enc_width;
    const Matrix& up = tp.upstream(self);
    const auto wt = transposed([&](std::size_t i) -> const Matrix& { return tp.value(ids[i]); });
    // Gradients accumulate transposed (layer width x fan-in).
    std::vector<Matrix> gt(depth);
    for (std::size_t i = 0; i < depth; ++i) {
      if (tp.needs_grad(ids[i])) gt[i] = Matrix::Zero(wt[i].rows(), wt[i].cols());
    }
    std::vector<Matrix> act(depth);
    Matrix delta;
    Matrix next;
    for (Index first = 0; first < n; first += kPairTile) {
      const Index cols = std::min(kPairTile, n - first);
      // act[i] holds the post-tanh output of layer i for i < depth - 1.
      act[0].resize(wt[0].rows(), cols);
      pair_cols_first(wt[0], pb, first, cols, act[0]);
      for (std::size_t i = 1; i < depth; ++i) {
        tanh_in_place(act[i - 1]);
        if (i + 1 < depth) act[i].noalias() = wt[i] * act[i - 1];
      }
      delta = up.middleRows(first, cols).transpose();
      for (std::size_t i = depth - 1; i >= 1; --i) {
        if (gt[i].size()) gt[i].noalias() += delta * act[i - 1].transpose();
        next.noalias() = wt[i].transpose() * delta;
        next.array() *= 1.0 - act[i - 1].array().square();
        delta.swap(next);
      }
      if (!gt[0].size()) continue;
      Matrix& g = gt[0];
      g.col(vs).noalias() += delta * pb.xs.segment(first, cols);
      g.col(vs + 1).noalias() += delta * pb.xd.segment(first, cols);
      if (pb.enc_width > 0) {
        for (Index r = 0; r < cols; ++r) {
          const auto p = static_cast<std::size_t>(first + r);
          g.col(pb.src[p]) += delta.col(r);
          g.col(pb.enc_width + pb.dst[p]) += delta.col(r);
        }
      }
    }
    for (std::size_t i = 0; i < depth; ++i) {
      if (gt[i].size()) tp.grad_buffer(ids[i]).noalias() += gt[i].transpose();
    }
  });
}

}  // namespace tgn::ad
