#include "disk/autodiff.hpp"

#include "disk/errors.hpp"

#include <cassert>
#include <cmath>

namespace disk::ad {

Var Tape::emit(Matrix value, std::span<const Var> inputs, Backward back) {
  Node n;
  n.value = std::move(value);
  if (record_) {
    for (const auto& v : inputs) {
      assert(v.tape() == this);
      if (nodes_[v.id()].requires_grad) n.requires_grad = true;
    }
    if (n.requires_grad) n.backward = std::move(back);
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Matrix v) {
  Node n;
  n.value = std::move(v);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::input(Matrix v) {
  Node n;
  n.value = std::move(v);
  n.requires_grad = record_;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.value = p.value;
  if (record_) {
    n.requires_grad = true;
    n.backward = [&p](Tape& t, int self) {
      if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) p.zero_grad();
      p.grad += t.grad_of(self);
    };
  }
  nodes_.push_back(std::move(n));
  int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(&p, id);
  return Var(this, id);
}

void Tape::backward(const Var& loss, double seed) {
  if (!record_) throw Error("backward() on a non-recording tape");
  accumulate(loss.id(), Matrix::Constant(loss.rows(), loss.cols(), seed));
  run_backward(loss.id());
}

void Tape::backward(std::span<const std::pair<Var, Matrix>> seeds) {
  if (!record_) throw Error("backward() on a non-recording tape");
  int last = -1;
  for (const auto& [v, g] : seeds) {
    accumulate(v.id(), g);
    last = std::max(last, v.id());
  }
  if (last >= 0) run_backward(last);
}

void Tape::run_backward(int last) {
  for (int i = last; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.has_grad && n.backward) n.backward(*this, i);
  }
}

Matrix Tape::grad(const Var& v) const {
  const Node& n = nodes_[v.id()];
  if (n.has_grad) return n.grad;
  return Matrix::Zero(n.value.rows(), n.value.cols());
}

// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  Tape& t = *a.tape();
  int ia = a.id(), ib = b.id();
  return t.emit(a.value() * b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  Tape& t = *a.tape();
  int ia = a.id(), ib = b.id();
  return t.emit(a.value() * b.value().transpose(), {a, b}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib));
    if (t.requires_grad(ib)) t.accumulate(ib, g.transpose() * t.value(ia));
  });
}

Var transpose(const Var& a) {
  Tape& t = *a.tape();
  int ia = a.id();
  return t.emit(a.value().transpose(), {a},
                [ia](Tape& t, int self) { t.accumulate(ia, t.grad_of(self).transpose()); });
}

Var add(const Var& a, const Var& b) {
  Tape& t = *a.tape();
  int ia = a.id(), ib = b.id();
  return t.emit(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad_of(self));
    t.accumulate(ib, t.grad_of(self));
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& t = *a.tape();
  int ia = a.id(), ib = b.id();
  return t.emit(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad_of(self));
    t.accumulate(ib, -t.grad_of(self));
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& t = *a.tape();
  int ia = a.id(), ib = b.id();
  return t.emit(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var affine(const Var& a, double alpha, double beta) {
  Tape& t = *a.tape();
  int ia = a.id();
  Matrix v = (alpha * a.value().array() + beta).matrix();
  return t.emit(std::move(v), {a}, [ia, alpha](Tape& t, int self) { t.accumulate(ia, alpha * t.grad_of(self)); });
}

Var add_row(const Var& a, const Var& row) {
  Tape& t = *a.tape();
  int ia = a.id(), ir = row.id();
  Matrix v = a.value().rowwise() + row.value().row(0);
  return t.emit(std::move(v), {a, row}, [ia, ir](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    t.accumulate(ia, g);
    if (t.requires_grad(ir)) t.accumulate(ir, g.colwise().sum());
  });
}

Var add_col(const Var& a, const Var& col) {
  Tape& t = *a.tape();
  int ia = a.id(), ic = col.id();
  Matrix v = a.value().colwise() + col.value().col(0);
  return t.emit(std::move(v), {a, col}, [ia, ic](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    t.accumulate(ia, g);
    if (t.requires_grad(ic)) t.accumulate(ic, g.rowwise().sum());
  });
}

Var mul_col(const Var& a, const Var& col) {
  Tape& t = *a.tape();
  int ia = a.id(), ic = col.id();
  Matrix v = (a.value().array().colwise() * col.value().col(0).array()).matrix();
  return t.emit(std::move(v), {a, col}, [ia, ic](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    if (t.requires_grad(ia))
      t.accumulate(ia, (g.array().colwise() * t.value(ic).col(0).array()).matrix());
    if (t.requires_grad(ic)) t.accumulate(ic, g.cwiseProduct(t.value(ia)).rowwise().sum());
  });
}

Var tanh(const Var& a) {
  Tape& t = *a.tape();
  int ia = a.id();
  return t.emit(a.value().array().tanh().matrix(), {a}, [ia](Tape& t, int self) {
    const Matrix& y = t.value(self);
    t.accumulate(ia, (t.grad_of(self).array() * (1.0 - y.array().square())).matrix());
  });
}

Var sigmoid(const Var& a) {
  Tape& t = *a.tape();
  int ia = a.id();
  Matrix v = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return t.emit(std::move(v), {a}, [ia](Tape& t, int self) {
    const Matrix& y = t.value(self);
    t.accumulate(ia, (t.grad_of(self).array() * y.array() * (1.0 - y.array())).matrix());
  });
}

Var relu(const Var& a) {
  Tape& t = *a.tape();
  int ia = a.id();
  return t.emit(a.value().cwiseMax(0.0), {a}, [ia](Tape& t, int self) {
    const Matrix& x = t.value(ia);
    t.accumulate(ia, (t.grad_of(self).array() * (x.array() > 0.0).cast<double>()).matrix());
  });
}

Var sum(const Var& a) {
  Tape& t = *a.tape();
  int ia = a.id();
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return t.emit(std::move(v), {a}, [ia](Tape& t, int self) {
    const Matrix& x = t.value(ia);
    t.accumulate(ia, Matrix::Constant(x.rows(), x.cols(), t.grad_of(self)(0, 0)));
  });
}

Var mean(const Var& a) {
  Tape& t = *a.tape();
  int ia = a.id();
  Matrix v(1, 1);
  v(0, 0) = a.value().mean();
  return t.emit(std::move(v), {a}, [ia](Tape& t, int self) {
    const Matrix& x = t.value(ia);
    double g = t.grad_of(self)(0, 0) / static_cast<double>(x.size());
    t.accumulate(ia, Matrix::Constant(x.rows(), x.cols(), g));
  });
}

Var mean_rows(const Var& a) {
  Tape& t = *a.tape();
  int ia = a.id();
  Matrix v = a.value().colwise().mean();
  return t.emit(std::move(v), {a}, [ia](Tape& t, int self) {
    const Matrix& x = t.value(ia);
    Matrix g = t.grad_of(self).replicate(x.rows(), 1) / static_cast<double>(x.rows());
    t.accumulate(ia, g);
  });
}

Var frobenius_norm(const Var& a) {
  Tape& t = *a.tape();
  int ia = a.id();
  Matrix v(1, 1);
  v(0, 0) = a.value().norm();
  return t.emit(std::move(v), {a}, [ia](Tape& t, int self) {
    double n = t.value(self)(0, 0);
    if (n == 0.0) return;
    t.accumulate(ia, (t.grad_of(self)(0, 0) / n) * t.value(ia));
  });
}

Var concat_cols(std::initializer_list<Var> parts) { return concat_cols(std::vector<Var>(parts)); }

Var concat_cols(const std::vector<Var>& parts) {
  Tape& t = *parts.front().tape();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw Error("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix v(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    v.middleCols(off, p.cols()) = p.value();
    spans.emplace_back(p.id(), off);
    off += p.cols();
  }
  return t.emit(std::move(v), std::span<const Var>(parts), [spans](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    for (const auto& [id, o] : spans)
      if (t.requires_grad(id)) t.accumulate(id, g.middleCols(o, t.value(id).cols()));
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  Tape& t = *parts.front().tape();
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw Error("concat_rows: column count mismatch");
    rows += p.rows();
  }
  Matrix v(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    v.middleRows(off, p.rows()) = p.value();
    spans.emplace_back(p.id(), off);
    off += p.rows();
  }
  return t.emit(std::move(v), std::span<const Var>(parts), [spans](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    for (const auto& [id, o] : spans)
      if (t.requires_grad(id)) t.accumulate(id, g.middleRows(o, t.value(id).rows()));
  });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index n) {
  Tape& t = *a.tape();
  int ia = a.id();
  return t.emit(a.value().middleRows(start, n), {a}, [ia, start, n](Tape& t, int self) {
    const Matrix& x = t.value(ia);
    Matrix g = Matrix::Zero(x.rows(), x.cols());
    g.middleRows(start, n) = t.grad_of(self);
    t.accumulate(ia, g);
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index n) {
  Tape& t = *a.tape();
  int ia = a.id();
  return t.emit(a.value().middleCols(start, n), {a}, [ia, start, n](Tape& t, int self) {
    const Matrix& x = t.value(ia);
    Matrix g = Matrix::Zero(x.rows(), x.cols());
    g.middleCols(start, n) = t.grad_of(self);
    t.accumulate(ia, g);
  });
}

Var pad_rows(const Var& a, Eigen::Index total_rows) {
  Tape& t = *a.tape();
  int ia = a.id();
  const Eigen::Index r = a.rows();
  if (total_rows < r) throw Error("pad_rows: target smaller than input");
  Matrix v = Matrix::Zero(total_rows, a.cols());
  v.topRows(r) = a.value();
  return t.emit(std::move(v), {a}, [ia, r](Tape& t, int self) { t.accumulate(ia, t.grad_of(self).topRows(r)); });
}

Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  Tape& t = *a.tape();
  int ia = a.id();
  if (rows * cols != a.value().size()) throw Error("reshape: size mismatch");
  Matrix v = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  return t.emit(std::move(v), {a}, [ia](Tape& t, int self) {
    const Matrix& x = t.value(ia);
    const Matrix& g = t.grad_of(self);
    t.accumulate(ia, Eigen::Map<const Matrix>(g.data(), x.rows(), x.cols()));
  });
}

Var gather_rows(const Var& table, std::span<const int> ids) {
  Tape& t = *table.tape();
  int it = table.id();
  const Matrix& tab = table.value();
  Matrix v(static_cast<Eigen::Index>(ids.size()), tab.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tab.rows()) throw Error("gather_rows: index out of range");
    v.row(static_cast<Eigen::Index>(i)) = tab.row(ids[i]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return t.emit(std::move(v), {table}, [it, idx = std::move(idx)](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    Matrix acc = Matrix::Zero(t.value(it).rows(), t.value(it).cols());
    for (std::size_t i = 0; i < idx.size(); ++i) acc.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(it, acc);
  });
}

Var softmax_rows(const Var& a, Eigen::Index valid_cols, bool causal, Eigen::Index causal_offset) {
  Tape& t = *a.tape();
  int ia = a.id();
  const Matrix& x = a.value();
  const Eigen::Index R = x.rows(), C = x.cols();
  Matrix y = Matrix::Zero(R, C);
  for (Eigen::Index i = 0; i < R; ++i) {
    Eigen::Index limit = valid_cols < 0 ? C : std::min(valid_cols, C);
    if (causal) limit = std::min(limit, i + causal_offset + 1);
    if (limit <= 0) throw Error("softmax_rows: fully masked row");
    auto row = x.row(i).head(limit);
    double m = row.maxCoeff();
    auto e = (row.array() - m).exp();
    y.row(i).head(limit) = e / e.sum();
  }
  return t.emit(std::move(y), {a}, [ia](Tape& t, int self) {
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad_of(self);
    Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    Matrix gx = y.cwiseProduct(g - dot.replicate(1, g.cols()));
    t.accumulate(ia, gx);
  });
}

Var log_softmax_rows(const Var& a) {
  Tape& t = *a.tape();
  int ia = a.id();
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double m = x.row(i).maxCoeff();
    double lse = m + std::log((x.row(i).array() - m).exp().sum());
    y.row(i) = x.row(i).array() - lse;
  }
  return t.emit(std::move(y), {a}, [ia](Tape& t, int self) {
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad_of(self);
    Eigen::VectorXd gs = g.rowwise().sum();
    Matrix p = y.array().exp().matrix();
    t.accumulate(ia, g - (p.array().colwise() * gs.array()).matrix());
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  Tape& t = *x.tape();
  int ix = x.id(), ig = gain.id(), ib = bias.id();
  const Matrix& xv = x.value();
  const Eigen::Index R = xv.rows(), C = xv.cols();
  Matrix xhat(R, C);
  Eigen::VectorXd inv_std(R);
  for (Eigen::Index i = 0; i < R; ++i) {
    double mu = xv.row(i).mean();
    double var = (xv.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mu) * inv_std(i);
  }
  Matrix y = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  y.rowwise() += bias.value().row(0);
  return t.emit(std::move(y), {x, gain, bias},
                [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, int self) {
                  const Matrix& g = t.grad_of(self);
                  if (t.requires_grad(ig)) t.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
                  if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
                  if (!t.requires_grad(ix)) return;
                  Matrix gx = (g.array().rowwise() * t.value(ig).row(0).array()).matrix();
                  const double C = static_cast<double>(gx.cols());
                  for (Eigen::Index i = 0; i < gx.rows(); ++i) {
                    double m1 = gx.row(i).sum() / C;
                    double m2 = gx.row(i).dot(xhat.row(i)) / C;
                    gx.row(i) = (gx.row(i).array() - m1 - xhat.row(i).array() * m2) * inv_std(i);
                  }
                  t.accumulate(ix, gx);
                });
}

Var pick_sum(const Var& a, std::span<const int> targets) {
  Tape& t = *a.tape();
  int ia = a.id();
  const Matrix& x = a.value();
  if (static_cast<Eigen::Index>(targets.size()) != x.rows()) throw Error("pick_sum: one target per row required");
  Matrix v(1, 1);
  v(0, 0) = 0.0;
  for (std::size_t r = 0; r < targets.size(); ++r) v(0, 0) += x(static_cast<Eigen::Index>(r), targets[r]);
  std::vector<int> tg(targets.begin(), targets.end());
  return t.emit(std::move(v), {a}, [ia, tg = std::move(tg)](Tape& t, int self) {
    const Matrix& x = t.value(ia);
    Matrix g = Matrix::Zero(x.rows(), x.cols());
    double s = t.grad_of(self)(0, 0);
    for (std::size_t r = 0; r < tg.size(); ++r) g(static_cast<Eigen::Index>(r), tg[r]) = s;
    t.accumulate(ia, g);
  });
}

Var pick(const Var& a, Eigen::Index row, Eigen::Index col) {
  Tape& t = *a.tape();
  int ia = a.id();
  Matrix v(1, 1);
  v(0, 0) = a.value()(row, col);
  return t.emit(std::move(v), {a}, [ia, row, col](Tape& t, int self) {
    const Matrix& x = t.value(ia);
    Matrix g = Matrix::Zero(x.rows(), x.cols());
    g(row, col) = t.grad_of(self)(0, 0);
    t.accumulate(ia, g);
  });
}

Var dropout(const Var& a) {
  Tape& t = *a.tape();
  const double p = t.dropout_rate();
  if (p <= 0.0) return a;
  int ia = a.id();
  std::bernoulli_distribution keep(1.0 - p);
  Matrix mask(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(t.rng()) ? 1.0 / (1.0 - p) : 0.0;
  Matrix v = a.value().cwiseProduct(mask);
  return t.emit(std::move(v), {a}, [ia, mask = std::move(mask)](Tape& t, int self) {
    t.accumulate(ia, t.grad_of(self).cwiseProduct(mask));
  });
}

} // namespace disk::ad
