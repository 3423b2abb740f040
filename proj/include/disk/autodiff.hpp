#ifndef DISK_AUTODIFF_HPP
#define DISK_AUTODIFF_HPP

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records every operation applied to its Vars. Values are computed
// eagerly; backward() replays the recorded closures in reverse order. A tape
// built with record=false only evaluates (no closures, no gradients), which is
// what inference uses.

#include <deque>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace disk::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

class Var {
public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

private:
  friend class Tape;
  Var(Tape* t, int id) : tape_(t), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
public:
  using Backward = std::function<void(Tape&, int)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Matrix v);
  // leaf whose gradient can be read back with grad()
  Var input(Matrix v);
  // one leaf per parameter per tape; backward() adds into Parameter::grad
  Var param(Parameter& p);

  void backward(const Var& loss, double seed = 1.0);
  void backward(std::span<const std::pair<Var, Matrix>> seeds);
  // zero-filled when nothing reached the node
  Matrix grad(const Var& v) const;

  // dropout applies only while p > 0; the mask stream is seeded per tape
  void set_dropout(double p, std::uint64_t seed) {
    dropout_ = p;
    rng_.seed(seed);
  }
  double dropout_rate() const { return dropout_; }
  std::mt19937_64& rng() { return rng_; }

  // -- op construction interface --
  Var emit(Matrix value, std::span<const Var> inputs, Backward back);
  Var emit(Matrix value, std::initializer_list<Var> inputs, Backward back) {
    return emit(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(back));
  }
  const Matrix& value(int id) const { return nodes_[id].value; }
  const Matrix& grad_of(int id) const { return nodes_[id].grad; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  template <typename Derived>
  void accumulate(int id, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad = g;
      n.has_grad = true;
    } else {
      n.grad += g;
    }
  }

private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };

  void run_backward(int last);

  std::deque<Node> nodes_;
  std::unordered_map<Parameter*, int> param_nodes_;
  bool record_;
  double dropout_ = 0.0;
  std::mt19937_64 rng_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }

// ---- elementwise / linear algebra ----
Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);  // a * b^T
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);          // hadamard
Var affine(const Var& a, double alpha, double beta);  // alpha * a + beta
Var add_row(const Var& a, const Var& row);    // broadcast 1 x c over rows
Var add_col(const Var& a, const Var& col);    // broadcast r x 1 over columns
Var mul_col(const Var& a, const Var& col);    // scale row i by col(i)
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);

// ---- reductions ----
Var sum(const Var& a);        // 1 x 1
Var mean(const Var& a);       // 1 x 1
Var mean_rows(const Var& a);  // 1 x c
Var frobenius_norm(const Var& a);  // 1 x 1, subgradient 0 at 0

// ---- shape ----
Var concat_cols(std::initializer_list<Var> parts);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index n);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index n);
Var pad_rows(const Var& a, Eigen::Index total_rows);  // zero rows appended
Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols);  // row-major order preserved
Var gather_rows(const Var& table, std::span<const int> ids);

// ---- normalisation ----
// Row softmax. Columns >= valid_cols are masked out; with causal, entry (i, j)
// is masked for j > i + causal_offset.
Var softmax_rows(const Var& a, Eigen::Index valid_cols = -1, bool causal = false, Eigen::Index causal_offset = 0);
Var log_softmax_rows(const Var& a);
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

// ---- losses ----
// sum_t a(t, targets[t]); 1 x 1
Var pick_sum(const Var& a, std::span<const int> targets);
Var pick(const Var& a, Eigen::Index row, Eigen::Index col);

Var dropout(const Var& a);

} // namespace disk::ad

#endif
