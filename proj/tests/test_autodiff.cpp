#include "disk/autodiff.hpp"
#include "disk/layers.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

using namespace disk;
using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

using Fn = std::function<Var(Tape&, const std::vector<Var>&)>;

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Reduces f to a scalar with a fixed random projection, then compares the tape
// gradient of every input against central differences.
double max_grad_error(const Fn& f, std::vector<Matrix> inputs, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  Matrix proj;
  auto scalar = [&](Tape& t, const std::vector<Var>& xs) {
    Var out = f(t, xs);
    if (proj.size() == 0) proj = random_matrix(rng, out.rows(), out.cols());
    return ad::sum(ad::mul(out, t.constant(proj)));
  };
  Tape t;
  std::vector<Var> xs;
  for (const auto& m : inputs) xs.push_back(t.input(m));
  Var loss = scalar(t, xs);
  t.backward(loss);
  double worst = 0;
  const double eps = 1e-6;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Matrix g = t.grad(xs[k]);
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      auto eval = [&](double delta) {
        auto copy = inputs;
        copy[k].data()[i] += delta;
        Tape u(false);
        std::vector<Var> ys;
        for (const auto& m : copy) ys.push_back(u.constant(m));
        return scalar(u, ys).scalar();
      };
      double num = (eval(eps) - eval(-eps)) / (2 * eps);
      double err = std::abs(num - g.data()[i]) / std::max(1.0, std::abs(num) + std::abs(g.data()[i]));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

} // namespace

TEST_CASE("op gradients match finite differences") {
  std::mt19937_64 rng(3);
  auto A = random_matrix(rng, 3, 4), B = random_matrix(rng, 4, 2), C = random_matrix(rng, 3, 4);
  auto row = random_matrix(rng, 1, 4), col = random_matrix(rng, 3, 1);
  const double tol = 1e-6;

  CHECK(max_grad_error([](Tape&, auto& x) { return ad::matmul(x[0], x[1]); }, {A, B}) < tol);
  CHECK(max_grad_error([](Tape&, auto& x) { return ad::matmul_nt(x[0], x[1]); }, {A, C}) < tol);
  CHECK(max_grad_error([](Tape&, auto& x) { return ad::transpose(x[0]); }, {A}) < tol);
  CHECK(max_grad_error([](Tape&, auto& x) { return ad::sub(ad::add(x[0], x[1]), ad::mul(x[0], x[1])); }, {A, C}) < tol);
  CHECK(max_grad_error([](Tape&, auto& x) { return ad::affine(x[0], -2.0, 0.5); }, {A}) < tol);
  CHECK(max_grad_error([](Tape&, auto& x) { return ad::add_row(x[0], x[1]); }, {A, row}) < tol);
  CHECK(max_grad_error([](Tape&, auto& x) { return ad::add_col(x[0], x[1]); }, {A, col}) < tol);
  CHECK(max_grad_error([](Tape&, auto& x) { return ad::mul_col(x[0], x[1]); }, {A, col}) < tol);
  CHECK(max_grad_error([](Tape&, auto& x) { return ad::tanh(x[0]); }, {A}) < tol);
  CHECK(max_grad_error([](Tape&, auto& x) { return ad::sigmoid(x[0]); }, {A}) < tol);
  CHECK(max_grad_error([](Tape&, auto& x) { return ad::relu(x[0]); }, {A}) < tol);
  CHECK(max_grad_error([](Tape&, auto& x) { return ad::mean(x[0]); }, {A}) < tol);
  CHECK(max_grad_error([](Tape&, auto& x) { return ad::mean_rows(x[0]); }, {A}) < tol);
  CHECK(max_grad_error([](Tape&, auto& x) { return ad::frobenius_norm(x[0]); }, {A}) < tol);
  CHECK(max_grad_error([](Tape&, auto& x) { return ad::concat_cols({x[0], x[1]}); }, {A, col}) < tol);
  CHECK(max_grad_error([](Tape&, auto& x) { return ad::concat_rows(std::vector<Var>{x[0], x[1]}); }, {A, row}) < tol);
  CHECK(max_grad_error([](Tape&, auto& x) { return ad::slice_rows(x[0], 1, 2); }, {A}) < tol);
  CHECK(max_grad_error([](Tape&, auto& x) { return ad::slice_cols(x[0], 1, 2); }, {A}) < tol);
  CHECK(max_grad_error([](Tape&, auto& x) { return ad::pad_rows(x[0], 5); }, {A}) < tol);
  CHECK(max_grad_error([](Tape&, auto& x) { return ad::reshape(x[0], 2, 6); }, {A}) < tol);
  CHECK(max_grad_error([](Tape&, auto& x) { return ad::gather_rows(x[0], std::vector<int>{2, 0, 2}); }, {A}) < tol);
  CHECK(max_grad_error([](Tape&, auto& x) { return ad::softmax_rows(x[0]); }, {A}) < tol);
  CHECK(max_grad_error([](Tape&, auto& x) { return ad::softmax_rows(x[0], 3); }, {A}) < tol);
  CHECK(max_grad_error([](Tape&, auto& x) { return ad::softmax_rows(x[0], -1, true, 1); }, {A}) < tol);
  CHECK(max_grad_error([](Tape&, auto& x) { return ad::log_softmax_rows(x[0]); }, {A}) < tol);
  CHECK(max_grad_error([](Tape&, auto& x) { return ad::layer_norm(x[0], x[1], x[2]); },
                       {A, row, random_matrix(rng, 1, 4)}) < 1e-5);
  CHECK(max_grad_error([](Tape&, auto& x) { return ad::pick_sum(x[0], std::vector<int>{1, 3, 0}); }, {A}) < tol);
  CHECK(max_grad_error([](Tape&, auto& x) { return ad::pick(x[0], 2, 1); }, {A}) < tol);
}

TEST_CASE("softmax rows and masking") {
  Tape t(false);
  std::mt19937_64 rng(8);
  Var a = t.constant(random_matrix(rng, 5, 7, 4.0));
  for (auto s : {ad::softmax_rows(a), ad::softmax_rows(a, 4), ad::softmax_rows(a, -1, true)}) {
    for (Eigen::Index i = 0; i < s.rows(); ++i) CHECK(std::abs(s.value().row(i).sum() - 1.0) < 1e-12);
  }
  auto masked = ad::softmax_rows(a, 4).value();
  CHECK(masked.rightCols(3).cwiseAbs().maxCoeff() == 0.0);
  auto causal = ad::softmax_rows(a, -1, true).value();
  for (Eigen::Index i = 0; i < 5; ++i)
    for (Eigen::Index j = i + 1; j < 7; ++j) CHECK(causal(i, j) == 0.0);
  // huge logits stay finite
  Var big = t.constant(Matrix::Constant(1, 3, 1e6));
  CHECK(ad::log_softmax_rows(big).value().allFinite());
}

TEST_CASE("gradients accumulate into parameters across uses") {
  std::mt19937_64 rng(1);
  nn::ParamStore store;
  auto& W = store.add("w", 2, 2, nn::Init::Xavier, rng);
  store.zero_grad();
  Tape t;
  Var x = t.constant(Matrix::Identity(2, 2));
  Var w1 = t.param(W), w2 = t.param(W);
  CHECK(w1.id() == w2.id());
  t.backward(ad::sum(ad::add(ad::matmul(x, w1), ad::matmul(x, w2))));
  CHECK(W.grad.isApprox(Matrix::Constant(2, 2, 2.0)));
}

TEST_CASE("recording off keeps values and skips closures") {
  Tape t(false);
  Var a = t.constant(Matrix::Constant(2, 2, 1.0));
  Var b = ad::matmul(a, a);
  CHECK(b.value()(0, 0) == 2.0);
  CHECK_FALSE(t.recording());
}

TEST_CASE("dropout is seeded per tape") {
  auto run = [](std::uint64_t seed) {
    Tape t;
    t.set_dropout(0.5, seed);
    return ad::dropout(t.constant(Matrix::Ones(4, 8))).value();
  };
  CHECK(run(4) == run(4));
  CHECK(run(4) != run(5));
  Tape off;
  CHECK(ad::dropout(off.constant(Matrix::Ones(2, 2))).value() == Matrix::Ones(2, 2));
}

TEST_CASE("layer building blocks") {
  std::mt19937_64 rng(2);
  nn::ParamStore store;
  auto mha = nn::MultiHeadAttention::create(store, "mha", 8, 2, rng);
  auto gru = nn::GruCell::create(store, "gru", 3, 8, rng);
  auto enc = nn::TransformerEncoder::create(store, "enc", {8, 16, 2, 2}, rng);
  CHECK_THROWS(store.add("mha/query/W", 1, 1, nn::Init::Zeros, rng));

  Tape t(false);
  Var x = t.constant(random_matrix(rng, 5, 8));
  // split and fused attention agree
  auto [k, v] = mha.project_kv(t, x);
  CHECK(mha.attend(t, x, k, v, -1, true).value().isApprox(mha(t, x, x, -1, true).value(), 1e-12));

  // causal: changing a later row does not move earlier outputs
  Matrix y = x.value();
  y.row(4).setConstant(3.0);
  Var xy = t.constant(y);
  auto before = mha(t, x, x, -1, true).value(), after = mha(t, xy, xy, -1, true).value();
  CHECK(before.topRows(4).isApprox(after.topRows(4), 1e-12));

  // padding rows never change the valid outputs
  Var padded = ad::pad_rows(x, 7);
  CHECK(enc(t, padded, 5).value().topRows(5).isApprox(enc(t, x).value(), 1e-10));

  Var h = gru(t, t.constant(random_matrix(rng, 2, 3)), t.constant(Matrix::Zero(2, 8)));
  CHECK(h.rows() == 2);
  CHECK(h.value().cwiseAbs().maxCoeff() < 1.0);

  auto pe = nn::sinusoid_positions(4, 6);
  CHECK(pe(0, 0) == 0.0);
  CHECK(pe(0, 1) == 1.0);
  CHECK(std::abs(pe(1, 0) - std::sin(1.0)) < 1e-12);
}
