#include "disk/sketch.hpp"
#include "disk/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace disk;

namespace {

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> n;
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

ModelConfig small() {
  ModelConfig c;
  c.dim = 4;
  c.pos_dim = 2;
  return c;
}

// 6 tokens, quantities at 0 and 3
qcg::QuantityCellGraph two_cells() {
  std::vector<qcg::Node> cells{{0, qcg::NodeRole::Quantity, 0, "CD"},
                               {3, qcg::NodeRole::Quantity, 1, "CD"},
                               {1, qcg::NodeRole::Attribute, 0, "NN"},
                               {4, qcg::NodeRole::Attribute, 1, "VB"}};
  return qcg::build_graph(cells, 6);
}

} // namespace

TEST_CASE("domain gate") {
  std::mt19937_64 rng(1);
  Tape t(false);
  Matrix U = random_matrix(rng, 3, 4), W_Q = random_matrix(rng, 4, 4);
  Var q;
  auto out = sketch::domain_gate(t.constant(U), t.constant(random_matrix(rng, 1, 4)), t.constant(Matrix::Zero(8, 4)),
                                 t.constant(W_Q), &q);
  CHECK((q.value().array() == 0.5).all());
  Matrix expect = 0.5 * (U * W_Q).array().tanh().matrix();
  CHECK(out.value().isApprox(expect));

  auto random_gate = sketch::domain_gate(t.constant(U), t.constant(random_matrix(rng, 1, 4)),
                                         t.constant(random_matrix(rng, 8, 4)), t.constant(W_Q), &q);
  CHECK((q.value().array() > 0).all());
  CHECK((q.value().array() < 1).all());
}

TEST_CASE("normalized adjacency") {
  qcg::BinaryMatrix single(1, 1);
  CHECK(sketch::normalized_adjacency(single)(0, 0) == 1.0);
  qcg::BinaryMatrix pair(2, 2);
  pair(0, 1) = pair(1, 0) = 1;
  CHECK(sketch::normalized_adjacency(pair).isApprox(Matrix::Constant(2, 2, 0.5)));
  // path 0-1-2: degrees with self loops are 2, 3, 2
  qcg::BinaryMatrix path(3, 3);
  path(0, 1) = path(1, 0) = path(1, 2) = path(2, 1) = 1;
  auto a = sketch::normalized_adjacency(path);
  CHECK(a(0, 1) == doctest::Approx(1 / std::sqrt(6.0)));
  CHECK(a(1, 1) == doctest::Approx(1 / 3.0));
  CHECK(a(0, 2) == 0.0);
  CHECK(a.isApprox(a.transpose()));
}

TEST_CASE("gcn layer matches a hand computation") {
  Tape t(false);
  qcg::BinaryMatrix pair(2, 2);
  pair(0, 1) = pair(1, 0) = 1;
  Matrix S0(2, 2), W(2, 2);
  S0 << 1, 0, 0, 1;
  W << 1, -1, 2, 0;
  std::vector<Var> weights{t.constant(W)};
  auto S = sketch::gcn_forward(t.constant(S0), t.constant(sketch::normalized_adjacency(pair)), weights).value();
  // Ahat S0 = 0.5 everywhere; times W = [1.5, -0.5]; relu -> [1.5, 0]
  CHECK(S(0, 0) == doctest::Approx(1.5));
  CHECK(S(0, 1) == 0.0);
  CHECK(S.row(0) == S.row(1));
}

TEST_CASE("node initialization concatenates token and POS rows") {
  std::mt19937_64 rng(2);
  Tape t(false);
  auto g = two_cells();
  Matrix U = random_matrix(rng, 6, 4), pos = random_matrix(rng, 3, 2);
  std::vector<int> ids{0, 0, 1, 2};
  auto S0 = sketch::init_nodes(g, t.constant(U), t.constant(pos), ids).value();
  CHECK(S0.rows() == 4);
  CHECK(S0.cols() == 6);
  CHECK(S0.row(1).head(4) == U.row(3));
  CHECK(S0.row(3).tail(2) == pos.row(2));
  CHECK_THROWS_AS(sketch::init_nodes({}, t.constant(U), t.constant(pos), {}), EmptyInput);
}

TEST_CASE("GRU fusion step") {
  std::mt19937_64 rng(3);
  nn::ParamStore store;
  auto gru = nn::GruCell::create(store, "gru", 2, 2, rng);
  for (const auto& p : store.all()) p->value.setZero();
  gru.input_candidate.weight->value.setIdentity();
  Tape t(false);
  Matrix U(1, 2), S(1, 2), M(1, 1), W_U(2, 2);
  U << 0.4, -0.2;
  S << 1.0, 2.0;
  M << 1;
  W_U.setIdentity();
  auto out = sketch::graph2text_fuse(t, t.constant(U), t.constant(S), t.constant(M), t.constant(W_U), gru).value();
  // z = r = 1/2, n = tanh(x): h' = tanh(x)/2 + h/2
  CHECK(out(0, 0) == doctest::Approx(0.5 * std::tanh(1.0) + 0.2));
  CHECK(out(0, 1) == doctest::Approx(0.5 * std::tanh(2.0) - 0.1));
}

TEST_CASE("contextualization with zero weights halves C") {
  std::mt19937_64 rng(4);
  Tape t(false);
  Matrix C = random_matrix(rng, 3, 4), S = random_matrix(rng, 2, 6);
  auto z = [&](Eigen::Index r, Eigen::Index c) { return t.constant(Matrix::Zero(r, c)); };
  auto out = sketch::contextualize_equations(t.constant(C), t.constant(S), z(4, 6), z(6, 4), z(8, 4), z(8, 4), z(8, 4));
  CHECK(out.C_tilde.value().isApprox(0.5 * C));
  CHECK(out.G.value().isApprox(Matrix::Constant(3, 2, 0.5)));

  auto r = sketch::contextualize_equations(t.constant(C), t.constant(S), t.constant(random_matrix(rng, 4, 6)),
                                           t.constant(random_matrix(rng, 6, 4)), t.constant(random_matrix(rng, 8, 4)),
                                           t.constant(random_matrix(rng, 8, 4)), t.constant(random_matrix(rng, 8, 4)));
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(r.G.value().row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((r.f.value().array() > 0).all());
  CHECK((r.g.value().array() < 1).all());
}

TEST_CASE("sketch provider ablation branches") {
  std::mt19937_64 rng(5);
  nn::ParamStore store;
  auto cfg = small();
  auto p = sketch::Params::create(store, cfg, 3, rng);
  Tape t(false);
  Var U = t.constant(random_matrix(rng, 6, 4));
  Var h_d = t.constant(random_matrix(rng, 1, 4));
  Var C = t.constant(random_matrix(rng, 5, 4));
  auto g = two_cells();
  std::vector<int> pos{0, 0, 1, 2};

  AblationFlags full, no_qcg, no_mtc, no_dg;
  no_qcg.qcg = false;
  no_mtc.mtc = false;
  no_dg.domain_gate = false;

  auto s = sketch::provide(t, p, full, U, h_d, g, pos, C);
  CHECK(s.U_tilde.rows() == 6);
  CHECK(s.C_tilde.rows() == 5);
  CHECK(s.G.valid());

  auto q = sketch::provide(t, p, no_qcg, U, h_d, g, pos, C);
  CHECK(q.C_tilde.value() == C.value());
  CHECK(q.U_tilde.value() == sketch::domain_gate(U, h_d, t.param(*p.W_q), t.param(*p.W_Q)).value());

  auto m = sketch::provide(t, p, no_mtc, U, h_d, g, pos, C);
  CHECK(m.C_tilde.value() == C.value());
  CHECK(m.U_tilde.value() == s.U_tilde.value());

  auto d = sketch::provide(t, p, no_dg, U, h_d, g, pos, C);
  CHECK_FALSE(d.q.valid());
  CHECK(d.C_tilde.value() == s.C_tilde.value());  // C~ only sees the graph

  // an empty graph makes the full model and w/o QCG identical
  qcg::QuantityCellGraph empty;
  auto e1 = sketch::provide(t, p, full, U, h_d, empty, {}, C);
  auto e2 = sketch::provide(t, p, no_qcg, U, h_d, empty, {}, C);
  CHECK(e1.U_tilde.value() == e2.U_tilde.value());
  CHECK(e1.C_tilde.value() == e2.C_tilde.value());

  auto j = sketch::diagnostics(s, g, std::vector<std::string>{"3", "cats", "and", "4", "dogs", "."});
  CHECK(j["q"].size() == 6);
  CHECK(j["G"].size() == 5);
}

TEST_CASE("graph truncation drops cut quantities with their attributes") {
  auto g = two_cells();
  auto cut = sketch::truncate_graph(g, 3);
  CHECK(cut.size() == 2);
  CHECK(cut.quantity_count == 1);
  CHECK(cut.alignment.rows == 3);
  CHECK(sketch::truncate_graph(g, 6).size() == 4);
}
