#include "disk/sketch.hpp"

#include "disk/errors.hpp"

#include <cmath>

namespace disk::sketch {

Params Params::create(nn::ParamStore& store, const ModelConfig& cfg, int pos_vocab, std::mt19937_64& rng) {
  const Eigen::Index d = cfg.dim, dg = cfg.dim + cfg.pos_dim;
  Params p;
  p.W_q = &store.add("sketch/W_q", 2 * d, d, nn::Init::Xavier, rng);
  p.W_Q = &store.add("sketch/W_Q", d, d, nn::Init::Xavier, rng);
  p.pos_table = &store.add("sketch/pos_embedding", pos_vocab, cfg.pos_dim, nn::Init::Embedding, rng);
  for (int l = 0; l < cfg.gcn_layers; ++l)
    p.gcn.push_back(&store.add("sketch/gcn" + std::to_string(l), dg, dg, nn::Init::Xavier, rng));
  p.W_U = &store.add("sketch/W_U", dg, d, nn::Init::Xavier, rng);
  p.fuse = nn::GruCell::create(store, "sketch/gru", d, d, rng);
  p.W_G = &store.add("sketch/W_G", d, dg, nn::Init::Xavier, rng);
  p.W_C = &store.add("sketch/W_C", dg, d, nn::Init::Xavier, rng);
  p.W_g = &store.add("sketch/W_g", 2 * d, d, nn::Init::Xavier, rng);
  p.W_f = &store.add("sketch/W_f", 2 * d, d, nn::Init::Xavier, rng);
  p.W_Z = &store.add("sketch/W_Z", 2 * d, d, nn::Init::Xavier, rng);
  return p;
}

namespace {

Var repeat_row(const Var& row, Eigen::Index n) {
  return ad::matmul(row.tape()->constant(Matrix::Ones(n, 1)), row);
}

} // namespace

Var domain_gate(const Var& U, const Var& h_d, const Var& W_q, const Var& W_Q, Var* q_out) {
  Var q = ad::sigmoid(ad::matmul(ad::concat_cols({repeat_row(h_d, U.rows()), U}), W_q));
  if (q_out) *q_out = q;
  return ad::mul(ad::tanh(ad::matmul(U, W_Q)), q);
}

Matrix to_matrix(const qcg::BinaryMatrix& m) {
  Matrix out(m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) out(r, c) = m(r, c);
  return out;
}

Matrix normalized_adjacency(const qcg::BinaryMatrix& A) {
  Matrix a = to_matrix(A) + Matrix::Identity(A.rows, A.cols);
  Eigen::VectorXd inv_sqrt = a.rowwise().sum().array().rsqrt();
  return inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();
}

Var init_nodes(const qcg::QuantityCellGraph& graph, const Var& U, const Var& pos_table,
               std::span<const int> pos_ids) {
  if (graph.empty()) throw EmptyInput("quantity cell graph");
  if (pos_ids.size() != graph.nodes.size()) throw Error("init_nodes: one POS id per node required");
  std::vector<int> rows;
  rows.reserve(graph.nodes.size());
  for (const auto& n : graph.nodes) rows.push_back(n.text_index);
  return ad::concat_cols({ad::gather_rows(U, rows), ad::gather_rows(pos_table, pos_ids)});
}

Var gcn_forward(const Var& S0, const Var& A_hat, std::span<const Var> weights) {
  Var S = S0;
  for (const auto& W : weights) S = ad::relu(ad::matmul(ad::matmul(A_hat, S), W));
  return S;
}

Var graph2text_fuse(Tape& t, const Var& U_prime, const Var& S_L, const Var& M, const Var& W_U,
                    const nn::GruCell& gru) {
  Var feature = ad::matmul(ad::matmul(M, S_L), W_U);  // L x d
  return gru(t, feature, U_prime);
}

Contextualized contextualize_equations(const Var& C, const Var& S_L, const Var& W_G, const Var& W_C, const Var& W_g,
                                       const Var& W_f, const Var& W_Z) {
  Contextualized out;
  out.G = ad::softmax_rows(ad::matmul_nt(ad::matmul(C, W_G), S_L));  // N x |G|, unscaled
  Var C_bar = ad::relu(ad::matmul(ad::matmul(out.G, S_L), W_C));
  Var joint = ad::concat_cols({C, C_bar});
  out.f = ad::sigmoid(ad::matmul(joint, W_g));
  out.g = ad::sigmoid(ad::matmul(joint, W_f));
  Var candidate = ad::tanh(ad::matmul(ad::concat_cols({C, ad::mul(out.f, C_bar)}), W_Z));
  // g * C + (1 - g) * candidate
  out.C_tilde = ad::add(ad::mul(out.g, C), ad::mul(ad::affine(out.g, -1.0, 1.0), candidate));
  return out;
}

Sketch provide(Tape& t, const Params& p, const AblationFlags& flags, const Var& U, const Var& h_d,
               const qcg::QuantityCellGraph& graph, std::span<const int> pos_ids, const Var& C) {
  Sketch s;
  Var U_prime = flags.domain_gate ? domain_gate(U, h_d, t.param(*p.W_q), t.param(*p.W_Q), &s.q) : U;
  s.U_tilde = U_prime;
  s.C_tilde = C;
  if (!flags.qcg || graph.empty()) return s;

  Var S0 = init_nodes(graph, U, t.param(*p.pos_table), pos_ids);
  std::vector<Var> weights;
  for (auto* w : p.gcn) weights.push_back(t.param(*w));
  Var S_L = gcn_forward(S0, t.constant(normalized_adjacency(graph.adjacency)), weights);
  s.U_tilde = graph2text_fuse(t, U_prime, S_L, t.constant(to_matrix(graph.alignment)), t.param(*p.W_U), p.fuse);
  if (flags.mtc) {
    auto c = contextualize_equations(C, S_L, t.param(*p.W_G), t.param(*p.W_C), t.param(*p.W_g), t.param(*p.W_f),
                                     t.param(*p.W_Z));
    s.C_tilde = c.C_tilde;
    s.G = c.G;
    s.f = c.f;
    s.g = c.g;
  }
  return s;
}

qcg::QuantityCellGraph truncate_graph(const qcg::QuantityCellGraph& g, int length) {
  if (g.alignment.rows <= length) return g;
  std::vector<int> remap(g.nodes.size(), -1);
  std::vector<qcg::Node> kept;
  for (std::size_t j = 0; j < g.nodes.size(); ++j) {
    const auto& n = g.nodes[j];
    if (n.text_index >= length) continue;
    if (n.role == qcg::NodeRole::Attribute && remap[static_cast<std::size_t>(n.owner)] < 0) continue;
    remap[j] = static_cast<int>(kept.size());
    qcg::Node copy = n;
    copy.owner = n.role == qcg::NodeRole::Quantity ? remap[j] : remap[static_cast<std::size_t>(n.owner)];
    kept.push_back(copy);
  }
  return qcg::build_graph(kept, length);
}

nlohmann::json diagnostics(const Sketch& s, const qcg::QuantityCellGraph& graph, std::span<const std::string> text) {
  auto dump = [](const Var& v) {
    nlohmann::json rows = nlohmann::json::array();
    if (!v.valid()) return rows;
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
      std::vector<double> row(v.value().row(r).data(), v.value().row(r).data() + v.cols());
      rows.push_back(row);
    }
    return rows;
  };
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : graph.nodes) {
    std::string word = n.text_index < static_cast<int>(text.size()) ? text[static_cast<std::size_t>(n.text_index)] : "";
    nodes.push_back({{"i", n.text_index},
                     {"token", word},
                     {"role", n.role == qcg::NodeRole::Quantity ? "quantity" : "attribute"},
                     {"owner", n.owner}});
  }
  return {{"q", dump(s.q)}, {"G", dump(s.G)}, {"nodes", nodes}};
}

} // namespace disk::sketch
