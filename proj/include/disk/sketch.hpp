#ifndef DISK_SKETCH_HPP
#define DISK_SKETCH_HPP

#include "disk/qcg.hpp"
#include "disk/summarizer.hpp"

#include <span>
#include <vector>

#include <json.hpp>

namespace disk::sketch {

struct Params {
  ad::Parameter* W_q = nullptr;        // 2d x d, domain gate
  ad::Parameter* W_Q = nullptr;        // d x d
  ad::Parameter* pos_table = nullptr;  // |POS| x d_pos
  std::vector<ad::Parameter*> gcn;     // d_g x d_g per layer
  ad::Parameter* W_U = nullptr;        // d_g x d
  nn::GruCell fuse;                    // input d, hidden d
  ad::Parameter* W_G = nullptr;        // d x d_g
  ad::Parameter* W_C = nullptr;        // d_g x d, node projection inside the contextualization ReLU
  ad::Parameter* W_g = nullptr;        // 2d x d, produces f
  ad::Parameter* W_f = nullptr;        // 2d x d, produces g
  ad::Parameter* W_Z = nullptr;        // 2d x d

  static Params create(nn::ParamStore& store, const ModelConfig& cfg, int pos_vocab, std::mt19937_64& rng);
};

struct Sketch {
  Var U_tilde;  // |P_l| x d
  Var C_tilde;  // N x d
  // diagnostics; invalid when the branch was skipped
  Var q, f, g, G;
};

// q_i = sigmoid([h_d; u_i] W_q), u'_i = tanh(u_i W_Q) * q_i
Var domain_gate(const Var& U, const Var& h_d, const Var& W_q, const Var& W_Q, Var* q_out = nullptr);

// D^-1/2 (A + I) D^-1/2
Matrix normalized_adjacency(const qcg::BinaryMatrix& A);
Matrix to_matrix(const qcg::BinaryMatrix& m);

// S0_j = [U[text_index_j]; pos_table[pos_j]]
Var init_nodes(const qcg::QuantityCellGraph& graph, const Var& U, const Var& pos_table,
               std::span<const int> pos_ids);

// S^{l+1} = relu(Ahat S^l W_l)
Var gcn_forward(const Var& S0, const Var& A_hat, std::span<const Var> weights);

// one GRU step per text position: hidden u'_i, input (M S^L W_U)_i
Var graph2text_fuse(Tape& t, const Var& U_prime, const Var& S_L, const Var& M, const Var& W_U,
                    const nn::GruCell& gru);

struct Contextualized {
  Var C_tilde, G, f, g;
};
Contextualized contextualize_equations(const Var& C, const Var& S_L, const Var& W_G, const Var& W_C, const Var& W_g,
                                       const Var& W_f, const Var& W_Z);

// Full sketch path with ablation branches. An empty graph bypasses every QCG
// step (U~ = U', C~ = C).
Sketch provide(Tape& t, const Params& p, const AblationFlags& flags, const Var& U, const Var& h_d,
               const qcg::QuantityCellGraph& graph, std::span<const int> pos_ids, const Var& C);

// Restrict a graph to text positions < length (dropping attributes whose owner is cut).
qcg::QuantityCellGraph truncate_graph(const qcg::QuantityCellGraph& g, int length);

nlohmann::json diagnostics(const Sketch& s, const qcg::QuantityCellGraph& graph, std::span<const std::string> text);

} // namespace disk::sketch

#endif
