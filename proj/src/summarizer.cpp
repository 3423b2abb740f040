#include "disk/summarizer.hpp"

#include "disk/errors.hpp"

#include <cmath>

namespace disk {

std::string AblationFlags::label() const {
  if (!sketch) return "w/o CS";
  if (!qcg) return "w/o QCG";
  if (!domain_gate) return "w/o DG";
  if (!mtc) return "w/o MTC";
  return "DISK";
}

void to_json(nlohmann::json& j, const AblationFlags& f) {
  j = {{"DG", f.domain_gate}, {"QCG", f.qcg}, {"MTC", f.mtc}, {"CS", f.sketch}};
}

void from_json(const nlohmann::json& j, AblationFlags& f) {
  f.domain_gate = j.value("DG", true);
  f.qcg = j.value("QCG", true);
  f.mtc = j.value("MTC", true);
  f.sketch = j.value("CS", true);
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"d", c.dim},          {"ffn_dim", c.ffn_dim},       {"heads", c.heads},
       {"layers", c.layers},  {"K", c.domains},             {"L_max", c.max_text_length},
       {"P", c.pool_size},    {"F", c.subtree_leaves},      {"pos_dim", c.pos_dim},
       {"gcn_layers", c.gcn_layers}, {"max_decode_length", c.max_decode_length}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.dim = j.value("d", d.dim);
  c.ffn_dim = j.value("ffn_dim", d.ffn_dim);
  c.heads = j.value("heads", d.heads);
  c.layers = j.value("layers", d.layers);
  c.domains = j.value("K", d.domains);
  c.max_text_length = j.value("L_max", d.max_text_length);
  c.pool_size = j.value("P", d.pool_size);
  c.subtree_leaves = j.value("F", d.subtree_leaves);
  c.pos_dim = j.value("pos_dim", d.pos_dim);
  c.gcn_layers = j.value("gcn_layers", d.gcn_layers);
  c.max_decode_length = j.value("max_decode_length", d.max_decode_length);
}

TokenEmbedding TokenEmbedding::create(nn::ParamStore& store, const std::string& name, int vocab, int dim,
                                      int max_positions, std::mt19937_64& rng) {
  TokenEmbedding e;
  e.table = &store.add(name, vocab, dim, nn::Init::Embedding, rng);
  e.positions = nn::sinusoid_positions(max_positions, dim);
  e.scale = std::sqrt(static_cast<double>(dim));
  return e;
}

Var TokenEmbedding::operator()(Tape& t, std::span<const int> ids, int offset) const {
  const auto n = static_cast<Eigen::Index>(ids.size());
  if (offset + n > positions.rows()) throw Error("sequence longer than the positional table");
  Var rows = ad::affine(ad::gather_rows(t.param(*table), ids), scale, 0.0);
  return ad::add(rows, t.constant(positions.middleRows(offset, n)));
}

Pooled global_attention(const Var& H, const Var& W, Eigen::Index valid) {
  const Eigen::Index n = valid < 0 ? H.rows() : valid;
  Var hbar = ad::mean_rows(n == H.rows() ? H : ad::slice_rows(H, 0, n));
  Var logits = ad::transpose(ad::matmul_nt(ad::matmul(H, W), hbar));  // 1 x L
  Var alpha = ad::softmax_rows(logits, n);
  return {ad::matmul(alpha, H), alpha};
}

namespace summarizer {

Params Params::create(nn::ParamStore& store, const ModelConfig& cfg, std::mt19937_64& rng) {
  nn::TransformerConfig tc{cfg.dim, cfg.ffn_dim, cfg.heads, cfg.layers};
  Params p;
  p.encoder = nn::TransformerEncoder::create(store, "summarizer/encoder_p", tc, rng);
  p.W_a = &store.add("summarizer/W_a", cfg.dim, cfg.dim, nn::Init::Xavier, rng);
  p.W_D1 = &store.add("summarizer/W_D1", cfg.domains, cfg.max_text_length, nn::Init::Xavier, rng);
  p.b_D1 = &store.add("summarizer/b_D1", cfg.domains, 1, nn::Init::Zeros, rng);
  p.W_D2 = &store.add("summarizer/W_D2", cfg.dim, cfg.dim, nn::Init::Xavier, rng);
  p.b_D2 = &store.add("summarizer/b_D2", 1, cfg.dim, nn::Init::Zeros, rng);
  p.v = &store.add("summarizer/v", cfg.dim, 1, nn::Init::Xavier, rng);
  p.H_d = &store.add("summarizer/H_d", cfg.dim, cfg.dim, nn::Init::Xavier, rng);
  p.U_d = &store.add("summarizer/U_d", cfg.dim, cfg.dim, nn::Init::Xavier, rng);
  p.E = &store.add("summarizer/E", cfg.domains, cfg.dim, nn::Init::Embedding, rng);
  return p;
}

Var encode_text(Tape& t, const TokenEmbedding& embed, const nn::TransformerEncoder& encoder,
                std::span<const int> ids) {
  if (ids.empty()) throw EmptyInput("MWP text");
  return encoder(t, embed(t, ids));
}

Var extract_domains(const Var& H_padded, const Var& W1, const Var& b1, const Var& W2, const Var& b2) {
  Var projected = ad::add_row(ad::matmul(H_padded, W2), b2);
  return ad::tanh(ad::add_col(ad::matmul(W1, projected), b1));
}

Var orthogonality_loss(const Var& D) {
  Tape& t = *D.tape();
  Var gram = ad::matmul_nt(D, D);
  return ad::frobenius_norm(ad::sub(gram, t.constant(Matrix::Identity(D.rows(), D.rows()))));
}

Var domain_distribution(const Var& h_a, const Var& D, const Var& v, const Var& H_d, const Var& U_d) {
  Var hidden = ad::tanh(ad::add_row(ad::matmul(D, U_d), ad::matmul(h_a, H_d)));  // K x d
  Var logits = ad::transpose(ad::matmul(hidden, v));                             // 1 x K
  return ad::softmax_rows(logits);
}

Var text_domain_vector(const Var& beta, const Var& E) { return ad::matmul(beta, E); }

DomainState summarize(Tape& t, const TokenEmbedding& embed, const Params& p, const ModelConfig& cfg,
                      std::span<const int> text_ids) {
  auto ids = text_ids.first(std::min<std::size_t>(text_ids.size(), static_cast<std::size_t>(cfg.max_text_length)));
  DomainState s;
  s.H = encode_text(t, embed, p.encoder, ids);
  auto pooled = global_attention(s.H, t.param(*p.W_a));
  s.h_a = pooled.pooled;
  s.alpha = pooled.alpha;
  s.D = extract_domains(ad::pad_rows(s.H, cfg.max_text_length), t.param(*p.W_D1), t.param(*p.b_D1),
                        t.param(*p.W_D2), t.param(*p.b_D2));
  s.loss = orthogonality_loss(s.D);
  s.beta = domain_distribution(s.h_a, s.D, t.param(*p.v), t.param(*p.H_d), t.param(*p.U_d));
  s.h_d = text_domain_vector(s.beta, t.param(*p.E));
  return s;
}

} // namespace summarizer
} // namespace disk
