#include "disk/matcher.hpp"

#include "disk/errors.hpp"

#include <map>

namespace disk::matcher {

Params Params::create(nn::ParamStore& store, const ModelConfig& cfg, const nn::TransformerEncoder& shared_encoder,
                      std::mt19937_64& rng) {
  nn::TransformerConfig tc{cfg.dim, cfg.ffn_dim, cfg.heads, cfg.layers};
  Params p;
  p.type_embedding = &store.add("matcher/type_embedding", kTokenKindCount, cfg.dim, nn::Init::Embedding, rng);
  p.encoder_e = &shared_encoder;
  p.encoder_q = nn::TransformerEncoder::create(store, "matcher/encoder_q", tc, rng);
  p.g1 = nn::Mlp::create(store, "matcher/g1", cfg.dim, cfg.dim, cfg.dim, rng);
  p.g2 = nn::Mlp::create(store, "matcher/g2", cfg.dim, cfg.dim, cfg.dim, rng);
  p.W_p = &store.add("matcher/W_p", cfg.dim, cfg.dim, nn::Init::Xavier, rng);
  p.W_r = &store.add("matcher/W_r", cfg.dim, static_cast<Eigen::Index>(cfg.dim) * cfg.dim, nn::Init::Xavier, rng);
  p.w_r = &store.add("matcher/w_r", cfg.dim, 1, nn::Init::Xavier, rng);
  return p;
}

Var encode_equation(Tape& t, const TokenEmbedding& embed, const ad::Parameter& type_embedding,
                    const nn::TransformerEncoder& encoder, std::span<const int> ids, std::span<const int> kinds) {
  if (ids.empty()) throw EmptyInput("equation");
  if (ids.size() != kinds.size()) throw Error("encode_equation: one kind per token required");
  Var x = ad::add(embed(t, ids), ad::gather_rows(t.param(const_cast<ad::Parameter&>(type_embedding)), kinds));
  return encoder(t, x);
}

Var token_match_score(Tape& t, const Var& C, const Var& U, const nn::Mlp& g1, const nn::Mlp& g2) {
  Var gamma = ad::matmul_nt(g1(t, C), g2(t, U));  // N x |P_i|
  return ad::mean(gamma);
}

Var domain_match_vectors(const Var& h_d, const Var& pooled, const Var& W_r) {
  const Eigen::Index d = h_d.cols();
  const Eigen::Index d_prime = W_r.cols() / d;
  // T[a][c] = sum_b h_d[b] W[b][a][c]
  Var T = ad::reshape(ad::matmul(h_d, W_r), d_prime, d);
  return ad::matmul_nt(pooled, T);
}

Var match_logits(const Var& s_em, const Var& R, const Var& w_r) {
  return ad::add(s_em, ad::transpose(ad::matmul(R, w_r)));
}

Var match_distribution(const Var& logits) { return ad::softmax_rows(logits); }

Var matching_loss(const Var& logits, int label) {
  return ad::affine(ad::pick(ad::log_softmax_rows(logits), 0, label), -1.0, 0.0);
}

double token_f1(std::span<const std::string> candidate, std::span<const std::string> reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  // with one-hot token vectors, greedy max-similarity matching reduces to
  // membership: a token scores 1 iff it appears on the other side
  std::map<std::string, int> in_ref, in_cand;
  for (const auto& t : reference) ++in_ref[t];
  for (const auto& t : candidate) ++in_cand[t];
  double precision_hits = 0, recall_hits = 0;
  for (const auto& t : candidate) precision_hits += in_ref.count(t) ? 1.0 : 0.0;
  for (const auto& t : reference) recall_hits += in_cand.count(t) ? 1.0 : 0.0;
  double p = precision_hits / static_cast<double>(candidate.size());
  double r = recall_hits / static_cast<double>(reference.size());
  return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

GoldLabel annotate_gold_label(std::span<const std::vector<std::string>> pool, std::span<const std::string> gold,
                              const SimilarityOracle& oracle) {
  if (pool.empty()) throw ConfigError("candidate pool is empty");
  GoldLabel best{0, oracle(pool[0], gold)};
  for (std::size_t i = 1; i < pool.size(); ++i) {
    double s = oracle(pool[i], gold);
    if (s > best.score) best = {static_cast<int>(i), s};
  }
  return best;
}

int argmax(const Matrix& row) {
  int best = 0;
  for (Eigen::Index i = 1; i < row.size(); ++i)
    if (row.data()[i] > row.data()[best]) best = static_cast<int>(i);
  return best;
}

} // namespace disk::matcher
