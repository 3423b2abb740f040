#ifndef DISK_MATCHER_HPP
#define DISK_MATCHER_HPP

#include "disk/corpus.hpp"
#include "disk/summarizer.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace disk::matcher {

struct Params {
  ad::Parameter* type_embedding = nullptr;       // 4 x d, one row per TokenKind
  const nn::TransformerEncoder* encoder_e = nullptr;  // owned by the model, shared with the generator
  nn::TransformerEncoder encoder_q;
  nn::Mlp g1, g2;
  ad::Parameter* W_p = nullptr;  // d x d, pooling attention over candidate encodings
  ad::Parameter* W_r = nullptr;  // d x (d' * d): W_r(b, a * d + c) is the bilinear tensor entry [b][a][c]
  ad::Parameter* w_r = nullptr;  // d' x 1

  static Params create(nn::ParamStore& store, const ModelConfig& cfg, const nn::TransformerEncoder& shared_encoder,
                       std::mt19937_64& rng);
};

// token embedding + kind embedding, then Encoder_E. Throws EmptyInput for N = 0.
Var encode_equation(Tape& t, const TokenEmbedding& embed, const ad::Parameter& type_embedding,
                    const nn::TransformerEncoder& encoder, std::span<const int> ids, std::span<const int> kinds);

// gamma_{jk} = g1(c_j) . g2(u_k); score is the mean over all (j, k).
Var token_match_score(Tape& t, const Var& C, const Var& U, const nn::Mlp& g1, const nn::Mlp& g2);

// r[a] = sum_{b,c} h_d[b] W[b][a][c] h_p[c] for every row h_p of pooled; returns |P| x d'.
Var domain_match_vectors(const Var& h_d, const Var& pooled, const Var& W_r);

// s_em(i) + w_r . r_i as a 1 x |P| row.
Var match_logits(const Var& s_em, const Var& R, const Var& w_r);
Var match_distribution(const Var& logits);
// -log softmax(logits)[label]
Var matching_loss(const Var& logits, int label);

// Similarity oracle used to annotate gold labels. Must be deterministic.
using SimilarityOracle = std::function<double(std::span<const std::string>, std::span<const std::string>)>;

// Greedy token-level F1 with exact-match "embeddings".
double token_f1(std::span<const std::string> candidate, std::span<const std::string> reference);

struct GoldLabel {
  int index = -1;
  double score = 0.0;
};

// argmax over candidates of oracle(candidate, gold); ties go to the lowest index.
// Throws ConfigError for an empty pool.
GoldLabel annotate_gold_label(std::span<const std::vector<std::string>> pool, std::span<const std::string> gold,
                              const SimilarityOracle& oracle = token_f1);

// First index of the maximum; ties to the lowest index.
int argmax(const Matrix& row);

} // namespace disk::matcher

#endif
