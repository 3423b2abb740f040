#ifndef DISK_SUMMARIZER_HPP
#define DISK_SUMMARIZER_HPP

#include "disk/layers.hpp"
#include "disk/model_config.hpp"

#include <span>

namespace disk {

using ad::Matrix;
using ad::Tape;
using ad::Var;

// Token table shared by every text-side encoder and the decoder input.
struct TokenEmbedding {
  ad::Parameter* table = nullptr;  // V x d
  Matrix positions;                // sinusoidal, max_positions x d
  double scale = 1.0;

  static TokenEmbedding create(nn::ParamStore& store, const std::string& name, int vocab, int dim,
                               int max_positions, std::mt19937_64& rng);
  // rows = sqrt(d) * table[ids] + position(offset + i)
  Var operator()(Tape& t, std::span<const int> ids, int offset = 0) const;
};

// Global attention pooling: alpha = softmax_i(h_i W hbar^T), pooled = alpha H.
// hbar averages the first `valid` rows (all rows when valid < 0).
struct Pooled {
  Var pooled;  // 1 x d
  Var alpha;   // 1 x valid
};
Pooled global_attention(const Var& H, const Var& W, Eigen::Index valid = -1);

namespace summarizer {

struct Params {
  nn::TransformerEncoder encoder;  // Encoder_P
  ad::Parameter* W_a = nullptr;    // d x d
  ad::Parameter* W_D1 = nullptr;   // K x L_max
  ad::Parameter* b_D1 = nullptr;   // K x 1
  ad::Parameter* W_D2 = nullptr;   // d x d
  ad::Parameter* b_D2 = nullptr;   // 1 x d
  ad::Parameter* v = nullptr;      // d x 1
  ad::Parameter* H_d = nullptr;    // d x d
  ad::Parameter* U_d = nullptr;    // d x d
  ad::Parameter* E = nullptr;      // K x d, the only domain vectors visible at inference

  static Params create(nn::ParamStore& store, const ModelConfig& cfg, std::mt19937_64& rng);
};

struct DomainState {
  Var H;      // L x d
  Var h_a;    // 1 x d
  Var alpha;  // 1 x L
  Var D;      // K x d
  Var beta;   // 1 x K
  Var h_d;    // 1 x d
  Var loss;   // 1 x 1, orthogonality penalty
};

// Throws EmptyInput for an empty text.
Var encode_text(Tape& t, const TokenEmbedding& embed, const nn::TransformerEncoder& encoder,
                std::span<const int> ids);

// tanh(W1 (H W2 + b2) + b1); H must already be padded to W1's column count.
Var extract_domains(const Var& H_padded, const Var& W1, const Var& b1, const Var& W2, const Var& b2);

// || D D^T - I ||_F
Var orthogonality_loss(const Var& D);

// beta_i = softmax_i(v . tanh(h_a H_d + D_i U_d)); returned as 1 x K
Var domain_distribution(const Var& h_a, const Var& D, const Var& v, const Var& H_d, const Var& U_d);

// beta (1 x K) times E (K x d)
Var text_domain_vector(const Var& beta, const Var& E);

DomainState summarize(Tape& t, const TokenEmbedding& embed, const Params& p, const ModelConfig& cfg,
                      std::span<const int> text_ids);

} // namespace summarizer
} // namespace disk

#endif
