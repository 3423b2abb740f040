#ifndef DISK_GENERATOR_HPP
#define DISK_GENERATOR_HPP

#include "disk/summarizer.hpp"

#include <span>
#include <string>
#include <vector>

namespace disk::generator {

struct DecoderBlock {
  nn::MultiHeadAttention self_attention;
  nn::LayerNorm self_norm;
  nn::MultiHeadAttention sketch_attention;  // sits between self- and cross-attention
  nn::LayerNorm sketch_norm;
  nn::MultiHeadAttention cross_attention;
  nn::LayerNorm cross_norm;
  nn::FeedForward ffn;
  nn::LayerNorm ffn_norm;
};

struct Params {
  std::vector<DecoderBlock> blocks;
  nn::Linear output;  // d -> V
  const nn::TransformerEncoder* encoder = nullptr;  // Encoder_E, owned by the model

  static Params create(nn::ParamStore& store, const ModelConfig& cfg, int vocab,
                       const nn::TransformerEncoder& shared_encoder, std::mt19937_64& rng);
};

// Decoder memories. An invalid sketch Var removes the sketch-attention sublayer.
struct Memory {
  Var context;  // C~ (or C), N x d
  Var sketch;   // U~, |P_l| x d
};

// Teacher forcing: inputs are [h_d, embed(targets[0..T-2])], output row t is
// log p(. | h_d, y_<t) over the vocabulary. Throws EmptyInput for T = 0.
Var decode_forward(Tape& t, const TokenEmbedding& embed, const Params& p, const Var& h_d, const Memory& memory,
                   std::span<const int> targets);

// -sum_t log p(y_t); pad targets are skipped.
Var generation_loss(const Var& log_probs, std::span<const int> targets);

struct DecodeConfig {
  int beam_width = 1;  // 1 = greedy
  int max_length = 48;
};

struct Candidate {
  std::vector<int> tokens;           // without the end marker
  std::vector<double> log_probs;     // one per emitted token, end marker included when emitted
  bool finished = false;             // ended with </s>
  double score() const;              // mean per-token log-probability
};

// Incremental decode with cached keys/values; tape should not record.
Candidate decode(Tape& t, const TokenEmbedding& embed, const Params& p, const Var& h_d, const Memory& memory,
                 const DecodeConfig& cfg);

// Teacher-forced recomputation of a candidate's mean log-probability.
double rescore(const TokenEmbedding& embed, const Params& p, const Matrix& h_d, const Matrix& context,
               const Matrix* sketch, const Candidate& c);

// argmax of scores, ties to the lowest index
int select(std::span<const double> scores);

} // namespace disk::generator

#endif
