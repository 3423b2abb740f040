#ifndef DISK_LAYERS_HPP
#define DISK_LAYERS_HPP

#include "disk/autodiff.hpp"

#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace disk::nn {

using ad::Matrix;
using ad::Parameter;
using ad::Tape;
using ad::Var;

enum class Init { Zeros, Ones, Xavier, Embedding };

// Owns every trainable tensor under a "section/name" key, in creation order.
class ParamStore {
public:
  Parameter& add(const std::string& name, Eigen::Index rows, Eigen::Index cols, Init init, std::mt19937_64& rng);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }
  std::size_t scalar_count() const;
  void zero_grad();

private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, Parameter*> index_;
};

Matrix sinusoid_positions(Eigen::Index length, Eigen::Index dim);

struct Linear {
  Parameter* weight = nullptr;  // in x out
  Parameter* bias = nullptr;    // 1 x out, optional

  static Linear create(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out,
                       bool with_bias, std::mt19937_64& rng);
  Var operator()(Tape& t, const Var& x) const;
};

struct LayerNorm {
  Parameter* gain = nullptr;
  Parameter* bias = nullptr;

  static LayerNorm create(ParamStore& store, const std::string& name, Eigen::Index dim, std::mt19937_64& rng);
  Var operator()(Tape& t, const Var& x) const;
};

struct MultiHeadAttention {
  Linear query, key, value, output;
  int heads = 1;

  static MultiHeadAttention create(ParamStore& store, const std::string& name, Eigen::Index dim, int heads,
                                   std::mt19937_64& rng);
  // kv_valid < 0 attends to every memory row. Causal masking assumes queries
  // and keys index the same positions.
  Var operator()(Tape& t, const Var& queries, const Var& memory, Eigen::Index kv_valid = -1,
                 bool causal = false) const;
  // split form used by incremental decoding: keys/values projected once
  std::pair<Var, Var> project_kv(Tape& t, const Var& memory) const;
  Var attend(Tape& t, const Var& queries, const Var& k, const Var& v, Eigen::Index kv_valid = -1,
             bool causal = false, Eigen::Index causal_offset = 0) const;
};

struct FeedForward {
  Linear inner, outer;

  static FeedForward create(ParamStore& store, const std::string& name, Eigen::Index dim, Eigen::Index hidden,
                            std::mt19937_64& rng);
  Var operator()(Tape& t, const Var& x) const;
};

// Two-layer perceptron in -> hidden -> out with ReLU between.
struct Mlp {
  Linear first, second;

  static Mlp create(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden,
                    Eigen::Index out, std::mt19937_64& rng);
  Var operator()(Tape& t, const Var& x) const;
};

struct GruCell {
  Linear input_update, input_reset, input_candidate;     // x -> d (with bias)
  Linear hidden_update, hidden_reset, hidden_candidate;  // h -> d
  // Row-wise step: every row of x / h is an independent cell application.
  static GruCell create(ParamStore& store, const std::string& name, Eigen::Index input, Eigen::Index hidden,
                        std::mt19937_64& rng);
  Var operator()(Tape& t, const Var& x, const Var& h) const;
};

struct TransformerConfig {
  Eigen::Index dim = 256;
  Eigen::Index ffn_dim = 512;
  int heads = 8;
  int layers = 2;
};

struct EncoderBlock {
  MultiHeadAttention attention;
  LayerNorm attention_norm;
  FeedForward ffn;
  LayerNorm ffn_norm;
};

// Post-norm transformer encoder stack over an already embedded sequence.
struct TransformerEncoder {
  std::vector<EncoderBlock> blocks;
  int heads = 1;

  static TransformerEncoder create(ParamStore& store, const std::string& name, const TransformerConfig& cfg,
                                   std::mt19937_64& rng);
  // rows >= valid are padding and are masked out of attention
  Var operator()(Tape& t, Var x, Eigen::Index valid = -1) const;
};

} // namespace disk::nn

#endif
