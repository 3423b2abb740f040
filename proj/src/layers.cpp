#include "disk/layers.hpp"

#include "disk/errors.hpp"

#include <cmath>

namespace disk::nn {

Parameter& ParamStore::add(const std::string& name, Eigen::Index rows, Eigen::Index cols, Init init,
                           std::mt19937_64& rng) {
  if (index_.count(name)) throw Error("duplicate parameter " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  switch (init) {
  case Init::Zeros: p->value = Matrix::Zero(rows, cols); break;
  case Init::Ones: p->value = Matrix::Ones(rows, cols); break;
  case Init::Xavier: {
    double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> u(-a, a);
    p->value.resize(rows, cols);
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = u(rng);
    break;
  }
  case Init::Embedding: {
    std::normal_distribution<double> n(0.0, 0.02);
    p->value.resize(rows, cols);
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = n(rng);
    break;
  }
  }
  p->zero_grad();
  Parameter& ref = *p;
  index_.emplace(name, p.get());
  params_.push_back(std::move(p));
  return ref;
}

Parameter& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter " + name);
  return *it->second;
}

const Parameter& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter " + name);
  return *it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

Matrix sinusoid_positions(Eigen::Index length, Eigen::Index dim) {
  Matrix pe(length, dim);
  for (Eigen::Index pos = 0; pos < length; ++pos) {
    for (Eigen::Index i = 0; i < dim; ++i) {
      double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      pe(pos, i) = (i % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
    }
  }
  return pe;
}

Linear Linear::create(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out,
                      bool with_bias, std::mt19937_64& rng) {
  Linear l;
  l.weight = &store.add(name + "/W", in, out, Init::Xavier, rng);
  if (with_bias) l.bias = &store.add(name + "/b", 1, out, Init::Zeros, rng);
  return l;
}

Var Linear::operator()(Tape& t, const Var& x) const {
  Var y = ad::matmul(x, t.param(*weight));
  if (bias) y = ad::add_row(y, t.param(*bias));
  return y;
}

LayerNorm LayerNorm::create(ParamStore& store, const std::string& name, Eigen::Index dim, std::mt19937_64& rng) {
  return {&store.add(name + "/gain", 1, dim, Init::Ones, rng), &store.add(name + "/bias", 1, dim, Init::Zeros, rng)};
}

Var LayerNorm::operator()(Tape& t, const Var& x) const {
  return ad::layer_norm(x, t.param(*gain), t.param(*bias));
}

MultiHeadAttention MultiHeadAttention::create(ParamStore& store, const std::string& name, Eigen::Index dim,
                                              int heads, std::mt19937_64& rng) {
  if (heads < 1 || dim % heads != 0) throw ConfigError("hidden size must be divisible by the head count");
  MultiHeadAttention m;
  m.query = Linear::create(store, name + "/query", dim, dim, true, rng);
  m.key = Linear::create(store, name + "/key", dim, dim, true, rng);
  m.value = Linear::create(store, name + "/value", dim, dim, true, rng);
  m.output = Linear::create(store, name + "/output", dim, dim, true, rng);
  m.heads = heads;
  return m;
}

Var MultiHeadAttention::operator()(Tape& t, const Var& queries, const Var& memory, Eigen::Index kv_valid,
                                   bool causal) const {
  auto kv = project_kv(t, memory);
  return attend(t, queries, kv.first, kv.second, kv_valid, causal);
}

std::pair<Var, Var> MultiHeadAttention::project_kv(Tape& t, const Var& memory) const {
  return {key(t, memory), value(t, memory)};
}

Var MultiHeadAttention::attend(Tape& t, const Var& queries, const Var& k, const Var& v, Eigen::Index kv_valid,
                               bool causal, Eigen::Index causal_offset) const {
  Var q = query(t, queries);
  const Eigen::Index dh = q.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? q : ad::slice_cols(q, h * dh, dh);
    Var kh = heads == 1 ? k : ad::slice_cols(k, h * dh, dh);
    Var vh = heads == 1 ? v : ad::slice_cols(v, h * dh, dh);
    Var scores = ad::affine(ad::matmul_nt(qh, kh), scale, 0.0);
    Var probs = ad::softmax_rows(scores, kv_valid, causal, causal_offset);
    outs.push_back(ad::matmul(probs, vh));
  }
  Var joined = heads == 1 ? outs.front() : ad::concat_cols(outs);
  return output(t, joined);
}

FeedForward FeedForward::create(ParamStore& store, const std::string& name, Eigen::Index dim, Eigen::Index hidden,
                                std::mt19937_64& rng) {
  return {Linear::create(store, name + "/inner", dim, hidden, true, rng),
          Linear::create(store, name + "/outer", hidden, dim, true, rng)};
}

Var FeedForward::operator()(Tape& t, const Var& x) const { return outer(t, ad::relu(inner(t, x))); }

Mlp Mlp::create(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden, Eigen::Index out,
                std::mt19937_64& rng) {
  return {Linear::create(store, name + "/layer0", in, hidden, true, rng),
          Linear::create(store, name + "/layer1", hidden, out, true, rng)};
}

Var Mlp::operator()(Tape& t, const Var& x) const { return second(t, ad::relu(first(t, x))); }

GruCell GruCell::create(ParamStore& store, const std::string& name, Eigen::Index input, Eigen::Index hidden,
                        std::mt19937_64& rng) {
  GruCell g;
  g.input_update = Linear::create(store, name + "/W_z", input, hidden, true, rng);
  g.input_reset = Linear::create(store, name + "/W_r", input, hidden, true, rng);
  g.input_candidate = Linear::create(store, name + "/W_h", input, hidden, true, rng);
  g.hidden_update = Linear::create(store, name + "/U_z", hidden, hidden, false, rng);
  g.hidden_reset = Linear::create(store, name + "/U_r", hidden, hidden, false, rng);
  g.hidden_candidate = Linear::create(store, name + "/U_h", hidden, hidden, false, rng);
  return g;
}

Var GruCell::operator()(Tape& t, const Var& x, const Var& h) const {
  Var z = ad::sigmoid(ad::add(input_update(t, x), hidden_update(t, h)));
  Var r = ad::sigmoid(ad::add(input_reset(t, x), hidden_reset(t, h)));
  Var n = ad::tanh(ad::add(input_candidate(t, x), hidden_candidate(t, ad::mul(r, h))));
  // h' = (1 - z) * n + z * h
  return ad::add(ad::mul(ad::affine(z, -1.0, 1.0), n), ad::mul(z, h));
}

TransformerEncoder TransformerEncoder::create(ParamStore& store, const std::string& name,
                                              const TransformerConfig& cfg, std::mt19937_64& rng) {
  TransformerEncoder enc;
  enc.heads = cfg.heads;
  for (int l = 0; l < cfg.layers; ++l) {
    std::string prefix = name + "/block" + std::to_string(l);
    enc.blocks.push_back({MultiHeadAttention::create(store, prefix + "/self_attn", cfg.dim, cfg.heads, rng),
                          LayerNorm::create(store, prefix + "/self_attn_norm", cfg.dim, rng),
                          FeedForward::create(store, prefix + "/ffn", cfg.dim, cfg.ffn_dim, rng),
                          LayerNorm::create(store, prefix + "/ffn_norm", cfg.dim, rng)});
  }
  return enc;
}

Var TransformerEncoder::operator()(Tape& t, Var x, Eigen::Index valid) const {
  for (const auto& b : blocks) {
    Var a = b.attention(t, x, x, valid);
    x = b.attention_norm(t, ad::add(x, ad::dropout(a)));
    Var f = b.ffn(t, x);
    x = b.ffn_norm(t, ad::add(x, ad::dropout(f)));
  }
  return x;
}

} // namespace disk::nn
