#include "disk/generator.hpp"

#include "disk/corpus.hpp"
#include "disk/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace disk::generator {

Params Params::create(nn::ParamStore& store, const ModelConfig& cfg, int vocab,
                      const nn::TransformerEncoder& shared_encoder, std::mt19937_64& rng) {
  Params p;
  p.encoder = &shared_encoder;
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string n = "generator/block" + std::to_string(l);
    DecoderBlock b;
    b.self_attention = nn::MultiHeadAttention::create(store, n + "/self", cfg.dim, cfg.heads, rng);
    b.self_norm = nn::LayerNorm::create(store, n + "/self_norm", cfg.dim, rng);
    b.sketch_attention = nn::MultiHeadAttention::create(store, n + "/sketch", cfg.dim, cfg.heads, rng);
    b.sketch_norm = nn::LayerNorm::create(store, n + "/sketch_norm", cfg.dim, rng);
    b.cross_attention = nn::MultiHeadAttention::create(store, n + "/cross", cfg.dim, cfg.heads, rng);
    b.cross_norm = nn::LayerNorm::create(store, n + "/cross_norm", cfg.dim, rng);
    b.ffn = nn::FeedForward::create(store, n + "/ffn", cfg.dim, cfg.ffn_dim, rng);
    b.ffn_norm = nn::LayerNorm::create(store, n + "/ffn_norm", cfg.dim, rng);
    p.blocks.push_back(std::move(b));
  }
  p.output = nn::Linear::create(store, "generator/output", cfg.dim, vocab, true, rng);
  return p;
}

namespace {

Var first_input(Tape& t, const TokenEmbedding& embed, const Var& h_d) {
  return ad::add(h_d, t.constant(embed.positions.row(0)));
}

} // namespace

Var decode_forward(Tape& t, const TokenEmbedding& embed, const Params& p, const Var& h_d, const Memory& memory,
                   std::span<const int> targets) {
  if (targets.empty()) throw EmptyInput("decoder targets");
  Var x = first_input(t, embed, h_d);
  if (targets.size() > 1) x = ad::concat_rows({x, embed(t, targets.first(targets.size() - 1), 1)});
  for (const auto& b : p.blocks) {
    x = b.self_norm(t, ad::add(x, ad::dropout(b.self_attention(t, x, x, -1, true))));
    if (memory.sketch.valid())
      x = b.sketch_norm(t, ad::add(x, ad::dropout(b.sketch_attention(t, x, memory.sketch))));
    x = b.cross_norm(t, ad::add(x, ad::dropout(b.cross_attention(t, x, memory.context))));
    x = b.ffn_norm(t, ad::add(x, ad::dropout(b.ffn(t, x))));
  }
  return ad::log_softmax_rows(p.output(t, x));
}

Var generation_loss(const Var& log_probs, std::span<const int> targets) {
  std::vector<int> steps, ids;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] == Vocabulary::kPad) continue;
    steps.push_back(static_cast<int>(i));
    ids.push_back(targets[i]);
  }
  Var picked = ad::pick_sum(ad::gather_rows(log_probs, steps), ids);
  return ad::affine(picked, -1.0, 0.0);
}

double Candidate::score() const {
  if (log_probs.empty()) return -std::numeric_limits<double>::infinity();
  return std::accumulate(log_probs.begin(), log_probs.end(), 0.0) / static_cast<double>(log_probs.size());
}

namespace {

struct Hypothesis {
  Candidate cand;
  double total = 0.0;
  std::vector<Var> keys, values;  // self-attention caches, one per block
  int last = -1;
};

struct StaticKV {
  std::vector<std::pair<Var, Var>> sketch, cross;
};

// Runs one position through the stack, extending the hypothesis caches; returns 1 x V log-probs.
Matrix step(Tape& t, const Params& p, const StaticKV& kv, Hypothesis& h, Var x) {
  for (std::size_t l = 0; l < p.blocks.size(); ++l) {
    const auto& b = p.blocks[l];
    auto [k, v] = b.self_attention.project_kv(t, x);
    if (h.keys[l].valid()) {
      h.keys[l] = ad::concat_rows({h.keys[l], k});
      h.values[l] = ad::concat_rows({h.values[l], v});
    } else {
      h.keys[l] = k;
      h.values[l] = v;
    }
    x = b.self_norm(t, ad::add(x, b.self_attention.attend(t, x, h.keys[l], h.values[l])));
    if (!kv.sketch.empty())
      x = b.sketch_norm(t, ad::add(x, b.sketch_attention.attend(t, x, kv.sketch[l].first, kv.sketch[l].second)));
    x = b.cross_norm(t, ad::add(x, b.cross_attention.attend(t, x, kv.cross[l].first, kv.cross[l].second)));
    x = b.ffn_norm(t, ad::add(x, b.ffn(t, x)));
  }
  return ad::log_softmax_rows(p.output(t, x)).value();
}

} // namespace

Candidate decode(Tape& t, const TokenEmbedding& embed, const Params& p, const Var& h_d, const Memory& memory,
                 const DecodeConfig& cfg) {
  if (cfg.beam_width < 1 || cfg.max_length < 1) throw ConfigError("beam width and max length must be positive");
  StaticKV kv;
  for (const auto& b : p.blocks) {
    if (memory.sketch.valid()) kv.sketch.push_back(b.sketch_attention.project_kv(t, memory.sketch));
    kv.cross.push_back(b.cross_attention.project_kv(t, memory.context));
  }
  Hypothesis root;
  root.keys.resize(p.blocks.size());
  root.values.resize(p.blocks.size());
  std::vector<Hypothesis> beam{root};
  std::vector<Candidate> finished;

  for (int pos = 0; pos < cfg.max_length && !beam.empty(); ++pos) {
    struct Expansion {
      double total;
      std::size_t parent;
      int token;
      double logp;
    };
    std::vector<Expansion> options;
    for (std::size_t hi = 0; hi < beam.size(); ++hi) {
      auto& h = beam[hi];
      Var x = pos == 0 ? first_input(t, embed, h_d) : embed(t, std::span<const int>(&h.last, 1), pos);
      Matrix lp = step(t, p, kv, h, x);
      if (!lp.allFinite()) throw NumericError("non-finite decoder output");
      std::vector<int> order(static_cast<std::size_t>(lp.cols()));
      std::iota(order.begin(), order.end(), 0);
      const auto take = std::min<std::size_t>(order.size(), static_cast<std::size_t>(cfg.beam_width));
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                        [&](int a, int b) { return lp(0, a) > lp(0, b) || (lp(0, a) == lp(0, b) && a < b); });
      for (std::size_t r = 0; r < take; ++r)
        options.push_back({h.total + lp(0, order[r]), hi, order[r], lp(0, order[r])});
    }
    std::stable_sort(options.begin(), options.end(),
                     [](const Expansion& a, const Expansion& b) { return a.total > b.total; });
    std::vector<Hypothesis> next;
    for (const auto& o : options) {
      if (static_cast<int>(next.size() + finished.size()) >= cfg.beam_width) break;
      Hypothesis h = beam[o.parent];
      h.total = o.total;
      h.cand.log_probs.push_back(o.logp);
      if (o.token == Vocabulary::kEos) {
        h.cand.finished = true;
        finished.push_back(std::move(h.cand));
        continue;
      }
      h.cand.tokens.push_back(o.token);
      h.last = o.token;
      next.push_back(std::move(h));
    }
    beam = std::move(next);
  }
  for (auto& h : beam) finished.push_back(std::move(h.cand));

  std::vector<double> scores;
  for (const auto& c : finished) scores.push_back(c.score());
  return finished[static_cast<std::size_t>(select(scores))];
}

double rescore(const TokenEmbedding& embed, const Params& p, const Matrix& h_d, const Matrix& context,
               const Matrix* sketch, const Candidate& c) {
  Tape t(false);
  std::vector<int> targets = c.tokens;
  if (c.finished) targets.push_back(Vocabulary::kEos);
  if (targets.empty()) return -std::numeric_limits<double>::infinity();
  Memory m{t.constant(context), sketch ? t.constant(*sketch) : Var{}};
  Var lp = decode_forward(t, embed, p, t.constant(h_d), m, targets);
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) total += lp.value()(static_cast<Eigen::Index>(i), targets[i]);
  return total / static_cast<double>(targets.size());
}

int select(std::span<const double> scores) {
  int best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

} // namespace disk::generator
