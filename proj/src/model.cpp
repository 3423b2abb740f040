#include "disk/model.hpp"

#include "disk/errors.hpp"

#include <algorithm>

namespace disk {

namespace {

constexpr int kPositions = 256;
constexpr double kMasked = -1e9;

} // namespace

DiskModel::DiskModel(const ModelConfig& cfg, const AblationFlags& flags, Vocabulary vocab, Vocabulary pos_vocab,
                     std::uint64_t seed)
    : cfg_(cfg), flags_(flags), vocab_(std::move(vocab)), pos_vocab_(std::move(pos_vocab)) {
  if (cfg.dim <= 0 || cfg.heads <= 0 || cfg.dim % cfg.heads != 0) throw ConfigError("d must be a positive multiple of heads");
  if (cfg.domains <= 0 || cfg.max_text_length <= 0 || cfg.max_decode_length <= 0)
    throw ConfigError("K, L_max and max_decode_length must be positive");
  if (cfg.max_text_length >= kPositions || cfg.max_decode_length >= kPositions)
    throw ConfigError("sequence limits exceed the positional table");
  std::mt19937_64 rng(seed);
  nn::TransformerConfig tc{cfg.dim, cfg.ffn_dim, cfg.heads, cfg.layers};
  embed_ = TokenEmbedding::create(store_, "embedding/tokens", vocab_.size(), cfg.dim, kPositions, rng);
  summarizer_ = summarizer::Params::create(store_, cfg, rng);
  encoder_e_ = nn::TransformerEncoder::create(store_, "encoder_e", tc, rng);
  matcher_ = matcher::Params::create(store_, cfg, encoder_e_, rng);
  sketch_ = sketch::Params::create(store_, cfg, pos_vocab_.size(), rng);
  generator_ = generator::Params::create(store_, cfg, vocab_.size(), encoder_e_, rng);
}

Prepared DiskModel::prepare(const MWPInstance& inst) const {
  Prepared p;
  p.id = inst.id;
  p.template_name = template_of(inst);
  const auto L = std::min<std::size_t>(inst.text.size(), static_cast<std::size_t>(cfg_.max_text_length));
  p.tokens.assign(inst.text.begin(), inst.text.begin() + static_cast<std::ptrdiff_t>(L));
  p.text_ids = vocab_.encode(p.tokens);
  const auto N = std::min<std::size_t>(inst.equation.size(), kPositions);
  for (std::size_t i = 0; i < N; ++i) {
    p.eq_ids.push_back(vocab_.id(inst.equation[i].surface));
    p.eq_kinds.push_back(static_cast<int>(inst.equation[i].kind));
  }
  const auto T = std::min<std::size_t>(inst.text.size(), static_cast<std::size_t>(cfg_.max_decode_length - 1));
  p.targets = vocab_.encode(std::span<const std::string>(inst.text.data(), T));
  p.targets.push_back(Vocabulary::kEos);
  p.graph = sketch::truncate_graph(qcg::build_qcg(inst, cfg_.subtree_leaves), static_cast<int>(L));
  for (const auto& n : p.graph.nodes) p.node_pos.push_back(pos_vocab_.id(n.pos_tag));
  return p;
}

void DiskModel::set_pool(std::vector<Prepared> pool) {
  if (pool.empty()) throw ConfigError("candidate pool is empty");
  pool_ = std::move(pool);
  pool_cache_.clear();
}

void DiskModel::refresh_pool_cache() {
  pool_cache_.clear();
  pool_cache_.reserve(pool_.size());
  for (const auto& c : pool_) {
    Tape t(false);
    pool_cache_.push_back(summarizer::encode_text(t, embed_, matcher_.encoder_q, c.text_ids).value());
  }
}

PoolFeatures DiskModel::pool_features(Tape& t) const {
  if (pool_cache_.size() != pool_.size() || pool_.empty()) throw Error("pool cache is stale; refresh it first");
  Eigen::Index total = 0;
  for (const auto& u : pool_cache_) total += u.rows();
  Matrix stacked(total, cfg_.dim);
  Matrix averaging = Matrix::Zero(static_cast<Eigen::Index>(pool_cache_.size()), total);
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < pool_cache_.size(); ++i) {
    const auto& u = pool_cache_[i];
    stacked.middleRows(row, u.rows()) = u;
    averaging.row(static_cast<Eigen::Index>(i)).segment(row, u.rows()).setConstant(1.0 / static_cast<double>(u.rows()));
    row += u.rows();
  }
  PoolFeatures f;
  f.g2_mean = ad::matmul(t.constant(std::move(averaging)), matcher_.g2(t, t.constant(std::move(stacked))));
  Var W_p = t.param(*matcher_.W_p);
  std::vector<Var> pooled;
  pooled.reserve(pool_cache_.size());
  for (const auto& u : pool_cache_) pooled.push_back(global_attention(t.constant(u), W_p).pooled);
  f.pooled = ad::concat_rows(pooled);
  return f;
}

summarizer::DomainState DiskModel::summarize(Tape& t, const Prepared& ex) const {
  return summarizer::summarize(t, embed_, summarizer_, cfg_, ex.text_ids);
}

Var DiskModel::encode_equation(Tape& t, const Prepared& ex) const {
  return matcher::encode_equation(t, embed_, *matcher_.type_embedding, encoder_e_, ex.eq_ids, ex.eq_kinds);
}

Var DiskModel::match_logits(Tape& t, const Var& C, const Var& h_d, const PoolFeatures& f, int exclude) const {
  Var s_em = ad::matmul_nt(ad::mean_rows(matcher_.g1(t, C)), f.g2_mean);
  Var R = matcher::domain_match_vectors(h_d, f.pooled, t.param(*matcher_.W_r));
  Var logits = matcher::match_logits(s_em, R, t.param(*matcher_.w_r));
  if (exclude >= 0) {
    Matrix mask = Matrix::Zero(1, logits.cols());
    mask(0, exclude) = kMasked;
    logits = ad::add(logits, t.constant(std::move(mask)));
  }
  return logits;
}

sketch::Sketch DiskModel::build_sketch(Tape& t, const Var& U, const Var& h_d, const Prepared& instance,
                                       const Var& C) const {
  return sketch::provide(t, sketch_, flags_, U, h_d, instance.graph, instance.node_pos, C);
}

Losses DiskModel::example_loss(Tape& t, const Prepared& ex, int gold, int exclude, const PoolFeatures& f) const {
  Losses out;
  auto ds = summarize(t, ex);
  out.domain = ds.loss;
  Var C = encode_equation(t, ex);
  generator::Memory memory{C, Var{}};
  if (flags_.sketch) {
    if (gold < 0 || gold >= static_cast<int>(pool_.size())) throw Error("gold label outside the pool");
    out.match = matcher::matching_loss(match_logits(t, C, ds.h_d, f, exclude), gold);
    const auto& inst = pool_[static_cast<std::size_t>(gold)];
    Var U = summarizer::encode_text(t, embed_, matcher_.encoder_q, inst.text_ids);
    auto sk = build_sketch(t, U, ds.h_d, inst, C);
    memory = {sk.C_tilde, sk.U_tilde};
  }
  Var log_probs = generator::decode_forward(t, embed_, generator_, ds.h_d, memory, ex.targets);
  out.generation = generator::generation_loss(log_probs, ex.targets);
  out.total = ad::add(out.domain, out.generation);
  if (out.match.valid()) out.total = ad::add(out.total, out.match);
  return out;
}

int DiskModel::retrieve(Tape& t, const Prepared& ex, const Var& h_d) const {
  Var C = encode_equation(t, ex);
  return matcher::argmax(match_logits(t, C, h_d, pool_features(t)).value());
}

GenerationResult DiskModel::generate(const Prepared& ex, const generator::DecodeConfig& cfg,
                                     std::vector<nlohmann::json>* diagnostics) const {
  GenerationResult r;
  Matrix C_value, g2_mean, pooled;
  {
    Tape t(false);
    C_value = encode_equation(t, ex).value();
    if (flags_.sketch) {
      auto f = pool_features(t);
      g2_mean = f.g2_mean.value();
      pooled = f.pooled.value();
    }
  }
  const Matrix& E = summarizer_.E->value;
  std::vector<double> scores;
  for (int k = 0; k < cfg_.domains; ++k) {
    Tape t(false);
    Var C = t.constant(C_value);
    Var h_d = t.constant(E.row(k));
    DomainCandidate dc;
    dc.domain = k;
    generator::Memory memory{C, Var{}};
    if (flags_.sketch) {
      PoolFeatures f{t.constant(g2_mean), t.constant(pooled)};
      dc.retrieved = matcher::argmax(match_logits(t, C, h_d, f).value());
      const auto& inst = pool_[static_cast<std::size_t>(dc.retrieved)];
      auto sk = build_sketch(t, t.constant(pool_cache_[static_cast<std::size_t>(dc.retrieved)]), h_d, inst, C);
      memory = {sk.C_tilde, sk.U_tilde};
      if (diagnostics) {
        auto j = sketch::diagnostics(sk, inst.graph, inst.tokens);
        j["id"] = ex.id;
        j["k"] = k;
        j["retrieved"] = inst.id;
        diagnostics->push_back(std::move(j));
      }
    }
    dc.candidate = generator::decode(t, embed_, generator_, h_d, memory, cfg);
    scores.push_back(dc.candidate.score());
    r.candidates.push_back(std::move(dc));
  }
  r.selected = generator::select(scores);
  return r;
}

std::vector<double> DiskModel::rescore(const Prepared& ex, const GenerationResult& r) const {
  std::vector<double> scores;
  for (const auto& dc : r.candidates) {
    Tape t(false);
    Var C = encode_equation(t, ex);
    Var h_d = t.constant(summarizer_.E->value.row(dc.domain));
    Matrix context = C.value();
    std::optional<Matrix> sketch_memory;
    if (flags_.sketch) {
      int l = retrieve(t, ex, h_d);
      const auto& inst = pool_[static_cast<std::size_t>(l)];
      Var U = summarizer::encode_text(t, embed_, matcher_.encoder_q, inst.text_ids);
      auto sk = build_sketch(t, U, h_d, inst, C);
      context = sk.C_tilde.value();
      sketch_memory = sk.U_tilde.value();
    }
    scores.push_back(generator::rescore(embed_, generator_, h_d.value(), context,
                                        sketch_memory ? &*sketch_memory : nullptr, dc.candidate));
  }
  return scores;
}

Vocabulary build_pos_vocab(std::span<const MWPInstance> corpus) {
  std::map<std::string, int> seen;
  for (const auto& inst : corpus)
    for (const auto& tag : inst.pos_tags) ++seen[tag];
  Vocabulary v;
  for (const auto& [tag, count] : seen) v.add(tag);
  return v;
}

std::vector<int> annotate_gold_labels(std::span<const Prepared> examples, std::span<const Prepared> pool,
                                      std::span<const int> self) {
  std::vector<std::vector<std::string>> pool_tokens;
  pool_tokens.reserve(pool.size());
  for (const auto& c : pool) pool_tokens.push_back(c.tokens);
  std::vector<int> labels;
  labels.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const int skip = self.empty() ? -1 : self[i];
    const std::string* own = skip >= 0 ? pool_tokens[static_cast<std::size_t>(skip)].data() : nullptr;
    auto oracle = [own](std::span<const std::string> cand, std::span<const std::string> gold) {
      return own && cand.data() == own ? -1.0 : matcher::token_f1(cand, gold);
    };
    labels.push_back(matcher::annotate_gold_label(pool_tokens, examples[i].tokens, oracle).index);
  }
  return labels;
}

} // namespace disk
