#ifndef DISK_MODEL_HPP
#define DISK_MODEL_HPP

#include "disk/corpus.hpp"
#include "disk/generator.hpp"
#include "disk/matcher.hpp"
#include "disk/qcg.hpp"
#include "disk/sketch.hpp"
#include "disk/summarizer.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace disk {

// An instance converted to ids, truncated to the model's length limits.
struct Prepared {
  std::string id;
  std::string template_name;
  std::vector<std::string> tokens;  // truncated text
  std::vector<int> text_ids;
  std::vector<int> eq_ids, eq_kinds;
  std::vector<int> targets;         // text ids + </s>
  qcg::QuantityCellGraph graph;     // restricted to the truncated text
  std::vector<int> node_pos;        // POS id per graph node
};

struct Losses {
  Var domain, match, generation, total;  // match is invalid without the matcher
};

// Per-batch features of every pool candidate, shared by all examples on a tape.
struct PoolFeatures {
  Var g2_mean;  // |P| x d, mean_k g2(u_k) per candidate
  Var pooled;   // |P| x d, global-attention summary per candidate
};

struct DomainCandidate {
  int domain = 0;
  int retrieved = -1;  // pool index, -1 without the matcher
  generator::Candidate candidate;
};

struct GenerationResult {
  std::vector<DomainCandidate> candidates;  // exactly K
  int selected = 0;
};

class DiskModel {
public:
  DiskModel(const ModelConfig& cfg, const AblationFlags& flags, Vocabulary vocab, Vocabulary pos_vocab,
            std::uint64_t seed);
  DiskModel(const DiskModel&) = delete;
  DiskModel& operator=(const DiskModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  const AblationFlags& flags() const { return flags_; }
  const Vocabulary& vocab() const { return vocab_; }
  const Vocabulary& pos_vocab() const { return pos_vocab_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }

  Prepared prepare(const MWPInstance& inst) const;

  // Fixed candidate pool; encodings must be refreshed before use.
  void set_pool(std::vector<Prepared> pool);
  const std::vector<Prepared>& pool() const { return pool_; }
  void refresh_pool_cache();
  const std::vector<Matrix>& pool_cache() const { return pool_cache_; }

  PoolFeatures pool_features(Tape& t) const;

  // h_d from the gold text via the summarizer
  summarizer::DomainState summarize(Tape& t, const Prepared& ex) const;
  Var encode_equation(Tape& t, const Prepared& ex) const;
  // 1 x |P|; `exclude` (>= 0) is masked out of the distribution
  Var match_logits(Tape& t, const Var& C, const Var& h_d, const PoolFeatures& f, int exclude = -1) const;

  // Training losses. `gold` indexes the pool; `exclude` is the example's own pool slot or -1.
  Losses example_loss(Tape& t, const Prepared& ex, int gold, int exclude, const PoolFeatures& f) const;

  sketch::Sketch build_sketch(Tape& t, const Var& U, const Var& h_d, const Prepared& instance, const Var& C) const;

  GenerationResult generate(const Prepared& ex, const generator::DecodeConfig& cfg,
                            std::vector<nlohmann::json>* diagnostics = nullptr) const;
  // Independent teacher-forced recomputation of every candidate score.
  std::vector<double> rescore(const Prepared& ex, const GenerationResult& r) const;

  int retrieve(Tape& t, const Prepared& ex, const Var& h_d) const;

  const TokenEmbedding& embedding() const { return embed_; }
  const summarizer::Params& summarizer_params() const { return summarizer_; }
  const matcher::Params& matcher_params() const { return matcher_; }
  const sketch::Params& sketch_params() const { return sketch_; }
  const generator::Params& generator_params() const { return generator_; }
  const nn::TransformerEncoder& equation_encoder() const { return encoder_e_; }

private:
  ModelConfig cfg_;
  AblationFlags flags_;
  Vocabulary vocab_, pos_vocab_;
  nn::ParamStore store_;
  TokenEmbedding embed_;
  summarizer::Params summarizer_;
  nn::TransformerEncoder encoder_e_;
  matcher::Params matcher_;
  sketch::Params sketch_;
  generator::Params generator_;
  std::vector<Prepared> pool_;
  std::vector<Matrix> pool_cache_;
};

Vocabulary build_pos_vocab(std::span<const MWPInstance> corpus);

// Token-F1 gold labels over the pool. self[i] is example i's own pool slot (or -1).
std::vector<int> annotate_gold_labels(std::span<const Prepared> examples, std::span<const Prepared> pool,
                                      std::span<const int> self);

} // namespace disk

#endif
