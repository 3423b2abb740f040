#include "disk/trainer.hpp"

#include "disk/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace disk {

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"batch_size", c.batch_size}, {"epochs", c.epochs},   {"lr", c.lr},
       {"beta1", c.beta1},           {"beta2", c.beta2},     {"adam_eps", c.adam_eps},
       {"dropout", c.dropout},       {"clip_norm", c.clip_norm}, {"seed", c.seed},
       {"min_freq", c.min_freq},     {"model", c.model},     {"flags", c.flags}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.batch_size = j.value("batch_size", d.batch_size);
  c.epochs = j.value("epochs", d.epochs);
  c.lr = j.value("lr", d.lr);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.adam_eps = j.value("adam_eps", d.adam_eps);
  c.dropout = j.value("dropout", d.dropout);
  c.clip_norm = j.value("clip_norm", d.clip_norm);
  c.seed = j.value("seed", d.seed);
  c.min_freq = j.value("min_freq", d.min_freq);
  c.model = j.contains("model") ? j.at("model").get<ModelConfig>() : d.model;
  c.flags = j.contains("flags") ? j.at("flags").get<AblationFlags>() : d.flags;
}

void Adam::step(nn::ParamStore& store) {
  ++steps_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(steps_));
  for (const auto& p : store.all()) {
    auto it = moments_.find(p->name);
    if (it == moments_.end())
      it = moments_.emplace(p->name, std::make_pair(Matrix::Zero(p->value.rows(), p->value.cols()),
                                                    Matrix::Zero(p->value.rows(), p->value.cols()))).first;
    auto& [m, v] = it->second;
    m = b1_ * m + (1 - b1_) * p->grad;
    v = b2_ * v + (1 - b2_) * p->grad.cwiseAbs2();
    p->value.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }
}

double clip_gradients(nn::ParamStore& store, double max_norm) {
  double sq = 0;
  for (const auto& p : store.all()) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& p : store.all()) p->grad *= s;
  }
  return norm;
}

double LossSummary::perplexity() const { return tokens > 0 ? std::exp(nll / tokens) : 0.0; }

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a * 0x9E3779B97F4A7C15ULL ^ (b + 0x632BE59BD9B4E019ULL + (a << 6) + (a >> 2));
  x ^= x >> 31;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 29;
  return x;
}

} // namespace

Trainer::Trainer(TrainConfig cfg, std::vector<MWPInstance> train, std::vector<MWPInstance> dev)
    : cfg_(std::move(cfg)), adam_(cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.adam_eps), rng_(cfg_.seed) {
  if (train.empty()) throw EmptyInput("training set");
  if (cfg_.batch_size <= 0 || cfg_.epochs < 0) throw ConfigError("batch size must be positive");
  if (cfg_.model.pool_size <= 0) throw ConfigError("candidate pool is empty");
  auto vocab = build_vocab(train, cfg_.min_freq);
  auto pos_vocab = build_pos_vocab(train);
  model_ = std::make_unique<DiskModel>(cfg_.model, cfg_.flags, std::move(vocab), std::move(pos_vocab), cfg_.seed);
  for (const auto& inst : train) train_.push_back(model_->prepare(inst));
  for (const auto& inst : dev) dev_.push_back(model_->prepare(inst));

  // fixed uniform sample of the training set
  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 pool_rng(mix(cfg_.seed, 0x5eed));
  std::shuffle(order.begin(), order.end(), pool_rng);
  const auto P = std::min<std::size_t>(order.size(), static_cast<std::size_t>(cfg_.model.pool_size));
  order.resize(P);
  std::vector<Prepared> pool;
  train_self_.assign(train.size(), -1);
  for (std::size_t i = 0; i < P; ++i) {
    const auto idx = static_cast<std::size_t>(order[i]);
    pool_instances_.push_back(train[idx]);
    pool.push_back(train_[idx]);
    train_self_[idx] = static_cast<int>(i);
  }
  model_->set_pool(std::move(pool));
  train_labels_ = annotate_gold_labels(train_, model_->pool(), train_self_);
  dev_labels_ = annotate_gold_labels(dev_, model_->pool(), {});
}

EpochMetrics Trainer::run_epoch() {
  DiskModel& m = *model_;
  const bool matcher = cfg_.flags.sketch;
  if (matcher) m.refresh_pool_cache();
  std::vector<std::size_t> order(train_.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng_);

  EpochMetrics em;
  em.epoch = epoch_ + 1;
  double sum_d = 0, sum_m = 0, sum_g = 0, sum_t = 0;
  const auto B = static_cast<std::size_t>(cfg_.batch_size);
  for (std::size_t start = 0, batch = 0; start < order.size(); start += B, ++batch) {
    const auto end = std::min(order.size(), start + B);
    Tape t(true);
    t.set_dropout(cfg_.dropout, mix(mix(cfg_.seed, static_cast<std::uint64_t>(epoch_)), batch));
    PoolFeatures f;
    if (matcher) f = m.pool_features(t);
    std::vector<Var> totals;
    for (std::size_t i = start; i < end; ++i) {
      const auto idx = order[i];
      auto losses = m.example_loss(t, train_[idx], train_labels_[idx], train_self_[idx], f);
      sum_d += losses.domain.scalar();
      sum_m += losses.match.valid() ? losses.match.scalar() : 0.0;
      sum_g += losses.generation.scalar();
      sum_t += losses.total.scalar();
      totals.push_back(losses.total);
    }
    Var batch_loss = ad::affine(ad::sum(ad::concat_rows(totals)), 1.0 / static_cast<double>(end - start), 0.0);
    if (!std::isfinite(batch_loss.scalar()))
      throw NumericError("non-finite loss in epoch " + std::to_string(epoch_ + 1) +
                         "; last good checkpoint is the previous epoch's");
    m.params().zero_grad();
    t.backward(batch_loss);
    clip_gradients(m.params(), cfg_.clip_norm);
    adam_.step(m.params());
  }
  const double n = static_cast<double>(train_.size());
  em.L_D = sum_d / n;
  em.L_M = sum_m / n;
  em.L_G = sum_g / n;
  em.L_total = sum_t / n;
  ++epoch_;
  if (matcher) m.refresh_pool_cache();
  if (!dev_.empty()) {
    em.dev_L_total = evaluate(dev_, dev_labels_).L_total;
    em.matcher_top1_acc = matcher ? matcher_accuracy(dev_, dev_labels_) : 0.0;
  }
  return em;
}

LossSummary Trainer::evaluate(std::span<const Prepared> examples, std::span<const int> labels) const {
  const DiskModel& m = *model_;
  LossSummary s;
  if (examples.empty()) return s;
  Matrix g2_mean, pooled;
  if (cfg_.flags.sketch) {
    Tape t(false);
    auto f = m.pool_features(t);
    g2_mean = f.g2_mean.value();
    pooled = f.pooled.value();
  }
  for (std::size_t i = 0; i < examples.size(); ++i) {
    Tape t(false);
    PoolFeatures f;
    if (cfg_.flags.sketch) f = {t.constant(g2_mean), t.constant(pooled)};
    auto l = m.example_loss(t, examples[i], labels[i], -1, f);
    s.L_D += l.domain.scalar();
    s.L_M += l.match.valid() ? l.match.scalar() : 0.0;
    s.L_G += l.generation.scalar();
    s.nll += l.generation.scalar();
    s.L_total += l.total.scalar();
    s.tokens += static_cast<double>(examples[i].targets.size());
  }
  const double n = static_cast<double>(examples.size());
  s.L_D /= n;
  s.L_M /= n;
  s.L_G /= n;
  s.L_total /= n;
  return s;
}

double Trainer::matcher_accuracy(std::span<const Prepared> examples, std::span<const int> labels) const {
  if (examples.empty() || !cfg_.flags.sketch) return 0.0;
  const DiskModel& m = *model_;
  Tape base(false);
  auto f = m.pool_features(base);
  int hits = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    auto ds = m.summarize(base, examples[i]);
    Var C = m.encode_equation(base, examples[i]);
    hits += matcher::argmax(m.match_logits(base, C, ds.h_d, f).value()) == labels[i] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

std::vector<EpochMetrics> Trainer::fit(const std::optional<std::filesystem::path>& out_dir,
                                       const std::function<void(const EpochMetrics&)>& on_epoch) {
  std::vector<EpochMetrics> log;
  std::ofstream csv;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    csv.open(*out_dir / "metrics.csv");
    csv << "epoch,L_D,L_M,L_G,L_total,dev_L_total,matcher_top1_acc\n";
    csv.precision(10);
  }
  double best = std::numeric_limits<double>::infinity();
  while (epoch_ < cfg_.epochs) {
    auto em = run_epoch();
    log.push_back(em);
    if (out_dir) {
      csv << em.epoch << ',' << em.L_D << ',' << em.L_M << ',' << em.L_G << ',' << em.L_total << ','
          << em.dev_L_total << ',' << em.matcher_top1_acc << '\n';
      csv.flush();
      save_checkpoint(*out_dir / "last.ckpt");
      if (dev_.empty() || em.dev_L_total < best) {
        best = em.dev_L_total;
        save_checkpoint(*out_dir / "best.ckpt");
      }
    }
    if (on_epoch) on_epoch(em);
  }
  return log;
}

// ---- checkpoints ----

namespace {

constexpr char kMagic[8] = {'D', 'I', 'S', 'K', 'C', 'K', 'P', '1'};

struct Section {
  std::string name;
  const Matrix* data;
};

void write_checkpoint(const std::filesystem::path& path, nlohmann::json header, const std::vector<Section>& sections) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& s : sections) list.push_back({{"name", s.name}, {"rows", s.data->rows()}, {"cols", s.data->cols()}});
  header["sections"] = list;
  const std::string text = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof kMagic);
    std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& s : sections)
      out.write(reinterpret_cast<const char*>(s.data->data()),
                static_cast<std::streamsize>(s.data->size() * static_cast<Eigen::Index>(sizeof(double))));
    if (!out) throw Error("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

struct RawCheckpoint {
  nlohmann::json header;
  std::map<std::string, Matrix> sections;
};

RawCheckpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw ParseError("not a checkpoint: " + path.string(), 0);
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  RawCheckpoint raw;
  raw.header = nlohmann::json::parse(text);
  for (const auto& s : raw.header.at("sections")) {
    Matrix m(s.at("rows").get<Eigen::Index>(), s.at("cols").get<Eigen::Index>());
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * static_cast<Eigen::Index>(sizeof(double))));
    if (!in) throw ParseError("truncated checkpoint " + path.string(), 0);
    raw.sections.emplace(s.at("name").get<std::string>(), std::move(m));
  }
  return raw;
}

void restore_params(nn::ParamStore& store, const RawCheckpoint& raw) {
  for (const auto& p : store.all()) {
    auto it = raw.sections.find("param/" + p->name);
    if (it == raw.sections.end()) throw ValidationError("checkpoint lacks parameter " + p->name);
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
      throw ValidationError("shape mismatch for " + p->name);
    p->value = it->second;
  }
}

nlohmann::json instances_json(const std::vector<MWPInstance>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& inst : v) a.push_back(to_json(inst));
  return a;
}

} // namespace

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  std::ostringstream rng_state;
  rng_state << rng_;
  nlohmann::json header = {{"config", cfg_},
                           {"vocab", model_->vocab().to_json()},
                           {"pos_vocab", model_->pos_vocab().to_json()},
                           {"pool", instances_json(pool_instances_)},
                           {"epoch", epoch_},
                           {"adam_steps", adam_.steps()},
                           {"rng", rng_state.str()}};
  std::vector<Section> sections;
  for (const auto& p : model_->params().all()) sections.push_back({"param/" + p->name, &p->value});
  auto& moments = const_cast<Adam&>(adam_).moments();
  for (const auto& [name, mv] : moments) {
    sections.push_back({"adam_m/" + name, &mv.first});
    sections.push_back({"adam_v/" + name, &mv.second});
  }
  write_checkpoint(path, std::move(header), sections);
}

void Trainer::load_checkpoint(const std::filesystem::path& path) {
  auto raw = read_checkpoint(path);
  if (raw.header.at("vocab") != model_->vocab().to_json()) throw ValidationError("checkpoint vocabulary differs");
  restore_params(model_->params(), raw);
  adam_.moments().clear();
  for (const auto& p : model_->params().all()) {
    auto m = raw.sections.find("adam_m/" + p->name);
    auto v = raw.sections.find("adam_v/" + p->name);
    if (m != raw.sections.end() && v != raw.sections.end()) adam_.moments()[p->name] = {m->second, v->second};
  }
  adam_.set_steps(raw.header.at("adam_steps").get<long>());
  epoch_ = raw.header.at("epoch").get<int>();
  std::istringstream rng_state(raw.header.at("rng").get<std::string>());
  rng_state >> rng_;
}

LoadedModel load_model(const std::filesystem::path& path) {
  auto raw = read_checkpoint(path);
  LoadedModel out;
  out.config = raw.header.at("config").get<TrainConfig>();
  out.epoch = raw.header.at("epoch").get<int>();
  for (const auto& j : raw.header.at("pool")) out.pool.push_back(instance_from_json(j));
  out.model = std::make_unique<DiskModel>(out.config.model, out.config.flags,
                                          Vocabulary::from_json(raw.header.at("vocab")),
                                          Vocabulary::from_json(raw.header.at("pos_vocab")), out.config.seed);
  restore_params(out.model->params(), raw);
  std::vector<Prepared> pool;
  for (const auto& inst : out.pool) pool.push_back(out.model->prepare(inst));
  out.model->set_pool(std::move(pool));
  if (out.config.flags.sketch) out.model->refresh_pool_cache();
  return out;
}

// ---- gradient check ----

double GradCheckReport::max_rel_error() const {
  double m = 0;
  for (const auto& e : entries)
    if (!e.skipped) m = std::max(m, e.rel_error);
  return m;
}

nlohmann::json GradCheckReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : entries)
    rows.push_back({{"loss", e.loss}, {"block", e.block}, {"rel_error", e.rel_error}, {"checked", e.checked},
                    {"skipped", e.skipped}});
  return {{"max_rel_error", max_rel_error()}, {"entries", rows}};
}

std::vector<MWPInstance> grad_check_corpus() {
  struct Row {
    const char *subject, *verb, *number, *noun, *equation;
  };
  const Row rows[] = {{"he", "buys", "3", "pens", "x = 3 ;"},
                      {"she", "sells", "4", "cups", "y = 4 ;"},
                      {"he", "eats", "2", "pies", "x = 2 ;"},
                      {"she", "finds", "6", "pens", "y = 6 ;"}};
  std::vector<MWPInstance> out;
  int i = 0;
  for (const auto& r : rows) {
    MWPInstance inst;
    inst.id = std::string("toy-") + std::to_string(i++);
    inst.equation = tokenize_equation(r.equation);
    inst.text = {r.subject, r.verb, r.number, r.noun, "."};
    inst.pos_tags = {"PRP", "VBZ", "CD", "NNS", "."};
    inst.dep_edges = {{-1, 1, "root"}, {1, 0, "nsubj"}, {3, 2, "nummod"}, {1, 3, "dobj"}, {1, 4, "punct"}};
    inst.constituency = std::string("(ROOT (S (NP (PRP ") + r.subject + ")) (VP (VBZ " + r.verb + ") (NP (CD " +
                        r.number + ") (NNS " + r.noun + "))) (. .)))";
    validate(inst);
    out.push_back(std::move(inst));
  }
  return out;
}

ModelConfig grad_check_model_config() {
  ModelConfig c;
  c.dim = 4;
  c.ffn_dim = 8;
  c.heads = 2;
  c.layers = 2;
  c.domains = 2;
  c.max_text_length = 5;
  c.pool_size = 3;
  c.subtree_leaves = 5;
  c.pos_dim = 2;
  c.gcn_layers = 2;
  c.max_decode_length = 8;
  return c;
}

GradCheckReport grad_check(const GradCheckConfig& gc) {
  auto corpus = grad_check_corpus();
  auto cfg = grad_check_model_config();
  DiskModel model(cfg, AblationFlags{}, build_vocab(corpus, 1), build_pos_vocab(corpus), gc.seed);
  std::vector<Prepared> prepared;
  for (const auto& inst : corpus) prepared.push_back(model.prepare(inst));
  model.set_pool({prepared.begin(), prepared.begin() + 3});
  model.refresh_pool_cache();
  const Prepared& ex = prepared[3];
  const int gold = annotate_gold_labels(std::span<const Prepared>(&ex, 1), model.pool(), {}).front();

  enum class Which { Domain, Match, Generation };
  auto loss_of = [&](Tape& t, Which w) {
    auto f = model.pool_features(t);
    auto l = model.example_loss(t, ex, gold, -1, f);
    return w == Which::Domain ? l.domain : w == Which::Match ? l.match : l.generation;
  };
  auto value_of = [&](Which w) {
    Tape t(false);
    return loss_of(t, w).scalar();
  };

  GradCheckReport report;
  std::mt19937_64 rng(gc.seed);
  const std::pair<Which, const char*> losses[] = {
      {Which::Domain, "L_D"}, {Which::Match, "L_M"}, {Which::Generation, "L_G"}};
  for (const auto& [which, label] : losses) {
    model.params().zero_grad();
    {
      Tape t(true);
      t.backward(loss_of(t, which));
    }
    for (const auto& p : model.params().all()) {
      const Eigen::Index n = p->value.size();
      std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
      std::iota(idx.begin(), idx.end(), 0);
      if (n > gc.max_entries_per_block) {
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(static_cast<std::size_t>(gc.max_entries_per_block));
      }
      Eigen::VectorXd analytic(static_cast<Eigen::Index>(idx.size())), numeric(analytic.size());
      for (std::size_t k = 0; k < idx.size(); ++k) {
        double& x = p->value.data()[idx[k]];
        const double saved = x;
        x = saved + gc.eps;
        const double up = value_of(which);
        x = saved - gc.eps;
        const double down = value_of(which);
        x = saved;
        numeric(static_cast<Eigen::Index>(k)) = (up - down) / (2 * gc.eps);
        analytic(static_cast<Eigen::Index>(k)) = p->grad.data()[idx[k]];
      }
      GradCheckEntry e;
      e.loss = label;
      e.block = p->name;
      e.checked = static_cast<int>(idx.size());
      const double na = analytic.norm(), nn = numeric.norm();
      if (na < 1e-10 && nn < 1e-10) {
        e.skipped = true;
      } else {
        e.rel_error = (analytic - numeric).norm() / std::max({na, nn, 1e-8});
      }
      report.entries.push_back(e);
    }
  }
  return report;
}

} // namespace disk
