#include "disk/trainer.hpp"
#include "disk/errors.hpp"
#include "disk/pipeline.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace disk;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.batch_size = 4;
  c.epochs = 2;
  c.lr = 1e-3;
  c.dropout = 0.1;
  c.model.dim = 8;
  c.model.ffn_dim = 8;
  c.model.heads = 2;
  c.model.layers = 1;
  c.model.domains = 2;
  c.model.max_text_length = 40;
  c.model.pool_size = 6;
  c.model.pos_dim = 4;
  c.model.max_decode_length = 40;
  return c;
}

std::vector<MWPInstance> tiny_corpus(int n = 16) { return generate_synthetic_corpus({n, 4, 3}); }

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "disk_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

Matrix param(Trainer& tr, const std::string& name) { return tr.model().params().get(name).value; }

} // namespace

TEST_CASE("total loss and optimizer pieces") {
  CHECK(total_loss(1.0, 2.0, 3.0) == 6.0);

  std::mt19937_64 rng(1);
  nn::ParamStore store;
  auto& w = store.add("w", 1, 2, nn::Init::Zeros, rng);
  w.grad = Matrix(1, 2);
  w.grad << 3.0, -4.0;
  CHECK(clip_gradients(store, 1.0) == doctest::Approx(5.0));
  CHECK(w.grad.norm() == doctest::Approx(1.0));
  Adam adam(0.1, 0.9, 0.999, 1e-8);
  adam.step(store);
  // the first bias-corrected step is lr * sign(g)
  CHECK(w.value(0, 0) == doctest::Approx(-0.1));
  CHECK(w.value(0, 1) == doctest::Approx(0.1));
  CHECK(adam.steps() == 1);
}

TEST_CASE("config json round trip") {
  auto c = tiny_config();
  c.flags.qcg = false;
  nlohmann::json j = c;
  auto back = j.get<TrainConfig>();
  CHECK(back.model.dim == 8);
  CHECK(back.flags == c.flags);
  CHECK(back.seed == c.seed);
}

TEST_CASE("seeded training is bit-identical") {
  auto corpus = tiny_corpus();
  Trainer a(tiny_config(), corpus, {}), b(tiny_config(), corpus, {});
  auto ea = a.run_epoch(), eb = b.run_epoch();
  CHECK(ea.L_total == eb.L_total);
  for (std::size_t i = 0; i < a.model().params().all().size(); ++i)
    CHECK(a.model().params().all()[i]->value == b.model().params().all()[i]->value);
  CHECK(ea.L_total == doctest::Approx(ea.L_D + ea.L_M + ea.L_G));
  CHECK(ea.L_M > 0);
}

TEST_CASE("gold labels never point at the example itself") {
  auto corpus = tiny_corpus();
  Trainer tr(tiny_config(), corpus, {});
  const auto& pool = tr.pool_instances();
  CHECK(pool.size() == 6);
  for (std::size_t i = 0; i < corpus.size(); ++i)
    CHECK(pool[static_cast<std::size_t>(tr.train_labels()[i])].id != corpus[i].id);
}

TEST_CASE("checkpoint round trip resumes exactly") {
  auto corpus = tiny_corpus();
  auto dir = temp_dir("ckpt");
  Trainer a(tiny_config(), corpus, {});
  a.run_epoch();
  a.save_checkpoint(dir / "one.ckpt");
  auto next_a = a.run_epoch();

  Trainer b(tiny_config(), corpus, {});
  b.load_checkpoint(dir / "one.ckpt");
  CHECK(b.epoch() == 1);
  auto next_b = b.run_epoch();
  CHECK(next_a.L_total == next_b.L_total);
  CHECK(param(a, "summarizer/E") == param(b, "summarizer/E"));

  auto loaded = load_model(dir / "one.ckpt");
  CHECK(loaded.epoch == 1);
  CHECK(loaded.pool.size() == 6);
  CHECK(loaded.model->vocab() == a.model().vocab());

  {
    std::ofstream bad(dir / "bad.ckpt");
    bad << "nope";
  }
  CHECK_THROWS_AS(load_model(dir / "bad.ckpt"), ParseError);
}

TEST_CASE("w/o QCG leaves graph weights untouched") {
  auto cfg = tiny_config();
  cfg.flags.qcg = false;
  Trainer tr(cfg, tiny_corpus(), {});
  auto gcn = param(tr, "sketch/gcn0");
  auto ctx = param(tr, "sketch/W_G");
  auto gate = param(tr, "sketch/W_q");
  tr.run_epoch();
  CHECK(param(tr, "sketch/gcn0") == gcn);
  CHECK(param(tr, "sketch/W_G") == ctx);
  CHECK(param(tr, "sketch/W_q") != gate);
}

TEST_CASE("w/o CS trains no matcher") {
  auto cfg = tiny_config();
  cfg.flags.sketch = false;
  Trainer tr(cfg, tiny_corpus(), {});
  auto wr = param(tr, "matcher/W_r");
  auto em = tr.run_epoch();
  CHECK(em.L_M == 0.0);
  CHECK(param(tr, "matcher/W_r") == wr);
  CHECK(em.L_total == doctest::Approx(em.L_D + em.L_G));
}

TEST_CASE("fit writes metrics and checkpoints") {
  auto corpus = tiny_corpus(20);
  auto dir = temp_dir("fit");
  std::vector<MWPInstance> train(corpus.begin(), corpus.begin() + 16), dev(corpus.begin() + 16, corpus.end());
  Trainer tr(tiny_config(), train, dev);
  int seen = 0;
  auto log = tr.fit(dir, [&](const EpochMetrics&) { ++seen; });
  CHECK(log.size() == 2);
  CHECK(seen == 2);
  CHECK(std::filesystem::exists(dir / "metrics.csv"));
  CHECK(std::filesystem::exists(dir / "last.ckpt"));
  CHECK(std::filesystem::exists(dir / "best.ckpt"));
  CHECK(log.back().dev_L_total > 0);
  CHECK(log.back().matcher_top1_acc >= 0);
}

TEST_CASE("generation returns one candidate per domain") {
  auto corpus = tiny_corpus();
  Trainer tr(tiny_config(), corpus, {});
  tr.run_epoch();
  auto& m = tr.model();
  auto ex = m.prepare(corpus[0]);
  auto r = m.generate(ex, {1, 12});
  REQUIRE(r.candidates.size() == 2);
  auto scores = m.rescore(ex, r);
  std::vector<double> mine;
  for (const auto& c : r.candidates) mine.push_back(c.candidate.score());
  for (std::size_t k = 0; k < 2; ++k) CHECK(scores[k] == doctest::Approx(mine[k]).epsilon(1e-9));
  CHECK(generator::select(scores) == r.selected);

  auto report = generate_and_evaluate(m, std::span(corpus).first(3), {1, 12});
  CHECK(report.bleu >= 0);
  CHECK(ablation_settings().size() == 5);
  CHECK(ablation_settings()[4].label() == "w/o CS");
}

TEST_CASE("gradient check on toy instances") {
  auto report = grad_check({});
  CHECK(report.max_rel_error() < 1e-3);
  int checked = 0;
  for (const auto& e : report.entries) checked += e.skipped ? 0 : 1;
  CHECK(checked > 20);
}

TEST_CASE("bad configs are rejected") {
  auto cfg = tiny_config();
  cfg.model.pool_size = 0;
  CHECK_THROWS_AS(Trainer(cfg, tiny_corpus(), {}), ConfigError);
  CHECK_THROWS_AS(Trainer(tiny_config(), {}, {}), EmptyInput);
  cfg = tiny_config();
  cfg.model.heads = 3;
  CHECK_THROWS_AS(Trainer(cfg, tiny_corpus(), {}), ConfigError);
}
