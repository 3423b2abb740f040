// disk: command-line driver for the equation-to-word-problem pipeline.

#include "disk/errors.hpp"
#include "disk/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

namespace fs = std::filesystem;
using namespace disk;

namespace {

struct UsageError : Error {
  using Error::Error;
};

struct Common {
  std::string workdir = ".";
  bool force = false;

  fs::path resolve(const std::string& p) const {
    fs::path path(p);
    return path.is_absolute() ? path : fs::path(workdir) / path;
  }
};

std::uint64_t seed_override(std::uint64_t seed) {
  if (const char* env = std::getenv("DISK_SEED")) return std::stoull(env);
  return seed;
}

void check_writable(const fs::path& p, bool force) {
  if (fs::exists(p) && !force) throw RefuseOverwrite(p.string());
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void write_snapshot(const fs::path& output, const std::string& command, nlohmann::json args) {
  args["command"] = command;
  std::ofstream(output.string() + ".config.json") << args.dump(2) << '\n';
}

void add_train_options(CLI::App* cmd, TrainConfig& c, std::string& config_file) {
  cmd->add_option("--config", config_file, "JSON file with training settings");
  cmd->add_option("--batch-size", c.batch_size);
  cmd->add_option("--epochs", c.epochs);
  cmd->add_option("--lr", c.lr);
  cmd->add_option("--dropout", c.dropout);
  cmd->add_option("--clip-norm", c.clip_norm);
  cmd->add_option("--seed", c.seed);
  cmd->add_option("--d", c.model.dim, "model width");
  cmd->add_option("--ffn-dim", c.model.ffn_dim);
  cmd->add_option("--heads", c.model.heads);
  cmd->add_option("--layers", c.model.layers);
  cmd->add_option("--K", c.model.domains, "number of latent domains");
  cmd->add_option("--P", c.model.pool_size, "candidate pool size");
  cmd->add_option("--F", c.model.subtree_leaves, "subtree partition size");
  cmd->add_option("--L-max", c.model.max_text_length);
  cmd->add_flag("--no-dg", [&c](std::int64_t) { c.flags.domain_gate = false; }, "disable the domain gate");
  cmd->add_flag("--no-qcg", [&c](std::int64_t) { c.flags.qcg = false; }, "disable QCG reasoning");
  cmd->add_flag("--no-mtc", [&c](std::int64_t) { c.flags.mtc = false; }, "disable math token contextualization");
  cmd->add_flag("--no-cs", [&c](std::int64_t) { c.flags.sketch = false; }, "disable matcher and sketch");
}

TrainConfig finalize(TrainConfig c, const std::string& config_file, const Common& common) {
  if (!config_file.empty()) {
    std::ifstream in(common.resolve(config_file));
    if (!in) throw UsageError("cannot read config " + config_file);
    auto j = nlohmann::json::parse(in);
    TrainConfig from_file = j.get<TrainConfig>();
    c = from_file;
  }
  c.seed = seed_override(c.seed);
  return c;
}

void print_epoch(const EpochMetrics& m) {
  std::cout << "epoch " << m.epoch << "  L_D " << m.L_D << "  L_M " << m.L_M << "  L_G " << m.L_G << "  L_total "
            << m.L_total << "  dev " << m.dev_L_total << "  match@1 " << m.matcher_top1_acc << std::endl;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Equation-to-word-problem generation with latent domains and instance sketches"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--workdir", common.workdir, "base directory for relative paths");
  app.add_flag("--force", common.force, "overwrite existing outputs");

  // synth
  SynthConfig synth;
  std::string synth_out = "corpus.jsonl";
  auto* c_synth = app.add_subcommand("synth", "write a synthetic corpus");
  c_synth->add_option("--out", synth_out);
  c_synth->add_option("--n", synth.n_examples, "number of examples");
  c_synth->add_option("--templates", synth.n_templates);
  c_synth->add_option("--seed", synth.seed);

  // train
  TrainConfig train_cfg;
  std::string train_corpus = "corpus.jsonl", train_out = "run", train_config_file, resume;
  auto* c_train = app.add_subcommand("train", "train a model");
  c_train->add_option("--corpus", train_corpus);
  c_train->add_option("--out", train_out, "run directory");
  c_train->add_option("--resume", resume, "checkpoint to resume from");
  add_train_options(c_train, train_cfg, train_config_file);

  // generate
  std::string gen_ckpt, gen_input, gen_out = "generated.jsonl", gen_diag, gen_matches;
  int beam = 1;
  auto* c_gen = app.add_subcommand("generate", "generate problems for equations");
  c_gen->add_option("--checkpoint", gen_ckpt)->required();
  c_gen->add_option("--input", gen_input, "JSONL instances")->required();
  c_gen->add_option("--out", gen_out);
  c_gen->add_option("--beam", beam, "beam width (1 = greedy)");
  c_gen->add_option("--dump-diagnostics", gen_diag, "gate/attention JSON per example and domain");
  c_gen->add_option("--dump-matches", gen_matches, "top-5 retrieved candidates TSV");

  // evaluate
  std::string eval_hyps, eval_refs, eval_out = "report.json";
  auto* c_eval = app.add_subcommand("evaluate", "score generated text against references");
  c_eval->add_option("--hyps", eval_hyps, "generate output (JSONL) or one text per line")->required();
  c_eval->add_option("--refs", eval_refs, "reference corpus JSONL")->required();
  c_eval->add_option("--out", eval_out);

  // ablate
  TrainConfig ablate_cfg;
  std::string ablate_corpus = "corpus.jsonl", ablate_out = "ablation.tsv", ablate_config_file;
  auto* c_ablate = app.add_subcommand("ablate", "train and score the full model and its four ablations");
  c_ablate->add_option("--corpus", ablate_corpus);
  c_ablate->add_option("--out", ablate_out);
  add_train_options(c_ablate, ablate_cfg, ablate_config_file);

  // gradcheck
  GradCheckConfig gc;
  std::string gc_out = "gradcheck.json";
  auto* c_gc = app.add_subcommand("gradcheck", "finite-difference gradient check on a toy model");
  c_gc->add_option("--out", gc_out);
  c_gc->add_option("--eps", gc.eps);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (c_synth->parsed()) {
      synth.seed = seed_override(synth.seed);
      auto out = common.resolve(synth_out);
      check_writable(out, common.force);
      auto corpus = generate_synthetic_corpus(synth);
      save_corpus(corpus, out);
      write_snapshot(out, "synth", {{"n", synth.n_examples}, {"templates", synth.n_templates}, {"seed", synth.seed}});
      auto s = corpus_stats(corpus);
      std::cout << "size\tavg_equation_length\tavg_problem_length\ttokens\n"
                << s.size << '\t' << s.avg_equation_length << '\t' << s.avg_problem_length << '\t'
                << s.distinct_tokens << '\n';
    } else if (c_train->parsed()) {
      auto cfg = finalize(train_cfg, train_config_file, common);
      auto dir = common.resolve(train_out);
      if (fs::exists(dir / "metrics.csv") && !common.force && resume.empty())
        throw RefuseOverwrite((dir / "metrics.csv").string());
      auto corpus = load_corpus(common.resolve(train_corpus));
      auto split = split_corpus(corpus, cfg.seed);
      Trainer trainer(cfg, split.train, split.dev);
      if (!resume.empty()) {
        auto path = common.resolve(resume);
        if (!fs::exists(path)) throw UsageError("checkpoint not found: " + path.string());
        trainer.load_checkpoint(path);
      }
      fs::create_directories(dir);
      save_corpus(split.test, dir / "test.jsonl");
      nlohmann::json snap = cfg;
      write_snapshot(dir / "metrics.csv", "train", {{"train", snap}, {"corpus", train_corpus}});
      trainer.fit(dir, print_epoch);
    } else if (c_gen->parsed()) {
      auto ckpt = common.resolve(gen_ckpt);
      if (!fs::exists(ckpt)) throw UsageError("checkpoint not found: " + ckpt.string());
      auto out = common.resolve(gen_out);
      check_writable(out, common.force);
      auto loaded = load_model(ckpt);
      const DiskModel& model = *loaded.model;
      generator::DecodeConfig decode{beam, model.config().max_decode_length};
      std::ofstream jsonl(out), diag, matches;
      if (!gen_diag.empty()) diag.open(common.resolve(gen_diag));
      if (!gen_matches.empty()) {
        matches.open(common.resolve(gen_matches));
        matches << "id\tk\trank\tcand_id\ts\n";
      }
      for (const auto& inst : load_corpus(common.resolve(gen_input))) {
        auto ex = model.prepare(inst);
        std::vector<nlohmann::json> diagnostics;
        auto result = model.generate(ex, decode, gen_diag.empty() ? nullptr : &diagnostics);
        jsonl << to_record(model, ex, result).to_json().dump() << '\n';
        for (const auto& d : diagnostics) diag << d.dump() << '\n';
        if (matches.is_open() && model.flags().sketch) {
          Tape t(false);
          auto f = model.pool_features(t);
          Var C = model.encode_equation(t, ex);
          for (int k = 0; k < model.config().domains; ++k) {
            Var h_d = t.constant(model.summarizer_params().E->value.row(k));
            Matrix s = matcher::match_distribution(model.match_logits(t, C, h_d, f)).value();
            std::vector<int> order(static_cast<std::size_t>(s.cols()));
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return s(0, a) > s(0, b); });
            for (std::size_t r = 0; r < std::min<std::size_t>(5, order.size()); ++r)
              matches << ex.id << '\t' << k << '\t' << r + 1 << '\t'
                      << model.pool()[static_cast<std::size_t>(order[r])].id << '\t' << s(0, order[r]) << '\n';
          }
        }
      }
      write_snapshot(out, "generate", {{"checkpoint", gen_ckpt}, {"input", gen_input}, {"beam", beam}});
    } else if (c_eval->parsed()) {
      auto out = common.resolve(eval_out);
      check_writable(out, common.force);
      auto refs_corpus = load_corpus(common.resolve(eval_refs));
      std::vector<metrics::Tokens> hyps, refs;
      std::ifstream in(common.resolve(eval_hyps));
      if (!in) throw UsageError("cannot read " + eval_hyps);
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.front() == '{') {
          auto j = nlohmann::json::parse(line);
          hyps.push_back(split_whitespace(j.contains("selected") ? j.at("selected").get<std::string>()
                                                                 : "", false));
        } else {
          hyps.push_back(split_whitespace(line, false));
        }
      }
      for (const auto& r : refs_corpus) refs.push_back(r.text);
      auto report = metrics::evaluate(hyps, refs);
      std::ofstream(out) << report.to_json().dump(2) << '\n';
      auto tsv = out;
      tsv.replace_extension(".tsv");
      std::ofstream(tsv) << metrics::Report::table_header() << '\n' << report.table_row(eval_hyps) << '\n';
      std::cout << metrics::Report::table_header() << '\n' << report.table_row(eval_hyps) << '\n';
      write_snapshot(out, "evaluate", {{"hyps", eval_hyps}, {"refs", eval_refs}});
    } else if (c_ablate->parsed()) {
      auto base = finalize(ablate_cfg, ablate_config_file, common);
      auto out = common.resolve(ablate_out);
      check_writable(out, common.force);
      auto corpus = load_corpus(common.resolve(ablate_corpus));
      auto split = split_corpus(corpus, base.seed);
      std::ofstream tsv(out);
      tsv << metrics::Report::table_header() << '\n';
      for (const auto& flags : ablation_settings()) {
        TrainConfig cfg = base;
        cfg.flags = flags;
        std::cout << "== " << flags.label() << std::endl;
        Trainer trainer(cfg, split.train, split.dev);
        trainer.fit(std::nullopt, print_epoch);
        auto report = generate_and_evaluate(trainer.model(), split.test, {1, cfg.model.max_decode_length});
        tsv << report.table_row(flags.label()) << '\n';
        tsv.flush();
        std::cout << report.table_row(flags.label()) << std::endl;
      }
      nlohmann::json snap = base;
      write_snapshot(out, "ablate", {{"train", snap}, {"corpus", ablate_corpus}});
    } else if (c_gc->parsed()) {
      auto out = common.resolve(gc_out);
      check_writable(out, common.force);
      auto report = grad_check(gc);
      std::ofstream(out) << report.to_json().dump(2) << '\n';
      write_snapshot(out, "gradcheck", {{"eps", gc.eps}});
      std::cout << "max relative error " << report.max_rel_error() << '\n';
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return 1;
  }
  return 0;
}
