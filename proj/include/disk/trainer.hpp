#ifndef DISK_TRAINER_HPP
#define DISK_TRAINER_HPP

#include "disk/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace disk {

struct TrainConfig {
  int batch_size = 32;
  int epochs = 40;
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double dropout = 0.2;
  double clip_norm = 5.0;
  std::uint64_t seed = 13;
  int min_freq = 1;
  ModelConfig model;
  AblationFlags flags;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

inline double total_loss(double l_d, double l_m, double l_g) { return l_d + l_m + l_g; }

class Adam {
public:
  Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}
  void step(nn::ParamStore& store);
  long steps() const { return steps_; }

  std::map<std::string, std::pair<Matrix, Matrix>>& moments() { return moments_; }
  void set_steps(long s) { steps_ = s; }

private:
  double lr_, b1_, b2_, eps_;
  long steps_ = 0;
  std::map<std::string, std::pair<Matrix, Matrix>> moments_;
};

// Rescales every gradient so the global norm is at most max_norm; returns the pre-clip norm.
double clip_gradients(nn::ParamStore& store, double max_norm);

struct EpochMetrics {
  int epoch = 0;
  double L_D = 0, L_M = 0, L_G = 0, L_total = 0;
  double dev_L_total = 0;
  double matcher_top1_acc = 0;
};

struct LossSummary {
  double L_D = 0, L_M = 0, L_G = 0, L_total = 0;
  double nll = 0;     // summed over examples
  double tokens = 0;  // target tokens
  // teacher-forced per-token perplexity
  double perplexity() const;
};

class Trainer {
public:
  Trainer(TrainConfig cfg, std::vector<MWPInstance> train, std::vector<MWPInstance> dev);

  DiskModel& model() { return *model_; }
  const TrainConfig& config() const { return cfg_; }
  const std::vector<Prepared>& train_set() const { return train_; }
  const std::vector<Prepared>& dev_set() const { return dev_; }
  const std::vector<int>& train_labels() const { return train_labels_; }
  const std::vector<MWPInstance>& pool_instances() const { return pool_instances_; }

  EpochMetrics run_epoch();
  // Runs the remaining epochs. Writes the metrics CSV and checkpoints when a directory is given.
  std::vector<EpochMetrics> fit(const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                                const std::function<void(const EpochMetrics&)>& on_epoch = {});

  // Dropout-free mean losses; labels computed against the full pool.
  LossSummary evaluate(std::span<const Prepared> examples, std::span<const int> labels) const;
  double matcher_accuracy(std::span<const Prepared> examples, std::span<const int> labels) const;

  int epoch() const { return epoch_; }

  void save_checkpoint(const std::filesystem::path& path) const;
  void load_checkpoint(const std::filesystem::path& path);

  std::vector<int> dev_labels() const { return dev_labels_; }

private:
  TrainConfig cfg_;
  std::vector<MWPInstance> pool_instances_;
  std::unique_ptr<DiskModel> model_;
  std::vector<Prepared> train_, dev_;
  std::vector<int> train_labels_, train_self_, dev_labels_;
  Adam adam_;
  std::mt19937_64 rng_;
  int epoch_ = 0;
};

// Checkpoint payload independent of a Trainer (used by generate).
struct LoadedModel {
  TrainConfig config;
  std::unique_ptr<DiskModel> model;
  std::vector<MWPInstance> pool;
  int epoch = 0;
};
LoadedModel load_model(const std::filesystem::path& path);

struct GradCheckEntry {
  std::string loss;
  std::string block;
  double rel_error = 0;
  int checked = 0;
  bool skipped = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error() const;
  nlohmann::json to_json() const;
};

struct GradCheckConfig {
  double eps = 1e-4;
  int max_entries_per_block = 64;
  std::uint64_t seed = 5;
};

// Toy instances used by the gradient check (L = 5, N = 4, |G| = 3).
std::vector<MWPInstance> grad_check_corpus();
ModelConfig grad_check_model_config();

GradCheckReport grad_check(const GradCheckConfig& cfg);

} // namespace disk

#endif
