#ifndef DISK_PIPELINE_HPP
#define DISK_PIPELINE_HPP

#include "disk/metrics.hpp"
#include "disk/trainer.hpp"

#include <vector>

namespace disk {

// Full model first, then the four ablations in table order.
std::vector<AblationFlags> ablation_settings();

struct GeneratedRecord {
  std::string id;
  std::vector<std::string> selected;
  int domain = 0;
  std::vector<std::vector<std::string>> candidates;
  std::vector<double> scores;

  nlohmann::json to_json() const;
};

GeneratedRecord to_record(const DiskModel& model, const Prepared& ex, const GenerationResult& r);

// Generates for every instance and scores against the (untruncated) reference texts.
metrics::Report generate_and_evaluate(const DiskModel& model, std::span<const MWPInstance> test,
                                      const generator::DecodeConfig& decode,
                                      std::vector<GeneratedRecord>* records = nullptr);

} // namespace disk

#endif
