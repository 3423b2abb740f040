#include "disk/pipeline.hpp"

namespace disk {

std::vector<AblationFlags> ablation_settings() {
  AblationFlags full, no_dg, no_qcg, no_mtc, no_cs;
  no_dg.domain_gate = false;
  no_qcg.qcg = false;
  no_mtc.mtc = false;
  no_cs.sketch = false;
  return {full, no_dg, no_qcg, no_mtc, no_cs};
}

nlohmann::json GeneratedRecord::to_json() const {
  nlohmann::json cands = nlohmann::json::array();
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    std::string text;
    for (const auto& w : candidates[k]) text += (text.empty() ? "" : " ") + w;
    cands.push_back({{"k", k}, {"text", text}, {"score", scores[k]}});
  }
  std::string text;
  for (const auto& w : selected) text += (text.empty() ? "" : " ") + w;
  return {{"id", id}, {"selected", text}, {"domain", domain}, {"candidates", cands}};
}

GeneratedRecord to_record(const DiskModel& model, const Prepared& ex, const GenerationResult& r) {
  GeneratedRecord rec;
  rec.id = ex.id;
  rec.domain = r.selected;
  for (const auto& c : r.candidates) {
    rec.candidates.push_back(model.vocab().decode(c.candidate.tokens));
    rec.scores.push_back(c.candidate.score());
  }
  rec.selected = rec.candidates[static_cast<std::size_t>(r.selected)];
  return rec;
}

metrics::Report generate_and_evaluate(const DiskModel& model, std::span<const MWPInstance> test,
                                      const generator::DecodeConfig& decode, std::vector<GeneratedRecord>* records) {
  std::vector<metrics::Tokens> hyps, refs;
  for (const auto& inst : test) {
    auto ex = model.prepare(inst);
    auto rec = to_record(model, ex, model.generate(ex, decode));
    hyps.push_back(rec.selected);
    refs.push_back(inst.text);
    if (records) records->push_back(std::move(rec));
  }
  auto report = metrics::evaluate(hyps, refs);
  report.config = {{"flags", model.flags()}, {"K", model.config().domains}};
  return report;
}

} // namespace disk
