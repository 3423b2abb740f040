#ifndef DISK_MODEL_CONFIG_HPP
#define DISK_MODEL_CONFIG_HPP

#include <string>

#include <json.hpp>

namespace disk {

// Components switched off by the ablation study. All true = full model.
struct AblationFlags {
  bool domain_gate = true;  // off: "w/o DG"
  bool qcg = true;          // off: "w/o QCG" (also drops token contextualization)
  bool mtc = true;          // off: "w/o MTC"
  bool sketch = true;       // off: "w/o CS" (no matcher, no sketch provider)

  std::string label() const;
  bool operator==(const AblationFlags&) const = default;
};

struct ModelConfig {
  int dim = 256;
  int ffn_dim = 512;
  int heads = 8;
  int layers = 2;
  int domains = 25;         // K
  int max_text_length = 48; // L_max, rows of the domain fusion matrix
  int pool_size = 500;      // |P|
  int subtree_leaves = 5;   // F
  int pos_dim = 16;
  int gcn_layers = 2;
  int max_decode_length = 48;
};

void to_json(nlohmann::json& j, const AblationFlags& f);
void from_json(const nlohmann::json& j, AblationFlags& f);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

} // namespace disk

#endif
