#ifndef DISK_CORPUS_HPP
#define DISK_CORPUS_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace disk {

enum class TokenKind : std::uint8_t { Variable = 0, Number = 1, Operator = 2, Separator = 3 };
inline constexpr int kTokenKindCount = 4;

std::string_view to_string(TokenKind k);

struct EquationToken {
  std::string surface;
  TokenKind kind;

  bool operator==(const EquationToken&) const = default;
};

using EquationTokenSeq = std::vector<EquationToken>;

// Decimal ("35", "2.5") or single-token fraction ("2/5").
bool is_number_token(std::string_view s);

// Whitespace tokenization with lowercasing. Throws EmptyInput / UnknownKind.
EquationTokenSeq tokenize_equation(std::string_view raw);
std::string join_equation(const EquationTokenSeq& eq);

std::vector<std::string> split_whitespace(std::string_view s, bool lowercase = true);

struct DepEdge {
  int head;  // -1 marks the root
  int dependent;
  std::string relation;

  bool operator==(const DepEdge&) const = default;
};

struct MWPInstance {
  std::string id;
  EquationTokenSeq equation;
  std::vector<std::string> text;
  std::vector<DepEdge> dep_edges;
  std::string constituency;
  std::vector<std::string> pos_tags;

  bool operator==(const MWPInstance&) const = default;
};

// Checks the structural invariants (L >= 1, edge indices, POS length,
// constituency leaf count). Throws ValidationError.
void validate(const MWPInstance& inst);

// Synthetic ids are "<template>-<serial>"; returns the template part.
std::string template_of(const MWPInstance& inst);

nlohmann::json to_json(const MWPInstance& inst);
// Throws ParseError (schema) or ValidationError (invariants).
MWPInstance instance_from_json(const nlohmann::json& j);

std::vector<MWPInstance> load_corpus(const std::filesystem::path& path);
void save_corpus(std::span<const MWPInstance> instances, const std::filesystem::path& path);

class Vocabulary {
public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kReserved = 4;

  Vocabulary();

  int size() const { return static_cast<int>(tokens_.size()); }
  bool contains(const std::string& token) const { return ids_.count(token) > 0; }
  int id(const std::string& token) const;
  const std::string& token(int id) const { return tokens_.at(id); }

  std::vector<int> encode(std::span<const std::string> tokens) const;
  std::vector<std::string> decode(std::span<const int> ids) const;

  // appends a new token; no-op if present
  int add(const std::string& token);

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// Counts text and equation surfaces. Order: frequency desc, then lexicographic.
Vocabulary build_vocab(std::span<const MWPInstance> corpus, int min_freq);

struct SynthConfig {
  int n_examples = 2000;
  int n_templates = 12;
  std::uint64_t seed = 7;
};

int synthetic_template_count();
std::vector<std::string> synthetic_template_names();

// Throws ConfigError when n_examples <= 0 or n_templates is out of range.
std::vector<MWPInstance> generate_synthetic_corpus(const SynthConfig& config);

struct CorpusStats {
  std::size_t size = 0;
  double avg_equation_length = 0.0;
  double avg_problem_length = 0.0;
  std::size_t distinct_tokens = 0;
};

CorpusStats corpus_stats(std::span<const MWPInstance> corpus);

struct CorpusSplit {
  std::vector<MWPInstance> train, dev, test;
};

// Deterministic 80/10/10 split after a seeded shuffle.
CorpusSplit split_corpus(std::span<const MWPInstance> corpus, std::uint64_t seed);

} // namespace disk

#endif
