#include "disk/corpus.hpp"

#include "disk/errors.hpp"
#include "disk/tree.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

namespace disk {

using nlohmann::json;

std::string_view to_string(TokenKind k) {
  switch (k) {
  case TokenKind::Variable: return "VAR";
  case TokenKind::Number: return "NUM";
  case TokenKind::Operator: return "OP";
  case TokenKind::Separator: return "SEP";
  }
  return "?";
}

namespace {

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

bool is_operator(std::string_view s) {
  static const std::set<std::string_view> ops{"+", "-", "*", "/", "=", "(", ")", "^"};
  return ops.count(s) > 0;
}

bool is_separator(std::string_view s) { return s == "equ" || s == ":" || s == "," || s == ";"; }

bool is_variable(std::string_view s) { return s.size() == 1 && s[0] >= 'a' && s[0] <= 'z'; }

} // namespace

bool is_number_token(std::string_view s) {
  if (auto slash = s.find('/'); slash != std::string_view::npos)
    return all_digits(s.substr(0, slash)) && all_digits(s.substr(slash + 1));
  if (auto dot = s.find('.'); dot != std::string_view::npos)
    return all_digits(s.substr(0, dot)) && all_digits(s.substr(dot + 1));
  return all_digits(s);
}

std::vector<std::string> split_whitespace(std::string_view s, bool lowercase) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur += lowercase ? static_cast<char>(std::tolower(static_cast<unsigned char>(c))) : c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

EquationTokenSeq tokenize_equation(std::string_view raw) {
  auto units = split_whitespace(raw);
  if (units.empty()) throw EmptyInput("equation string");
  EquationTokenSeq seq;
  seq.reserve(units.size());
  for (auto& u : units) {
    TokenKind kind;
    if (is_number_token(u))
      kind = TokenKind::Number;
    else if (is_separator(u))
      kind = TokenKind::Separator;
    else if (is_operator(u))
      kind = TokenKind::Operator;
    else if (is_variable(u))
      kind = TokenKind::Variable;
    else
      throw UnknownKind(u);
    seq.push_back({std::move(u), kind});
  }
  return seq;
}

std::string join_equation(const EquationTokenSeq& eq) {
  std::string out;
  for (const auto& t : eq) {
    if (!out.empty()) out += ' ';
    out += t.surface;
  }
  return out;
}

void validate(const MWPInstance& inst) {
  const int L = static_cast<int>(inst.text.size());
  if (L < 1) throw ValidationError(inst.id + ": empty text");
  if (static_cast<int>(inst.pos_tags.size()) != L)
    throw ValidationError(inst.id + ": pos tag count " + std::to_string(inst.pos_tags.size()) +
                          " != text length " + std::to_string(L));
  for (const auto& e : inst.dep_edges) {
    if (e.dependent < 0 || e.dependent >= L || e.head < -1 || e.head >= L)
      throw ValidationError(inst.id + ": dependency edge (" + std::to_string(e.head) + "," +
                            std::to_string(e.dependent) + ") out of range for L=" + std::to_string(L));
  }
  if (!inst.constituency.empty()) {
    ConstituencyTree tree;
    try {
      tree = ConstituencyTree::parse(inst.constituency);
    } catch (const ParseError& err) {
      throw ValidationError(inst.id + ": " + err.what());
    }
    if (tree.leaf_count() != L)
      throw ValidationError(inst.id + ": constituency leaf count " + std::to_string(tree.leaf_count()) +
                            " != text length " + std::to_string(L));
  }
}

std::string template_of(const MWPInstance& inst) {
  auto dash = inst.id.rfind('-');
  return dash == std::string::npos ? inst.id : inst.id.substr(0, dash);
}

json to_json(const MWPInstance& inst) {
  json edges = json::array();
  for (const auto& e : inst.dep_edges) edges.push_back(json::array({e.head, e.dependent, e.relation}));
  return json{{"id", inst.id},
              {"equation", join_equation(inst.equation)},
              {"text", inst.text},
              {"dep_edges", edges},
              {"constituency", inst.constituency},
              {"pos", inst.pos_tags}};
}

MWPInstance instance_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("record is not a JSON object");
  for (const char* key : {"id", "equation", "text", "dep_edges", "constituency", "pos"})
    if (!j.contains(key)) throw ParseError(std::string("missing field \"") + key + "\"");

  MWPInstance inst;
  try {
    inst.id = j.at("id").get<std::string>();
    inst.equation = tokenize_equation(j.at("equation").get<std::string>());
    inst.text = j.at("text").get<std::vector<std::string>>();
    for (const auto& e : j.at("dep_edges")) {
      if (!e.is_array() || e.size() != 3) throw ParseError("dep edge must be [head, dep, \"rel\"]");
      inst.dep_edges.push_back({e[0].get<int>(), e[1].get<int>(), e[2].get<std::string>()});
    }
    inst.constituency = j.at("constituency").get<std::string>();
    inst.pos_tags = j.at("pos").get<std::vector<std::string>>();
  } catch (const json::exception& err) {
    throw ParseError(err.what());
  } catch (const EmptyInput& err) {
    throw ParseError(err.what());
  } catch (const UnknownKind& err) {
    throw ParseError(err.what());
  }
  validate(inst);
  return inst;
}

std::vector<MWPInstance> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus " + path.string());
  std::vector<MWPInstance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& err) {
      throw ParseError(err.what(), lineno);
    }
    try {
      out.push_back(instance_from_json(j));
    } catch (const ParseError& err) {
      throw ParseError(err.what(), lineno);
    } catch (const ValidationError& err) {
      throw ValidationError(std::string(err.what()) + " (line " + std::to_string(lineno) + ")");
    }
  }
  return out;
}

void save_corpus(std::span<const MWPInstance> instances, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write corpus " + path.string());
  for (const auto& inst : instances) out << to_json(inst).dump() << '\n';
}

Vocabulary::Vocabulary() {
  for (const char* t : {"<pad>", "<unk>", "<s>", "</s>"}) add(t);
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

int Vocabulary::add(const std::string& token) {
  auto [it, inserted] = ids_.emplace(token, size());
  if (inserted) tokens_.push_back(token);
  return it->second;
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(i >= 0 && i < size() ? tokens_[i] : tokens_[kUnk]);
  return out;
}

json Vocabulary::to_json() const { return tokens_; }

Vocabulary Vocabulary::from_json(const json& j) {
  Vocabulary v;
  auto tokens = j.get<std::vector<std::string>>();
  if (tokens.size() < kReserved) throw ParseError("vocabulary lacks reserved entries");
  for (std::size_t i = kReserved; i < tokens.size(); ++i) v.add(tokens[i]);
  return v;
}

Vocabulary build_vocab(std::span<const MWPInstance> corpus, int min_freq) {
  std::map<std::string, int> freq;
  for (const auto& inst : corpus) {
    for (const auto& t : inst.text) ++freq[t];
    for (const auto& t : inst.equation) ++freq[t.surface];
  }
  std::vector<std::pair<std::string, int>> entries(freq.begin(), freq.end());
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (const auto& [tok, n] : entries)
    if (n >= min_freq) v.add(tok);
  return v;
}

CorpusStats corpus_stats(std::span<const MWPInstance> corpus) {
  CorpusStats s;
  s.size = corpus.size();
  std::set<std::string> distinct;
  double eq = 0, text = 0;
  for (const auto& inst : corpus) {
    eq += static_cast<double>(inst.equation.size());
    text += static_cast<double>(inst.text.size());
    distinct.insert(inst.text.begin(), inst.text.end());
  }
  if (s.size) {
    s.avg_equation_length = eq / static_cast<double>(s.size);
    s.avg_problem_length = text / static_cast<double>(s.size);
  }
  s.distinct_tokens = distinct.size();
  return s;
}

CorpusSplit split_corpus(std::span<const MWPInstance> corpus, std::uint64_t seed) {
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n = corpus.size();
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_dev = n / 10;
  CorpusSplit split;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < n_train ? split.train : (i < n_train + n_dev ? split.dev : split.test);
    dst.push_back(corpus[order[i]]);
  }
  return split;
}

} // namespace disk
