// Templated synthetic MWP corpus. Every template is a set of bracketed
// sentence trees; a leading '*' on a constituent label marks the head child of
// its parent, and the gold dependency edges are read off those head marks.
// Unmarked phrases take their first child as head.

#include "disk/corpus.hpp"
#include "disk/errors.hpp"
#include "disk/tree.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <map>
#include <random>
#include <set>

namespace disk {

namespace {

struct NumberSlot {
  std::string name;
  int lo, hi;
};

struct Template {
  std::string name;
  std::string equation;
  std::vector<std::string> sentences;
  std::vector<NumberSlot> numbers;
};

const std::map<std::string, std::vector<std::string>>& filler_pools() {
  static const std::map<std::string, std::vector<std::string>> pools{
      {"name", {"john", "mary", "tom", "lisa", "mike", "anna", "bob", "kate", "sam", "emma"}},
      {"fruit", {"apples", "oranges", "pears", "bananas", "peaches", "plums", "lemons", "mangoes"}},
      {"item", {"pens", "pencils", "notebooks", "erasers", "markers", "rulers", "crayons"}},
      {"animal", {"chickens", "rabbits", "cows", "pigs", "ducks", "goats", "sheep"}},
      {"vehicle", {"car", "bus", "train", "truck", "bike", "boat"}},
      {"coin", {"nickels", "dimes", "quarters", "pennies"}},
      {"container", {"jug", "bottle", "tank", "bucket", "pitcher"}},
  };
  return pools;
}

const std::vector<Template>& templates() {
  static const std::vector<Template> all{
      {"numbers",
       "equ : x + y = {a} equ : x - y = {b}",
       {"(S (NP (DT the) (*NN sum) (PP (IN of) (*NP (CD two) (*NNS numbers)))) (*VP (*VBZ is) (NP (*CD {a}))) (. .))",
        "(S (NP (PRP$ their) (*NN difference)) (*VP (*VBZ is) (NP (*CD {b}))) (. .))",
        "(S (*VP (*VB find) (NP (DT the) (CD two) (*NNS numbers))) (. .))"},
       {{"a", 20, 99}, {"b", 2, 19}}},
      {"fruit",
       "equ : x = {a} * {p} + {b} * {q}",
       {"(S (NP (*NNP {name})) (*VP (*VBD bought) (NP (NP (CD {a}) (*NNS {fruit})) (CC and) (NP (CD {b}) (*NNS {fruit2})))) (. .))",
        "(S (NP (*DT each) (PP (IN of) (*NP (DT the) (*NNS {fruit})))) (*VP (*VBZ costs) (NP (CD {p}) (*NNS dollars))) (. .))",
        "(S (NP (*DT each) (PP (IN of) (*NP (DT the) (*NNS {fruit2})))) (*VP (*VBZ costs) (NP (CD {q}) (*NNS dollars))) (. .))",
        "(SBARQ (WHNP (WRB how) (*JJ much)) (*SQ (VBD did) (NP (*NNP {name})) (*VP (*VB pay))) (. ?))"},
       {{"a", 2, 15}, {"b", 2, 15}, {"p", 1, 9}, {"q", 1, 9}}},
      {"age",
       "equ : x - y = {a} equ : x + {b} + y + {b} = {c}",
       {"(S (NP (*NNP {name})) (*VP (*VBZ is) (ADJP (NP (CD {a}) (*NNS years)) (*JJR older) (PP (IN than) (*NP (*NNP {name2}))))) (. .))",
        "(S (PP (IN in) (*NP (CD {b}) (*NNS years))) (NP (DT the) (*NN sum) (PP (IN of) (*NP (PRP$ their) (*NNS ages)))) (*VP (MD will) (*VB be) (NP (*CD {c}))) (. .))",
        "(SBARQ (WHADJP (WRB how) (*JJ old)) (*SQ (*VBZ is) (NP (*NNP {name})) (ADVP (*RB now))) (. ?))"},
       {{"a", 2, 30}, {"b", 2, 12}, {"c", 31, 99}}},
      {"speed",
       "equ : x = {a} / {b} * {c}",
       {"(S (NP (DT a) (*NN {vehicle})) (*VP (*VBZ travels) (NP (CD {a}) (*NNS miles)) (PP (IN in) (*NP (CD {b}) (*NNS hours)))) (. .))",
        "(SBARQ (PP (IN at) (*NP (DT the) (JJ same) (*NN speed))) (, ,) (WHADVP (WRB how) (*RB far)) (*SQ (MD will) (NP (*PRP it)) (*VP (*VB travel) (PP (IN in) (*NP (CD {c}) (*NNS hours))))) (. ?))"},
       {{"a", 40, 400}, {"b", 2, 9}, {"c", 2, 12}}},
      {"coins",
       "equ : x + y = {a} equ : {p} * x + y = {b}",
       {"(S (NP (*NNP {name})) (*VP (*VBZ has) (NP (NP (CD {a}) (*NNS coins)) (VP (*VBN made) (PRT (*RP up)) (PP (IN of) (*NP (NP (*NNS {coin})) (CC and) (NP (*NNS {coin2}))))))) (. .))",
        "(S (NP (DT the) (JJ total) (*NN value)) (*VP (*VBZ is) (NP (CD {b}) (*NNS cents))) (. .))",
        "(S (NP (DT the) (*NNS {coin})) (*VP (*VBP are) (ADJP (*JJ worth) (NP (CD {p}) (*NNS cents))) (ADVP (*RB each))) (. .))",
        "(SBARQ (WHNP (WRB how) (*JJ many) (NNS {coin2})) (*SQ (VBZ does) (NP (*NNP {name})) (*VP (*VB have))) (. ?))"},
       {{"a", 10, 40}, {"b", 100, 400}, {"p", 5, 25}}},
      {"farm",
       "equ : x + y = {a} equ : {p} * x + {q} * y = {b}",
       {"(S (NP (DT a) (*NN farmer)) (*VP (*VBZ has) (NP (NP (CD {a}) (*NNS {animal})) (CC and) (NP (*NNS {animal2})))) (. .))",
        "(S (NP (DT the) (*NNS {animal})) (*VP (*VBP have) (NP (CD {p}) (*NNS legs)) (ADVP (*RB each))) (. .))",
        "(S (NP (DT the) (*NNS {animal2})) (*VP (*VBP have) (NP (CD {q}) (*NNS legs)) (ADVP (*RB each))) (. .))",
        "(S (EX there) (*VP (*VBP are) (NP (CD {b}) (*NNS legs)) (PP (*IN in) (NP (*DT all)))) (. .))"},
       {{"a", 10, 50}, {"b", 60, 200}, {"p", 2, 4}, {"q", 2, 4}}},
      {"reading",
       "equ : x - {a} / {b} * x - {c} = {d}",
       {"(S (NP (*NNP {name})) (*VP (*VBD read) (NP (NP (QP (CD {a}) (SYM /) (*CD {b}))) (PP (IN of) (*NP (DT a) (*NN book)))) (PP (IN on) (*NP (*NNP monday)))) (. .))",
        "(S (NP (*NNP {name})) (*VP (*VBD read) (NP (CD {c}) (*NNS pages)) (PP (IN on) (*NP (*NNP tuesday)))) (. .))",
        "(S (EX there) (*VP (*VBP are) (NP (CD {d}) (*NNS pages)) (ADVP (*RB left))) (. .))",
        "(SBARQ (WHNP (WRB how) (*JJ many) (NNS pages)) (*SQ (VBZ does) (NP (DT the) (*NN book)) (*VP (*VB have))) (. ?))"},
       {{"a", 1, 4}, {"b", 5, 9}, {"c", 10, 40}, {"d", 10, 90}}},
      {"rectangle",
       "equ : x - y = {a} equ : x + y + x + y = {b}",
       {"(S (NP (NP (DT the) (*NN length)) (PP (IN of) (*NP (DT a) (*NN rectangle)))) (*VP (*VBZ is) (ADJP (NP (CD {a}) (*NNS meters)) (*JJR more) (PP (IN than) (*NP (PRP$ its) (*NN width))))) (. .))",
        "(S (NP (NP (DT the) (*NN perimeter)) (PP (IN of) (*NP (DT the) (*NN rectangle)))) (*VP (*VBZ is) (NP (CD {b}) (*NNS meters))) (. .))",
        "(S (*VP (*VB find) (NP (DT the) (*NN width))) (. .))"},
       {{"a", 2, 20}, {"b", 30, 120}}},
      {"tickets",
       "equ : x + y = {a} equ : {p} * x + {q} * y = {b}",
       {"(S (NP (CD {a}) (*NNS tickets)) (*VP (VBD were) (*VBN sold) (PP (IN for) (*NP (DT a) (NN school) (*NN play)))) (. .))",
        "(S (S (NP (NN adult) (*NNS tickets)) (*VP (*VBP cost) (NP (CD {p}) (*NNS dollars)))) (CC and) (S (NP (NN student) (*NNS tickets)) (*VP (*VBP cost) (NP (CD {q}) (*NNS dollars)))) (. .))",
        "(S (NP (DT the) (JJ total) (*NNS sales)) (*VP (*VBD were) (NP (CD {b}) (*NNS dollars))) (. .))",
        "(SBARQ (WHNP (WRB how) (*JJ many) (NN adult) (NNS tickets)) (*SQ (*VP (VBD were) (*VBN sold))) (. ?))"},
       {{"a", 50, 300}, {"b", 400, 2000}, {"p", 5, 15}, {"q", 2, 9}}},
      {"savings",
       "equ : x + {a} * {b} = {c}",
       {"(S (NP (*NNP {name})) (*VP (*VBZ saves) (NP (CD {a}) (*NNS dollars)) (NP (DT every) (*NN week))) (. .))",
        "(S (PP (IN after) (*NP (CD {b}) (*NNS weeks))) (NP (*NNP {name})) (*VP (*VBZ has) (NP (CD {c}) (*NNS dollars)) (PP (IN in) (*NP (DT the) (*NN bank)))) (. .))",
        "(SBARQ (WHNP (WRB how) (*JJ much) (NN money)) (*SQ (VBD did) (NP (*NNP {name})) (*VP (*VB start) (PP (*IN with)))) (. ?))"},
       {{"a", 5, 30}, {"b", 3, 20}, {"c", 100, 900}}},
      {"juice",
       "equ : x = {a} - {b} + {c}",
       {"(S (NP (DT a) (*NN {container})) (*VP (*VBZ contains) (NP (NP (CD {a}) (*NNS liters)) (PP (IN of) (*NP (*NN juice))))) (. .))",
        "(S (NP (*NNP {name})) (*VP (*VP (*VBZ drinks) (NP (CD {b}) (*NNS liters))) (CC and) (VP (*VBZ pours) (PRT (*RP in)) (NP (NP (CD {c}) (*NNS liters)) (PP (IN of) (*NP (*NN water)))))) (. .))",
        "(SBARQ (WHNP (WRB how) (*JJ many) (NNS liters)) (*SQ (*VBP are) (PP (IN in) (*NP (DT the) (*NN {container}))) (ADVP (RB now))) (. ?))"},
       {{"a", 10, 30}, {"b", 1, 9}, {"c", 2, 12}}},
      {"ratio",
       "equ : {a} / {b} = {c} / x",
       {"(S (NP (NP (DT the) (*NN ratio)) (PP (IN of) (*NP (*NNS {item}))) (PP (TO to) (*NP (*NNS {item2}))) (PP (IN in) (*NP (DT a) (*NN box)))) (*VP (*VBZ is) (NP (CD {a}) (: :) (*CD {b}))) (. .))",
        "(S (EX there) (*VP (*VBP are) (NP (CD {c}) (*NNS {item}))) (. .))",
        "(SBARQ (WHNP (WRB how) (*JJ many) (NNS {item2})) (*SQ (*VBP are) (PP (IN in) (*NP (DT the) (*NN box)))) (. ?))"},
       {{"a", 2, 9}, {"b", 2, 9}, {"c", 10, 60}}},
  };
  return all;
}

std::string substitute(const std::string& pattern, const std::map<std::string, std::string>& values) {
  std::string out;
  for (std::size_t i = 0; i < pattern.size();) {
    if (pattern[i] == '{') {
      auto close = pattern.find('}', i);
      out += values.at(pattern.substr(i + 1, close - i - 1));
      i = close + 1;
    } else {
      out += pattern[i++];
    }
  }
  return out;
}

std::vector<std::string> slot_names(const Template& t) {
  std::set<std::string> names;
  auto scan = [&](const std::string& s) {
    for (std::size_t i = s.find('{'); i != std::string::npos; i = s.find('{', i + 1))
      names.insert(s.substr(i + 1, s.find('}', i) - i - 1));
  };
  scan(t.equation);
  for (const auto& s : t.sentences) scan(s);
  return {names.begin(), names.end()};
}

std::string pool_of(const std::string& slot) {
  std::string p = slot;
  while (!p.empty() && std::isdigit(static_cast<unsigned char>(p.back()))) p.pop_back();
  return p;
}

std::string strip_head_marks(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '*' && i > 0 && s[i - 1] == '(') continue;
    out += s[i];
  }
  return out;
}

std::string relation_for(const std::string& label) {
  std::string rel;
  for (char c : label)
    if (c != '*') rel += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (rel.empty() || !std::isalpha(static_cast<unsigned char>(rel[0]))) return "punct";
  return rel;
}

// Head-percolation over the marked tree; fills edges and returns the head leaf of node i.
int collect_heads(const ConstituencyTree& tree, int i, std::vector<DepEdge>& edges) {
  const auto& n = tree.node(i);
  if (n.leaf_index >= 0) return n.leaf_index;
  std::vector<int> heads;
  int head_child = 0;
  for (std::size_t c = 0; c < n.children.size(); ++c) {
    heads.push_back(collect_heads(tree, n.children[c], edges));
    const auto& label = tree.node(n.children[c]).label;
    if (!label.empty() && label[0] == '*') head_child = static_cast<int>(c);
  }
  for (std::size_t c = 0; c < n.children.size(); ++c) {
    if (static_cast<int>(c) == head_child) continue;
    edges.push_back({heads[head_child], heads[c], relation_for(tree.node(n.children[c]).label)});
  }
  return heads[head_child];
}

MWPInstance instantiate(const Template& t, int serial, std::mt19937_64& rng) {
  std::map<std::string, std::string> values;
  std::set<int> used_numbers;
  for (const auto& slot : t.numbers) {
    std::uniform_int_distribution<int> dist(slot.lo, slot.hi);
    int v;
    do {
      v = dist(rng);
    } while (used_numbers.count(v));
    used_numbers.insert(v);
    values[slot.name] = std::to_string(v);
  }
  std::map<std::string, std::set<std::string>> taken;
  for (const auto& slot : slot_names(t)) {
    if (values.count(slot)) continue;
    const auto& pool = filler_pools().at(pool_of(slot));
    std::uniform_int_distribution<std::size_t> dist(0, pool.size() - 1);
    std::string v;
    do {
      v = pool[dist(rng)];
    } while (taken[pool_of(slot)].count(v));
    taken[pool_of(slot)].insert(v);
    values[slot] = v;
  }

  std::string marked = "(ROOT";
  for (const auto& s : t.sentences) marked += " " + substitute(s, values);
  marked += ")";
  auto tree = ConstituencyTree::parse(marked);

  MWPInstance inst;
  char serial_buf[16];
  std::snprintf(serial_buf, sizeof serial_buf, "%05d", serial);
  inst.id = t.name + "-" + serial_buf;
  inst.equation = tokenize_equation(substitute(t.equation, values));
  inst.text = tree.words();
  for (int leaf : tree.leaves()) {
    std::string tag = tree.node(tree.node(leaf).parent).label;
    if (!tag.empty() && tag[0] == '*') tag.erase(0, 1);
    inst.pos_tags.push_back(tag);
  }
  int root_head = collect_heads(tree, tree.root(), inst.dep_edges);
  inst.dep_edges.push_back({-1, root_head, "root"});
  std::sort(inst.dep_edges.begin(), inst.dep_edges.end(),
            [](const DepEdge& a, const DepEdge& b) { return a.dependent < b.dependent; });
  inst.constituency = strip_head_marks(marked);
  return inst;
}

} // namespace

int synthetic_template_count() { return static_cast<int>(templates().size()); }

std::vector<std::string> synthetic_template_names() {
  std::vector<std::string> names;
  for (const auto& t : templates()) names.push_back(t.name);
  return names;
}

std::vector<MWPInstance> generate_synthetic_corpus(const SynthConfig& config) {
  if (config.n_examples <= 0) throw ConfigError("n_examples must be positive");
  if (config.n_templates < 2 || config.n_templates > synthetic_template_count())
    throw ConfigError("n_templates must be in [2, " + std::to_string(synthetic_template_count()) + "]");

  std::mt19937_64 rng(config.seed);
  // balanced assignment, then shuffled, so every template gets floor(n/T) or more
  std::vector<int> assignment(static_cast<std::size_t>(config.n_examples));
  for (std::size_t i = 0; i < assignment.size(); ++i) assignment[i] = static_cast<int>(i) % config.n_templates;
  std::shuffle(assignment.begin(), assignment.end(), rng);

  std::vector<MWPInstance> corpus;
  corpus.reserve(assignment.size());
  for (std::size_t i = 0; i < assignment.size(); ++i)
    corpus.push_back(instantiate(templates()[assignment[i]], static_cast<int>(i), rng));
  return corpus;
}

} // namespace disk
