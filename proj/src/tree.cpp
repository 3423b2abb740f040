#include "disk/tree.hpp"

#include "disk/errors.hpp"

#include <cctype>

namespace disk {

namespace {

struct Lexer {
  std::string_view s;
  std::size_t pos = 0;

  void skip_space() {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  }

  // returns "(" / ")" / atom, or empty at end
  std::string_view next() {
    skip_space();
    if (pos >= s.size()) return {};
    if (s[pos] == '(' || s[pos] == ')') return s.substr(pos++, 1);
    std::size_t start = pos;
    while (pos < s.size() && s[pos] != '(' && s[pos] != ')' &&
           !std::isspace(static_cast<unsigned char>(s[pos])))
      ++pos;
    return s.substr(start, pos - start);
  }

  std::string_view peek() {
    std::size_t saved = pos;
    auto t = next();
    pos = saved;
    return t;
  }
};

} // namespace

ConstituencyTree ConstituencyTree::parse(std::string_view bracketed) {
  ConstituencyTree tree;
  Lexer lex{bracketed};

  if (lex.next() != "(") throw ParseError("tree must start with '('");

  std::vector<int> stack;
  auto open_node = [&](int parent) {
    Node n;
    n.parent = parent;
    // a label may be absent, as in "( (S ...) )"
    auto t = lex.peek();
    if (!t.empty() && t != "(" && t != ")") n.label = std::string(lex.next());
    tree.nodes_.push_back(std::move(n));
    int id = static_cast<int>(tree.nodes_.size()) - 1;
    if (parent >= 0) tree.nodes_[parent].children.push_back(id);
    return id;
  };

  tree.root_ = open_node(-1);
  stack.push_back(tree.root_);

  while (!stack.empty()) {
    auto t = lex.next();
    if (t.empty()) throw ParseError("unbalanced brackets: missing ')'");
    if (t == "(") {
      stack.push_back(open_node(stack.back()));
    } else if (t == ")") {
      if (tree.nodes_[stack.back()].children.empty())
        throw ParseError("constituent '" + tree.nodes_[stack.back()].label + "' has no children");
      stack.pop_back();
    } else {
      Node leaf;
      leaf.label = std::string(t);
      leaf.parent = stack.back();
      leaf.leaf_index = static_cast<int>(tree.leaves_.size());
      tree.nodes_.push_back(std::move(leaf));
      int id = static_cast<int>(tree.nodes_.size()) - 1;
      tree.nodes_[stack.back()].children.push_back(id);
      tree.leaves_.push_back(id);
    }
  }
  if (!lex.next().empty()) throw ParseError("trailing input after tree");
  if (tree.leaves_.empty()) throw ParseError("tree has no leaves");

  // children always follow parents, so a reverse sweep accumulates spans
  tree.span_size_.assign(tree.nodes_.size(), 0);
  for (int i = static_cast<int>(tree.nodes_.size()) - 1; i >= 0; --i) {
    if (tree.nodes_[i].leaf_index >= 0) tree.span_size_[i] = 1;
    if (tree.nodes_[i].parent >= 0) tree.span_size_[tree.nodes_[i].parent] += tree.span_size_[i];
  }
  return tree;
}

std::vector<std::string> ConstituencyTree::words() const {
  std::vector<std::string> out;
  out.reserve(leaves_.size());
  for (int id : leaves_) out.push_back(nodes_[id].label);
  return out;
}

std::vector<int> ConstituencyTree::leaf_span(int i) const {
  std::vector<int> out;
  std::vector<int> stack{i};
  while (!stack.empty()) {
    int n = stack.back();
    stack.pop_back();
    if (nodes_[n].leaf_index >= 0) out.push_back(nodes_[n].leaf_index);
    for (auto it = nodes_[n].children.rbegin(); it != nodes_[n].children.rend(); ++it) stack.push_back(*it);
  }
  return out;
}

std::string ConstituencyTree::to_string() const {
  std::string out;
  auto emit = [&](auto&& self, int i) -> void {
    const Node& n = nodes_[i];
    if (n.leaf_index >= 0) {
      out += n.label;
      return;
    }
    out += '(';
    out += n.label;
    for (int c : n.children) {
      out += ' ';
      self(self, c);
    }
    out += ')';
  };
  emit(emit, root_);
  return out;
}

} // namespace disk
