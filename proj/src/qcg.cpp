#include "disk/qcg.hpp"

#include "disk/errors.hpp"

#include <algorithm>
#include <queue>
#include <set>

namespace disk::qcg {

int BinaryMatrix::count() const {
  int n = 0;
  for (auto v : data) n += v;
  return n;
}

bool is_noun_or_verb(const std::string& pos) {
  if (pos.rfind("NN", 0) == 0 || pos.rfind("VB", 0) == 0) return true;
  return pos == "N" || pos == "V" || pos == "NOUN" || pos == "VERB" || pos == "PROPN";
}

std::vector<std::vector<int>> subtree_partition(const ConstituencyTree& tree, int max_leaves) {
  if (max_leaves < 1) throw ConfigError("subtree leaf bound F must be >= 1");
  std::vector<std::vector<int>> parts;
  std::vector<int> stack{tree.root()};
  while (!stack.empty()) {
    int n = stack.back();
    stack.pop_back();
    if (tree.leaf_count(n) <= max_leaves) {
      parts.push_back(tree.leaf_span(n));
      continue;
    }
    const auto& children = tree.node(n).children;
    for (auto it = children.rbegin(); it != children.rend(); ++it) stack.push_back(*it);
  }
  return parts;
}

std::vector<std::vector<int>> subtree_partition(const std::string& bracketed, int max_leaves) {
  return subtree_partition(ConstituencyTree::parse(bracketed), max_leaves);
}

namespace {

// undirected hop distance from src, capped at `limit` (farther tokens stay -1)
std::vector<int> hop_distances(const MWPInstance& inst, int src, int limit) {
  const int L = static_cast<int>(inst.text.size());
  std::vector<std::vector<int>> adj(L);
  for (const auto& e : inst.dep_edges) {
    if (e.head < 0) continue;
    adj[e.head].push_back(e.dependent);
    adj[e.dependent].push_back(e.head);
  }
  std::vector<int> dist(L, -1);
  std::queue<int> frontier;
  dist[src] = 0;
  frontier.push(src);
  while (!frontier.empty()) {
    int u = frontier.front();
    frontier.pop();
    if (dist[u] == limit) continue;
    for (int v : adj[u]) {
      if (dist[v] >= 0) continue;
      dist[v] = dist[u] + 1;
      frontier.push(v);
    }
  }
  return dist;
}

} // namespace

std::vector<Node> extract_quantity_cells(const MWPInstance& inst, int max_leaves) {
  validate(inst);
  const int L = static_cast<int>(inst.text.size());

  std::vector<int> quantities;
  for (int i = 0; i < L; ++i)
    if (is_number_token(inst.text[i])) quantities.push_back(i);
  if (quantities.empty()) return {};

  std::vector<int> part_of(L, -1);
  if (!inst.constituency.empty()) {
    auto parts = subtree_partition(inst.constituency, max_leaves);
    for (std::size_t p = 0; p < parts.size(); ++p)
      for (int t : parts[p]) part_of[t] = static_cast<int>(p);
  }

  std::vector<Node> nodes;
  for (std::size_t q = 0; q < quantities.size(); ++q)
    nodes.push_back({quantities[q], NodeRole::Quantity, static_cast<int>(q), inst.pos_tags[quantities[q]]});

  for (std::size_t q = 0; q < quantities.size(); ++q) {
    const int src = quantities[q];
    auto dist = hop_distances(inst, src, 2);
    for (int t = 0; t < L; ++t) {
      if (t == src || !is_noun_or_verb(inst.pos_tags[t])) continue;
      bool near = dist[t] > 0 && dist[t] <= 2;
      bool same_subtree = part_of[t] >= 0 && part_of[t] == part_of[src];
      if (near || same_subtree) nodes.push_back({t, NodeRole::Attribute, static_cast<int>(q), inst.pos_tags[t]});
    }
  }
  return nodes;
}

QuantityCellGraph build_graph(const std::vector<Node>& cells, int text_length) {
  QuantityCellGraph g;
  g.nodes = cells;
  const int n = g.size();
  g.adjacency = BinaryMatrix(n, n);
  g.alignment = BinaryMatrix(text_length, n);

  std::set<std::pair<int, int>> seen;
  for (int j = 0; j < n; ++j) {
    const auto& node = cells[j];
    if (node.text_index < 0 || node.text_index >= text_length)
      throw ValidationError("QCG node text index out of range");
    if (!seen.insert({node.text_index, node.owner}).second)
      throw Error("internal invariant violated: duplicate QCG node (text_index, owner)");
    if (node.role == NodeRole::Quantity) {
      if (node.owner != j) throw Error("internal invariant violated: quantity node must own itself");
      ++g.quantity_count;
    } else if (node.owner < 0 || node.owner >= n || cells[node.owner].role != NodeRole::Quantity) {
      throw Error("internal invariant violated: attribute owner is not a quantity node");
    }
    g.alignment(node.text_index, j) = 1;
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      bool both_quantities = cells[i].role == NodeRole::Quantity && cells[j].role == NodeRole::Quantity;
      bool owned = (cells[j].role == NodeRole::Attribute && cells[j].owner == i) ||
                   (cells[i].role == NodeRole::Attribute && cells[i].owner == j);
      if (both_quantities || owned) g.adjacency(i, j) = g.adjacency(j, i) = 1;
    }
  }
  return g;
}

nlohmann::json to_json(const QuantityCellGraph& g) {
  using nlohmann::json;
  json nodes = json::array();
  for (const auto& n : g.nodes)
    nodes.push_back({{"i", n.text_index},
                     {"role", n.role == NodeRole::Quantity ? "quantity" : "attribute"},
                     {"owner", n.owner},
                     {"pos", n.pos_tag}});
  auto dump = [](const BinaryMatrix& m) {
    json rows = json::array();
    for (int r = 0; r < m.rows; ++r) {
      json row = json::array();
      for (int c = 0; c < m.cols; ++c) row.push_back(static_cast<int>(m(r, c)));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  return json{{"nodes", nodes}, {"A", dump(g.adjacency)}, {"M", dump(g.alignment)}};
}

} // namespace disk::qcg
