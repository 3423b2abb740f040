#ifndef DISK_QCG_HPP
#define DISK_QCG_HPP

#include "disk/corpus.hpp"
#include "disk/tree.hpp"

#include <string>
#include <vector>

#include <json.hpp>

namespace disk::qcg {

inline constexpr int kDefaultSubtreeLeaves = 5;

enum class NodeRole : std::uint8_t { Quantity, Attribute };

struct Node {
  int text_index;
  NodeRole role;
  int owner;  // node index of the owning quantity; self for quantities
  std::string pos_tag;

  bool operator==(const Node&) const = default;
};

// Dense 0/1 matrices stored row-major.
struct BinaryMatrix {
  int rows = 0, cols = 0;
  std::vector<std::uint8_t> data;

  BinaryMatrix() = default;
  BinaryMatrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0) {}
  std::uint8_t& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  std::uint8_t operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  int count() const;
};

struct QuantityCellGraph {
  std::vector<Node> nodes;
  BinaryMatrix adjacency;  // |G| x |G|
  BinaryMatrix alignment;  // L x |G|
  int quantity_count = 0;

  int size() const { return static_cast<int>(nodes.size()); }
  bool empty() const { return nodes.empty(); }
};

// Penn-style NN*/VB* plus the coarse N/V/NOUN/VERB/PROPN labels.
bool is_noun_or_verb(const std::string& pos);

// Depth-first from the root, emitting the leaf set of the first node on each
// path whose span holds at most max_leaves leaves.
std::vector<std::vector<int>> subtree_partition(const ConstituencyTree& tree, int max_leaves);
std::vector<std::vector<int>> subtree_partition(const std::string& bracketed, int max_leaves);

// Quantity nodes first (text order), then each quantity's attributes in text order.
std::vector<Node> extract_quantity_cells(const MWPInstance& inst, int max_leaves = kDefaultSubtreeLeaves);

QuantityCellGraph build_graph(const std::vector<Node>& cells, int text_length);

inline QuantityCellGraph build_qcg(const MWPInstance& inst, int max_leaves = kDefaultSubtreeLeaves) {
  return build_graph(extract_quantity_cells(inst, max_leaves), static_cast<int>(inst.text.size()));
}

nlohmann::json to_json(const QuantityCellGraph& g);

} // namespace disk::qcg

#endif
