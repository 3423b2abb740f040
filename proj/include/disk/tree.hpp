#ifndef DISK_TREE_HPP
#define DISK_TREE_HPP

#include <string>
#include <string_view>
#include <vector>

namespace disk {

// Penn-style bracketed constituency tree, e.g. "(S (NP (NN john)) (VP (VBD ran)))".
// Word leaves are nodes with leaf_index >= 0; every other node is a constituent.
class ConstituencyTree {
public:
  struct Node {
    std::string label;
    std::vector<int> children;
    int parent = -1;
    int leaf_index = -1;
  };

  static ConstituencyTree parse(std::string_view bracketed);

  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& node(int i) const { return nodes_[i]; }
  int root() const { return root_; }
  int leaf_count() const { return static_cast<int>(leaves_.size()); }
  // node ids of the word leaves, in surface order
  const std::vector<int>& leaves() const { return leaves_; }
  std::vector<std::string> words() const;

  // leaf indices dominated by node i, ascending
  std::vector<int> leaf_span(int i) const;
  int leaf_count(int i) const { return span_size_[i]; }

  std::string to_string() const;

private:
  std::vector<Node> nodes_;
  std::vector<int> leaves_;
  std::vector<int> span_size_;
  int root_ = -1;
};

} // namespace disk

#endif
