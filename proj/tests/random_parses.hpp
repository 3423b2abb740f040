// Random constituency bracketings and dependency trees for oracle comparisons.
#pragma once

#include "disk/corpus.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <random>
#include <string>

namespace oracle {

// Random bracketing over n leaves plus a random dependency tree.
inline disk::MWPInstance random_instance(std::mt19937_64& rng, int n) {
  const char* tags[] = {"NN", "VBD", "CD", "DT", "JJ", "NNS", "IN"};
  disk::MWPInstance inst;
  inst.id = "rand-0";
  inst.equation = disk::tokenize_equation("x = 1");
  std::uniform_int_distribution<int> tag(0, 6), coin(0, 1);
  for (int i = 0; i < n; ++i) {
    int k = tag(rng);
    inst.pos_tags.push_back(tags[k]);
    inst.text.push_back(k == 2 ? std::to_string(i + 1) : "w" + std::to_string(i));
  }
  // constituents: recursively split spans
  std::function<std::string(int, int)> build = [&](int lo, int hi) -> std::string {
    if (hi - lo == 1) return "(" + inst.pos_tags[lo] + " " + inst.text[lo] + ")";
    std::uniform_int_distribution<int> cut(lo + 1, hi - 1);
    int m = cut(rng);
    if (coin(rng) && hi - lo > 2) {
      int m2 = std::uniform_int_distribution<int>(m, hi - 1)(rng);
      if (m2 > m) return "(X " + build(lo, m) + " " + build(m, m2) + " " + build(m2, hi) + ")";
    }
    return "(X " + build(lo, m) + " " + build(m, hi) + ")";
  };
  inst.constituency = "(ROOT " + build(0, n) + ")";
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  inst.dep_edges.push_back({-1, perm[0], "root"});
  for (int i = 1; i < n; ++i) {
    int head = perm[std::uniform_int_distribution<int>(0, i - 1)(rng)];
    inst.dep_edges.push_back({head, perm[i], "dep"});
  }
  return inst;
}

} // namespace oracle
