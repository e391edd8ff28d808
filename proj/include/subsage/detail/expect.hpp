#pragma once

#include <cstdint>

#include "subsage/tree_model.hpp"

namespace subsage::detail {

// Bit j set <=> tree.features()[j] is known.
using LocalMask = std::uint64_t;

// Recursive conditional expectation of the subtree at `pos`. `known(node)`
// decides whether the split feature is observed, `value(feature)` supplies
// its observed value. Unknown splits mix both children with the node's
// estimated branch probabilities.
template <class Known, class Value>
double expect_from(const Tree& tree, int pos, const Known& known,
                   const Value& value) {
  const Node& n = tree.node(pos);
  if (n.is_leaf) return n.leaf_value;
  if (known(n)) {
    return expect_from(tree, value(n.feature) < n.threshold ? n.left : n.right,
                       known, value);
  }
  return n.prob_left * expect_from(tree, n.left, known, value) +
         n.prob_right() * expect_from(tree, n.right, known, value);
}

template <class Value>
double expect_local(const Tree& tree, LocalMask mask, const Value& value) {
  return expect_from(
      tree, Tree::root(),
      [mask](const Node& n) { return ((mask >> n.local) & 1u) != 0; }, value);
}

inline constexpr std::size_t kMaxLocalFeatures = 64;

}  // namespace subsage::detail
