#pragma once

#include "goose/adjacency_table.hpp"
#include "goose/model.hpp"
#include "goose/types.hpp"

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace goose {

inline constexpr std::size_t kNoParent = std::numeric_limits<std::size_t>::max();

struct DraftNode {
  TokenId token = 0;
  Source source = Source::Tr;
  std::size_t parent = kNoParent;
  std::size_t depth = 0;         // root is 0
  std::size_t branch_depth = 0;  // TR nodes: position in their branch chain, from 1
  double score = 1.0;            // adjacency score for TR nodes, 1 otherwise
};

/// Draft tree. nodes[0] is the root holding the anchor token; every node is
/// stored after its parent.
struct SpineTree {
  std::vector<DraftNode> nodes;
  std::vector<std::size_t> spine;  // indices of spine nodes, root excluded, in depth order
  std::size_t budget = 0;          // node budget B, root included
  std::vector<std::vector<std::size_t>> mask;  // ancestors of node i, ascending

  std::size_t size() const noexcept { return nodes.size(); }
  std::vector<std::size_t> children(std::size_t i) const;
};

/// Split of the node budget between spine, root branches and spine branches.
struct BudgetSplit {
  std::size_t spine = 0;          // b_s
  std::size_t root_branches = 0;  // b_r
  std::size_t spine_branches = 0; // b_rho
};

struct TreeBudget {
  std::size_t nodes = 60;        // B, root included
  double spine_ratio = 0.3;      // r
  double branch_ratio = 0.5;     // rho: share of the non-spine budget for spine branches
  std::size_t max_depth = 6;     // D, TR chain length below a branch point

  /// b_s = min(m, floor(B r)); b_r = floor((B - 1 - b_s)(1 - rho));
  /// b_rho = B - 1 - b_s - b_r.
  BudgetSplit split(std::size_t draft_len) const;
};

struct TreeOptions {
  bool spine_branches = true;  // false: b_rho goes to the BFS pool instead
  bool bigram = true;          // false: adjacency lookups use the unigram tier only
};

/// Harmonic spine-branch allocation a_i = floor(b_rho * (1/i) / H(b_s)),
/// i = 1..b_s.
std::vector<std::size_t> harmonic_allocation(std::size_t spine_branches, std::size_t spine_len);

/**
 * Anisotropic spine tree.
 *
 * 1. Lay up to b_s draft tokens as a chain under the anchor.
 * 2. Attach the top b_r adjacency successors of the anchor at the root.
 * 3. Attach harmonic shares of b_rho under each spine node.
 * 4. Breadth-first extend the TR branches through the adjacency table, up to
 *    max_depth TR nodes per branch, spending whatever budget is left
 *    (including allocations that found no successors).
 * A token never appears twice under the same parent; in particular the next
 * spine token is never duplicated as a branch.
 */
SpineTree build_spine_tree(TokenId anchor, std::optional<TokenId> anchor_prev,
                           std::span<const TokenId> draft, const AdjacencyTable& table,
                           const TreeBudget& budget, const TreeOptions& options = {});

/// Balanced k-ary tree over the same candidate pool: complete levels only,
/// sum_{d <= depth} k^d <= node budget (root not counted). At spine nodes the
/// next draft token takes the first slot, TR successors fill the rest.
SpineTree build_iso_tree(TokenId anchor, std::optional<TokenId> anchor_prev,
                         std::span<const TokenId> draft, const AdjacencyTable& table,
                         std::size_t fanout, std::size_t node_budget,
                         const TreeOptions& options = {});

/// Number of complete k-ary levels that fit in `node_budget` non-root nodes.
std::size_t iso_levels(std::size_t fanout, std::size_t node_budget);

/// Exact ancestor sets by parent walk. Throws InternalError on a cycle or a
/// parent stored after its child.
std::vector<std::vector<std::size_t>> ancestor_mask(const SpineTree& tree);

/// Tree as a model query over `history`, whose last token is the anchor.
ModelQuery to_query(const SpineTree& tree, std::span<const TokenId> history);

/// One node per line: two spaces per depth, then "depth token source parent"
/// ("-" for the root's parent).
std::string dump_tree(const SpineTree& tree);

/// Continuous optimum of the synergy term, w_i = w_0 - i |ln p_s| / |ln(1 - p_t)|
/// clipped at zero with sum w_i = branch_budget.
std::vector<double> linear_allocation_continuous(double p_s, double p_t, std::size_t spine_len,
                                                 std::size_t branch_budget);

/// Largest-remainder rounding of linear_allocation_continuous. Requires
/// 0 < p_t < 1, 0 < p_s <= 1, p_s >= p_t and spine_len >= 1; throws
/// InputError otherwise.
std::vector<std::size_t> linear_allocation(double p_s, double p_t, std::size_t spine_len,
                                           std::size_t branch_budget);

/// |ln p_s| / |ln(1 - p_t)|
double allocation_slope(double p_s, double p_t);

}  // namespace goose
