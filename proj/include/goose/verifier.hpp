#pragma once

#include "goose/model.hpp"
#include "goose/spine_tree.hpp"

#include <span>
#include <vector>

namespace goose {

enum class PathCategory { Empty, PurePld, SpineContinuation, PureTr };

const char* to_string(PathCategory c);

struct WalkResult {
  std::vector<std::size_t> accepted;  // node indices along a root path (root excluded)
  std::vector<TokenId> tokens;        // tokens of `accepted`
  TokenId bonus = 0;
  PathCategory category = PathCategory::Empty;
  std::size_t accepted_pld = 0;
  std::size_t accepted_tr = 0;
  ModelResponse response;  // the single forward pass, kept for harvesting
};

/// Classifies a source sequence along an accepted path.
PathCategory classify(std::span<const Source> path);

/**
 * Single-pass tree verification. From the root, repeatedly step to a PLD
 * child whose token equals the model's greedy prediction at the current
 * node, else to such a TR child (lowest index first), else stop. The bonus
 * token is the prediction at the last accepted node (the root when nothing
 * was accepted).
 *
 * `history` is the verified sequence; its last token is the tree's anchor.
 */
WalkResult unified_greedy_walk(const TargetModel& model, const SpineTree& tree,
                               std::span<const TokenId> history,
                               std::size_t top_k = kDefaultTopK);

/// Verifies `chain` as one linear sequence after `history`: accepts the
/// longest prefix the model agrees with. Throws InputError on an empty chain.
WalkResult linear_verify(const TargetModel& model, std::span<const TokenId> chain,
                         std::span<const TokenId> history, std::size_t top_k = kDefaultTopK);

}  // namespace goose
