#pragma once

#include "goose/types.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace goose {

inline constexpr std::size_t kTransitionTopK = 10;
inline constexpr double kMinScore = 0.01;

/// One scored position to fold into the table: the last one or two context
/// tokens and the model's top-K candidates there.
struct HarvestItem {
  std::optional<TokenId> prev;
  TokenId cur = 0;
  std::span<const ScoredToken> top;
};

/**
 * Two-tier token transition store.
 *
 * Tier 1 is a dense per-token list of top-K successors; tier 2 maps a
 * (prev, cur) bigram to its own top-K list. Merging is latest-wins per
 * successor, then the list is re-sorted, truncated to K and stripped of
 * entries under the score threshold.
 */
class AdjacencyTable {
 public:
  AdjacencyTable(std::size_t vocab, std::size_t top_k = kTransitionTopK,
                 double min_score = kMinScore);

  void harvest(const HarvestItem& item);
  void harvest(std::span<const HarvestItem> items) {
    for (const auto& it : items) harvest(it);
  }

  /// Bigram list for (prev, cur) when present and non-empty, otherwise the
  /// unigram list for cur; at most `width` entries.
  std::vector<ScoredToken> successors(std::optional<TokenId> prev, TokenId cur,
                                      std::size_t width) const;

  bool has_successors(std::optional<TokenId> prev, TokenId cur) const {
    return !successors(prev, cur, 1).empty();
  }

  std::span<const ScoredToken> unigram(TokenId cur) const;
  /// Empty span when the bigram was never harvested.
  std::span<const ScoredToken> bigram(TokenId prev, TokenId cur) const;

  std::size_t vocab() const noexcept { return unigram_.size(); }
  std::size_t top_k() const noexcept { return top_k_; }
  double min_score() const noexcept { return min_score_; }
  std::size_t bigram_keys() const noexcept { return bigram_.size(); }

  /// Debug dump: {"u:<cur>": [[token, score], ...], "b:<prev>,<cur>": ...}.
  nlohmann::json to_json() const;

 private:
  static std::uint64_t pair_key(TokenId prev, TokenId cur) noexcept {
    return (static_cast<std::uint64_t>(prev) << 32) | cur;
  }
  void merge(std::vector<ScoredToken>& list, std::span<const ScoredToken> incoming) const;

  std::size_t top_k_;
  double min_score_;
  std::vector<std::vector<ScoredToken>> unigram_;
  std::unordered_map<std::uint64_t, std::vector<ScoredToken>> bigram_;
};

/// Children allocated to a successor: round(base * score / max sibling
/// score); zero when the score is under `min_score` (the node is pruned).
/// `siblings` should include `score` itself.
std::size_t confidence_width(double score, std::span<const double> siblings, std::size_t base,
                             double min_score = kMinScore);

}  // namespace goose
