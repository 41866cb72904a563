#pragma once

#include "goose/types.hpp"

#include <cstddef>
#include <span>
#include <unordered_map>
#include <vector>

namespace goose {

/// Longest draft chain a context match may return.
inline constexpr std::size_t kMaxSpineContinuation = 20;

struct MatchResult {
  std::vector<TokenId> draft;
  bool consensus = false;
  std::size_t ngram = 0;  // query length that produced `draft`; 0 if none

  friend bool operator==(const MatchResult&, const MatchResult&) = default;
};

/**
 * Incremental n-gram index over one run's history (prompt + generated).
 *
 * For each configured length n the query is the last n tokens. Its most
 * recent earlier occurrence starting at i yields the candidate chain
 * history[i + n, len - n): the continuation copied from text that precedes
 * the query itself. Occurrences whose continuation would be empty are
 * skipped. The longest matching n wins; consensus is set when at least two
 * lengths produce chains that agree on the first token.
 */
class ContextIndex {
 public:
  explicit ContextIndex(std::vector<std::size_t> ngram_lengths = {3, 4, 5},
                        std::size_t max_chain = kMaxSpineContinuation);

  /// Appends tokens to the indexed history.
  void update(std::span<const TokenId> delta);

  MatchResult match() const;

  std::span<const TokenId> history() const noexcept { return history_; }
  const std::vector<std::size_t>& ngram_lengths() const noexcept { return lengths_; }

 private:
  struct Table {
    std::size_t n = 0;
    // hash of n tokens -> ascending start positions
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> starts;
    std::size_t indexed = 0;  // n-grams with start < indexed are present
  };

  std::uint64_t key(std::size_t start, std::size_t n) const noexcept;
  bool same(std::size_t a, std::size_t b, std::size_t n) const noexcept;
  /// Continuation start of the most recent usable occurrence, or npos.
  std::size_t find(const Table& table) const;

  std::vector<std::size_t> lengths_;
  std::size_t max_chain_;
  std::vector<TokenId> history_;
  std::vector<Table> tables_;
};

/// One-shot convenience: index `history` and match.
/// Throws InputError when `ngram_lengths` is empty or contains 0.
MatchResult context_match(std::span<const TokenId> history,
                          const std::vector<std::size_t>& ngram_lengths = {3, 4, 5},
                          std::size_t max_chain = kMaxSpineContinuation);

}  // namespace goose
