#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace goose {

using TokenId = std::uint32_t;

/// A candidate successor and its normalized score in [0, 1].
struct ScoredToken {
  TokenId token = 0;
  double score = 0.0;

  friend bool operator==(const ScoredToken&, const ScoredToken&) = default;
};

/// Sort order used everywhere: score descending, ties by smaller token id.
inline bool score_order(const ScoredToken& a, const ScoredToken& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.token < b.token;
}

/// Draft source of a tree node. The spine is context-matched (PLD); branches
/// come from the transition table (TR).
enum class Source : std::uint8_t { Pld, Tr };

inline const char* to_string(Source s) { return s == Source::Pld ? "PLD" : "TR"; }

/// Caller supplied something outside an operation's domain.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Broken internal invariant (should be unreachable).
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace goose
