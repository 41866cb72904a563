#pragma once

/**
 * Target-model abstraction.
 *
 * A TargetModel is a deterministic greedy next-token function that also
 * exposes its top-K candidates with normalized scores. Verification scores a
 * whole draft tree at once: every node sees exactly its root-to-node ancestor
 * path appended to the base sequence (tree attention mask semantics), so a
 * node's prediction depends only on that path.
 *
 * The synthetic models here stand in for an LLM at desk scale:
 *   - markov-order-2: fixed successor table keyed on the last two tokens.
 *   - template-repeater: a seeded template segment that the model keeps
 *     continuing with probability `repetition`, interleaved with noise drawn
 *     from an order-2 candidate table whose winner varies with position.
 */

#include "goose/types.hpp"

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace goose {

using TokenSequence = std::vector<TokenId>;

/// Default number of scored candidates exposed per position.
inline constexpr std::size_t kDefaultTopK = 10;

/// A token path viewed as `base ++ tail` without copying either part.
class ContextPath {
 public:
  ContextPath(std::span<const TokenId> base, std::span<const TokenId> tail) noexcept
      : base_(base), tail_(tail) {}

  std::size_t size() const noexcept { return base_.size() + tail_.size(); }
  bool empty() const noexcept { return size() == 0; }

  TokenId operator[](std::size_t i) const noexcept {
    return i < base_.size() ? base_[i] : tail_[i - base_.size()];
  }
  /// k-th token counted from the end; 0 is the last token.
  TokenId from_back(std::size_t k) const noexcept { return (*this)[size() - 1 - k]; }

 private:
  std::span<const TokenId> base_;
  std::span<const TokenId> tail_;
};

class TargetModel {
 public:
  virtual ~TargetModel() = default;

  virtual std::size_t vocab_size() const noexcept = 0;
  virtual TokenId eos() const noexcept = 0;

  /// The k highest-scoring next tokens after `context`, ordered by
  /// score_order (fewer only when the vocabulary is smaller). Must be a pure
  /// function of the context tokens.
  virtual std::vector<ScoredToken> top_k(const ContextPath& context, std::size_t k) const = 0;
};

/// One extra node of a tree query. `ancestors` index earlier extra nodes;
/// the base sequence is an implicit ancestor of every node.
struct QueryNode {
  TokenId token = 0;
  std::vector<std::size_t> ancestors;
};

struct ModelQuery {
  std::span<const TokenId> base;
  std::vector<QueryNode> nodes;
};

struct PositionScores {
  TokenId greedy = 0;
  std::vector<ScoredToken> top;
};

/// positions[0] is the last base position; positions[i + 1] is extra node i.
struct ModelResponse {
  std::vector<PositionScores> positions;
};

/// One batched forward pass over a tree query.
/// Throws InputError on an empty base, out-of-vocabulary tokens or ancestor
/// indices that do not precede their node.
ModelResponse score_tree(const TargetModel& model, const ModelQuery& query,
                         std::size_t top_k = kDefaultTopK);

/// Prefill pass: positions[i] scores the prefix tokens[0..i]. One call.
ModelResponse score_prefix(const TargetModel& model, std::span<const TokenId> tokens,
                           std::size_t top_k = kDefaultTopK);

/// Greedy autoregressive rollout of up to `max_tokens` tokens, stopping after
/// an EOS token. This is the equality oracle for every speculative engine.
TokenSequence ar_decode(const TargetModel& model, std::span<const TokenId> prompt,
                        std::size_t max_tokens);

// ---------------------------------------------------------------------------
// Synthetic models
// ---------------------------------------------------------------------------

enum class SyntheticKind { MarkovOrder2, TemplateRepeater };

struct SyntheticModelSpec {
  SyntheticKind kind = SyntheticKind::MarkovOrder2;
  std::uint64_t seed = 0;
  std::size_t vocab = 256;
  double repetition = 0.0;  // template-repeater only

  friend bool operator==(const SyntheticModelSpec&, const SyntheticModelSpec&) = default;
};

std::string to_string(SyntheticKind kind);
SyntheticKind synthetic_kind_from_string(const std::string& name);

void to_json(nlohmann::json& j, const SyntheticModelSpec& spec);
void from_json(const nlohmann::json& j, SyntheticModelSpec& spec);

class SyntheticModel final : public TargetModel {
 public:
  /// Candidate successors per (prev, cur) context in the order-2 table.
  static constexpr std::size_t kFanout = 4;
  /// Probability mass spread uniformly over tokens outside the listed set.
  static constexpr double kResidualMass = 0.02;

  explicit SyntheticModel(const SyntheticModelSpec& spec);

  std::size_t vocab_size() const noexcept override { return spec_.vocab; }
  TokenId eos() const noexcept override { return static_cast<TokenId>(spec_.vocab - 1); }
  std::vector<ScoredToken> top_k(const ContextPath& context, std::size_t k) const override;

  const SyntheticModelSpec& spec() const noexcept { return spec_; }
  /// Template segment (empty for markov-order-2).
  const TokenSequence& template_tokens() const noexcept { return template_; }

  /// Seeded order-2 candidate set for context (prev, cur); `prev` equals
  /// vocab_size() when the context has a single token.
  std::vector<TokenId> candidates(TokenId prev, TokenId cur) const;
  /// Seeded weight of successor `next` in the order-2 table, in [0.1, 0.6).
  double candidate_weight(TokenId prev, TokenId cur, TokenId next) const;

 private:
  SyntheticModelSpec spec_;
  TokenSequence template_;
  std::vector<int> template_pos_;  // token -> index in template_, or -1
};

/// Throws InputError when vocab < 2 or repetition is outside [0, 1].
std::unique_ptr<SyntheticModel> build_synthetic(const SyntheticModelSpec& spec);

}  // namespace goose
