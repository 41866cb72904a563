#pragma once

#include "goose/model.hpp"
#include "goose/verifier.hpp"

#include <array>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace goose {

struct SpineRatioTier {
  double below = std::numeric_limits<double>::infinity();  // applies while p_s < below
  double ratio = 0.5;

  friend bool operator==(const SpineRatioTier&, const SpineRatioTier&) = default;
};

/// Engine hyperparameters. Defaults are the fixed production values; the
/// JSON form uses one key per parameter (see to_json).
struct EngineConfig {
  std::vector<std::size_t> ngram_lengths{3, 4, 5};
  std::size_t max_spine_continuation = 20;
  std::size_t top_k = 10;
  std::size_t node_budget = 60;
  std::size_t max_depth = 6;
  double min_score = 0.01;
  double spine_branch_ratio = 0.5;
  double ema_alpha = 0.3;
  double initial_spine_acceptance = 0.3;
  std::vector<SpineRatioTier> spine_ratio_tiers{{0.2, 0.15}, {0.4, 0.30}, {std::numeric_limits<double>::infinity(), 0.50}};
  std::size_t bypass_threshold = 8;

  // Ablations.
  bool disable_spine_branches = false;
  bool disable_bigram = false;
  bool disable_bypass = false;
  bool disable_spine = false;
  bool control_swap_sources = false;

  /// Monotone step function of the spine-acceptance estimate.
  double spine_ratio(double p_s) const;
  /// Throws InputError on out-of-range values.
  void validate() const;

  friend bool operator==(const EngineConfig&, const EngineConfig&) = default;
};

void to_json(nlohmann::json& j, const EngineConfig& c);
/// Strict: unknown keys are rejected, missing keys keep their defaults.
void from_json(const nlohmann::json& j, EngineConfig& c);
EngineConfig load_engine_config(const std::string& path);

struct EmaState {
  double value = 0.3;
  double alpha = 0.3;
};

/// value <- (1 - alpha) value + alpha observation; observation in [0, 1].
EmaState update_ema(EmaState state, double observation);

enum class CycleKind : std::uint8_t { Prefill, Bypass, Tree, Fallback };

struct CycleRecord {
  CycleKind kind = CycleKind::Tree;
  PathCategory category = PathCategory::Empty;
  std::size_t spine_offered = 0;
  std::size_t spine_accepted = 0;
  std::size_t tr_offered = 0;
  std::size_t tr_accepted = 0;
  std::size_t tree_nodes = 0;  // root included; 0 for prefill/fallback
  std::size_t emitted = 0;     // tokens appended this cycle (after truncation)
  double spine_ratio = 0.0;    // r used for tree cycles
};

struct DecodeStats {
  std::size_t tokens = 0;
  std::size_t calls = 0;
  std::size_t pld_tokens = 0;  // emitted tokens accepted from spine nodes
  std::size_t tr_tokens = 0;   // emitted tokens accepted from branch nodes
  std::size_t bonus_tokens = 0;
  std::size_t bypass_cycles = 0;
  std::size_t tree_cycles = 0;
  std::size_t fallback_cycles = 0;
  std::array<std::size_t, 4> categories{};  // cycles per PathCategory
  std::vector<CycleRecord> cycles;          // prefill first

  /// Tokens per model call; 1 when nothing was generated.
  double tau() const {
    return calls == 0 ? 1.0 : static_cast<double>(tokens) / static_cast<double>(calls);
  }
};

enum class EngineKind { Ar, Goose, Pld, Tr, Iso };

struct EngineSpec {
  EngineKind kind = EngineKind::Goose;
  std::size_t iso_fanout = 3;

  friend bool operator==(const EngineSpec&, const EngineSpec&) = default;
};

std::string to_string(const EngineSpec& e);
/// "ar", "goose", "pld", "tr", "iso:<k>" (or "iso<k>").
EngineSpec parse_engine(const std::string& name);

struct DecodeResult {
  TokenSequence tokens;
  DecodeStats stats;
};

/// Full speculative loop: context match, bypass or spine tree or AR
/// fallback, harvesting of every scored position, EMA spine-ratio update.
/// Output equals ar_decode(model, prompt, max_tokens).
DecodeResult goose_decode(const TargetModel& model, std::span<const TokenId> prompt,
                          std::size_t max_tokens, const EngineConfig& config = {});

/// Baselines sharing the same machinery: PLD (context match + linear
/// verify), TR (adjacency-only tree), ISO(k) (balanced k-ary tree), AR.
DecodeResult baseline_decode(const EngineSpec& engine, const TargetModel& model,
                             std::span<const TokenId> prompt, std::size_t max_tokens,
                             const EngineConfig& config = {});

/// Dispatches on engine.kind.
DecodeResult run_engine(const EngineSpec& engine, const TargetModel& model,
                        std::span<const TokenId> prompt, std::size_t max_tokens,
                        const EngineConfig& config = {});

}  // namespace goose
