#pragma once

#include "goose/engine.hpp"
#include "goose/model.hpp"
#include "goose/theory.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace goose {

struct CorpusSpec {
  std::string name = "corpus";
  SyntheticModelSpec model;
  std::size_t prompts = 16;
  std::size_t prompt_len = 48;
  std::size_t max_tokens = 256;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const CorpusSpec&, const CorpusSpec&) = default;
};

void to_json(nlohmann::json& j, const CorpusSpec& c);
void from_json(const nlohmann::json& j, CorpusSpec& c);
CorpusSpec load_corpus_spec(const std::string& path);

/// Seeded prompts. For the template repeater the second half of every prompt
/// is a stretch of the model's template starting at a random offset.
std::vector<TokenSequence> generate_prompts(const CorpusSpec& corpus, const SyntheticModel& model);

struct PromptRun {
  std::size_t id = 0;
  std::size_t prompt_len = 0;
  TokenSequence tokens;
  DecodeStats stats;
  /// First index where tokens differ from ar_decode (or the shorter length).
  std::optional<std::size_t> divergence;
};

struct EngineRun {
  EngineSpec engine;
  std::vector<PromptRun> prompts;  // sorted by id
};

class LosslessnessViolation : public std::runtime_error {
 public:
  LosslessnessViolation(std::string engine, std::size_t prompt, std::size_t position);
  const std::string& engine() const noexcept { return engine_; }
  std::size_t prompt() const noexcept { return prompt_; }
  std::size_t position() const noexcept { return position_; }

 private:
  std::string engine_;
  std::size_t prompt_;
  std::size_t position_;
};

/// Decodes every prompt with `engine` and checks it against ar_decode.
/// Prompts run in parallel (OpenMP). Does not throw on divergence; see
/// require_lossless.
EngineRun run_corpus(const EngineSpec& engine, const TargetModel& model,
                     const std::vector<TokenSequence>& prompts, std::size_t max_tokens,
                     const EngineConfig& config);

/// Throws LosslessnessViolation for the lowest diverging prompt id.
void require_lossless(const EngineRun& run);

struct TauSummary {
  std::size_t n = 0;
  double mean = 1.0;
  double median = 1.0;
  double q1 = 1.0;
  double q3 = 1.0;
  double iqr = 0.0;
  double cv = 0.0;
  double pooled = 1.0;  // total tokens / total calls
};

TauSummary summarize(const EngineRun& run);

struct EngineSummary {
  EngineSpec engine;
  TauSummary tau;
  double speedup = 1.0;  // tau mean over the AR tau mean
  Heterogeneity heterogeneity;
  bool heterogeneity_defined = false;
};

struct RunReport {
  CorpusSpec corpus;
  EngineConfig config;
  std::vector<EngineRun> runs;
  std::vector<EngineSummary> summaries;
  /// tau(GOOSE) / max(tau(PLD), tau(TR)) on per-prompt means; present only
  /// when all three engines ran.
  std::optional<double> synergy_ratio;
};

/// Runs every engine over the corpus, requires losslessness, summarises.
RunReport run_experiment(const CorpusSpec& corpus, const std::vector<EngineSpec>& engines,
                         const EngineConfig& config);

inline constexpr const char* kQuartileConvention =
    "inclusive quartiles: linear interpolation at rank q*(n-1) of sorted per-prompt tau";

nlohmann::json report_json(const RunReport& report);
void write_per_prompt_csv(std::ostream& os, const RunReport& report);

struct AblationRow {
  std::string name;  // "full" or the config flag name
  TauSummary tau;
  double delta = 0.0;           // tau mean - full tau mean
  double relative_delta = 0.0;  // delta / full tau mean
};

/// Full GOOSE plus one row per ablation flag, each toggled alone.
std::vector<AblationRow> run_ablation(const CorpusSpec& corpus, const EngineConfig& config);

nlohmann::json ablation_json(const CorpusSpec& corpus, const std::vector<AblationRow>& rows);
void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows);

/// Names of the five single-flag ablations, in table order.
const std::vector<std::string>& ablation_flags();
/// Sets the named flag; throws InputError on an unknown name.
void set_ablation(EngineConfig& config, const std::string& flag);

/// Repetition {0, 0.25, 0.5, 0.75, 0.9} x model seeds 1000..1004 on the
/// template repeater, 4 prompts of 256 tokens each.
std::vector<CorpusSpec> default_bound_corpora();

/// One bound setting per corpus from the GOOSE run's pooled cycle logs.
/// Throws LosslessnessViolation if a run diverges.
std::vector<BoundSetting> bound_settings(const std::vector<CorpusSpec>& corpora, const EngineConfig& config);

namespace reference {

/// Serial version of goose::run_corpus.
EngineRun run_corpus(const EngineSpec& engine, const TargetModel& model,
                     const std::vector<TokenSequence>& prompts, std::size_t max_tokens,
                     const EngineConfig& config);

}  // namespace reference

}  // namespace goose
