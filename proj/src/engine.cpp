#include "goose/engine.hpp"

#include "goose/adjacency_table.hpp"
#include "goose/context_index.hpp"
#include "goose/spine_tree.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>

namespace goose {

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

double EngineConfig::spine_ratio(double p_s) const {
  for (const auto& tier : spine_ratio_tiers) {
    if (p_s < tier.below) return tier.ratio;
  }
  return spine_ratio_tiers.back().ratio;
}

void EngineConfig::validate() const {
  auto fail = [](const char* what) { throw InputError(std::string("engine config: ") + what); };
  if (ngram_lengths.empty()) fail("context_match_ngram_lengths must be non-empty");
  if (std::find(ngram_lengths.begin(), ngram_lengths.end(), 0u) != ngram_lengths.end()) {
    fail("n-gram lengths must be positive");
  }
  if (max_spine_continuation == 0) fail("max_spine_continuation must be positive");
  if (top_k == 0) fail("transition_top_k must be positive");
  if (node_budget == 0) fail("tree_node_budget must be positive");
  if (!(min_score >= 0.0)) fail("min_score_threshold must be >= 0");
  if (!(spine_branch_ratio >= 0.0 && spine_branch_ratio <= 1.0)) fail("spine_branch_ratio must lie in [0, 1]");
  if (!(ema_alpha >= 0.0 && ema_alpha <= 1.0)) fail("ema_smoothing_coefficient must lie in [0, 1]");
  if (!(initial_spine_acceptance >= 0.0 && initial_spine_acceptance <= 1.0)) {
    fail("initial_spine_acceptance must lie in [0, 1]");
  }
  if (spine_ratio_tiers.empty()) fail("spine_ratio_tiers must be non-empty");
  double last = -std::numeric_limits<double>::infinity();
  for (const auto& t : spine_ratio_tiers) {
    if (!(t.below > last)) fail("spine_ratio_tiers thresholds must increase");
    if (!(t.ratio >= 0.0 && t.ratio <= 1.0)) fail("spine ratios must lie in [0, 1]");
    last = t.below;
  }
}

namespace {

nlohmann::json tier_json(const SpineRatioTier& t) {
  nlohmann::json j{{"ratio", t.ratio}};
  if (std::isfinite(t.below)) j["below"] = t.below;
  return j;
}

}  // namespace

void to_json(nlohmann::json& j, const EngineConfig& c) {
  nlohmann::json tiers = nlohmann::json::array();
  for (const auto& t : c.spine_ratio_tiers) tiers.push_back(tier_json(t));
  j = nlohmann::json{
      {"context_match_ngram_lengths", c.ngram_lengths},
      {"max_spine_continuation", c.max_spine_continuation},
      {"transition_top_k", c.top_k},
      {"tree_node_budget", c.node_budget},
      {"max_tree_depth", c.max_depth},
      {"min_score_threshold", c.min_score},
      {"spine_branch_ratio", c.spine_branch_ratio},
      {"ema_smoothing_coefficient", c.ema_alpha},
      {"initial_spine_acceptance", c.initial_spine_acceptance},
      {"spine_ratio_tiers", tiers},
      {"linear_bypass_threshold", c.bypass_threshold},
      {"disable_spine_branches", c.disable_spine_branches},
      {"disable_bigram", c.disable_bigram},
      {"disable_bypass", c.disable_bypass},
      {"disable_spine", c.disable_spine},
      {"control_swap_sources", c.control_swap_sources},
  };
}

void from_json(const nlohmann::json& j, EngineConfig& c) {
  if (!j.is_object()) throw InputError("engine config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "context_match_ngram_lengths") c.ngram_lengths = v.get<std::vector<std::size_t>>();
      else if (key == "max_spine_continuation") c.max_spine_continuation = v.get<std::size_t>();
      else if (key == "transition_top_k") c.top_k = v.get<std::size_t>();
      else if (key == "tree_node_budget") c.node_budget = v.get<std::size_t>();
      else if (key == "max_tree_depth") c.max_depth = v.get<std::size_t>();
      else if (key == "min_score_threshold") c.min_score = v.get<double>();
      else if (key == "spine_branch_ratio") c.spine_branch_ratio = v.get<double>();
      else if (key == "ema_smoothing_coefficient") c.ema_alpha = v.get<double>();
      else if (key == "initial_spine_acceptance") c.initial_spine_acceptance = v.get<double>();
      else if (key == "linear_bypass_threshold") c.bypass_threshold = v.get<std::size_t>();
      else if (key == "disable_spine_branches") c.disable_spine_branches = v.get<bool>();
      else if (key == "disable_bigram") c.disable_bigram = v.get<bool>();
      else if (key == "disable_bypass") c.disable_bypass = v.get<bool>();
      else if (key == "disable_spine") c.disable_spine = v.get<bool>();
      else if (key == "control_swap_sources") c.control_swap_sources = v.get<bool>();
      else if (key == "spine_ratio_tiers") {
        c.spine_ratio_tiers.clear();
        for (const auto& t : v) {
          SpineRatioTier tier;
          tier.ratio = t.at("ratio").get<double>();
          if (t.contains("below")) tier.below = t.at("below").get<double>();
          c.spine_ratio_tiers.push_back(tier);
        }
      } else {
        throw InputError("engine config: unknown key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("engine config: ") + e.what());
  }
  c.validate();
}

EngineConfig load_engine_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("config file " + path + ": " + e.what());
  }
  return j.get<EngineConfig>();
}

EmaState update_ema(EmaState state, double observation) {
  if (!(observation >= 0.0 && observation <= 1.0)) {
    throw InputError("EMA observation must lie in [0, 1]");
  }
  state.value = (1.0 - state.alpha) * state.value + state.alpha * observation;
  state.value = std::clamp(state.value, 0.0, 1.0);
  return state;
}

std::string to_string(const EngineSpec& e) {
  switch (e.kind) {
    case EngineKind::Ar: return "ar";
    case EngineKind::Goose: return "goose";
    case EngineKind::Pld: return "pld";
    case EngineKind::Tr: return "tr";
    case EngineKind::Iso: return "iso:" + std::to_string(e.iso_fanout);
  }
  return "?";
}

EngineSpec parse_engine(const std::string& name) {
  std::string s;
  for (char ch : name) s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  if (s == "ar") return {EngineKind::Ar, 3};
  if (s == "goose") return {EngineKind::Goose, 3};
  if (s == "pld") return {EngineKind::Pld, 3};
  if (s == "tr") return {EngineKind::Tr, 3};
  if (s.rfind("iso", 0) == 0) {
    std::string k = s.substr(3);
    if (!k.empty() && (k[0] == ':' || k[0] == '(')) k = k.substr(1);
    if (!k.empty() && k.back() == ')') k.pop_back();
    if (k.empty() || !std::all_of(k.begin(), k.end(), ::isdigit)) {
      throw InputError("bad iso engine name: " + name);
    }
    const auto fanout = static_cast<std::size_t>(std::stoul(k));
    if (fanout == 0) throw InputError("iso fan-out must be >= 1");
    return {EngineKind::Iso, fanout};
  }
  throw InputError("unknown engine: " + name);
}

// ---------------------------------------------------------------------------
// Decode loop
// ---------------------------------------------------------------------------

namespace {

enum class Route { Bypass, Tree, Fallback };

/// One decode run's mutable state.
class Session {
 public:
  Session(const TargetModel& model, std::span<const TokenId> prompt, std::size_t max_tokens,
          const EngineConfig& config, const EngineSpec& engine)
      : model_(model),
        config_(config),
        engine_(engine),
        max_tokens_(max_tokens),
        history_(prompt.begin(), prompt.end()),
        index_(config.ngram_lengths, config.max_spine_continuation),
        table_(model.vocab_size(), config.top_k, config.min_score),
        ema_{config.initial_spine_acceptance, config.ema_alpha} {
    if (prompt.empty()) throw InputError("decode: empty prompt");
    config.validate();
    index_.update(prompt);
    prompt_len_ = prompt.size();
  }

  DecodeResult run() {
    if (max_tokens_ == 0) return finish();
    prefill();
    while (!done()) cycle();
    return finish();
  }

 private:
  bool done() const {
    return generated() >= max_tokens_ || (generated() > 0 && history_.back() == model_.eos());
  }
  std::size_t generated() const { return history_.size() - prompt_len_; }
  TokenId anchor() const { return history_.back(); }
  std::optional<TokenId> anchor_prev() const {
    if (config_.disable_bigram || history_.size() < 2) return std::nullopt;
    return history_[history_.size() - 2];
  }

  void harvest(std::optional<TokenId> prev, TokenId cur, const PositionScores& pos) {
    if (config_.disable_bigram) prev.reset();
    table_.harvest(HarvestItem{prev, cur, pos.top});
  }

  void prefill() {
    const ModelResponse r = score_prefix(model_, history_, config_.top_k);
    ++stats_.calls;
    for (std::size_t i = 0; i < history_.size(); ++i) {
      std::optional<TokenId> prev;
      if (i > 0) prev = history_[i - 1];
      harvest(prev, history_[i], r.positions[i]);
    }
    CycleRecord rec;
    rec.kind = CycleKind::Prefill;
    emit({}, {}, r.positions.back().greedy, rec);
  }

  /// Spine draft for this cycle, after the source-swap control if enabled.
  MatchResult draft() const {
    if (config_.disable_spine) return {};
    MatchResult m = index_.match();
    if (config_.control_swap_sources && !m.draft.empty()) {
      const std::size_t len = m.draft.size();
      m.draft.clear();
      std::optional<TokenId> prev = anchor_prev();
      TokenId cur = anchor();
      while (m.draft.size() < len) {
        auto next = table_.successors(prev, cur, 1);
        if (next.empty()) break;
        m.draft.push_back(next.front().token);
        if (!config_.disable_bigram) prev = cur;
        cur = next.front().token;
      }
      m.consensus = m.consensus && !m.draft.empty();
    }
    return m;
  }

  Route route(const MatchResult& m) const {
    const bool has_draft = !m.draft.empty();
    switch (engine_.kind) {
      case EngineKind::Pld:
        return has_draft ? Route::Bypass : Route::Fallback;
      case EngineKind::Tr:
        return table_.has_successors(anchor_prev(), anchor()) ? Route::Tree : Route::Fallback;
      case EngineKind::Iso:
        return has_draft || table_.has_successors(anchor_prev(), anchor()) ? Route::Tree
                                                                            : Route::Fallback;
      default:
        break;
    }
    if (has_draft && !config_.disable_bypass &&
        (m.draft.size() >= config_.bypass_threshold || m.consensus)) {
      return Route::Bypass;
    }
    if (has_draft || table_.has_successors(anchor_prev(), anchor())) return Route::Tree;
    return Route::Fallback;
  }

  void cycle() {
    MatchResult m = draft();
    if (engine_.kind == EngineKind::Tr) m = {};
    ++stats_.calls;
    switch (route(m)) {
      case Route::Bypass: bypass(m.draft); break;
      case Route::Tree: tree(m.draft); break;
      case Route::Fallback: fallback(); break;
    }
  }

  void bypass(const std::vector<TokenId>& chain) {
    WalkResult w = linear_verify(model_, chain, history_, config_.top_k);
    const TokenId anc = anchor();
    const std::optional<TokenId> anc_prev =
        history_.size() >= 2 ? std::optional(history_[history_.size() - 2]) : std::nullopt;
    harvest(anc_prev, anc, w.response.positions[0]);
    for (std::size_t k = 1; k < w.response.positions.size(); ++k) {
      const TokenId prev = k >= 2 ? chain[k - 2] : anc;
      harvest(prev, chain[k - 1], w.response.positions[k]);
    }

    CycleRecord rec;
    rec.kind = CycleKind::Bypass;
    rec.category = w.category;
    rec.spine_offered = chain.size();
    rec.spine_accepted = w.accepted_pld;
    observe(static_cast<double>(w.accepted_pld) / static_cast<double>(chain.size()));
    ++stats_.bypass_cycles;
    std::vector<Source> sources(w.tokens.size(), Source::Pld);
    emit(w.tokens, sources, w.bonus, rec);
  }

  void tree(const std::vector<TokenId>& chain) {
    const TreeOptions opts{!config_.disable_spine_branches, !config_.disable_bigram};
    SpineTree t;
    double r = 0.0;
    if (engine_.kind == EngineKind::Iso) {
      t = build_iso_tree(anchor(), anchor_prev(), chain, table_, engine_.iso_fanout,
                         config_.node_budget, opts);
    } else {
      r = config_.spine_ratio(ema_.value);
      const TreeBudget budget{config_.node_budget, r, config_.spine_branch_ratio, config_.max_depth};
      t = build_spine_tree(anchor(), anchor_prev(), chain, table_, budget, opts);
    }

    WalkResult w = unified_greedy_walk(model_, t, history_, config_.top_k);
    const std::optional<TokenId> anc_prev =
        history_.size() >= 2 ? std::optional(history_[history_.size() - 2]) : std::nullopt;
    harvest(anc_prev, anchor(), w.response.positions[0]);
    for (std::size_t i = 1; i < t.nodes.size(); ++i) {
      harvest(t.nodes[t.nodes[i].parent].token, t.nodes[i].token, w.response.positions[i]);
    }

    CycleRecord rec;
    rec.kind = CycleKind::Tree;
    rec.category = w.category;
    rec.spine_offered = t.spine.size();
    rec.spine_accepted = w.accepted_pld;
    rec.tr_offered = t.nodes.size() - 1 - t.spine.size();
    rec.tr_accepted = w.accepted_tr;
    rec.tree_nodes = t.nodes.size();
    rec.spine_ratio = r;
    observe(t.spine.empty() ? 0.0
                            : static_cast<double>(w.accepted_pld) / static_cast<double>(t.spine.size()));
    ++stats_.tree_cycles;
    std::vector<Source> sources;
    for (std::size_t idx : w.accepted) sources.push_back(t.nodes[idx].source);
    emit(w.tokens, sources, w.bonus, rec);
  }

  void fallback() {
    const ModelQuery q{history_, {}};
    const ModelResponse resp = score_tree(model_, q, config_.top_k);
    const std::optional<TokenId> anc_prev =
        history_.size() >= 2 ? std::optional(history_[history_.size() - 2]) : std::nullopt;
    harvest(anc_prev, anchor(), resp.positions[0]);
    CycleRecord rec;
    rec.kind = CycleKind::Fallback;
    observe(0.0);
    ++stats_.fallback_cycles;
    emit({}, {}, resp.positions[0].greedy, rec);
  }

  void observe(double obs) {
    if (engine_.kind == EngineKind::Goose) ema_ = update_ema(ema_, obs);
  }

  /// Appends accepted tokens then the bonus, stopping at the token limit or
  /// right after EOS.
  void emit(std::span<const TokenId> accepted, std::span<const Source> sources, TokenId bonus,
            CycleRecord rec) {
    const std::size_t before = history_.size();
    auto push = [&](TokenId t) {
      if (done()) return false;
      history_.push_back(t);
      return true;
    };
    for (std::size_t i = 0; i < accepted.size(); ++i) {
      if (!push(accepted[i])) break;
      (sources[i] == Source::Pld ? stats_.pld_tokens : stats_.tr_tokens) += 1;
    }
    if (push(bonus)) ++stats_.bonus_tokens;
    rec.emitted = history_.size() - before;
    stats_.tokens += rec.emitted;
    if (rec.kind != CycleKind::Prefill) {
      stats_.categories[static_cast<std::size_t>(rec.category)] += 1;
    }
    stats_.cycles.push_back(rec);
    index_.update(std::span<const TokenId>(history_).subspan(before));
  }

  DecodeResult finish() {
    DecodeResult out;
    out.tokens.assign(history_.begin() + static_cast<std::ptrdiff_t>(prompt_len_), history_.end());
    out.stats = std::move(stats_);
    return out;
  }

  const TargetModel& model_;
  const EngineConfig& config_;
  EngineSpec engine_;
  std::size_t max_tokens_;
  std::vector<TokenId> history_;
  std::size_t prompt_len_ = 0;
  ContextIndex index_;
  AdjacencyTable table_;
  EmaState ema_;
  DecodeStats stats_;
};

DecodeResult ar_run(const TargetModel& model, std::span<const TokenId> prompt, std::size_t max_tokens) {
  DecodeResult out;
  out.tokens = ar_decode(model, prompt, max_tokens);
  out.stats.tokens = out.tokens.size();
  out.stats.calls = out.tokens.size();
  out.stats.bonus_tokens = out.tokens.size();
  out.stats.fallback_cycles = out.tokens.empty() ? 0 : out.tokens.size() - 1;
  for (std::size_t i = 0; i < out.tokens.size(); ++i) {
    CycleRecord rec;
    rec.kind = i == 0 ? CycleKind::Prefill : CycleKind::Fallback;
    rec.emitted = 1;
    out.stats.cycles.push_back(rec);
    if (i > 0) out.stats.categories[static_cast<std::size_t>(PathCategory::Empty)] += 1;
  }
  return out;
}

}  // namespace

DecodeResult goose_decode(const TargetModel& model, std::span<const TokenId> prompt,
                          std::size_t max_tokens, const EngineConfig& config) {
  return Session(model, prompt, max_tokens, config, EngineSpec{EngineKind::Goose, 3}).run();
}

DecodeResult baseline_decode(const EngineSpec& engine, const TargetModel& model,
                             std::span<const TokenId> prompt, std::size_t max_tokens,
                             const EngineConfig& config) {
  if (engine.kind == EngineKind::Ar) return ar_run(model, prompt, max_tokens);
  if (engine.kind == EngineKind::Iso && engine.iso_fanout == 0) {
    throw InputError("iso fan-out must be >= 1");
  }
  return Session(model, prompt, max_tokens, config, engine).run();
}

DecodeResult run_engine(const EngineSpec& engine, const TargetModel& model,
                        std::span<const TokenId> prompt, std::size_t max_tokens,
                        const EngineConfig& config) {
  if (engine.kind == EngineKind::Goose) return goose_decode(model, prompt, max_tokens, config);
  return baseline_decode(engine, model, prompt, max_tokens, config);
}

}  // namespace goose
