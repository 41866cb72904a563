#include "goose/experiment.hpp"

#include "goose/rng.hpp"
#include "goose/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace goose {

namespace {

enum : std::uint64_t { kDomainPrompt = 11 };

std::optional<std::size_t> first_divergence(const TokenSequence& a, const TokenSequence& b) {
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i] != b[i]) return i;
  }
  if (a.size() != b.size()) return n;
  return std::nullopt;
}

PromptRun run_prompt(const EngineSpec& engine, const TargetModel& model, const TokenSequence& prompt,
                     std::size_t id, std::size_t max_tokens, const EngineConfig& config) {
  DecodeResult r = run_engine(engine, model, prompt, max_tokens, config);
  PromptRun p;
  p.id = id;
  p.prompt_len = prompt.size();
  p.divergence = first_divergence(r.tokens, ar_decode(model, prompt, max_tokens));
  p.tokens = std::move(r.tokens);
  p.stats = std::move(r.stats);
  return p;
}

std::vector<double> prompt_taus(const EngineRun& run) {
  std::vector<double> taus;
  taus.reserve(run.prompts.size());
  for (const auto& p : run.prompts) taus.push_back(p.stats.tau());
  return taus;
}

nlohmann::json ratio_json(double r) {
  return std::isfinite(r) ? nlohmann::json(r) : nlohmann::json("inf");
}

nlohmann::json summary_json(const TauSummary& t) {
  return {{"n", t.n},       {"mean", t.mean}, {"median", t.median}, {"q1", t.q1},
          {"q3", t.q3},     {"iqr", t.iqr},   {"cv", t.cv},         {"pooled", t.pooled}};
}

}  // namespace

void CorpusSpec::validate() const {
  if (prompts == 0) throw InputError("corpus: prompts must be positive");
  if (prompt_len == 0) throw InputError("corpus: prompt_len must be positive");
  if (max_tokens == 0) throw InputError("corpus: max_tokens must be positive");
  if (model.vocab < 2) throw InputError("corpus: vocab must be at least 2");
}

void to_json(nlohmann::json& j, const CorpusSpec& c) {
  j = nlohmann::json{{"name", c.name},
                     {"model", c.model},
                     {"prompts", c.prompts},
                     {"prompt_len", c.prompt_len},
                     {"max_tokens", c.max_tokens},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, CorpusSpec& c) {
  try {
    c.name = j.value("name", std::string("corpus"));
    c.model = j.at("model").get<SyntheticModelSpec>();
    c.prompts = j.at("prompts").get<std::size_t>();
    c.prompt_len = j.at("prompt_len").get<std::size_t>();
    c.max_tokens = j.at("max_tokens").get<std::size_t>();
    c.seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad corpus spec: ") + e.what());
  }
  c.validate();
}

CorpusSpec load_corpus_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open corpus spec: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  return j.get<CorpusSpec>();
}

std::vector<TokenSequence> generate_prompts(const CorpusSpec& corpus, const SyntheticModel& model) {
  corpus.validate();
  const std::size_t usable = model.vocab_size() - 1;  // never EOS
  const TokenSequence& tmpl = model.template_tokens();
  std::vector<TokenSequence> out;
  out.reserve(corpus.prompts);
  for (std::size_t i = 0; i < corpus.prompts; ++i) {
    Rng rng(hash_values(corpus.seed, kDomainPrompt, i));
    TokenSequence p;
    p.reserve(corpus.prompt_len);
    const std::size_t random_len = tmpl.empty() ? corpus.prompt_len : corpus.prompt_len - corpus.prompt_len / 2;
    while (p.size() < random_len) p.push_back(static_cast<TokenId>(rng.below(usable)));
    if (!tmpl.empty()) {
      std::size_t at = rng.below(tmpl.size());
      while (p.size() < corpus.prompt_len) p.push_back(tmpl[at++ % tmpl.size()]);
    }
    out.push_back(std::move(p));
  }
  return out;
}

LosslessnessViolation::LosslessnessViolation(std::string engine, std::size_t prompt,
                                             std::size_t position)
    : std::runtime_error("losslessness violation: engine " + engine + ", prompt " +
                         std::to_string(prompt) + ", first divergence at token " +
                         std::to_string(position)),
      engine_(std::move(engine)),
      prompt_(prompt),
      position_(position) {}

EngineRun run_corpus(const EngineSpec& engine, const TargetModel& model,
                     const std::vector<TokenSequence>& prompts, std::size_t max_tokens,
                     const EngineConfig& config) {
  config.validate();
  EngineRun run;
  run.engine = engine;
  run.prompts.resize(prompts.size());
  std::vector<std::string> errors(prompts.size());
  const auto n = static_cast<std::ptrdiff_t>(prompts.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    try {
      run.prompts[u] = run_prompt(engine, model, prompts[u], u, max_tokens, config);
    } catch (const std::exception& e) {
      errors[u] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw InputError(e);
  }
  return run;
}

void require_lossless(const EngineRun& run) {
  for (const auto& p : run.prompts) {
    if (p.divergence) throw LosslessnessViolation(to_string(run.engine), p.id, *p.divergence);
  }
}

TauSummary summarize(const EngineRun& run) {
  const std::vector<double> taus = prompt_taus(run);
  TauSummary s;
  s.n = taus.size();
  if (taus.empty()) return s;
  s.mean = stats::mean(taus);
  s.median = stats::median(taus);
  s.q1 = stats::quantile(taus, 0.25);
  s.q3 = stats::quantile(taus, 0.75);
  s.iqr = s.q3 - s.q1;
  s.cv = stats::cv(taus);
  std::size_t tokens = 0, calls = 0;
  for (const auto& p : run.prompts) {
    tokens += p.stats.tokens;
    calls += p.stats.calls;
  }
  s.pooled = calls ? static_cast<double>(tokens) / static_cast<double>(calls) : 1.0;
  return s;
}

RunReport run_experiment(const CorpusSpec& corpus, const std::vector<EngineSpec>& engines,
                         const EngineConfig& config) {
  corpus.validate();
  config.validate();
  const SyntheticModel model(corpus.model);
  const std::vector<TokenSequence> prompts = generate_prompts(corpus, model);

  RunReport report;
  report.corpus = corpus;
  report.config = config;
  for (const EngineSpec& e : engines) {
    EngineRun run = run_corpus(e, model, prompts, corpus.max_tokens, config);
    require_lossless(run);
    report.runs.push_back(std::move(run));
  }

  double ar_tau = 1.0;
  for (const auto& run : report.runs) {
    if (run.engine.kind == EngineKind::Ar) ar_tau = summarize(run).mean;
  }
  std::optional<double> goose, pld, tr;
  for (const auto& run : report.runs) {
    EngineSummary s;
    s.engine = run.engine;
    s.tau = summarize(run);
    s.speedup = s.tau.mean / ar_tau;
    std::vector<CycleRecord> cycles;
    for (const auto& p : run.prompts) {
      cycles.insert(cycles.end(), p.stats.cycles.begin(), p.stats.cycles.end());
    }
    if (std::any_of(cycles.begin(), cycles.end(),
                    [](const CycleRecord& c) { return c.kind != CycleKind::Prefill; })) {
      s.heterogeneity = measure_heterogeneity(cycles);
      s.heterogeneity_defined = true;
    }
    if (run.engine.kind == EngineKind::Goose) goose = s.tau.mean;
    if (run.engine.kind == EngineKind::Pld) pld = s.tau.mean;
    if (run.engine.kind == EngineKind::Tr) tr = s.tau.mean;
    report.summaries.push_back(std::move(s));
  }
  if (goose && pld && tr) report.synergy_ratio = *goose / std::max(*pld, *tr);
  return report;
}

nlohmann::json report_json(const RunReport& report) {
  nlohmann::json j;
  j["quartiles"] = kQuartileConvention;
  j["speedup"] = "tau ratio against AR (model calls saved); not wall-clock";
  j["corpus"] = report.corpus;
  j["config"] = report.config;
  nlohmann::json engines = nlohmann::json::array();
  for (const auto& s : report.summaries) {
    nlohmann::json e{{"engine", to_string(s.engine)},
                     {"tau", summary_json(s.tau)},
                     {"speedup", s.speedup}};
    if (s.heterogeneity_defined) {
      const Heterogeneity& h = s.heterogeneity;
      e["heterogeneity"] = {{"p_s", h.spine_defined ? nlohmann::json(h.p_s) : nlohmann::json(nullptr)},
                            {"p_t", h.tr_defined ? nlohmann::json(h.p_t) : nlohmann::json(nullptr)},
                            {"ratio", ratio_json(h.ratio)},
                            {"spine_offered", h.spine_offered},
                            {"spine_accepted", h.spine_accepted},
                            {"tr_offered", h.tr_offered},
                            {"tr_accepted", h.tr_accepted}};
    }
    engines.push_back(std::move(e));
  }
  j["engines"] = std::move(engines);
  j["synergy_ratio"] = report.synergy_ratio ? nlohmann::json(*report.synergy_ratio) : nlohmann::json(nullptr);
  return j;
}

void write_per_prompt_csv(std::ostream& os, const RunReport& report) {
  os << "# " << kQuartileConvention << '\n';
  os << "engine,prompt,prompt_len,tokens,calls,tau,pld_tokens,tr_tokens,bonus_tokens,"
        "bypass_cycles,tree_cycles,fallback_cycles,pure_pld,spine_continuation,pure_tr,empty\n";
  std::ostringstream line;
  line.precision(10);
  for (const auto& run : report.runs) {
    for (const auto& p : run.prompts) {
      const DecodeStats& s = p.stats;
      os << to_string(run.engine) << ',' << p.id << ',' << p.prompt_len << ',' << s.tokens << ','
         << s.calls << ',';
      line.str("");
      line << s.tau();
      os << line.str() << ',' << s.pld_tokens << ',' << s.tr_tokens << ',' << s.bonus_tokens << ','
         << s.bypass_cycles << ',' << s.tree_cycles << ',' << s.fallback_cycles << ','
         << s.categories[static_cast<std::size_t>(PathCategory::PurePld)] << ','
         << s.categories[static_cast<std::size_t>(PathCategory::SpineContinuation)] << ','
         << s.categories[static_cast<std::size_t>(PathCategory::PureTr)] << ','
         << s.categories[static_cast<std::size_t>(PathCategory::Empty)] << '\n';
    }
  }
}

const std::vector<std::string>& ablation_flags() {
  static const std::vector<std::string> flags{"disable_spine_branches", "disable_bigram",
                                              "disable_bypass", "disable_spine",
                                              "control_swap_sources"};
  return flags;
}

void set_ablation(EngineConfig& config, const std::string& flag) {
  if (flag == "disable_spine_branches") config.disable_spine_branches = true;
  else if (flag == "disable_bigram") config.disable_bigram = true;
  else if (flag == "disable_bypass") config.disable_bypass = true;
  else if (flag == "disable_spine") config.disable_spine = true;
  else if (flag == "control_swap_sources") config.control_swap_sources = true;
  else throw InputError("unknown ablation flag: " + flag);
}

std::vector<AblationRow> run_ablation(const CorpusSpec& corpus, const EngineConfig& config) {
  corpus.validate();
  const SyntheticModel model(corpus.model);
  const std::vector<TokenSequence> prompts = generate_prompts(corpus, model);
  const EngineSpec goose{EngineKind::Goose, 3};

  auto row = [&](const std::string& name, const EngineConfig& c) {
    EngineRun run = run_corpus(goose, model, prompts, corpus.max_tokens, c);
    require_lossless(run);
    return AblationRow{name, summarize(run), 0.0, 0.0};
  };

  std::vector<AblationRow> rows;
  rows.push_back(row("full", config));
  for (const std::string& flag : ablation_flags()) {
    EngineConfig c = config;
    set_ablation(c, flag);
    AblationRow r = row(flag, c);
    r.delta = r.tau.mean - rows.front().tau.mean;
    r.relative_delta = r.delta / rows.front().tau.mean;
    rows.push_back(std::move(r));
  }
  return rows;
}

nlohmann::json ablation_json(const CorpusSpec& corpus, const std::vector<AblationRow>& rows) {
  nlohmann::json j;
  j["quartiles"] = kQuartileConvention;
  j["corpus"] = corpus;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"variant", r.name},
                   {"tau", summary_json(r.tau)},
                   {"delta", r.delta},
                   {"relative_delta", r.relative_delta}});
  }
  j["rows"] = std::move(arr);
  return j;
}

void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows) {
  os << "variant,tau_mean,tau_median,tau_iqr,delta,relative_delta\n";
  os.precision(10);
  for (const auto& r : rows) {
    os << r.name << ',' << r.tau.mean << ',' << r.tau.median << ',' << r.tau.iqr << ',' << r.delta
       << ',' << r.relative_delta << '\n';
  }
}

std::vector<CorpusSpec> default_bound_corpora() {
  std::vector<CorpusSpec> out;
  for (double rep : {0.0, 0.25, 0.5, 0.75, 0.9}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      CorpusSpec c;
      std::ostringstream name;
      name << "rep" << rep << "-s" << seed;
      c.name = name.str();
      c.model = {SyntheticKind::TemplateRepeater, 1000 + seed, 256, rep};
      c.prompts = 4;
      c.max_tokens = 256;
      c.seed = seed;
      out.push_back(c);
    }
  }
  return out;
}

std::vector<BoundSetting> bound_settings(const std::vector<CorpusSpec>& corpora, const EngineConfig& config) {
  std::vector<BoundSetting> out;
  for (const CorpusSpec& c : corpora) {
    c.validate();
    const SyntheticModel model(c.model);
    const EngineRun run = run_corpus({EngineKind::Goose, 3}, model, generate_prompts(c, model), c.max_tokens, config);
    require_lossless(run);
    std::vector<CycleRecord> cycles;
    for (const PromptRun& p : run.prompts) cycles.insert(cycles.end(), p.stats.cycles.begin(), p.stats.cycles.end());
    out.push_back(bound_setting_from_cycles(c.name, cycles));
  }
  return out;
}

namespace reference {

EngineRun run_corpus(const EngineSpec& engine, const TargetModel& model,
                     const std::vector<TokenSequence>& prompts, std::size_t max_tokens,
                     const EngineConfig& config) {
  config.validate();
  EngineRun run;
  run.engine = engine;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    run.prompts.push_back(run_prompt(engine, model, prompts[i], i, max_tokens, config));
  }
  return run;
}

}  // namespace reference

}  // namespace goose
