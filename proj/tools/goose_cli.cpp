#include "goose/experiment.hpp"
#include "goose/spine_tree.hpp"
#include "goose/theory.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace goose;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitLossless = 3;

// Command-line overrides for every EngineConfig field.
struct ConfigFlags {
  std::string path;
  std::optional<std::size_t> max_spine_continuation, top_k, node_budget, max_depth, bypass_threshold;
  std::optional<double> min_score, spine_branch_ratio, ema_alpha, initial_spine_acceptance;
  std::vector<std::size_t> ngram_lengths;
  bool disable_spine_branches = false;
  bool disable_bigram = false;
  bool disable_bypass = false;
  bool disable_spine = false;
  bool control_swap_sources = false;

  void attach(CLI::App* app) {
    app->add_option("--config", path, "engine config JSON")->check(CLI::ExistingFile);
    app->add_option("--context-match-ngram-lengths", ngram_lengths)->delimiter(',');
    app->add_option("--max-spine-continuation", max_spine_continuation);
    app->add_option("--transition-top-k", top_k);
    app->add_option("--tree-node-budget", node_budget);
    app->add_option("--max-tree-depth", max_depth);
    app->add_option("--min-score-threshold", min_score);
    app->add_option("--spine-branch-ratio", spine_branch_ratio);
    app->add_option("--ema-smoothing-coefficient", ema_alpha);
    app->add_option("--initial-spine-acceptance", initial_spine_acceptance);
    app->add_option("--linear-bypass-threshold", bypass_threshold);
    app->add_flag("--disable-spine-branches", disable_spine_branches);
    app->add_flag("--disable-bigram", disable_bigram);
    app->add_flag("--disable-bypass", disable_bypass);
    app->add_flag("--disable-spine", disable_spine);
    app->add_flag("--control-swap-sources", control_swap_sources);
  }

  EngineConfig resolve() const {
    EngineConfig c = path.empty() ? EngineConfig{} : load_engine_config(path);
    if (!ngram_lengths.empty()) c.ngram_lengths = ngram_lengths;
    if (max_spine_continuation) c.max_spine_continuation = *max_spine_continuation;
    if (top_k) c.top_k = *top_k;
    if (node_budget) c.node_budget = *node_budget;
    if (max_depth) c.max_depth = *max_depth;
    if (bypass_threshold) c.bypass_threshold = *bypass_threshold;
    if (min_score) c.min_score = *min_score;
    if (spine_branch_ratio) c.spine_branch_ratio = *spine_branch_ratio;
    if (ema_alpha) c.ema_alpha = *ema_alpha;
    if (initial_spine_acceptance) c.initial_spine_acceptance = *initial_spine_acceptance;
    c.disable_spine_branches |= disable_spine_branches;
    c.disable_bigram |= disable_bigram;
    c.disable_bypass |= disable_bypass;
    c.disable_spine |= disable_spine;
    c.control_swap_sources |= control_swap_sources;
    c.validate();
    return c;
  }
};

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw InputError("cannot write " + p.string());
  return os;
}

std::vector<EngineSpec> parse_engines(const std::vector<std::string>& names) {
  std::vector<EngineSpec> out;
  for (const auto& n : names) out.push_back(parse_engine(n));
  return out;
}

template <class T>
std::string join(const std::vector<T>& xs, char sep = ';') {
  std::ostringstream os;
  os << std::setprecision(10);
  for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? std::string(1, sep) : "") << xs[i];
  return os.str();
}

void cmd_decode(const ConfigFlags& flags, const std::string& corpus_path, const std::vector<std::string>& engines,
                const fs::path& out) {
  const CorpusSpec corpus = load_corpus_spec(corpus_path);
  const RunReport report = run_experiment(corpus, parse_engines(engines), flags.resolve());
  open_out(out / "report.json") << report_json(report).dump(2) << '\n';
  auto csv = open_out(out / "per_prompt.csv");
  write_per_prompt_csv(csv, report);
  auto dump = open_out(out / "generated.txt");
  for (const EngineRun& run : report.runs) {
    for (const PromptRun& p : run.prompts) dump << to_string(run.engine) << ' ' << p.id << ": " << join(p.tokens, ' ') << '\n';
  }
  for (const EngineSummary& s : report.summaries) {
    std::cout << std::left << std::setw(8) << to_string(s.engine) << " tau " << std::fixed << std::setprecision(4)
              << s.tau.mean << " median " << s.tau.median << " iqr " << s.tau.iqr << '\n';
  }
  if (report.synergy_ratio) std::cout << "synergy " << *report.synergy_ratio << '\n';
}

void cmd_ablate(const ConfigFlags& flags, const std::string& corpus_path, const fs::path& out) {
  const CorpusSpec corpus = load_corpus_spec(corpus_path);
  const auto rows = run_ablation(corpus, flags.resolve());
  open_out(out / "ablation.json") << ablation_json(corpus, rows).dump(2) << '\n';
  auto csv = open_out(out / "ablation.csv");
  write_ablation_csv(csv, rows);
  write_ablation_csv(std::cout, rows);
}

void cmd_corpus_gen(const CorpusSpec& corpus, const std::string& kind, const fs::path& out,
                    const std::string& prompts_path) {
  CorpusSpec c = corpus;
  c.model.kind = synthetic_kind_from_string(kind);
  c.validate();
  open_out(out) << nlohmann::json(c).dump(2) << '\n';
  if (!prompts_path.empty()) {
    const SyntheticModel model(c.model);
    auto os = open_out(prompts_path);
    os << "prompt,tokens\n";
    const auto prompts = generate_prompts(c, model);
    for (std::size_t i = 0; i < prompts.size(); ++i) os << i << ',' << join(prompts[i], ' ') << '\n';
  }
}

std::ostream& sink(std::ofstream& file, const std::string& path) {
  if (path.empty()) return std::cout;
  file = open_out(path);
  return file;
}

void theory_yield(double ps, double pt, std::size_t m, const std::vector<std::size_t>& w, std::size_t depth,
                  std::size_t budget, std::size_t trials, std::uint64_t seed, std::ostream& os) {
  const TreeShape shape{m, w, depth, budget};
  const AcceptanceModel model{ps, pt};
  const YieldComponents y = spine_yield(model, shape);
  os << std::setprecision(10) << "p_s,p_t,m,w,D,spine,synergy,bonus,tau_bound";
  if (trials) os << ",mc_mean,mc_stderr,trials";
  os << '\n' << ps << ',' << pt << ',' << m << ',' << join(w) << ',' << depth << ',' << y.spine << ',' << y.synergy
     << ',' << y.bonus << ',' << y.total;
  if (trials) {
    const auto e = monte_carlo_yield(model, independent_chain_tree(shape), trials, seed);
    os << ',' << e.mean << ',' << e.stderr_ << ',' << e.trials;
  }
  os << '\n';
}

void theory_allocate(double ps, double pt, std::size_t bt, std::size_t m, std::size_t depth, std::ostream& os) {
  const auto w = linear_allocation(ps, pt, m, bt);
  const auto cont = linear_allocation_continuous(ps, pt, m, bt);
  os << std::setprecision(10) << "p_s,p_t,m,B_t,slope,continuous,allocation,synergy\n"
     << ps << ',' << pt << ',' << m << ',' << bt << ',' << allocation_slope(ps, pt) << ',' << join(cont) << ','
     << join(w) << ',' << synergy({ps, pt}, w, depth) << '\n';
}

void theory_dominance(const std::vector<GridPoint>& grid, std::size_t depth, std::ostream& os) {
  const auto scan = dominance_scan(grid, depth);
  os << std::setprecision(10) << "p_s,p_t,B,ratio,spine_m,spine_w,tau_spine,iso_k,tau_iso,gap,violation\n";
  std::size_t violations = 0;
  for (const auto& d : scan) {
    violations += d.violation;
    os << d.point.p_s << ',' << d.point.p_t << ',' << d.point.budget << ',' << d.point.p_s / d.point.p_t << ','
       << d.spine.spine_len << ',' << join(d.spine.widths) << ',' << d.spine.yield.total << ',' << d.iso.fanout
       << ',' << d.iso.tau << ',' << d.gap << ',' << d.violation << '\n';
  }
  std::cerr << scan.size() << " points, " << violations << " violations, "
            << gap_monotonicity_breaks(scan).size() << " monotonicity breaks\n";
}

void theory_verify_bound(const ConfigFlags& flags, const std::vector<std::string>& corpus_paths, std::size_t depth,
                         std::ostream& os) {
  std::vector<CorpusSpec> corpora;
  for (const auto& p : corpus_paths) corpora.push_back(load_corpus_spec(p));
  if (corpora.empty()) corpora = default_bound_corpora();
  const BoundReport r = verify_bound(bound_settings(corpora, flags.resolve()), depth);
  write_bound_csv(os, r);
  std::cerr << r.rows.size() << " settings, " << r.violations << " violations, gain correlation "
            << r.gain_correlation << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spine-tree speculative decoding on synthetic target models"};
  app.require_subcommand(1);

  ConfigFlags decode_flags, ablate_flags, bound_flags;
  std::string corpus_path;
  std::vector<std::string> engines{"ar", "goose", "pld", "tr", "iso:3"};
  std::string out_dir = "out";

  auto* decode = app.add_subcommand("decode", "run engines over a corpus; writes report.json, per_prompt.csv");
  decode_flags.attach(decode);
  decode->add_option("--corpus", corpus_path, "corpus spec JSON")->required()->check(CLI::ExistingFile);
  decode->add_option("--engine", engines, "ar, goose, pld, tr, iso:<k>")->delimiter(',');
  decode->add_option("--out", out_dir);

  auto* ablate = app.add_subcommand("ablate", "GOOSE with each ablation flag toggled");
  ablate_flags.attach(ablate);
  ablate->add_option("--corpus", corpus_path, "corpus spec JSON")->required()->check(CLI::ExistingFile);
  ablate->add_option("--out", out_dir);

  CorpusSpec gen;
  std::string kind = "template-repeater";
  std::string gen_out = "corpus.json";
  std::string prompts_out;
  auto* corpus_gen = app.add_subcommand("corpus-gen", "write a corpus spec");
  corpus_gen->add_option("--name", gen.name);
  corpus_gen->add_option("--kind", kind)->check(CLI::IsMember({"markov-order-2", "template-repeater"}));
  corpus_gen->add_option("--model-seed", gen.model.seed);
  corpus_gen->add_option("--vocab", gen.model.vocab);
  corpus_gen->add_option("--repetition", gen.model.repetition)->check(CLI::Range(0.0, 1.0));
  corpus_gen->add_option("--prompts", gen.prompts);
  corpus_gen->add_option("--prompt-len", gen.prompt_len);
  corpus_gen->add_option("--max-tokens", gen.max_tokens);
  corpus_gen->add_option("--seed", gen.seed);
  corpus_gen->add_option("--out", gen_out);
  corpus_gen->add_option("--dump-prompts", prompts_out, "also write the prompts as CSV");

  auto* theory = app.add_subcommand("theory", "analytic yield tools; CSV on stdout or --out");
  theory->require_subcommand(1);
  std::string theory_out;
  double ps = 0.0, pt = 0.0;
  std::size_t m = 1, depth = 6, budget = 0, bt = 0, trials = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> widths;

  auto* yield = theory->add_subcommand("yield", "tau_bound components for one shape");
  yield->add_option("--ps", ps)->required()->check(CLI::Range(0.0, 1.0));
  yield->add_option("--pt", pt)->required()->check(CLI::Range(0.0, 1.0));
  yield->add_option("--m", m)->required();
  yield->add_option("--w", widths, "branch widths, comma separated")->required()->delimiter(',');
  yield->add_option("--D", depth);
  yield->add_option("--B", budget, "node budget check, 0 for none");
  yield->add_option("--trials", trials, "Monte-Carlo trials, 0 to skip");
  yield->add_option("--seed", seed);
  yield->add_option("--out", theory_out);

  auto* allocate = theory->add_subcommand("allocate", "rounded linear branch allocation");
  allocate->add_option("--ps", ps)->required()->check(CLI::Range(0.0, 1.0));
  allocate->add_option("--pt", pt)->required()->check(CLI::Range(0.0, 1.0));
  allocate->add_option("--bt", bt, "branch budget")->required();
  allocate->add_option("--m", m)->required();
  allocate->add_option("--D", depth);
  allocate->add_option("--out", theory_out);

  std::string grid = "default";
  std::vector<double> grid_ps, grid_pt;
  std::vector<std::size_t> grid_b;
  auto* dominance = theory->add_subcommand("dominance", "best spine vs best isotropic tree");
  dominance->add_option("--grid", grid)->check(CLI::IsMember({"default", "custom"}));
  dominance->add_option("--ps", grid_ps)->delimiter(',');
  dominance->add_option("--pt", grid_pt)->delimiter(',');
  dominance->add_option("--B", grid_b)->delimiter(',');
  dominance->add_option("--D", depth);
  dominance->add_option("--out", theory_out);

  std::vector<std::string> bound_corpora;
  auto* verify = theory->add_subcommand("verify-bound", "tau_bound against measured GOOSE runs");
  bound_flags.attach(verify);
  verify->add_option("--corpus", bound_corpora, "corpus spec JSON files; default sweep when omitted")
      ->check(CLI::ExistingFile);
  verify->add_option("--D", depth);
  verify->add_option("--out", theory_out);

  CLI11_PARSE(app, argc, argv);

  try {
    std::ofstream file;
    if (decode->parsed()) {
      cmd_decode(decode_flags, corpus_path, engines, out_dir);
    } else if (ablate->parsed()) {
      cmd_ablate(ablate_flags, corpus_path, out_dir);
    } else if (corpus_gen->parsed()) {
      cmd_corpus_gen(gen, kind, gen_out, prompts_out);
    } else if (yield->parsed()) {
      theory_yield(ps, pt, m, widths, depth, budget, trials, seed, sink(file, theory_out));
    } else if (allocate->parsed()) {
      theory_allocate(ps, pt, bt, m, depth, sink(file, theory_out));
    } else if (dominance->parsed()) {
      std::vector<GridPoint> points;
      if (grid == "default") {
        points = default_dominance_grid();
      } else {
        if (grid_ps.empty() || grid_pt.empty() || grid_b.empty()) throw InputError("custom grid needs --ps, --pt, --B");
        for (std::size_t b : grid_b)
          for (double t : grid_pt)
            for (double s : grid_ps) points.push_back({s, t, b});
      }
      theory_dominance(points, depth, sink(file, theory_out));
    } else if (verify->parsed()) {
      theory_verify_bound(bound_flags, bound_corpora, depth, sink(file, theory_out));
    }
  } catch (const LosslessnessViolation& e) {
    std::cerr << "losslessness violation: " << e.what() << '\n';
    return kExitLossless;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return 0;
}
