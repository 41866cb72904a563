#include "goose/theory.hpp"

#include "goose/rng.hpp"
#include "goose/spine_tree.hpp"
#include "goose/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace goose {

namespace {

void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw InputError(std::string(what) + " must lie in [0, 1]");
}

// Children of every node, PLD children first, each group in index order.
struct Csr {
  std::vector<std::size_t> offset;
  std::vector<std::size_t> child;
  std::vector<double> accept;  // acceptance probability of child[j]
};

Csr compile(const AcceptanceModel& model, const ShapeTree& tree) {
  const std::size_t n = tree.size();
  if (n == 0) throw InputError("shape tree needs a root");
  if (tree.source.size() != n) throw InputError("shape tree: parent/source size mismatch");
  std::vector<std::vector<std::size_t>> pld(n), tr(n);
  for (std::size_t i = 1; i < n; ++i) {
    if (tree.parent[i] >= i) throw InputError("shape tree: parent must precede child");
    (tree.source[i] == Source::Pld ? pld : tr)[tree.parent[i]].push_back(i);
  }
  Csr csr;
  csr.offset.reserve(n + 1);
  csr.offset.push_back(0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c : pld[i]) {
      csr.child.push_back(c);
      csr.accept.push_back(model.p_s);
    }
    for (std::size_t c : tr[i]) {
      csr.child.push_back(c);
      csr.accept.push_back(model.p_t);
    }
    csr.offset.push_back(csr.child.size());
  }
  return csr;
}

struct BlockSums {
  std::uint64_t sum = 0;
  std::uint64_t sum_sq = 0;
};

BlockSums run_block(const Csr& csr, std::size_t trials, std::uint64_t seed, std::size_t block) {
  Rng rng(hash_values(seed, block));
  BlockSums s;
  for (std::size_t t = 0; t < trials; ++t) {
    std::uint64_t tau = 1;
    std::size_t node = 0;
    for (bool moved = true; moved;) {
      moved = false;
      for (std::size_t j = csr.offset[node]; j < csr.offset[node + 1]; ++j) {
        if (rng.bernoulli(csr.accept[j])) {
          node = csr.child[j];
          ++tau;
          moved = true;
          break;
        }
      }
    }
    s.sum += tau;
    s.sum_sq += tau * tau;
  }
  return s;
}

YieldEstimate finish(std::uint64_t sum, std::uint64_t sum_sq, std::size_t trials) {
  YieldEstimate e;
  e.trials = trials;
  const auto n = static_cast<double>(trials);
  e.mean = static_cast<double>(sum) / n;
  if (trials > 1) {
    const double var = (static_cast<double>(sum_sq) - static_cast<double>(sum) * e.mean) / (n - 1.0);
    e.stderr_ = std::sqrt(std::max(var, 0.0) / n);
  }
  return e;
}

std::size_t block_count(std::size_t trials) { return (trials + kTrialBlock - 1) / kTrialBlock; }

std::size_t block_trials(std::size_t trials, std::size_t b) {
  return std::min(kTrialBlock, trials - b * kTrialBlock);
}

DominancePoint scan_point(const GridPoint& g, std::size_t depth) {
  if (g.budget == 0) throw InputError("dominance grid: budget must be positive");
  DominancePoint d;
  d.point = g;
  d.iso = best_iso(g.budget, g.p_t);
  d.spine = best_spine({g.p_s, g.p_t}, g.budget, depth);
  d.gap = d.spine.yield.total - d.iso.tau;
  d.violation = g.p_s > g.p_t && d.gap <= 0.0;
  return d;
}

// Exact integer maximiser of the synergy term: its per-branch gains fall in
// w_i, so greedy marginal placement is optimal.
std::vector<std::size_t> greedy_allocation(double p_s, double p_t, std::size_t m,
                                           std::size_t branch_budget) {
  std::vector<std::size_t> w(m, 0);
  std::vector<double> reach(m);
  for (std::size_t i = 0; i < m; ++i) reach[i] = std::pow(p_s, static_cast<double>(i)) * (1.0 - p_s);
  for (std::size_t b = 0; b < branch_budget; ++b) {
    std::size_t best = 0;
    double gain = -1.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double g = reach[i] * p_t * std::pow(1.0 - p_t, static_cast<double>(w[i]));
      if (g > gain) {
        gain = g;
        best = i;
      }
    }
    ++w[best];
  }
  return w;
}

std::vector<std::size_t> allocation_for(double p_s, double p_t, std::size_t m, std::size_t bt) {
  if (p_t > 0.0 && p_t < 1.0 && p_s > 0.0 && p_s >= p_t) return linear_allocation(p_s, p_t, m, bt);
  return greedy_allocation(p_s, p_t, m, bt);
}

}  // namespace

double phi(std::size_t width, double p_t) {
  check_probability(p_t, "p_t");
  return 1.0 - std::pow(1.0 - p_t, static_cast<double>(width));
}

double ell_bar(double p_t, std::size_t depth) {
  check_probability(p_t, "p_t");
  if (depth == 0) throw InputError("branch depth must be at least 1");
  double sum = 0.0;
  double term = 1.0;
  for (std::size_t k = 1; k < depth; ++k) {
    term *= p_t;
    sum += term;
  }
  return sum;
}

double synergy(const AcceptanceModel& model, std::span<const std::size_t> widths, std::size_t depth) {
  check_probability(model.p_s, "p_s");
  const double ext = 1.0 + ell_bar(model.p_t, depth);
  double sum = 0.0;
  double reach = 1.0;  // p_s^i
  for (std::size_t w : widths) {
    sum += reach * (1.0 - model.p_s) * phi(w, model.p_t) * ext;
    reach *= model.p_s;
  }
  return sum;
}

YieldComponents spine_yield(const AcceptanceModel& model, const TreeShape& shape) {
  check_probability(model.p_s, "p_s");
  check_probability(model.p_t, "p_t");
  if (shape.spine_len == 0) throw InputError("spine length must be at least 1");
  if (shape.widths.size() != shape.spine_len) {
    throw InputError("need one branch width per spine node (w_0..w_{m-1})");
  }
  const std::size_t used =
      shape.spine_len + std::accumulate(shape.widths.begin(), shape.widths.end(), std::size_t{0});
  if (shape.budget != 0 && used > shape.budget) throw InputError("tree shape exceeds its budget");

  YieldComponents y;
  double reach = 1.0;
  for (std::size_t i = 1; i <= shape.spine_len; ++i) {
    reach *= model.p_s;
    y.spine += reach;
  }
  y.synergy = synergy(model, shape.widths, shape.branch_depth);
  y.bonus = 1.0;
  y.total = y.spine + y.synergy + y.bonus;
  return y;
}

ShapeTree independent_chain_tree(const TreeShape& shape) {
  if (shape.widths.size() != shape.spine_len) {
    throw InputError("need one branch width per spine node (w_0..w_{m-1})");
  }
  if (shape.branch_depth == 0) throw InputError("branch depth must be at least 1");
  ShapeTree t;
  t.add(kNoParent, Source::Pld);
  std::vector<std::size_t> spine{0};
  for (std::size_t i = 0; i < shape.spine_len; ++i) spine.push_back(t.add(spine.back(), Source::Pld));
  for (std::size_t i = 0; i < shape.spine_len; ++i) {
    for (std::size_t b = 0; b < shape.widths[i]; ++b) {
      std::size_t at = spine[i];
      for (std::size_t k = 0; k < shape.branch_depth; ++k) at = t.add(at, Source::Tr);
    }
  }
  return t;
}

ShapeTree shape_of(const SpineTree& tree) {
  ShapeTree t;
  for (const DraftNode& n : tree.nodes) t.add(n.parent, n.source);
  if (!t.source.empty()) t.source[0] = Source::Pld;
  return t;
}

YieldEstimate monte_carlo_yield(const AcceptanceModel& model, const ShapeTree& tree,
                                std::size_t trials, std::uint64_t seed) {
  check_probability(model.p_s, "p_s");
  check_probability(model.p_t, "p_t");
  if (trials == 0) throw InputError("monte carlo needs at least one trial");
  const Csr csr = compile(model, tree);
  const auto blocks = static_cast<std::ptrdiff_t>(block_count(trials));
  std::uint64_t sum = 0;
  std::uint64_t sum_sq = 0;
#pragma omp parallel for schedule(static) reduction(+ : sum, sum_sq)
  for (std::ptrdiff_t b = 0; b < blocks; ++b) {
    const auto ub = static_cast<std::size_t>(b);
    const BlockSums s = run_block(csr, block_trials(trials, ub), seed, ub);
    sum += s.sum;
    sum_sq += s.sum_sq;
  }
  return finish(sum, sum_sq, trials);
}

double iso_yield(std::size_t fanout, std::size_t budget, double p_t) {
  check_probability(p_t, "p_t");
  const std::size_t levels = iso_levels(fanout, budget);
  const double q = 1.0 - std::pow(1.0 - p_t, static_cast<double>(fanout));
  double tau = 1.0;
  double term = 1.0;
  for (std::size_t d = 1; d <= levels; ++d) {
    term *= q;
    tau += term;
  }
  return tau;
}

BestIso best_iso(std::size_t budget, double p_t) {
  BestIso best;
  best.fanout = 1;
  best.tau = iso_yield(1, budget, p_t);
  for (std::size_t k = 2; k <= budget; ++k) {
    const double tau = iso_yield(k, budget, p_t);
    if (tau > best.tau) best = {k, tau};
  }
  return best;
}

BestSpine best_spine(const AcceptanceModel& model, std::size_t budget, std::size_t depth) {
  if (budget == 0) throw InputError("budget must be positive");
  BestSpine best;
  for (std::size_t m = 1; m <= budget; ++m) {
    TreeShape shape;
    shape.spine_len = m;
    shape.widths = allocation_for(model.p_s, model.p_t, m, budget - m);
    shape.branch_depth = depth;
    shape.budget = budget;
    const YieldComponents y = spine_yield(model, shape);
    if (best.spine_len == 0 || y.total > best.yield.total) {
      best.spine_len = m;
      best.widths = std::move(shape.widths);
      best.yield = y;
    }
  }
  return best;
}

std::vector<DominancePoint> dominance_scan(std::span<const GridPoint> grid, std::size_t depth) {
  std::vector<DominancePoint> out(grid.size());
  const auto n = static_cast<std::ptrdiff_t>(grid.size());
  // Exceptions may not cross the parallel region; capture the first one.
  std::vector<std::string> errors(grid.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    try {
      out[u] = scan_point(grid[u], depth);
    } catch (const std::exception& e) {
      errors[u] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw InputError(e);
  }
  return out;
}

std::vector<GridPoint> default_dominance_grid() {
  std::vector<GridPoint> grid;
  for (std::size_t budget : {10, 30, 60}) {
    for (double p_t : {0.02, 0.033, 0.05}) {
      for (double ratio : {2.0, 4.0, 8.0, 18.0}) {
        const double p_s = ratio * p_t;
        if (p_s > 1.0) continue;
        grid.push_back({p_s, p_t, budget});
      }
    }
  }
  return grid;
}

std::vector<std::pair<DominancePoint, DominancePoint>> gap_monotonicity_breaks(
    std::span<const DominancePoint> scan) {
  std::map<std::pair<double, std::size_t>, std::vector<DominancePoint>> series;
  for (const auto& d : scan) series[{d.point.p_t, d.point.budget}].push_back(d);
  std::vector<std::pair<DominancePoint, DominancePoint>> breaks;
  for (auto& [key, pts] : series) {
    std::sort(pts.begin(), pts.end(),
              [](const DominancePoint& a, const DominancePoint& b) { return a.point.p_s < b.point.p_s; });
    for (std::size_t i = 1; i < pts.size(); ++i) {
      if (pts[i].gap < pts[i - 1].gap) breaks.emplace_back(pts[i - 1], pts[i]);
    }
  }
  return breaks;
}

// ---------------------------------------------------------------------------

Heterogeneity measure_heterogeneity(std::span<const CycleRecord> cycles) {
  Heterogeneity h;
  std::size_t decode_cycles = 0;
  for (const CycleRecord& c : cycles) {
    if (c.kind == CycleKind::Prefill) continue;
    ++decode_cycles;
    h.spine_offered += c.spine_offered;
    h.spine_accepted += c.spine_accepted;
    h.tr_offered += c.tr_offered;
    h.tr_accepted += c.tr_accepted;
  }
  if (decode_cycles == 0) throw InputError("heterogeneity: no decode cycles in the log");
  h.spine_defined = h.spine_offered > 0;
  h.tr_defined = h.tr_offered > 0;
  if (h.spine_defined) h.p_s = static_cast<double>(h.spine_accepted) / static_cast<double>(h.spine_offered);
  if (h.tr_defined) h.p_t = static_cast<double>(h.tr_accepted) / static_cast<double>(h.tr_offered);
  h.ratio = (h.spine_defined && h.tr_defined && h.p_t > 0.0) ? h.p_s / h.p_t : kUndefinedRatio;
  return h;
}

BoundSetting bound_setting_from_cycles(std::string id, std::span<const CycleRecord> cycles) {
  const Heterogeneity h = measure_heterogeneity(cycles);
  BoundSetting s;
  s.id = std::move(id);
  s.p_s = h.p_s;
  s.p_t = h.p_t;

  std::vector<double> emitted;
  double nodes = 0.0;
  double spine = 0.0;
  for (const CycleRecord& c : cycles) {
    switch (c.kind) {
      case CycleKind::Prefill:
        continue;
      case CycleKind::Tree:
        nodes += static_cast<double>(c.tree_nodes);
        break;
      case CycleKind::Bypass:
        nodes += static_cast<double>(c.spine_offered + 1);
        break;
      case CycleKind::Fallback:
        nodes += 1.0;
        break;
    }
    spine += static_cast<double>(c.spine_offered);
    emitted.push_back(static_cast<double>(c.emitted));
  }
  const double n = static_cast<double>(emitted.size());
  s.budget = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(nodes / n)));
  s.spine_len = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(spine / n)), 1, s.budget);
  s.tau_meas = stats::mean(emitted);
  s.stderr_ = stats::stddev(emitted) / std::sqrt(n);
  return s;
}

BoundReport verify_bound(std::span<const BoundSetting> settings, std::size_t depth) {
  BoundReport report;
  std::vector<double> gains, ratios;
  for (const BoundSetting& s : settings) {
    check_probability(s.p_s, "p_s");
    check_probability(s.p_t, "p_t");
    if (s.spine_len == 0 || s.spine_len > s.budget) {
      throw InputError("setting " + s.id + ": need 1 <= m <= B");
    }
    BoundRow row;
    row.setting = s;
    TreeShape shape;
    shape.spine_len = s.spine_len;
    shape.widths = allocation_for(s.p_s, s.p_t, s.spine_len, s.budget - s.spine_len);
    shape.branch_depth = depth;
    shape.budget = s.budget;
    row.tau_bound = spine_yield({s.p_s, s.p_t}, shape).total;
    row.tau_iso = iso_yield(3, s.budget, s.p_t);
    row.tau_iso_best = best_iso(s.budget, s.p_t).tau;
    row.ratio = row.tau_bound / row.tau_iso;
    row.valid = row.tau_bound <= s.tau_meas + 3.0 * s.stderr_;
    if (!row.valid) ++report.violations;
    if (s.p_t > 0.0) {
      gains.push_back(row.ratio);
      ratios.push_back(s.p_s / s.p_t);
    }
    report.rows.push_back(std::move(row));
  }
  report.gain_correlation = stats::pearson(ratios, gains);
  return report;
}

void write_bound_csv(std::ostream& os, const BoundReport& report) {
  os << "setting,p_s,p_t,m,B,tau_bound,tau_meas,stderr,tau_iso,ratio\n";
  os.precision(10);
  for (const BoundRow& r : report.rows) {
    const BoundSetting& s = r.setting;
    os << s.id << ',' << s.p_s << ',' << s.p_t << ',' << s.spine_len << ',' << s.budget << ','
       << r.tau_bound << ',' << s.tau_meas << ',' << s.stderr_ << ',' << r.tau_iso << ',' << r.ratio
       << '\n';
  }
}

namespace reference {

YieldEstimate monte_carlo_yield(const AcceptanceModel& model, const ShapeTree& tree,
                                std::size_t trials, std::uint64_t seed) {
  check_probability(model.p_s, "p_s");
  check_probability(model.p_t, "p_t");
  if (trials == 0) throw InputError("monte carlo needs at least one trial");
  const Csr csr = compile(model, tree);
  std::uint64_t sum = 0;
  std::uint64_t sum_sq = 0;
  for (std::size_t b = 0; b < block_count(trials); ++b) {
    const BlockSums s = run_block(csr, block_trials(trials, b), seed, b);
    sum += s.sum;
    sum_sq += s.sum_sq;
  }
  return finish(sum, sum_sq, trials);
}

std::vector<DominancePoint> dominance_scan(std::span<const GridPoint> grid, std::size_t depth) {
  std::vector<DominancePoint> out;
  out.reserve(grid.size());
  for (const GridPoint& g : grid) out.push_back(scan_point(g, depth));
  return out;
}

}  // namespace reference

}  // namespace goose
