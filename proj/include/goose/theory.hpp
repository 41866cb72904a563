#pragma once

/**
 * Expected-yield machinery for two-source draft trees.
 *
 * Acceptance model: every spine token is accepted independently with
 * probability p_s, every branch token with p_t. For a spine of m tokens with
 * w_i branches at spine node i (node 0 is the root), each branch being a
 * chain of up to D transition tokens,
 *
 *   E[tau] >= sum_{i=1}^{m} p_s^i
 *           + sum_{i=0}^{m-1} p_s^i (1 - p_s) phi(w_i) (1 + ell_bar)
 *           + 1
 *
 * with phi(w) = 1 - (1 - p_t)^w and ell_bar = sum_{k=1}^{D-1} p_t^k; equality
 * holds when every branch is an independent chain.
 */

#include "goose/engine.hpp"
#include "goose/types.hpp"

#include <cstddef>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace goose {

struct AcceptanceModel {
  double p_s = 0.0;
  double p_t = 0.0;
};

struct TreeShape {
  std::size_t spine_len = 0;          // m
  std::vector<std::size_t> widths;    // w_0..w_{m-1}
  std::size_t branch_depth = 6;       // D
  std::size_t budget = 0;             // B; 0 means m + sum(w)
};

struct YieldComponents {
  double spine = 0.0;
  double synergy = 0.0;
  double bonus = 1.0;
  double total = 1.0;
};

double phi(std::size_t width, double p_t);
double ell_bar(double p_t, std::size_t depth);

/// sum_i p_s^i (1 - p_s) phi(w_i) (1 + ell_bar); widths.size() is m.
double synergy(const AcceptanceModel& model, std::span<const std::size_t> widths, std::size_t depth);

/// Analytic lower bound and its parts. Throws InputError when widths.size()
/// != spine_len, spine_len == 0, or m + sum(w) exceeds a non-zero budget.
YieldComponents spine_yield(const AcceptanceModel& model, const TreeShape& shape);

/// Explicit tagged tree for simulation: node 0 is the root, parents precede
/// children.
struct ShapeTree {
  std::vector<std::size_t> parent;
  std::vector<Source> source;

  std::size_t size() const noexcept { return parent.size(); }
  std::size_t add(std::size_t p, Source s) {
    parent.push_back(p);
    source.push_back(s);
    return parent.size() - 1;
  }
};

/// Spine of m PLD nodes; w_i TR branch heads under spine node i, each
/// continued by a private chain of D - 1 TR nodes.
ShapeTree independent_chain_tree(const TreeShape& shape);

ShapeTree shape_of(const SpineTree& tree);

struct YieldEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t trials = 0;
};

/// Trials are split into fixed blocks seeded from (seed, block index), and
/// tau is an integer per trial, so the estimate is bit-identical for any
/// thread count.
inline constexpr std::size_t kTrialBlock = 1 << 14;

/// OpenMP kernel.
YieldEstimate monte_carlo_yield(const AcceptanceModel& model, const ShapeTree& tree,
                                std::size_t trials, std::uint64_t seed);

/// tau_iso for a balanced k-ary tree: complete levels with sum k^d <= B,
/// q = 1 - (1 - p_t)^k, tau = 1 + sum_{d=1}^{levels} q^d.
double iso_yield(std::size_t fanout, std::size_t budget, double p_t);

struct BestIso {
  std::size_t fanout = 1;
  double tau = 1.0;
};
BestIso best_iso(std::size_t budget, double p_t);

struct BestSpine {
  std::size_t spine_len = 0;
  std::vector<std::size_t> widths;
  YieldComponents yield;
};
/// Best m in [1, B] with the rounded linear allocation of B - m branches.
BestSpine best_spine(const AcceptanceModel& model, std::size_t budget, std::size_t depth);

struct GridPoint {
  double p_s = 0.0;
  double p_t = 0.0;
  std::size_t budget = 0;
};

struct DominancePoint {
  GridPoint point;
  BestSpine spine;
  BestIso iso;
  double gap = 0.0;        // spine - iso
  bool violation = false;  // p_s > p_t and gap <= 0
};

/// OpenMP kernel over grid points.
std::vector<DominancePoint> dominance_scan(std::span<const GridPoint> grid, std::size_t depth);

/// p_s in {ratio * p_t}, p_t in {0.02, 0.033, 0.05}, B in {10, 30, 60}, for
/// ratio in {2, 4, 8, 18}.
std::vector<GridPoint> default_dominance_grid();

/// Grid points where the gap decreases as p_s grows with (p_t, B) fixed.
std::vector<std::pair<DominancePoint, DominancePoint>> gap_monotonicity_breaks(
    std::span<const DominancePoint> scan);

// ---------------------------------------------------------------------------
// Engine-log analysis
// ---------------------------------------------------------------------------

/// Reported in place of p_s / p_t when p_t is zero.
inline constexpr double kUndefinedRatio = std::numeric_limits<double>::infinity();

struct Heterogeneity {
  double p_s = 0.0;
  double p_t = 0.0;
  double ratio = kUndefinedRatio;
  std::size_t spine_offered = 0;
  std::size_t spine_accepted = 0;
  std::size_t tr_offered = 0;
  std::size_t tr_accepted = 0;
  bool spine_defined = false;
  bool tr_defined = false;
};

/// Throws InputError when there are no decode cycles.
Heterogeneity measure_heterogeneity(std::span<const CycleRecord> cycles);

struct BoundSetting {
  std::string id;
  double p_s = 0.0;
  double p_t = 0.0;
  std::size_t spine_len = 1;  // m
  std::size_t budget = 60;    // B
  double tau_meas = 0.0;
  double stderr_ = 0.0;
};

/// Setting from one or more runs' cycle logs, averaged over decode cycles:
/// measured p_s and p_t, tree size B (bypass counts its chain plus the root,
/// fallback counts the root), spine length m clamped to [1, B], and tokens per
/// cycle with its standard error. Throws InputError on empty logs.
BoundSetting bound_setting_from_cycles(std::string id, std::span<const CycleRecord> cycles);

struct BoundRow {
  BoundSetting setting;
  double tau_bound = 0.0;
  double tau_iso = 0.0;       // fan-out 3
  double tau_iso_best = 0.0;  // best fan-out
  double ratio = 0.0;         // tau_bound / tau_iso
  bool valid = true;          // tau_bound <= tau_meas + 3 stderr
};

struct BoundReport {
  std::vector<BoundRow> rows;
  std::size_t violations = 0;
  /// Pearson r of tau_bound / tau_iso against p_s / p_t over rows where the
  /// ratio is defined; NaN with fewer than two such rows.
  double gain_correlation = std::numeric_limits<double>::quiet_NaN();
};

/// tau_bound allocates the B - m branches by the rounded linear rule when
/// 0 < p_t <= p_s and p_t < 1, and by exact greedy placement otherwise.
/// Throws InputError on p outside [0, 1] or m outside [1, B].
BoundReport verify_bound(std::span<const BoundSetting> settings, std::size_t depth);

/// CSV columns: setting,p_s,p_t,m,B,tau_bound,tau_meas,stderr,tau_iso,ratio
void write_bound_csv(std::ostream& os, const BoundReport& report);

namespace reference {

/// Serial Monte-Carlo yield; same blocks and seeds as the OpenMP kernel.
YieldEstimate monte_carlo_yield(const AcceptanceModel& model, const ShapeTree& tree,
                                std::size_t trials, std::uint64_t seed);

std::vector<DominancePoint> dominance_scan(std::span<const GridPoint> grid, std::size_t depth);

}  // namespace reference

}  // namespace goose
