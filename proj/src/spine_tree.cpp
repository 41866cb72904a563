#include "goose/spine_tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace goose {

std::vector<std::size_t> SpineTree::children(std::size_t i) const {
  std::vector<std::size_t> out;
  for (std::size_t j = i + 1; j < nodes.size(); ++j) {
    if (nodes[j].parent == i) out.push_back(j);
  }
  return out;
}

BudgetSplit TreeBudget::split(std::size_t draft_len) const {
  BudgetSplit s;
  if (nodes == 0) return s;
  const auto spine_cap = static_cast<std::size_t>(std::floor(static_cast<double>(nodes) * spine_ratio));
  s.spine = std::min({draft_len, spine_cap, nodes - 1});
  const std::size_t rest = nodes - 1 - s.spine;
  s.root_branches = static_cast<std::size_t>(std::floor(static_cast<double>(rest) * (1.0 - branch_ratio)));
  s.root_branches = std::min(s.root_branches, rest);
  s.spine_branches = rest - s.root_branches;
  return s;
}

std::vector<std::size_t> harmonic_allocation(std::size_t spine_branches, std::size_t spine_len) {
  std::vector<std::size_t> out(spine_len, 0);
  if (spine_len == 0) return out;
  double harmonic = 0.0;
  for (std::size_t j = 1; j <= spine_len; ++j) harmonic += 1.0 / static_cast<double>(j);
  for (std::size_t i = 1; i <= spine_len; ++i) {
    const double share = static_cast<double>(spine_branches) * (1.0 / static_cast<double>(i)) / harmonic;
    // Guard the floor against 2.9999999 style representation error.
    out[i - 1] = static_cast<std::size_t>(std::floor(share + 1e-9));
  }
  return out;
}

namespace {

// Tree under construction with per-node child lists for duplicate checks.
class Builder {
 public:
  Builder(TokenId anchor, std::size_t budget) {
    tree_.budget = budget;
    tree_.nodes.push_back(DraftNode{anchor, Source::Pld, kNoParent, 0, 0, 1.0});
    kids_.emplace_back();
  }

  bool full() const { return tree_.nodes.size() >= tree_.budget; }

  bool has_child(std::size_t parent, TokenId token) const {
    return std::any_of(kids_[parent].begin(), kids_[parent].end(),
                       [&](std::size_t c) { return tree_.nodes[c].token == token; });
  }

  std::size_t add(std::size_t parent, TokenId token, Source source, double score) {
    const DraftNode& p = tree_.nodes[parent];
    DraftNode n{token, source, parent, p.depth + 1, 0, score};
    if (source == Source::Tr) n.branch_depth = p.source == Source::Tr ? p.branch_depth + 1 : 1;
    tree_.nodes.push_back(n);
    kids_.emplace_back();
    kids_[parent].push_back(tree_.nodes.size() - 1);
    return tree_.nodes.size() - 1;
  }

  /// Attaches up to `count` unseen successors of `node`; returns new indices.
  std::vector<std::size_t> attach(std::size_t node, std::size_t count, const AdjacencyTable& table,
                                  const TreeOptions& options, std::optional<TokenId> root_prev) {
    std::vector<std::size_t> added;
    if (count == 0) return added;
    const DraftNode& n = tree_.nodes[node];
    std::optional<TokenId> prev;
    if (options.bigram) prev = n.parent == kNoParent ? root_prev : std::optional(tree_.nodes[n.parent].token);
    const TokenId cur = n.token;
    for (const ScoredToken& s : table.successors(prev, cur, table.top_k())) {
      if (added.size() == count || full()) break;
      if (has_child(node, s.token)) continue;
      added.push_back(add(node, s.token, Source::Tr, s.score));
    }
    return added;
  }

  const std::vector<std::size_t>& kids(std::size_t i) const { return kids_[i]; }
  SpineTree& tree() { return tree_; }

 private:
  SpineTree tree_;
  std::vector<std::vector<std::size_t>> kids_;
};

void finish(SpineTree& tree) { tree.mask = ancestor_mask(tree); }

}  // namespace

SpineTree build_spine_tree(TokenId anchor, std::optional<TokenId> anchor_prev,
                           std::span<const TokenId> draft, const AdjacencyTable& table,
                           const TreeBudget& budget, const TreeOptions& options) {
  if (budget.nodes == 0) throw InputError("tree budget must be at least 1");
  Builder b(anchor, budget.nodes);
  const BudgetSplit split = budget.split(draft.size());

  // Step 1: spine.
  std::size_t last = 0;
  for (std::size_t i = 0; i < split.spine; ++i) {
    last = b.add(last, draft[i], Source::Pld, 1.0);
    b.tree().spine.push_back(last);
  }

  std::vector<std::size_t> frontier;

  // Step 2: root branches.
  for (std::size_t idx : b.attach(0, split.root_branches, table, options, anchor_prev)) {
    frontier.push_back(idx);
  }

  // Step 3: spine branches, wider near the root.
  if (options.spine_branches) {
    const auto alloc = harmonic_allocation(split.spine_branches, split.spine);
    for (std::size_t i = 0; i < split.spine; ++i) {
      for (std::size_t idx : b.attach(b.tree().spine[i], alloc[i], table, options, anchor_prev)) {
        frontier.push_back(idx);
      }
    }
  }

  // Step 4: breadth-first extension of the branches with the remaining budget.
  while (!frontier.empty() && !b.full()) {
    std::stable_sort(frontier.begin(), frontier.end(), [&](std::size_t x, std::size_t y) {
      return b.tree().nodes[x].score > b.tree().nodes[y].score;
    });
    std::vector<std::size_t> next;
    for (std::size_t f : frontier) {
      if (b.full()) break;
      const DraftNode node = b.tree().nodes[f];
      if (node.branch_depth >= budget.max_depth) continue;
      std::vector<double> siblings;
      for (std::size_t s : b.kids(node.parent)) {
        if (b.tree().nodes[s].source == Source::Tr) siblings.push_back(b.tree().nodes[s].score);
      }
      const std::size_t width = confidence_width(node.score, siblings, 1, table.min_score());
      for (std::size_t idx : b.attach(f, width, table, options, anchor_prev)) next.push_back(idx);
    }
    frontier = std::move(next);
  }

  SpineTree tree = std::move(b.tree());
  finish(tree);
  return tree;
}

std::size_t iso_levels(std::size_t fanout, std::size_t node_budget) {
  if (fanout == 0) throw InputError("iso fan-out must be at least 1");
  std::size_t levels = 0;
  std::size_t used = 0;
  std::size_t width = 1;
  while (true) {
    if (width > node_budget / fanout) break;  // next level alone overflows
    width *= fanout;
    if (used + width > node_budget) break;
    used += width;
    ++levels;
  }
  return levels;
}

SpineTree build_iso_tree(TokenId anchor, std::optional<TokenId> anchor_prev,
                         std::span<const TokenId> draft, const AdjacencyTable& table,
                         std::size_t fanout, std::size_t node_budget, const TreeOptions& options) {
  const std::size_t levels = iso_levels(fanout, node_budget);
  // Root plus complete levels; the builder's cap is only a backstop.
  Builder b(anchor, node_budget + 1);
  std::vector<std::size_t> frontier{0};
  std::size_t spine_tip = 0;  // deepest spine node so far (root initially)

  for (std::size_t level = 1; level <= levels; ++level) {
    std::vector<std::size_t> next;
    for (std::size_t node : frontier) {
      std::size_t placed = 0;
      if (node == spine_tip && level - 1 < draft.size()) {
        spine_tip = b.add(node, draft[level - 1], Source::Pld, 1.0);
        b.tree().spine.push_back(spine_tip);
        next.push_back(spine_tip);
        ++placed;
      }
      for (std::size_t idx : b.attach(node, fanout - placed, table, options, anchor_prev)) {
        next.push_back(idx);
      }
    }
    frontier = std::move(next);
    if (frontier.empty()) break;
  }

  SpineTree tree = std::move(b.tree());
  finish(tree);
  return tree;
}

std::vector<std::vector<std::size_t>> ancestor_mask(const SpineTree& tree) {
  std::vector<std::vector<std::size_t>> mask(tree.nodes.size());
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    // Parents strictly precede children, which also rules out cycles.
    std::size_t child = i;
    for (std::size_t p = tree.nodes[i].parent; p != kNoParent; child = p, p = tree.nodes[p].parent) {
      if (p >= child) throw InternalError("ancestor_mask: parent stored after child");
      mask[i].push_back(p);
    }
    std::reverse(mask[i].begin(), mask[i].end());
  }
  return mask;
}

ModelQuery to_query(const SpineTree& tree, std::span<const TokenId> history) {
  ModelQuery q{history, {}};
  q.nodes.reserve(tree.nodes.size() > 0 ? tree.nodes.size() - 1 : 0);
  const auto mask = tree.mask.size() == tree.nodes.size() ? tree.mask : ancestor_mask(tree);
  for (std::size_t i = 1; i < tree.nodes.size(); ++i) {
    QueryNode n{tree.nodes[i].token, {}};
    for (std::size_t a : mask[i]) {
      if (a != 0) n.ancestors.push_back(a - 1);
    }
    q.nodes.push_back(std::move(n));
  }
  return q;
}

std::string dump_tree(const SpineTree& tree) {
  std::ostringstream os;
  for (const DraftNode& n : tree.nodes) {
    os << std::string(2 * n.depth, ' ') << n.depth << ' ' << n.token << ' ' << to_string(n.source)
       << ' ';
    if (n.parent == kNoParent) {
      os << '-';
    } else {
      os << n.parent;
    }
    os << '\n';
  }
  return os.str();
}

double allocation_slope(double p_s, double p_t) {
  return std::abs(std::log(p_s)) / std::abs(std::log1p(-p_t));
}

std::vector<double> linear_allocation_continuous(double p_s, double p_t, std::size_t spine_len,
                                                 std::size_t branch_budget) {
  if (!(p_t > 0.0 && p_t < 1.0)) throw InputError("linear_allocation: p_t must lie in (0, 1)");
  if (!(p_s > 0.0 && p_s <= 1.0)) throw InputError("linear_allocation: p_s must lie in (0, 1]");
  if (p_s < p_t) throw InputError("linear_allocation: requires p_s >= p_t");
  if (spine_len == 0) throw InputError("linear_allocation: spine length must be positive");

  const double slope = allocation_slope(p_s, p_t);
  const double total = static_cast<double>(branch_budget);
  std::vector<double> w(spine_len, 0.0);
  // Active positions form a prefix; take the longest prefix whose last
  // width stays positive.
  for (std::size_t active = spine_len; active >= 1; --active) {
    const double a = static_cast<double>(active);
    const double w0 = (total + slope * a * (a - 1.0) / 2.0) / a;
    if (active == 1 || w0 - (a - 1.0) * slope > 0.0) {
      for (std::size_t i = 0; i < active; ++i) w[i] = w0 - static_cast<double>(i) * slope;
      break;
    }
  }
  return w;
}

std::vector<std::size_t> linear_allocation(double p_s, double p_t, std::size_t spine_len,
                                           std::size_t branch_budget) {
  const auto w = linear_allocation_continuous(p_s, p_t, spine_len, branch_budget);
  std::vector<std::size_t> out(w.size());
  std::vector<std::pair<double, std::size_t>> frac;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double f = std::floor(w[i] + 1e-9);
    out[i] = static_cast<std::size_t>(std::max(0.0, f));
    assigned += out[i];
    frac.emplace_back(w[i] - f, i);
  }
  std::stable_sort(frac.begin(), frac.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t j = 0; assigned < branch_budget; ++j) {
    ++out[frac[j % frac.size()].second];
    ++assigned;
  }
  return out;
}

}  // namespace goose
