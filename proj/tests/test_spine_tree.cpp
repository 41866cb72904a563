#include "goose/rng.hpp"
#include "goose/spine_tree.hpp"
#include "goose/theory.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

using namespace goose;

namespace {

std::vector<ScoredToken> ladder(std::initializer_list<TokenId> toks) {
  std::vector<ScoredToken> v;
  double s = 0.5;
  for (TokenId t : toks) {
    v.push_back({t, s});
    s *= 0.8;
  }
  return v;
}

std::size_t count_children(const SpineTree& t, std::size_t i, Source src) {
  std::size_t n = 0;
  for (std::size_t c : t.children(i)) n += t.nodes[c].source == src;
  return n;
}

// Best synergy over every composition of `total` into m parts.
double best_synergy(double ps, double pt, std::size_t m, std::size_t total, std::size_t depth,
                    std::vector<std::size_t>* arg = nullptr) {
  std::vector<std::size_t> w(m, 0);
  double best = -1.0;
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t left) {
    if (i + 1 == m) {
      w[i] = left;
      const double s = synergy({ps, pt}, w, depth);
      if (s > best) {
        best = s;
        if (arg) *arg = w;
      }
      return;
    }
    for (std::size_t x = 0; x <= left; ++x) {
      w[i] = x;
      rec(i + 1, left - x);
    }
  };
  rec(0, total);
  return best;
}

}  // namespace

TEST_CASE("budget split") {
  TreeBudget b{8, 0.5, 0.5, 6};
  const auto s = b.split(2);
  CHECK(s.spine == 2);
  CHECK(s.root_branches == 2);
  CHECK(s.spine_branches == 3);

  TreeBudget d;  // 60 nodes
  d.spine_ratio = 0.15;
  CHECK(d.split(20).spine == 9);
  CHECK(d.split(5).spine == 5);
  d.spine_ratio = 0.5;
  const auto full = d.split(20);
  CHECK(full.spine == 20);
  CHECK(full.spine + full.root_branches + full.spine_branches == 59);
}

TEST_CASE("harmonic allocation") {
  CHECK(harmonic_allocation(6, 3) == std::vector<std::size_t>{3, 1, 1});
  CHECK(harmonic_allocation(3, 2) == std::vector<std::size_t>{2, 1});
  CHECK(harmonic_allocation(5, 0).empty());
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const auto a = harmonic_allocation(rng.below(60), 1 + rng.below(30));
    CHECK(std::is_sorted(a.rbegin(), a.rend()));
  }
}

TEST_CASE("hand-traced spine tree") {
  // Anchor 1 with successors {20, 21, 22}; spine tokens 4 and 5.
  AdjacencyTable table(64);
  table.harvest({std::nullopt, 1, ladder({20, 21, 22})});
  table.harvest({std::nullopt, 4, ladder({30, 31, 32})});
  table.harvest({std::nullopt, 5, ladder({40, 41, 42})});
  const std::vector<TokenId> draft{4, 5};
  const auto t = build_spine_tree(1, std::nullopt, draft, table, {8, 0.5, 0.5, 6});

  REQUIRE(t.size() == 8);
  REQUIRE(t.spine.size() == 2);
  CHECK(t.nodes[t.spine[0]].token == 4);
  CHECK(t.nodes[t.spine[1]].token == 5);
  CHECK(count_children(t, 0, Source::Tr) == 2);
  CHECK(count_children(t, t.spine[0], Source::Tr) == 2);
  CHECK(count_children(t, t.spine[1], Source::Tr) == 1);
}

TEST_CASE("degenerate trees") {
  AdjacencyTable table(64);
  table.harvest({std::nullopt, 1, ladder({20, 21, 22})});
  table.harvest({std::nullopt, 20, ladder({23})});

  SUBCASE("no draft gives a TR-only tree") {
    const auto t = build_spine_tree(1, std::nullopt, {}, table, {});
    CHECK(t.spine.empty());
    CHECK(t.size() > 1);
    for (std::size_t i = 1; i < t.size(); ++i) CHECK(t.nodes[i].source == Source::Tr);
  }
  SUBCASE("empty table gives a pure chain") {
    AdjacencyTable empty(64);
    const std::vector<TokenId> draft{4, 5, 6};
    const auto t = build_spine_tree(1, std::nullopt, draft, empty, {});
    CHECK(t.size() == 4);
    CHECK(t.spine.size() == 3);
  }
  SUBCASE("next spine token is never repeated as a branch") {
    AdjacencyTable t2(64);
    t2.harvest({std::nullopt, 1, ladder({4, 21})});
    const std::vector<TokenId> draft{4};
    const auto t = build_spine_tree(1, std::nullopt, draft, t2, {});
    std::size_t fours = 0;
    for (std::size_t c : t.children(0)) fours += t.nodes[c].token == 4;
    CHECK(fours == 1);
  }
}

TEST_CASE("random spine trees keep their invariants") {
  Rng rng(5);
  const std::size_t vocab = 24;
  for (int trial = 0; trial < 300; ++trial) {
    AdjacencyTable table(vocab);
    const std::size_t harvests = rng.below(80);
    for (std::size_t h = 0; h < harvests; ++h) {
      std::vector<ScoredToken> top;
      for (std::size_t j = 0, n = rng.below(10); j < n; ++j) {
        const auto tok = static_cast<TokenId>(rng.below(vocab));
        if (std::none_of(top.begin(), top.end(), [&](const ScoredToken& s) { return s.token == tok; })) {
          top.push_back({tok, rng.uniform()});
        }
      }
      std::optional<TokenId> prev;
      if (rng.below(2)) prev = static_cast<TokenId>(rng.below(vocab));
      table.harvest({prev, static_cast<TokenId>(rng.below(vocab)), top});
    }
    std::vector<TokenId> draft(rng.below(25));
    for (auto& d : draft) d = static_cast<TokenId>(rng.below(vocab));
    TreeBudget budget;
    budget.nodes = 1 + rng.below(80);
    budget.spine_ratio = std::vector<double>{0.15, 0.3, 0.5}[rng.below(3)];
    budget.max_depth = 1 + rng.below(7);
    TreeOptions opts{rng.below(2) == 0, rng.below(2) == 0};
    std::optional<TokenId> prev;
    if (rng.below(2)) prev = static_cast<TokenId>(rng.below(vocab));

    const auto t = build_spine_tree(static_cast<TokenId>(rng.below(vocab)), prev, draft, table, budget, opts);
    CHECK(t.size() <= budget.nodes);
    const auto split = budget.split(draft.size());
    CHECK(t.spine.size() == split.spine);

    // PLD nodes form exactly the spine path.
    std::size_t prev_spine = 0;
    for (std::size_t k = 0; k < t.spine.size(); ++k) {
      CHECK(t.nodes[t.spine[k]].parent == prev_spine);
      CHECK(t.nodes[t.spine[k]].token == draft[k]);
      prev_spine = t.spine[k];
    }
    std::size_t pld = 0;
    std::set<std::pair<std::size_t, TokenId>> edges;
    for (std::size_t i = 1; i < t.size(); ++i) {
      const auto& n = t.nodes[i];
      pld += n.source == Source::Pld;
      CHECK(n.parent < i);
      CHECK(n.depth == t.nodes[n.parent].depth + 1);
      CHECK(edges.insert({n.parent, n.token}).second);
      if (n.source == Source::Tr) CHECK(n.branch_depth <= budget.max_depth);
    }
    CHECK(pld == t.spine.size());

    // Mask equals the transitive parent closure.
    for (std::size_t i = 0; i < t.size(); ++i) {
      std::set<std::size_t> closure;
      for (std::size_t p = t.nodes[i].parent; p != kNoParent; p = t.nodes[p].parent) closure.insert(p);
      CHECK(std::vector<std::size_t>(closure.begin(), closure.end()) == t.mask[i]);
    }
  }
}

TEST_CASE("ancestor mask") {
  const auto chain = testing::make_tree(0, {{1, Source::Pld, 0}, {2, Source::Pld, 1}});
  CHECK(chain.mask[0].empty());
  CHECK(chain.mask[1] == std::vector<std::size_t>{0});
  CHECK(chain.mask[2] == std::vector<std::size_t>{0, 1});

  const auto fork = testing::make_tree(0, {{1, Source::Tr, 0}, {2, Source::Tr, 0}});
  CHECK(fork.mask[1] == std::vector<std::size_t>{0});
  CHECK(fork.mask[2] == std::vector<std::size_t>{0});

  SpineTree bad = chain;
  bad.nodes[1].parent = 2;
  CHECK_THROWS_AS(ancestor_mask(bad), InternalError);
}

TEST_CASE("tree query excludes the root") {
  const auto t = testing::make_tree(7, {{1, Source::Pld, 0}, {2, Source::Tr, 1}, {3, Source::Tr, 0}});
  const std::vector<TokenId> history{5, 7};
  const auto q = to_query(t, history);
  REQUIRE(q.nodes.size() == 3);
  CHECK(q.nodes[0].ancestors.empty());
  CHECK(q.nodes[1].ancestors == std::vector<std::size_t>{0});
  CHECK(q.nodes[2].ancestors.empty());
}

TEST_CASE("iso tree fills complete levels") {
  CHECK(iso_levels(3, 60) == 3);
  CHECK(iso_levels(1, 60) == 60);
  CHECK(iso_levels(60, 60) == 1);
  CHECK(iso_levels(61, 60) == 0);
  CHECK(iso_levels(2, 6) == 2);

  // Every token has plenty of successors, so all three levels fill.
  AdjacencyTable table(64);
  for (TokenId t = 0; t < 64; ++t) {
    std::vector<ScoredToken> top;
    for (TokenId j = 0; j < 5; ++j) top.push_back({static_cast<TokenId>((t + 7 * j + 1) % 64), 0.5 - 0.05 * j});
    table.harvest({std::nullopt, t, top});
  }
  const auto iso = build_iso_tree(0, std::nullopt, {}, table, 3, 60);
  CHECK(iso.size() == 40);
  const std::vector<TokenId> draft{9, 9, 9, 9};
  const auto with_spine = build_iso_tree(0, std::nullopt, draft, table, 3, 60);
  CHECK(with_spine.size() == 40);
  CHECK(with_spine.spine.size() == 3);
}

TEST_CASE("tree dump golden") {
  const auto t = testing::make_tree(
      10, {{11, Source::Pld, 0}, {12, Source::Pld, 1}, {20, Source::Tr, 0}, {21, Source::Tr, 3}, {30, Source::Tr, 1}});
  const std::string want =
      "0 10 PLD -\n"
      "  1 11 PLD 0\n"
      "    2 12 PLD 1\n"
      "  1 20 TR 0\n"
      "    2 21 TR 3\n"
      "    2 30 TR 1\n";
  CHECK(dump_tree(t) == want);
}

TEST_CASE("linear allocation") {
  CHECK(allocation_slope(0.5, 0.5) == doctest::Approx(1.0));
  CHECK(allocation_slope(0.21, 0.033) == doctest::Approx(46.5).epsilon(0.002));
  CHECK(linear_allocation(0.5, 0.5, 3, 6) == std::vector<std::size_t>{3, 2, 1});
  CHECK(linear_allocation(0.21, 0.033, 5, 30) == std::vector<std::size_t>{30, 0, 0, 0, 0});

  std::vector<std::size_t> oracle;
  best_synergy(0.5, 0.3, 3, 6, 6, &oracle);
  CHECK(linear_allocation(0.5, 0.3, 3, 6) == oracle);

  CHECK_THROWS_AS(linear_allocation(0.1, 0.2, 3, 6), InputError);
  CHECK_THROWS_AS(linear_allocation(0.5, 0.0, 3, 6), InputError);
  CHECK_THROWS_AS(linear_allocation(0.5, 0.2, 0, 6), InputError);

  Rng rng(6);
  for (int i = 0; i < 300; ++i) {
    const double pt = 0.01 + 0.5 * rng.uniform();
    const double ps = pt + (1.0 - pt) * rng.uniform();
    const std::size_t m = 1 + rng.below(12);
    const std::size_t bt = rng.below(50);
    const auto w = linear_allocation(ps, pt, m, bt);
    std::size_t sum = 0;
    for (auto x : w) sum += x;
    CHECK(sum == bt);
    CHECK(std::is_sorted(w.rbegin(), w.rend()));
  }
}

TEST_CASE("linear allocation is near the exhaustive optimum on small instances") {
  const std::vector<std::pair<double, double>> grid{
      {0.3, 0.05}, {0.5, 0.1}, {0.7, 0.2}, {0.9, 0.3}, {0.6, 0.5}};
  for (auto [ps, pt] : grid) {
    for (std::size_t m = 1; m <= 4; ++m) {
      for (std::size_t bt = 0; bt <= 8; ++bt) {
        const double best = best_synergy(ps, pt, m, bt, 6);
        const double got = synergy({ps, pt}, linear_allocation(ps, pt, m, bt), 6);
        CHECK(got >= 0.99 * best);
      }
    }
  }
}
