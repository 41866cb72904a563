#include "goose/verifier.hpp"
#include "support.hpp"

#include <doctest.h>

#include <map>

using namespace goose;
using goose::testing::make_tree;
using goose::testing::ScriptedModel;

namespace {

// Greedy token looked up by the last two path tokens; default 0.
ScriptedModel table_model(std::map<std::pair<TokenId, TokenId>, TokenId> rules) {
  return ScriptedModel(100, [rules](const std::vector<TokenId>& p) {
    const TokenId prev = p.size() >= 2 ? p[p.size() - 2] : 99;
    const auto it = rules.find({prev, p.back()});
    return it == rules.end() ? TokenId{0} : it->second;
  });
}

}  // namespace

TEST_CASE("path classification") {
  using S = Source;
  CHECK(classify(std::vector<S>{}) == PathCategory::Empty);
  CHECK(classify(std::vector<S>{S::Pld, S::Pld}) == PathCategory::PurePld);
  CHECK(classify(std::vector<S>{S::Pld, S::Tr, S::Tr}) == PathCategory::SpineContinuation);
  CHECK(classify(std::vector<S>{S::Tr}) == PathCategory::PureTr);
}

TEST_CASE("walk with no matching child") {
  auto m = table_model({{{5, 1}, 42}});
  const auto t = make_tree(1, {{7, Source::Pld, 0}, {8, Source::Tr, 0}});
  const std::vector<TokenId> history{5, 1};
  const auto r = unified_greedy_walk(m, t, history);
  CHECK(r.accepted.empty());
  CHECK(r.bonus == 42);
  CHECK(r.category == PathCategory::Empty);
}

TEST_CASE("spine continuation recovers through a branch") {
  // After anchor 1 the model says A=10, then X=30 (not B=11), then 31.
  auto m = table_model({{{5, 1}, 10}, {{1, 10}, 30}, {{10, 30}, 31}});
  const auto t = make_tree(1, {{10, Source::Pld, 0}, {11, Source::Pld, 1}, {30, Source::Tr, 1}});
  const std::vector<TokenId> history{5, 1};
  const auto r = unified_greedy_walk(m, t, history);
  CHECK(r.tokens == std::vector<TokenId>{10, 30});
  CHECK(r.accepted == std::vector<std::size_t>{1, 3});
  CHECK(r.category == PathCategory::SpineContinuation);
  CHECK(r.accepted_pld == 1);
  CHECK(r.accepted_tr == 1);
  CHECK(r.bonus == 31);
}

TEST_CASE("full spine acceptance is pure PLD") {
  auto m = table_model({{{5, 1}, 10}, {{1, 10}, 11}, {{10, 11}, 12}, {{11, 12}, 77}});
  const auto t = make_tree(1, {{10, Source::Pld, 0}, {11, Source::Pld, 1}, {12, Source::Pld, 2},
                               {50, Source::Tr, 3}});
  const std::vector<TokenId> history{5, 1};
  const auto r = unified_greedy_walk(m, t, history);
  CHECK(r.tokens == std::vector<TokenId>{10, 11, 12});
  CHECK(r.category == PathCategory::PurePld);
  CHECK(r.bonus == 77);
}

TEST_CASE("PLD child wins over an identical TR child") {
  auto m = table_model({{{5, 1}, 10}, {{1, 10}, 11}});
  // TR node 10 is stored before the PLD node 10.
  const auto t = make_tree(1, {{10, Source::Tr, 0}, {10, Source::Pld, 0}, {99, Source::Tr, 1}});
  const std::vector<TokenId> history{5, 1};
  const auto r = unified_greedy_walk(m, t, history);
  CHECK(r.accepted == std::vector<std::size_t>{2});
  CHECK(r.category == PathCategory::PurePld);

  // Duplicate TR children: the lower index is taken.
  const auto dup = make_tree(1, {{10, Source::Tr, 0}, {10, Source::Tr, 0}});
  CHECK(unified_greedy_walk(m, dup, history).accepted == std::vector<std::size_t>{1});
}

TEST_CASE("one model pass per walk") {
  auto m = testing::counting_model(50);
  const auto t = make_tree(1, {{2, Source::Pld, 0}, {3, Source::Pld, 1}, {9, Source::Tr, 0}});
  const std::vector<TokenId> history{0, 1};
  m.calls = 0;
  const auto r = unified_greedy_walk(m, t, history);
  CHECK(m.calls == t.size());  // one score per position of a single query
  CHECK(r.tokens == std::vector<TokenId>{2, 3});
  CHECK(r.response.positions.size() == t.size());
}

TEST_CASE("linear verify") {
  auto m = testing::counting_model(50);
  const std::vector<TokenId> history{0, 1};
  SUBCASE("all agree") {
    const std::vector<TokenId> chain{2, 3, 4};
    const auto r = linear_verify(m, chain, history);
    CHECK(r.tokens == chain);
    CHECK(r.bonus == 5);
    CHECK(r.category == PathCategory::PurePld);
  }
  SUBCASE("first token wrong") {
    const std::vector<TokenId> chain{7, 8};
    const auto r = linear_verify(m, chain, history);
    CHECK(r.tokens.empty());
    CHECK(r.bonus == 2);
  }
  SUBCASE("mismatch at position 7 of 20") {
    std::vector<TokenId> chain;
    for (TokenId i = 0; i < 20; ++i) chain.push_back(2 + i);
    chain[6] = 40;  // seventh token wrong
    const auto r = linear_verify(m, chain, history);
    CHECK(r.tokens.size() == 6);
    CHECK(r.bonus == 8);
  }
  CHECK_THROWS_AS(linear_verify(m, {}, history), InputError);
}
