#include "goose/adjacency_table.hpp"
#include "goose/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>

using namespace goose;

namespace {

// Reference dictionary applying the same merge rule with ordered maps.
struct RefTable {
  std::size_t k;
  double min_score;
  std::map<std::pair<long, TokenId>, std::vector<ScoredToken>> lists;  // prev -1 for unigram

  void merge(std::vector<ScoredToken>& list, const std::vector<ScoredToken>& in) const {
    std::map<TokenId, double> by_token;
    for (const auto& s : list) by_token[s.token] = s.score;
    for (const auto& s : in) by_token[s.token] = s.score;
    std::vector<ScoredToken> out;
    for (const auto& [t, s] : by_token) out.push_back({t, s});
    std::sort(out.begin(), out.end(), [](const ScoredToken& a, const ScoredToken& b) {
      return a.score != b.score ? a.score > b.score : a.token < b.token;
    });
    if (out.size() > k) out.resize(k);
    std::erase_if(out, [&](const ScoredToken& s) { return s.score < min_score; });
    list = out;
  }

  void harvest(std::optional<TokenId> prev, TokenId cur, const std::vector<ScoredToken>& top) {
    merge(lists[{-1, cur}], top);
    if (prev) merge(lists[{static_cast<long>(*prev), cur}], top);
  }
};

std::vector<ScoredToken> scored(std::initializer_list<std::pair<TokenId, double>> xs) {
  std::vector<ScoredToken> v;
  for (auto [t, s] : xs) v.push_back({t, s});
  return v;
}

}  // namespace

TEST_CASE("single harvest populates both tiers sorted") {
  AdjacencyTable t(16);
  const auto top = scored({{3, 0.2}, {5, 0.5}, {7, 0.3}});
  t.harvest({TokenId{1}, 2, top});
  const auto b = t.bigram(1, 2);
  REQUIRE(b.size() == 3);
  CHECK(b[0].token == 5);
  CHECK(b[1].token == 7);
  CHECK(b[2].token == 3);
  CHECK(t.unigram(2).size() == 3);
  CHECK(t.bigram_keys() == 1);
}

TEST_CASE("latest score wins") {
  AdjacencyTable t(16);
  t.harvest({TokenId{1}, 2, scored({{4, 0.6}, {5, 0.3}})});
  t.harvest({TokenId{1}, 2, scored({{5, 0.9}})});
  const auto b = t.bigram(1, 2);
  REQUIRE(b.size() == 2);
  CHECK(b[0] == ScoredToken{5, 0.9});
  CHECK(b[1] == ScoredToken{4, 0.6});
  t.harvest({TokenId{1}, 2, scored({{5, 0.001}})});
  CHECK(t.bigram(1, 2).size() == 1);
}

TEST_CASE("random harvests match the reference dictionary") {
  Rng rng(3);
  const std::size_t vocab = 12;
  AdjacencyTable t(vocab, 4, 0.01);
  RefTable ref{4, 0.01, {}};
  for (int i = 0; i < 1000; ++i) {
    std::optional<TokenId> prev;
    if (rng.below(4) != 0) prev = static_cast<TokenId>(rng.below(vocab));
    const auto cur = static_cast<TokenId>(rng.below(vocab));
    std::vector<ScoredToken> top;
    const std::size_t n = rng.below(7);
    for (std::size_t j = 0; j < n; ++j) {
      const auto tok = static_cast<TokenId>(rng.below(vocab));
      if (std::any_of(top.begin(), top.end(), [&](const ScoredToken& s) { return s.token == tok; })) continue;
      top.push_back({tok, rng.uniform() * 0.3});
    }
    t.harvest({prev, cur, top});
    ref.harvest(prev, cur, top);
  }
  std::size_t keys = 0;
  for (const auto& [key, list] : ref.lists) {
    const auto got = key.first < 0 ? t.unigram(key.second)
                                   : t.bigram(static_cast<TokenId>(key.first), key.second);
    CHECK(std::vector<ScoredToken>(got.begin(), got.end()) == list);
    if (key.first >= 0) ++keys;
  }
  CHECK(t.bigram_keys() == keys);
}

TEST_CASE("successor lookup") {
  AdjacencyTable t(32);
  CHECK(t.successors(std::nullopt, 3, 5).empty());
  CHECK_FALSE(t.has_successors(TokenId{1}, 3));

  t.harvest({std::nullopt, 3, scored({{9, 0.9}, {8, 0.05}})});
  t.harvest({TokenId{1}, 3, scored({{10, 0.5}, {11, 0.4}, {12, 0.3}, {13, 0.2}, {14, 0.1}})});
  // The second harvest also updated the unigram tier.
  const auto bi = t.successors(TokenId{1}, 3, 3);
  REQUIRE(bi.size() == 3);
  CHECK(bi[0].token == 10);
  CHECK(bi[2].token == 12);
  CHECK(t.successors(TokenId{1}, 3, 0).empty());
  // Unknown bigram falls back to the unigram tier.
  const auto uni = t.successors(TokenId{2}, 3, 2);
  REQUIRE(uni.size() == 2);
  CHECK(uni[0].token == 9);
  CHECK(t.successors(std::nullopt, 3, 10).size() == 7);
}

TEST_CASE("table json dump") {
  AdjacencyTable t(8);
  t.harvest({TokenId{1}, 2, scored({{3, 0.5}})});
  const auto j = t.to_json();
  CHECK(j.contains("u:2"));
  CHECK(j.contains("b:1,2"));
  CHECK(j["b:1,2"][0][0] == 3);
}

TEST_CASE("confidence width") {
  const std::vector<double> sib{0.5, 0.25};
  CHECK(confidence_width(0.5, sib, 4) == 4);
  CHECK(confidence_width(0.25, sib, 4) == 2);
  const std::vector<double> low{0.005, 0.5};
  CHECK(confidence_width(0.005, low, 4) == 0);
  const std::vector<double> one{0.3};
  CHECK(confidence_width(0.3, one, 3) == 3);
  CHECK(confidence_width(0.3, one, 0) == 0);
}
