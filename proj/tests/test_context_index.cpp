#include "goose/context_index.hpp"
#include "goose/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>

using namespace goose;

namespace {

using Seq = std::vector<TokenId>;

// Brute-force suffix scan: for each n the latest start i with a non-empty
// continuation history[i+n, len-n) whose n tokens equal the suffix.
MatchResult brute_match(const Seq& h, std::vector<std::size_t> lengths, std::size_t max_chain) {
  std::sort(lengths.begin(), lengths.end());
  lengths.erase(std::unique(lengths.begin(), lengths.end()), lengths.end());
  const std::size_t len = h.size();
  std::map<std::size_t, Seq> chains;
  for (std::size_t n : lengths) {
    if (len < 2 * n + 1) continue;
    for (std::size_t i = len - 2 * n; i-- > 0;) {
      if (std::equal(h.begin() + i, h.begin() + i + n, h.end() - n)) {
        const std::size_t end = std::min(len - n, i + n + max_chain);
        chains[n] = Seq(h.begin() + i + n, h.begin() + end);
        break;
      }
    }
  }
  MatchResult r;
  if (chains.empty()) return r;
  r.ngram = chains.rbegin()->first;
  r.draft = chains.rbegin()->second;
  std::map<TokenId, int> firsts;
  for (const auto& [n, c] : chains) r.consensus |= ++firsts[c.front()] >= 2;
  return r;
}

Seq random_seq(Rng& rng, std::size_t n, std::uint64_t alphabet) {
  Seq s(n);
  for (auto& t : s) t = static_cast<TokenId>(rng.below(alphabet));
  return s;
}

}  // namespace

TEST_CASE("context match examples") {
  SUBCASE("single length") {
    const Seq h{1, 2, 3, 4, 5, 1, 2, 3};
    const auto r = context_match(h, {3});
    CHECK(r.draft == Seq{4, 5});
    CHECK(r.ngram == 3);
    CHECK_FALSE(r.consensus);
  }
  SUBCASE("nothing precedes the suffix") {
    const Seq h{7, 8, 9};
    const auto r = context_match(h);
    CHECK(r.draft.empty());
    CHECK_FALSE(r.consensus);
    CHECK(r.ngram == 0);
  }
  SUBCASE("shorter than every query") {
    CHECK(context_match(Seq{1, 2}).draft.empty());
    CHECK(context_match(Seq{}).draft.empty());
  }
  SUBCASE("consensus from lengths 3 and 4 without a 5-gram match") {
    // [9,1,2,3] occurs earlier followed by 4; the 5-gram [0,9,1,2,3] does not.
    const Seq h{7, 9, 1, 2, 3, 4, 6, 6, 6, 0, 9, 1, 2, 3};
    const auto r = context_match(h);
    CHECK(r.ngram == 4);
    REQUIRE_FALSE(r.draft.empty());
    CHECK(r.draft.front() == 4);
    CHECK(r.consensus);
    CHECK(r == brute_match(h, {3, 4, 5}, 20));
  }
  SUBCASE("most recent occurrence wins") {
    const Seq h{1, 2, 3, 7, 0, 1, 2, 3, 8, 0, 1, 2, 3};
    CHECK(context_match(h, {3}).draft.front() == 8);
  }
}

TEST_CASE("draft chains are capped") {
  Seq h;
  for (int rep = 0; rep < 3; ++rep) {
    for (TokenId t = 0; t < 40; ++t) h.push_back(t);
  }
  const auto r = context_match(h);
  CHECK(r.draft.size() == kMaxSpineContinuation);
  CHECK(context_match(h, {3, 4, 5}, 7).draft.size() == 7);
}

TEST_CASE("context match agrees with a brute-force scan") {
  Rng rng(11);
  for (int trial = 0; trial < 400; ++trial) {
    const Seq h = random_seq(rng, 1 + rng.below(60), 2 + rng.below(4));
    const std::vector<std::size_t> lengths =
        trial % 3 == 0 ? std::vector<std::size_t>{2, 3} : std::vector<std::size_t>{3, 4, 5};
    const auto got = context_match(h, lengths, 20);
    CHECK(got == brute_match(h, lengths, 20));
    if (got.consensus) CHECK_FALSE(got.draft.empty());
    // The draft is a verbatim slice of the history.
    if (!got.draft.empty()) {
      CHECK(std::search(h.begin(), h.end(), got.draft.begin(), got.draft.end()) != h.end());
    }
  }
}

TEST_CASE("incremental index equals a fresh scan") {
  Rng rng(12);
  const Seq all = random_seq(rng, 10000, 6);
  ContextIndex index;
  std::size_t at = 0;
  int checks = 0;
  while (at < all.size()) {
    const std::size_t step = std::min<std::size_t>(1 + rng.below(200), all.size() - at);
    index.update(std::span<const TokenId>(all).subspan(at, step));
    at += step;
    const Seq prefix(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(at));
    CHECK(index.match() == brute_match(prefix, {3, 4, 5}, 20));
    ++checks;
  }
  CHECK(checks >= 100);

  const auto before = index.match();
  index.update({});
  CHECK(index.match() == before);
}

TEST_CASE("context index rejects bad configuration") {
  CHECK_THROWS_AS(ContextIndex(std::vector<std::size_t>{}), InputError);
  CHECK_THROWS_AS(ContextIndex(std::vector<std::size_t>{0, 3}), InputError);
  CHECK_THROWS_AS(ContextIndex(std::vector<std::size_t>{3}, 0), InputError);
}
