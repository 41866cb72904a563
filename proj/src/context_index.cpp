#include "goose/context_index.hpp"

#include "goose/rng.hpp"

#include <algorithm>
#include <limits>

namespace goose {

namespace {
constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
}

ContextIndex::ContextIndex(std::vector<std::size_t> ngram_lengths, std::size_t max_chain)
    : lengths_(std::move(ngram_lengths)), max_chain_(max_chain) {
  if (lengths_.empty()) throw InputError("context index needs at least one n-gram length");
  if (max_chain_ == 0) throw InputError("max chain length must be positive");
  std::sort(lengths_.begin(), lengths_.end());
  lengths_.erase(std::unique(lengths_.begin(), lengths_.end()), lengths_.end());
  if (lengths_.front() == 0) throw InputError("n-gram length must be positive");
  for (std::size_t n : lengths_) tables_.push_back(Table{n, {}, 0});
}

std::uint64_t ContextIndex::key(std::size_t start, std::size_t n) const noexcept {
  std::uint64_t h = mix64(n);
  for (std::size_t i = 0; i < n; ++i) h = hash_combine(h, history_[start + i]);
  return h;
}

bool ContextIndex::same(std::size_t a, std::size_t b, std::size_t n) const noexcept {
  return std::equal(history_.begin() + static_cast<std::ptrdiff_t>(a),
                    history_.begin() + static_cast<std::ptrdiff_t>(a + n),
                    history_.begin() + static_cast<std::ptrdiff_t>(b));
}

void ContextIndex::update(std::span<const TokenId> delta) {
  history_.insert(history_.end(), delta.begin(), delta.end());
  const std::size_t len = history_.size();
  for (Table& t : tables_) {
    if (len < t.n) continue;
    for (std::size_t start = t.indexed; start + t.n <= len; ++start) {
      t.starts[key(start, t.n)].push_back(start);
    }
    t.indexed = len - t.n + 1;
  }
}

std::size_t ContextIndex::find(const Table& table) const {
  const std::size_t len = history_.size();
  const std::size_t n = table.n;
  // Need i + n < len - n for a non-empty continuation before the query.
  if (len < 2 * n + 1) return npos;
  const std::size_t query = len - n;
  const std::size_t last_ok = len - 2 * n - 1;

  auto it = table.starts.find(key(query, n));
  if (it == table.starts.end()) return npos;
  const auto& starts = it->second;
  auto upper = std::upper_bound(starts.begin(), starts.end(), last_ok);
  while (upper != starts.begin()) {
    --upper;
    if (same(*upper, query, n)) return *upper + n;
  }
  return npos;
}

MatchResult ContextIndex::match() const {
  MatchResult result;
  std::vector<TokenId> firsts;
  // Longest n first so the first hit is the preferred chain.
  for (auto t = tables_.rbegin(); t != tables_.rend(); ++t) {
    const std::size_t begin = find(*t);
    if (begin == npos) continue;
    firsts.push_back(history_[begin]);
    if (result.ngram == 0) {
      const std::size_t end = std::min(history_.size() - t->n, begin + max_chain_);
      result.draft.assign(history_.begin() + static_cast<std::ptrdiff_t>(begin),
                          history_.begin() + static_cast<std::ptrdiff_t>(end));
      result.ngram = t->n;
    }
  }
  std::sort(firsts.begin(), firsts.end());
  result.consensus = std::adjacent_find(firsts.begin(), firsts.end()) != firsts.end();
  return result;
}

MatchResult context_match(std::span<const TokenId> history,
                          const std::vector<std::size_t>& ngram_lengths, std::size_t max_chain) {
  ContextIndex index(ngram_lengths, max_chain);
  index.update(history);
  return index.match();
}

}  // namespace goose
