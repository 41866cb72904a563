#include "goose/adjacency_table.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace goose {

AdjacencyTable::AdjacencyTable(std::size_t vocab, std::size_t top_k, double min_score)
    : top_k_(top_k), min_score_(min_score), unigram_(vocab) {
  if (vocab == 0) throw InputError("adjacency table needs a non-empty vocabulary");
}

void AdjacencyTable::merge(std::vector<ScoredToken>& list,
                           std::span<const ScoredToken> incoming) const {
  for (const ScoredToken& s : incoming) {
    auto it = std::find_if(list.begin(), list.end(),
                           [&](const ScoredToken& e) { return e.token == s.token; });
    if (it != list.end()) {
      it->score = s.score;
    } else {
      list.push_back(s);
    }
  }
  std::sort(list.begin(), list.end(), score_order);
  if (list.size() > top_k_) list.resize(top_k_);
  std::erase_if(list, [&](const ScoredToken& e) { return !(e.score >= min_score_); });
}

void AdjacencyTable::harvest(const HarvestItem& item) {
  if (item.cur >= unigram_.size()) throw InputError("harvest: token out of vocabulary");
  merge(unigram_[item.cur], item.top);
  if (item.prev) merge(bigram_[pair_key(*item.prev, item.cur)], item.top);
}

std::span<const ScoredToken> AdjacencyTable::unigram(TokenId cur) const {
  if (cur >= unigram_.size()) return {};
  return unigram_[cur];
}

std::span<const ScoredToken> AdjacencyTable::bigram(TokenId prev, TokenId cur) const {
  auto it = bigram_.find(pair_key(prev, cur));
  if (it == bigram_.end()) return {};
  return it->second;
}

std::vector<ScoredToken> AdjacencyTable::successors(std::optional<TokenId> prev, TokenId cur,
                                                    std::size_t width) const {
  std::span<const ScoredToken> list;
  if (prev) list = bigram(*prev, cur);
  if (list.empty()) list = unigram(cur);
  std::vector<ScoredToken> out;
  for (const ScoredToken& s : list) {
    if (out.size() == width) break;
    if (s.score >= min_score_) out.push_back(s);
  }
  return out;
}

nlohmann::json AdjacencyTable::to_json() const {
  auto entries = [](std::span<const ScoredToken> list) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : list) arr.push_back({s.token, s.score});
    return arr;
  };
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t t = 0; t < unigram_.size(); ++t) {
    if (!unigram_[t].empty()) j["u:" + std::to_string(t)] = entries(unigram_[t]);
  }
  for (const auto& [k, list] : bigram_) {
    if (list.empty()) continue;
    j["b:" + std::to_string(k >> 32) + "," + std::to_string(k & 0xffffffffULL)] = entries(list);
  }
  return j;
}

std::size_t confidence_width(double score, std::span<const double> siblings, std::size_t base,
                             double min_score) {
  if (!(score >= min_score)) return 0;
  double top = score;
  for (double s : siblings) top = std::max(top, s);
  const double w = std::round(static_cast<double>(base) * score / top);
  return w > 0.0 ? static_cast<std::size_t>(w) : 0;
}

}  // namespace goose
