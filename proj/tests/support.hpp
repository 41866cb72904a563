#pragma once

#include "goose/model.hpp"
#include "goose/spine_tree.hpp"

#include <functional>
#include <tuple>
#include <vector>

namespace goose::testing {

/// Model whose greedy token is an arbitrary function of the full path. The
/// greedy token scores 0.9; the rest of the vocabulary shares 0.1 evenly.
class ScriptedModel final : public TargetModel {
 public:
  using Rule = std::function<TokenId(const std::vector<TokenId>&)>;

  ScriptedModel(std::size_t vocab, Rule rule) : vocab_(vocab), rule_(std::move(rule)) {}

  std::size_t vocab_size() const noexcept override { return vocab_; }
  TokenId eos() const noexcept override { return static_cast<TokenId>(vocab_ - 1); }

  std::vector<ScoredToken> top_k(const ContextPath& context, std::size_t k) const override {
    ++calls;
    std::vector<TokenId> path;
    for (std::size_t i = 0; i < context.size(); ++i) path.push_back(context[i]);
    const TokenId g = rule_(path);
    std::vector<ScoredToken> out{{g, 0.9}};
    const double rest = 0.1 / static_cast<double>(vocab_ - 1);
    for (TokenId t = 0; t < vocab_ && out.size() < k; ++t) {
      if (t != g) out.push_back({t, rest});
    }
    out.resize(std::min(out.size(), k));
    return out;
  }

  mutable std::size_t calls = 0;

 private:
  std::size_t vocab_;
  Rule rule_;
};

/// Greedy token = (last + step) mod (vocab - 1): never EOS.
inline ScriptedModel counting_model(std::size_t vocab, TokenId step = 1) {
  return ScriptedModel(vocab, [vocab, step](const std::vector<TokenId>& p) {
    return static_cast<TokenId>((p.back() + step) % (vocab - 1));
  });
}

/// Tree from (token, source, parent) triples; node 0 is the anchor root.
inline SpineTree make_tree(TokenId anchor,
                           const std::vector<std::tuple<TokenId, Source, std::size_t>>& nodes) {
  SpineTree t;
  t.nodes.push_back({anchor, Source::Pld, kNoParent, 0, 0, 1.0});
  for (const auto& [tok, src, parent] : nodes) {
    DraftNode n;
    n.token = tok;
    n.source = src;
    n.parent = parent;
    n.depth = t.nodes[parent].depth + 1;
    n.branch_depth = src == Source::Tr ? t.nodes[parent].branch_depth + 1 : 0;
    t.nodes.push_back(n);
    if (src == Source::Pld) t.spine.push_back(t.nodes.size() - 1);
  }
  t.budget = t.nodes.size();
  t.mask = ancestor_mask(t);
  return t;
}

}  // namespace goose::testing
