#include "goose/verifier.hpp"

namespace goose {

const char* to_string(PathCategory c) {
  switch (c) {
    case PathCategory::Empty: return "empty";
    case PathCategory::PurePld: return "pure-PLD";
    case PathCategory::SpineContinuation: return "spine-continuation";
    case PathCategory::PureTr: return "pure-TR";
  }
  return "?";
}

PathCategory classify(std::span<const Source> path) {
  if (path.empty()) return PathCategory::Empty;
  if (path.front() == Source::Tr) return PathCategory::PureTr;
  for (Source s : path) {
    if (s == Source::Tr) return PathCategory::SpineContinuation;
  }
  return PathCategory::PurePld;
}

WalkResult unified_greedy_walk(const TargetModel& model, const SpineTree& tree,
                               std::span<const TokenId> history, std::size_t top_k) {
  if (tree.nodes.empty()) throw InputError("unified_greedy_walk: empty tree");
  WalkResult out;
  out.response = score_tree(model, to_query(tree, history), top_k);
  const auto& pos = out.response.positions;

  std::vector<std::vector<std::size_t>> kids(tree.nodes.size());
  for (std::size_t i = 1; i < tree.nodes.size(); ++i) kids[tree.nodes[i].parent].push_back(i);

  std::vector<Source> sources;
  std::size_t v = 0;
  while (!kids[v].empty()) {
    const TokenId want = pos[v].greedy;
    std::size_t next = kNoParent;
    for (Source pass : {Source::Pld, Source::Tr}) {
      for (std::size_t c : kids[v]) {
        if (tree.nodes[c].source == pass && tree.nodes[c].token == want) {
          next = c;
          break;
        }
      }
      if (next != kNoParent) break;
    }
    if (next == kNoParent) break;
    out.accepted.push_back(next);
    out.tokens.push_back(tree.nodes[next].token);
    sources.push_back(tree.nodes[next].source);
    (tree.nodes[next].source == Source::Pld ? out.accepted_pld : out.accepted_tr) += 1;
    v = next;
  }
  out.bonus = pos[v].greedy;
  out.category = classify(sources);
  return out;
}

WalkResult linear_verify(const TargetModel& model, std::span<const TokenId> chain,
                         std::span<const TokenId> history, std::size_t top_k) {
  if (chain.empty()) throw InputError("linear_verify: empty chain");
  ModelQuery q{history, {}};
  q.nodes.reserve(chain.size());
  for (std::size_t i = 0; i < chain.size(); ++i) {
    QueryNode n{chain[i], {}};
    for (std::size_t a = 0; a < i; ++a) n.ancestors.push_back(a);
    q.nodes.push_back(std::move(n));
  }

  WalkResult out;
  out.response = score_tree(model, q, top_k);
  const auto& pos = out.response.positions;
  std::size_t k = 0;
  while (k < chain.size() && pos[k].greedy == chain[k]) {
    out.accepted.push_back(k + 1);
    out.tokens.push_back(chain[k]);
    ++k;
  }
  out.accepted_pld = k;
  out.bonus = pos[k].greedy;
  out.category = k > 0 ? PathCategory::PurePld : PathCategory::Empty;
  return out;
}

}  // namespace goose
