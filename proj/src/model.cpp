#include "goose/model.hpp"

#include "goose/rng.hpp"

#include <algorithm>
#include <numeric>

namespace goose {

namespace {

// Hash domains keep the seeded draws of different tables independent.
enum : std::uint64_t {
  kDomainCandidate = 1,
  kDomainWeight = 2,
  kDomainRepeat = 3,
  kDomainNoise = 4,
  kDomainTemplate = 5,
};

}  // namespace

ModelResponse score_tree(const TargetModel& model, const ModelQuery& query, std::size_t top_k) {
  if (query.base.empty()) throw InputError("score_tree: empty base sequence");
  const std::size_t vocab = model.vocab_size();
  for (TokenId t : query.base) {
    if (t >= vocab) throw InputError("score_tree: base token out of vocabulary");
  }

  ModelResponse response;
  response.positions.reserve(query.nodes.size() + 1);

  auto score = [&](const ContextPath& path) {
    PositionScores pos;
    pos.top = model.top_k(path, std::max<std::size_t>(top_k, 1));
    if (pos.top.empty()) throw InternalError("score_tree: model returned no candidates");
    pos.greedy = pos.top.front().token;
    if (top_k == 0) pos.top.clear();
    return pos;
  };

  response.positions.push_back(score(ContextPath(query.base, {})));

  std::vector<TokenId> tail;
  std::vector<std::size_t> sorted;
  for (std::size_t i = 0; i < query.nodes.size(); ++i) {
    const QueryNode& node = query.nodes[i];
    if (node.token >= vocab) throw InputError("score_tree: node token out of vocabulary");
    sorted.assign(node.ancestors.begin(), node.ancestors.end());
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw InputError("score_tree: repeated ancestor index");
    }
    if (!sorted.empty() && sorted.back() >= i) {
      throw InputError("score_tree: ancestor must precede its node");
    }
    tail.clear();
    for (std::size_t a : sorted) tail.push_back(query.nodes[a].token);
    tail.push_back(node.token);
    response.positions.push_back(score(ContextPath(query.base, tail)));
  }
  return response;
}

ModelResponse score_prefix(const TargetModel& model, std::span<const TokenId> tokens,
                           std::size_t top_k) {
  if (tokens.empty()) throw InputError("score_prefix: empty sequence");
  ModelResponse response;
  response.positions.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] >= model.vocab_size()) throw InputError("score_prefix: token out of vocabulary");
    PositionScores pos;
    pos.top = model.top_k(ContextPath(tokens.first(i + 1), {}), std::max<std::size_t>(top_k, 1));
    pos.greedy = pos.top.front().token;
    if (top_k == 0) pos.top.clear();
    response.positions.push_back(std::move(pos));
  }
  return response;
}

TokenSequence ar_decode(const TargetModel& model, std::span<const TokenId> prompt,
                        std::size_t max_tokens) {
  TokenSequence history(prompt.begin(), prompt.end());
  TokenSequence out;
  out.reserve(max_tokens);
  while (out.size() < max_tokens) {
    ModelQuery q{history, {}};
    const TokenId next = score_tree(model, q, 1).positions.front().greedy;
    out.push_back(next);
    history.push_back(next);
    if (next == model.eos()) break;
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string to_string(SyntheticKind kind) {
  return kind == SyntheticKind::MarkovOrder2 ? "markov-order-2" : "template-repeater";
}

SyntheticKind synthetic_kind_from_string(const std::string& name) {
  if (name == "markov-order-2") return SyntheticKind::MarkovOrder2;
  if (name == "template-repeater") return SyntheticKind::TemplateRepeater;
  throw InputError("unknown synthetic model kind: " + name);
}

void to_json(nlohmann::json& j, const SyntheticModelSpec& spec) {
  j = nlohmann::json{{"kind", to_string(spec.kind)},
                     {"seed", spec.seed},
                     {"vocab", spec.vocab},
                     {"repetition", spec.repetition}};
}

void from_json(const nlohmann::json& j, SyntheticModelSpec& spec) {
  try {
    spec.kind = synthetic_kind_from_string(j.at("kind").get<std::string>());
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.vocab = j.at("vocab").get<std::size_t>();
    spec.repetition = j.value("repetition", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad model spec: ") + e.what());
  }
}

SyntheticModel::SyntheticModel(const SyntheticModelSpec& spec) : spec_(spec) {
  if (spec.vocab < 2) throw InputError("synthetic model needs vocab >= 2");
  if (!(spec.repetition >= 0.0 && spec.repetition <= 1.0)) {
    throw InputError("repetition must lie in [0, 1]");
  }
  if (spec.kind != SyntheticKind::TemplateRepeater) return;

  // Distinct template tokens drawn from the non-EOS vocabulary.
  const std::size_t usable = spec.vocab - 1;
  const std::size_t length = std::clamp<std::size_t>(usable / 4, 1, 32);
  std::vector<TokenId> pool(usable);
  std::iota(pool.begin(), pool.end(), TokenId{0});
  Rng rng(hash_values(spec.seed, kDomainTemplate));
  for (std::size_t i = 0; i < length; ++i) {
    const std::size_t j = i + rng.below(usable - i);
    std::swap(pool[i], pool[j]);
  }
  template_.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(length));
  template_pos_.assign(spec.vocab, -1);
  for (std::size_t i = 0; i < template_.size(); ++i) {
    template_pos_[template_[i]] = static_cast<int>(i);
  }
}

std::vector<TokenId> SyntheticModel::candidates(TokenId prev, TokenId cur) const {
  const std::size_t usable = spec_.vocab - 1;
  const std::size_t fanout = std::min(kFanout, usable);
  std::vector<TokenId> out;
  out.reserve(fanout);
  for (std::uint64_t draw = 0; out.size() < fanout; ++draw) {
    const auto t = static_cast<TokenId>(
        hash_values(spec_.seed, kDomainCandidate, prev, cur, draw) % usable);
    if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
  }
  return out;
}

double SyntheticModel::candidate_weight(TokenId prev, TokenId cur, TokenId next) const {
  return 0.1 + 0.5 * to_unit(hash_values(spec_.seed, kDomainWeight, prev, cur, next));
}

std::vector<ScoredToken> SyntheticModel::top_k(const ContextPath& context, std::size_t k) const {
  const std::size_t n = context.size();
  const TokenId cur = context.from_back(0);
  const auto prev = n >= 2 ? context.from_back(1) : static_cast<TokenId>(spec_.vocab);

  std::vector<TokenId> cands = candidates(prev, cur);
  std::vector<ScoredToken> listed;
  listed.reserve(cands.size() + 1);
  for (TokenId c : cands) listed.push_back({c, candidate_weight(prev, cur, c)});

  if (spec_.kind == SyntheticKind::TemplateRepeater) {
    // The winner gets weight 1; a template continuation stays listed as a
    // strong alternative when the model breaks away from the template.
    TokenId winner = cands[hash_values(spec_.seed, kDomainNoise, n, prev, cur) % cands.size()];
    const int pos = cur < template_pos_.size() ? template_pos_[cur] : -1;
    if (pos >= 0) {
      const TokenId cont = template_[(static_cast<std::size_t>(pos) + 1) % template_.size()];
      const bool repeat =
          to_unit(hash_values(spec_.seed, kDomainRepeat, n, cur)) < spec_.repetition;
      if (repeat) winner = cont;
      auto it = std::find_if(listed.begin(), listed.end(),
                             [&](const ScoredToken& s) { return s.token == cont; });
      if (it == listed.end()) listed.push_back({cont, 0.5});
    }
    auto it = std::find_if(listed.begin(), listed.end(),
                           [&](const ScoredToken& s) { return s.token == winner; });
    it->score = 1.0;
  }

  double total = 0.0;
  for (const auto& s : listed) total += s.score;
  for (auto& s : listed) s.score = s.score / total * (1.0 - kResidualMass);
  std::sort(listed.begin(), listed.end(), score_order);

  const std::size_t others = spec_.vocab - listed.size();
  const double residual = others > 0 ? kResidualMass / static_cast<double>(others) : 0.0;

  std::vector<ScoredToken> out;
  out.reserve(std::min(k, spec_.vocab));
  // Listed scores always exceed the residual share, so listed tokens lead.
  for (const auto& s : listed) {
    if (out.size() == k) return out;
    out.push_back(s);
  }
  for (TokenId t = 0; t < spec_.vocab && out.size() < k; ++t) {
    if (std::none_of(listed.begin(), listed.end(),
                     [&](const ScoredToken& s) { return s.token == t; })) {
      out.push_back({t, residual});
    }
  }
  return out;
}

std::unique_ptr<SyntheticModel> build_synthetic(const SyntheticModelSpec& spec) {
  return std::make_unique<SyntheticModel>(spec);
}

}  // namespace goose
