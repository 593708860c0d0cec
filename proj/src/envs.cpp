#include "rlrec/envs.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "rlrec/error.hpp"

namespace rlrec {

TaskData::TaskData(Corpus c, RelevanceDict r)
    : corpus(std::move(c)), relevance(std::move(r)), index(corpus) {}

std::shared_ptr<const TaskData> TaskData::load(const std::filesystem::path& corpus_path,
                                               const std::filesystem::path& relevance_path) {
  Corpus corpus = load_corpus(corpus_path);
  RelevanceDict relevance = load_relevance(relevance_path, corpus);
  return std::make_shared<const TaskData>(std::move(corpus), std::move(relevance));
}

std::optional<std::vector<std::string>> decode_query(const ActionSequence& action, const Vocabulary& vocabulary) {
  const auto stop = static_cast<int>(vocabulary.size());
  std::vector<std::string> out;
  for (int tok : action.tokens) {
    if (tok == stop) break;
    if (tok < 0 || tok > stop) return std::nullopt;
    out.push_back(vocabulary.token(tok));
  }
  if (out.empty()) return std::nullopt;
  return out;
}

ActionSequence encode_query(std::span<const std::string> tokens, const Vocabulary& vocabulary) {
  ActionSequence action;
  for (const auto& t : tokens) {
    auto id = vocabulary.find(t);
    if (!id) throw Error("token outside the action vocabulary: " + t);
    action.tokens.push_back(*id);
  }
  action.tokens.push_back(static_cast<int>(vocabulary.size()));
  return action;
}

std::optional<std::vector<int>> decode_permutation(const ActionSequence& action, int m) {
  std::vector<int> perm;
  std::vector<bool> used(static_cast<std::size_t>(std::max(m, 0)), false);
  for (int tok : action.tokens) {
    if (tok == m) break;  // STOP
    if (tok < 0 || tok > m) return std::nullopt;
    if (used[static_cast<std::size_t>(tok)]) return std::nullopt;
    used[static_cast<std::size_t>(tok)] = true;
    perm.push_back(tok);
  }
  if (static_cast<int>(perm.size()) != m) return std::nullopt;
  return perm;
}

std::optional<std::vector<int>> parse_permutation_text(std::string_view text, int m) {
  constexpr std::string_view prefix = "perm:";
  if (text.substr(0, prefix.size()) != prefix) return std::nullopt;
  text.remove_prefix(prefix.size());
  ActionSequence action;
  while (!text.empty()) {
    const auto comma = text.find(',');
    std::string_view piece = text.substr(0, comma);
    while (!piece.empty() && piece.front() == ' ') piece.remove_prefix(1);
    while (!piece.empty() && piece.back() == ' ') piece.remove_suffix(1);
    int value = -1;
    auto [ptr, ec] = std::from_chars(piece.data(), piece.data() + piece.size(), value);
    if (ec != std::errc{} || ptr != piece.data() + piece.size() || value < 0 || value >= m) return std::nullopt;
    action.tokens.push_back(value);
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  action.tokens.push_back(m);
  return decode_permutation(action, m);
}

void EnvConfig::validate(const Corpus& corpus) const {
  bm25.validate();
  reward.validate(&corpus);
  if (eval_cutoff < 1) throw ConfigError("eval cutoff must be >= 1");
  if (train_cutoff < eval_cutoff) throw ConfigError("train cutoff must be >= eval cutoff");
  if (history_window < 1) throw ConfigError("history window must be >= 1");
  if (max_query_length < 1) throw ConfigError("max query length must be >= 1");
}

Environment::Environment(std::shared_ptr<const TaskData> data, EnvConfig config)
    : data_(std::move(data)), config_(std::move(config)) {
  if (!data_) throw Error("environment needs task data");
  config_.validate(data_->corpus);
}

double Environment::reward(std::string_view state_id, const ActionSequence& action) const {
  return reward(data_->relevance.index_of(state_id), action);
}

std::vector<std::size_t> Environment::states() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < data_->relevance.size(); ++i) {
    if (data_->relevance.state(i).kind == kind()) out.push_back(i);
  }
  return out;
}

NeuralDims Environment::policy_dims(int embed, int hidden) const {
  return NeuralDims{num_features(), action_vocab_size(), max_length(), embed, hidden};
}

void Environment::require_kind(std::size_t state) const {
  const StateRecord& s = data_->relevance.state(state);
  if (s.kind != kind())
    throw Error("state " + s.id + " is a " + std::string(to_string(s.kind)) + " state, environment handles " +
                std::string(to_string(kind())));
}

// ------------------------------------------------------------- query tasks

PolicyInput QueryEnv::policy_input(std::size_t state) const {
  require_kind(state);
  PolicyInput input;
  input.state = state;
  input.features = state_tokens(state);
  return input;
}

double QueryEnv::reward_query(std::size_t state, const std::optional<std::vector<std::string>>& query) const {
  require_kind(state);
  RewardContext ctx;
  ctx.decoded = query.has_value();
  ctx.targets = data_->relevance.targets(state);
  ctx.corpus = &data_->corpus;
  ctx.default_cutoff = config_.train_cutoff;
  if (!ctx.decoded) return composite_reward(config_.reward, ctx);
  const auto ids = data_->corpus.encode(*query);
  const RankedList hits = retrieve(data_->index, config_.bm25, ids, config_.train_cutoff);
  const auto ranking = ranked_ids(data_->corpus, hits);
  ctx.ranking = ranking;
  return composite_reward(config_.reward, ctx);
}

EvalScores QueryEnv::evaluate_query(std::size_t state, const std::optional<std::vector<std::string>>& query) const {
  require_kind(state);
  EvalScores scores;
  if (!query) return scores;
  scores.valid = true;
  const auto ids = data_->corpus.encode(*query);
  const auto ranking = ranked_ids(data_->corpus, retrieve(data_->index, config_.bm25, ids, config_.eval_cutoff));
  const auto targets = data_->relevance.targets(state);
  scores.ndcg = ndcg_at_k(ranking, targets, config_.eval_cutoff);
  scores.recall = recall_at_k(ranking, targets, config_.eval_cutoff);
  return scores;
}

double QueryEnv::reward(std::size_t state, const ActionSequence& action) const {
  return reward_query(state, decode_query(action, data_->corpus.vocabulary()));
}

EvalScores QueryEnv::evaluate(std::size_t state, const ActionSequence& action) const {
  return evaluate_query(state, decode_query(action, data_->corpus.vocabulary()));
}

double QueryEnv::reward_text(std::size_t state, std::string_view text) const {
  auto tokens = tokenize(text);
  if (tokens.empty()) return reward_query(state, std::nullopt);
  return reward_query(state, std::move(tokens));
}

std::vector<TokenId> ProductSearchEnv::state_tokens(std::size_t state) const {
  const auto tokens = tokenize(data_->relevance.state(state).query());
  return data_->corpus.encode(tokens);
}

SeqRecEnv::SeqRecEnv(std::shared_ptr<const TaskData> data, EnvConfig config)
    : QueryEnv(std::move(data), std::move(config)) {}

std::vector<TokenId> SeqRecEnv::state_tokens(std::size_t state) const {
  const auto& history = data_->relevance.state(state).history();
  const std::size_t start = history.size() > config_.history_window ? history.size() - config_.history_window : 0;
  std::vector<TokenId> out;
  for (std::size_t i = start; i < history.size(); ++i) {
    const auto ord = data_->corpus.ordinal(history[i]);
    if (!ord) throw Error("history item missing from corpus: " + history[i]);
    const auto title = data_->corpus.title_tokens(*ord);
    out.insert(out.end(), title.begin(), title.end());
  }
  return out;
}

// ------------------------------------------------------------------ rerank

RerankEnv::RerankEnv(std::shared_ptr<const TaskData> data, EnvConfig config)
    : Environment(std::move(data), std::move(config)) {
  for (std::size_t i = 0; i < data_->relevance.size(); ++i) {
    const StateRecord& s = data_->relevance.state(i);
    if (s.kind != TaskKind::rerank) continue;
    const int m = static_cast<int>(s.rerank().candidates.size());
    if (slots_ == 0) slots_ = m;
    if (m != slots_) throw ConfigError("rerank states must share one candidate count");
  }
  if (slots_ < 2) throw ConfigError("rerank environment needs states with at least 2 candidates");
}

PolicyInput RerankEnv::policy_input(std::size_t state) const {
  require_kind(state);
  PolicyInput input;
  input.state = state;
  input.features = data_->corpus.encode(tokenize(data_->relevance.state(state).rerank().query));
  if (config_.masked_permutations) input.permutation_slots = slots_;
  return input;
}

std::vector<std::string> RerankEnv::permuted(std::size_t state, const std::vector<int>& perm) const {
  const auto& candidates = data_->relevance.state(state).rerank().candidates;
  std::vector<std::string> out;
  out.reserve(perm.size());
  for (int slot : perm) out.push_back(candidates[static_cast<std::size_t>(slot)]);
  return out;
}

double RerankEnv::reward_permutation(std::size_t state, const std::optional<std::vector<int>>& perm) const {
  require_kind(state);
  RewardContext ctx;
  ctx.decoded = perm.has_value();
  ctx.targets = data_->relevance.targets(state);
  ctx.corpus = &data_->corpus;
  ctx.default_cutoff = config_.train_cutoff;
  if (!perm) return composite_reward(config_.reward, ctx);
  const auto ranking = permuted(state, *perm);
  ctx.ranking = ranking;
  return composite_reward(config_.reward, ctx);
}

EvalScores RerankEnv::evaluate_permutation(std::size_t state, const std::optional<std::vector<int>>& perm) const {
  require_kind(state);
  EvalScores scores;
  if (!perm) return scores;
  scores.valid = true;
  const auto ranking = permuted(state, *perm);
  const auto targets = data_->relevance.targets(state);
  scores.ndcg = ndcg_at_k(ranking, targets, config_.eval_cutoff);
  scores.recall = recall_at_k(ranking, targets, config_.eval_cutoff);
  return scores;
}

double RerankEnv::reward(std::size_t state, const ActionSequence& action) const {
  return reward_permutation(state, decode_permutation(action, slots_));
}

EvalScores RerankEnv::evaluate(std::size_t state, const ActionSequence& action) const {
  return evaluate_permutation(state, decode_permutation(action, slots_));
}

double RerankEnv::reward_text(std::size_t state, std::string_view text) const {
  return reward_permutation(state, parse_permutation_text(text, slots_));
}

std::unique_ptr<Environment> make_environment(TaskKind kind, std::shared_ptr<const TaskData> data,
                                              EnvConfig config) {
  switch (kind) {
    case TaskKind::product_search: return std::make_unique<ProductSearchEnv>(std::move(data), std::move(config));
    case TaskKind::seq_rec: return std::make_unique<SeqRecEnv>(std::move(data), std::move(config));
    case TaskKind::rerank: return std::make_unique<RerankEnv>(std::move(data), std::move(config));
  }
  throw ConfigError("unknown task kind");
}

EnvironmentSet::EnvironmentSet(std::shared_ptr<const TaskData> data, const EnvConfig& config)
    : data_(std::move(data)), by_kind_(3) {
  for (std::size_t i = 0; i < data_->relevance.size(); ++i) {
    const auto k = static_cast<std::size_t>(data_->relevance.state(i).kind);
    if (!by_kind_[k]) by_kind_[k] = make_environment(data_->relevance.state(i).kind, data_, config);
  }
}

const Environment& EnvironmentSet::for_state(std::size_t state) const {
  const auto k = static_cast<std::size_t>(data_->relevance.state(state).kind);
  return *by_kind_[k];
}

// ------------------------------------------------------------------ oracle

OracleResult best_query_oracle(const QueryEnv& env, std::size_t state, int max_length, Objective objective,
                               std::size_t bound) {
  const auto& vocab = env.data().corpus.vocabulary();
  const double v = static_cast<double>(vocab.size());
  if (max_length < 1) throw Error("oracle query length must be >= 1");
  if (std::pow(v, max_length) > static_cast<double>(bound))
    throw EnumerationBoundError("oracle search space |V|^L exceeds " + std::to_string(bound));

  OracleResult best;
  best.reward = -1.0;
  std::vector<std::string> query;
  auto score = [&](const std::vector<std::string>& q) {
    return objective == Objective::train ? env.reward_query(state, q) : env.evaluate_query(state, q).ndcg;
  };
  // Non-decreasing token ids enumerate each multiset once.
  auto recurse = [&](auto&& self, std::size_t first) -> void {
    for (std::size_t t = first; t < vocab.size(); ++t) {
      query.push_back(vocab.token(static_cast<TokenId>(t)));
      const double r = score(query);
      if (r > best.reward) {
        best.reward = r;
        best.query = query;
      }
      if (static_cast<int>(query.size()) < max_length) self(self, t);
      query.pop_back();
    }
  };
  recurse(recurse, 0);
  return best;
}

}  // namespace rlrec
