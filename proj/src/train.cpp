#include "rlrec/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "rlrec/error.hpp"
#include "rlrec/parallel.hpp"

namespace rlrec {

EvalSummary evaluate_greedy(const Environment& env, const Policy& policy, std::span<const std::size_t> states) {
  EvalSummary out;
  out.states = states.size();
  if (states.empty()) return out;
  std::vector<EvalScores> scores(states.size());
  parallel_for(states.size(), [&](std::size_t i) {
    scores[i] = env.evaluate(states[i], greedy(policy, env.policy_input(states[i])));
  });
  for (const auto& s : scores) {
    out.ndcg += s.ndcg;
    out.recall += s.recall;
    out.valid_rate += s.valid ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(states.size());
  out.ndcg /= n;
  out.recall /= n;
  out.valid_rate /= n;
  return out;
}

double sampled_valid_rate(const Environment& env, const Policy& policy, std::span<const std::size_t> states,
                          const SamplerConfig& sampler, int samples_per_state, std::uint64_t seed) {
  if (states.empty() || samples_per_state < 1) return 0.0;
  std::vector<int> valid(states.size(), 0);
  parallel_for(states.size(), [&](std::size_t i) {
    Rng rng = Rng::derive(seed, i);
    const PolicyInput input = env.policy_input(states[i]);
    for (int k = 0; k < samples_per_state; ++k) {
      if (env.evaluate(states[i], sample(policy, input, sampler, rng).action).valid) ++valid[i];
    }
  });
  const double total = std::accumulate(valid.begin(), valid.end(), 0.0);
  return total / (static_cast<double>(states.size()) * samples_per_state);
}

ActionSequence action_from_text(const Environment& env, std::string_view text) {
  ActionSequence action;
  if (env.kind() == TaskKind::rerank) {
    const int m = env.action_vocab_size() - 1;
    const auto perm = parse_permutation_text(text, m);
    if (!perm) throw Error("not a permutation of " + std::to_string(m) + " slots: " + std::string(text));
    action.tokens = *perm;
    action.tokens.push_back(m);
  } else {
    const auto tokens = tokenize(text);
    if (tokens.empty()) throw Error("empty query text");
    action = encode_query(tokens, env.data().corpus.vocabulary());
  }
  validate_action(action, env.action_vocab_size(), env.max_length());
  return action;
}

std::vector<std::vector<std::pair<ActionSequence, double>>> teacher_actions(
    const Environment& env, const Teacher& teacher, std::span<const std::size_t> states) {
  const auto& rel = env.data().relevance;
  std::vector<std::vector<std::pair<ActionSequence, double>>> out;
  for (std::size_t s : states) {
    const std::string& id = rel.state(s).id;
    auto it = std::find(teacher.state_ids.begin(), teacher.state_ids.end(), id);
    if (it == teacher.state_ids.end()) throw ConfigError("teacher has no outputs for state " + id);
    const auto& outs = teacher.outputs[static_cast<std::size_t>(it - teacher.state_ids.begin())];
    std::vector<std::pair<ActionSequence, double>> dist;
    for (const auto& o : outs) {
      try {
        dist.emplace_back(action_from_text(env, o.text), o.prob);
      } catch (const Error& e) {
        throw ConfigError("teacher output for state " + id + ": " + e.what());
      }
    }
    out.push_back(std::move(dist));
  }
  return out;
}

std::vector<SftExample> sample_teacher_dataset(
    const std::vector<std::vector<std::pair<ActionSequence, double>>>& dist, std::size_t n, Rng& rng) {
  if (dist.empty()) throw Error("teacher dataset needs at least one state");
  std::vector<SftExample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t s = rng.index(dist.size());
    double u = rng.uniform();
    std::size_t k = 0;
    for (; k + 1 < dist[s].size(); ++k) {
      u -= dist[s][k].second;
      if (u < 0.0) break;
    }
    out.push_back({s, dist[s][k].first});
  }
  return out;
}

std::string to_json_line(const StepLog& log) {
  nlohmann::json j = {{"step", log.step},
                      {"mean_reward", log.mean_reward},
                      {"mean_kl", log.mean_kl},
                      {"clip_frac", log.clip_frac}};
  j["nll"] = log.nll ? nlohmann::json(*log.nll) : nlohmann::json(nullptr);
  return j.dump();
}

RunContext RunContext::load(const RunConfig& config) {
  config.validate_paths();
  RunContext ctx;
  ctx.data = TaskData::load(config.corpus, config.relevance);
  ctx.env = make_environment(config.task, ctx.data, config.env);
  const Splits splits = load_splits(config.splits);
  auto resolve = [&](const std::vector<std::string>& ids, const char* name) {
    std::vector<std::size_t> out;
    for (const auto& id : ids) {
      const auto idx = ctx.data->relevance.find(id);
      if (!idx) throw ConfigError(std::string("splits.") + name + ": unknown state id " + id);
      if (ctx.data->relevance.state(*idx).kind != config.task)
        throw ConfigError(std::string("splits.") + name + ": state " + id + " is not a " +
                          std::string(to_string(config.task)) + " state");
      out.push_back(*idx);
    }
    return out;
  };
  ctx.train = resolve(splits.train, "train");
  ctx.valid = resolve(splits.valid, "valid");
  ctx.test = resolve(splits.test, "test");
  if (!config.teacher.empty()) ctx.teacher = load_teacher(config.teacher);
  return ctx;
}

NeuralPolicy initial_policy(const RunConfig& config, const Environment& env) {
  return NeuralPolicy(env.policy_dims(config.embed, config.hidden), Rng::derive(config.seed, 1).next());
}

namespace {

// Tracks the best checkpoint by validation NDCG.
class Selector {
 public:
  Selector(const RunContext& ctx, const NeuralPolicy& initial)
      : ctx_(ctx), best_(initial), score_(evaluate_greedy(*ctx.env, initial, ctx.selection_states())) {}

  void offer(const NeuralPolicy& policy, int step) {
    const EvalSummary s = evaluate_greedy(*ctx_.env, policy, ctx_.selection_states());
    if (s.ndcg > score_.ndcg) {
      score_ = s;
      best_ = policy;
      step_ = step;
    }
  }

  TrainResult finish(EvalSummary initial, std::vector<StepLog> log) {
    TrainResult r{best_, step_, initial, evaluate_greedy(*ctx_.env, best_, ctx_.report_states()), score_,
                  std::move(log)};
    return r;
  }

 private:
  const RunContext& ctx_;
  NeuralPolicy best_;
  EvalSummary score_;
  int step_ = 0;
};

void emit(std::ostream* out, const StepLog& log) {
  if (out) *out << to_json_line(log) << '\n' << std::flush;
}

}  // namespace

TrainResult train_grpo(const RunConfig& config, const RunContext& ctx, NeuralPolicy policy, std::ostream* log_out) {
  const Environment& env = *ctx.env;
  const EvalSummary initial = evaluate_greedy(env, policy, ctx.report_states());
  Selector selector(ctx, policy);
  const NeuralPolicy reference = policy;
  Adam optimizer(policy.parameters().size(), config.grpo.config.learning_rate);

  const auto& rel = ctx.data->relevance;
  std::vector<StepLog> log;
  std::vector<std::size_t> order = ctx.train;
  const std::size_t per_step = config.grpo.batch_states == 0 ? order.size()
                                                            : std::min(order.size(), config.grpo.batch_states);
  for (int step = 1; step <= config.grpo.steps; ++step) {
    std::vector<std::size_t> batch_states;
    if (per_step == order.size()) {
      batch_states = order;
    } else {
      Rng pick = Rng::derive(config.seed, 2, static_cast<std::uint64_t>(step));
      for (std::size_t i = 0; i < per_step; ++i) {
        std::swap(order[i], order[i + pick.index(order.size() - i)]);
        batch_states.push_back(order[i]);
      }
    }
    std::vector<PolicyInput> inputs;
    std::vector<std::string> names;
    for (std::size_t s : batch_states) {
      inputs.push_back(env.policy_input(s));
      names.push_back(rel.state(s).id);
    }
    auto reward = [&](std::size_t i, const ActionSequence& a) { return env.reward(batch_states[i], a); };
    const GrpoReport report = grpo_step(policy, reference, inputs, reward, config.grpo.config, optimizer,
                                        Rng::derive(config.seed, 3, static_cast<std::uint64_t>(step)).next(), names);
    StepLog entry{step, report.mean_reward, report.mean_kl, report.clip_frac, std::nullopt};
    emit(log_out, entry);
    log.push_back(entry);
    if (step % config.eval_interval == 0 || step == config.grpo.steps) selector.offer(policy, step);
  }
  return selector.finish(initial, std::move(log));
}

TrainResult train_sft(const RunConfig& config, const RunContext& ctx, NeuralPolicy policy, std::ostream* log_out) {
  if (!ctx.teacher) throw ConfigError("data.teacher: required when trainer is sft");
  const Environment& env = *ctx.env;
  const EvalSummary initial = evaluate_greedy(env, policy, ctx.report_states());
  Selector selector(ctx, policy);

  const auto dist = teacher_actions(env, *ctx.teacher, ctx.train);
  Rng data_rng = Rng::derive(config.seed, 4);
  const auto data = sample_teacher_dataset(dist, config.sft.samples, data_rng);
  std::vector<PolicyInput> inputs;
  for (std::size_t s : ctx.train) inputs.push_back(env.policy_input(s));

  Adam optimizer(policy.parameters().size(), config.sft.learning_rate);
  std::vector<StepLog> log;
  const std::size_t mb = std::min(config.sft.minibatch_size, data.size());
  std::size_t cursor = 0;
  for (int step = 1; step <= config.sft.steps; ++step) {
    std::vector<SftExample> batch;
    for (std::size_t i = 0; i < mb; ++i) {
      batch.push_back(data[cursor]);
      cursor = (cursor + 1) % data.size();
    }
    std::vector<double> rewards(batch.size());
    parallel_for(batch.size(), [&](std::size_t i) { rewards[i] = env.reward(ctx.train[batch[i].state], batch[i].action); });
    const double nll = sft_step(policy, inputs, batch, optimizer);
    StepLog entry{step, std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(batch.size()),
                  0.0, 0.0, nll};
    emit(log_out, entry);
    log.push_back(entry);
    if (step % config.eval_interval == 0 || step == config.sft.steps) selector.offer(policy, step);
  }
  return selector.finish(initial, std::move(log));
}

TrainResult train(const RunConfig& config, const RunContext& context, std::ostream* log_out) {
  NeuralPolicy policy = initial_policy(config, *context.env);
  if (config.trainer == TrainerKind::sft) return train_sft(config, context, std::move(policy), log_out);
  if (!config.grpo.sft_warm_start) return train_grpo(config, context, std::move(policy), log_out);
  // The warm-start fit is not logged; the reported initial eval stays the
  // random initialization so runs with and without it compare directly.
  const EvalSummary initial = evaluate_greedy(*context.env, policy, context.report_states());
  TrainResult warm = train_sft(config, context, std::move(policy));
  TrainResult result = train_grpo(config, context, std::move(warm.best), log_out);
  result.initial = initial;
  return result;
}

void save_checkpoint(const NeuralPolicy& policy, const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  policy.save(out, corpus.vocabulary().fingerprint());
  if (!out) throw Error("write failed: " + path.string());
}

NeuralPolicy load_checkpoint(const std::filesystem::path& path, const Corpus& corpus) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open checkpoint: " + path.string());
  std::uint64_t fp = 0;
  NeuralPolicy policy = NeuralPolicy::load(in, &fp);
  if (fp != corpus.vocabulary().fingerprint())
    throw IngestError("checkpoint " + path.string() + " was trained on a different vocabulary");
  return policy;
}

std::string format_eval_table(const TrainResult& result, std::size_t cutoff) {
  char line[128];
  std::string out;
  std::snprintf(line, sizeof line, "%-8s %10s %10s %7s %7s\n", "policy", ("ndcg@" + std::to_string(cutoff)).c_str(),
                ("recall@" + std::to_string(cutoff)).c_str(), "valid", "states");
  out += line;
  auto row = [&](const char* name, const EvalSummary& s) {
    std::snprintf(line, sizeof line, "%-8s %10.4f %10.4f %7.3f %7zu\n", name, s.ndcg, s.recall, s.valid_rate, s.states);
    out += line;
  };
  row("initial", result.initial);
  row("best", result.final);
  return out;
}

TrainResult run_training(const RunConfig& config) {
  const RunContext ctx = RunContext::load(config);
  std::filesystem::create_directories(config.out);
  {
    std::ofstream out(config.out / "config.json", std::ios::binary);
    out << dump_run_config(config, config.out);
  }
  std::ofstream log(config.out / "train_log.jsonl", std::ios::binary);
  if (!log) throw Error("cannot write " + (config.out / "train_log.jsonl").string());
  TrainResult result = train(config, ctx, &log);
  save_checkpoint(result.best, ctx.data->corpus, config.out / "checkpoint.txt");
  auto summary = [](const EvalSummary& s) {
    return nlohmann::json{{"ndcg", s.ndcg}, {"recall", s.recall}, {"valid_rate", s.valid_rate}, {"states", s.states}};
  };
  const nlohmann::json eval = {{"cutoff", config.env.eval_cutoff},
                               {"best_step", result.best_step},
                               {"initial", summary(result.initial)},
                               {"best", summary(result.final)},
                               {"selection", summary(result.best_selection)}};
  std::ofstream(config.out / "eval.json", std::ios::binary) << eval.dump(2) << '\n';
  return result;
}

}  // namespace rlrec
