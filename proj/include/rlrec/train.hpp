#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rlrec/config.hpp"
#include "rlrec/envs.hpp"
#include "rlrec/optim.hpp"
#include "rlrec/policy.hpp"

namespace rlrec {

struct EvalSummary {
  double ndcg = 0.0;
  double recall = 0.0;
  /// Fraction of decoded actions that were structurally valid.
  double valid_rate = 0.0;
  std::size_t states = 0;
};

/// Mean NDCG / recall at the eval cutoff of greedy-decoded actions.
EvalSummary evaluate_greedy(const Environment& env, const Policy& policy, std::span<const std::size_t> states);

/// Fraction of sampled actions that decode to valid task actions.
double sampled_valid_rate(const Environment& env, const Policy& policy, std::span<const std::size_t> states,
                          const SamplerConfig& sampler, int samples_per_state, std::uint64_t seed);

/// Action for wire text: a tokenized query, or "perm:i,j,k" for rerank.
/// Throws Error when the text cannot be expressed in the action space.
ActionSequence action_from_text(const Environment& env, std::string_view text);

/// Teacher outputs of each listed state as (action, probability).
std::vector<std::vector<std::pair<ActionSequence, double>>> teacher_actions(
    const Environment& env, const Teacher& teacher, std::span<const std::size_t> states);

/// `n` examples with states uniform over the list and actions drawn from
/// the teacher. SftExample::state indexes `states`.
std::vector<SftExample> sample_teacher_dataset(
    const std::vector<std::vector<std::pair<ActionSequence, double>>>& dist, std::size_t n, Rng& rng);

struct StepLog {
  int step = 0;
  double mean_reward = 0.0;
  double mean_kl = 0.0;
  double clip_frac = 0.0;
  std::optional<double> nll;
};

/// {"step", "mean_reward", "mean_kl", "clip_frac", "nll"} on one line.
std::string to_json_line(const StepLog& log);

/// Task data, environment and resolved split indices for one run.
struct RunContext {
  std::shared_ptr<const TaskData> data;
  std::unique_ptr<Environment> env;
  std::vector<std::size_t> train;
  std::vector<std::size_t> valid;
  std::vector<std::size_t> test;
  std::optional<Teacher> teacher;

  /// Throws ConfigError when a split names a state of another task kind.
  static RunContext load(const RunConfig& config);
  /// Validation states, falling back to the training states.
  std::span<const std::size_t> selection_states() const { return valid.empty() ? train : valid; }
  /// Held-out states, falling back to validation then training states.
  std::span<const std::size_t> report_states() const { return test.empty() ? selection_states() : test; }
};

struct TrainResult {
  /// Best checkpoint by validation NDCG (earliest on ties).
  NeuralPolicy best;
  int best_step = 0;
  EvalSummary initial;  // report states, before training
  EvalSummary final;    // report states, best checkpoint
  EvalSummary best_selection;
  std::vector<StepLog> log;
};

/// Runs the configured trainer from a seeded initialization (through an
/// SFT fit first when grpo.sft_warm_start is set). Each step's log line
/// goes to `log_out` as soon as it is produced.
TrainResult train(const RunConfig& config, const RunContext& context, std::ostream* log_out = nullptr);

/// Trainer entry points with an explicit initial policy.
TrainResult train_grpo(const RunConfig& config, const RunContext& context, NeuralPolicy initial,
                       std::ostream* log_out = nullptr);
TrainResult train_sft(const RunConfig& config, const RunContext& context, NeuralPolicy initial,
                      std::ostream* log_out = nullptr);

/// Initial policy of a run.
NeuralPolicy initial_policy(const RunConfig& config, const Environment& env);

/// Checkpoint tagged with the corpus vocabulary fingerprint.
void save_checkpoint(const NeuralPolicy& policy, const Corpus& corpus, const std::filesystem::path& path);
/// Throws IngestError when the file is malformed or was written for
/// another vocabulary.
NeuralPolicy load_checkpoint(const std::filesystem::path& path, const Corpus& corpus);

/// Rows "initial" and "best" with NDCG / recall at the eval cutoff.
std::string format_eval_table(const TrainResult& result, std::size_t cutoff);

/// The train command. Writes into config.out: config.json (resolved),
/// train_log.jsonl, checkpoint.txt and eval.json.
TrainResult run_training(const RunConfig& config);

}  // namespace rlrec
