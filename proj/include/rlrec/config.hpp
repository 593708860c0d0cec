#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "rlrec/corpus.hpp"
#include "rlrec/envs.hpp"
#include "rlrec/optim.hpp"

namespace rlrec {

enum class TrainerKind { grpo, sft };

struct GrpoRunSettings {
  GrpoConfig config;
  int steps = 200;
  /// States per rollout phase; 0 means every training state.
  std::size_t batch_states = 0;
  /// Start from a policy fitted to the teacher with the sft settings
  /// instead of the seeded random initialization.
  bool sft_warm_start = false;
};

struct SftRunSettings {
  std::size_t samples = 10000;
  double learning_rate = 1e-2;
  int steps = 200;
  std::size_t minibatch_size = 256;
};

/// Everything a training or evaluation run needs. Relative paths are
/// resolved against the directory of the config file.
struct RunConfig {
  TaskKind task = TaskKind::product_search;
  std::filesystem::path corpus;
  std::filesystem::path relevance;
  std::filesystem::path splits;
  /// Data-generating policy for SFT; optional for GRPO.
  std::filesystem::path teacher;
  EnvConfig env;
  int embed = 16;
  int hidden = 32;
  TrainerKind trainer = TrainerKind::grpo;
  GrpoRunSettings grpo;
  SftRunSettings sft;
  /// Validation cadence in steps.
  int eval_interval = 10;
  std::uint64_t seed = 0;
  std::filesystem::path out = "run";

  /// Field-level checks that need no files. Throws ConfigError.
  void validate() const;
  /// Also checks that referenced paths exist.
  void validate_paths() const;
};

/// Parses JSON text. Unknown keys and type mismatches are ConfigErrors
/// naming the offending field.
RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
/// JSON with paths written relative to `base_dir` when possible.
std::string dump_run_config(const RunConfig& config, const std::filesystem::path& base_dir = {});

/// Fixed train / valid / test state lists.
struct Splits {
  std::vector<std::string> train;
  std::vector<std::string> valid;
  std::vector<std::string> test;
};

Splits load_splits(const std::filesystem::path& path);
void write_splits(const Splits& splits, std::ostream& out);

/// One weighted output of the data-generating policy.
struct TeacherOutput {
  std::string text;
  double prob = 0.0;
};

/// Sequence-level data-generating policy, one output list per state id.
struct Teacher {
  std::vector<std::string> state_ids;
  std::vector<std::vector<TeacherOutput>> outputs;
};

/// JSON lines {"state_id", "outputs": [{"text", "prob"}]}. Probabilities
/// must be non-negative and sum to 1 within 1e-6.
Teacher parse_teacher(std::istream& in);
Teacher load_teacher(const std::filesystem::path& path);
void write_teacher(const Teacher& teacher, std::ostream& out);

}  // namespace rlrec
