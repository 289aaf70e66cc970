#pragma once

#include <string>
#include <vector>

#include "uvs/search.hpp"
#include "uvs/simworld.hpp"
#include "uvs/training.hpp"

namespace uvs {

// Fraction of problems with at least one complete correct returned path.
// path_sets[i] belongs to problems[i].
double coverage(const std::vector<std::vector<PartialPath>>& path_sets,
                const std::vector<SyntheticProblem>& problems);

// Fraction of problems whose modal answer (over complete paths with a valid
// answer) is correct. Modal ties and all-incomplete sets count as incorrect.
double precision_majority_vote(
    const std::vector<std::vector<PartialPath>>& path_sets,
    const std::vector<SyntheticProblem>& problems);

struct SearchGridEntry {
  int beam_width = 0;
  int candidate_size = 0;
};

struct ExperimentConfig {
  WorldSpec world;
  UvmHeadConfig head;  // head.d is forced to world.feature_dim
  TrainConfig train;
  std::vector<SearchGridEntry> search_grid;
  int max_steps = 0;  // 0 means the world depth
  std::vector<SelectorSpec> selectors;
  int repetitions = 3;
  std::vector<std::uint64_t> seeds;  // optional; overrides derived seeds
  bool emit_traces = false;
  std::string output_dir;

  void validate() const;
};

std::string experiment_config_to_string(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_string(const std::string& body);
ExperimentConfig load_experiment_config(const std::string& path);

// One (seed, selector, beam configuration) measurement.
struct CellResult {
  std::uint64_t seed = 0;
  std::string selector;
  int beam_width = 0;
  int candidate_size = 0;
  double coverage = 0.0;
  double precision = 0.0;
};

// Mean and sample standard deviation across seeds.
struct AggregateRow {
  std::string selector;
  int beam_width = 0;
  int candidate_size = 0;
  double coverage_mean = 0.0;
  double coverage_std = 0.0;
  double precision_mean = 0.0;
  double precision_std = 0.0;
};

struct RunReport {
  std::vector<CellResult> raw;
  std::vector<AggregateRow> summary;
};

// Full protocol, per seed: build world, build dataset, train one head, derive
// the mean-only baseline from the same checkpoint, search every configured
// (selector, beam) cell over the test problems, and aggregate across seeds.
// The uncertainty-aware rows and the ovm_greedy rows consume the same trained
// checkpoint.
RunReport run_experiment(const ExperimentConfig& cfg, std::uint64_t root_seed);

std::string raw_csv(const RunReport& report);
std::string summary_csv(const RunReport& report);

// run_experiment plus report files (raw.csv, summary.csv, per-seed head
// checkpoints, optional trace/ directory) under cfg.output_dir.
RunReport run_compare(const ExperimentConfig& cfg, std::uint64_t root_seed);

}  // namespace uvs
