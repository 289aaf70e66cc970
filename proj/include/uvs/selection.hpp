#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "uvs/path.hpp"
#include "uvs/uvm_head.hpp"

namespace uvs {

// K candidate partial paths for one question, with their representations.
// Representations may be attached lazily; scoring requires them.
struct CandidateSet {
  std::string question_id;
  std::vector<PartialPath> paths;
  std::vector<Representation> reps;

  int size() const { return static_cast<int>(paths.size()); }
  void validate_reps() const;
};

// Posterior value geometry of a candidate set under one head. A posterior
// sample for candidate i at index z is means[i] + loads.col(i).dot(z), so the
// representations are encoded once and every subsequent draw is an
// m-dimensional dot product.
struct CandidateScores {
  Eigen::VectorXd means;  // K exact mean values
  Eigen::MatrixXd loads;  // m x K uncertainty loadings, column i = M^T x_i

  int size() const { return static_cast<int>(means.size()); }
  int index_dim() const { return static_cast<int>(loads.rows()); }
};

CandidateScores score_candidates(const UvmHead& head, const CandidateSet& cset);

// A zero-uncertainty scoring of externally supplied values (used to run any
// deterministic scorer through the same selection machinery).
CandidateScores point_scores(const Eigen::VectorXd& values);

struct SelectionResult {
  std::vector<int> indices;  // distinct, |indices| = min(b, K)
  int fallback_count = 0;    // slots filled uniformly after the try budget
};

// Whether Monte-Carlo rounds reuse one index draw across all candidates
// (Shared, the form the group sampler realizes) or draw one index per
// candidate (Independent). The two differ whenever uncertainty loadings are
// correlated across candidates.
enum class Coupling { Shared, Independent };

// Try budget per selection slot before falling back to a uniform fill.
inline constexpr int kDefaultMaxTries = 20;

// Posterior sample count for the explicit rank-based selectors.
inline constexpr int kDefaultRankSampleCount = 100000;

// One Thompson draw: a single shared Gaussian index, then the argmax of the
// sampled values. Exact ties go to the lowest index.
int thompson_select_one(const CandidateScores& scores, Rng& rng);

// Repeated Thompson draws with duplicate rejection. After max_tries
// consecutive duplicate draws for the current slot, the slot is filled
// uniformly from the unselected candidates and the try counter resets.
// Selects min(b, K) distinct candidates.
SelectionResult group_thompson_select(const CandidateScores& scores, int b,
                                      int max_tries, Rng& rng);

// Empirical probability of each candidate having the highest sampled value.
// Returns non-negative frequencies; summed left to right they equal 1 exactly
// (the residual is folded into the last entry).
Eigen::VectorXd top1_probability_mc(const CandidateScores& scores,
                                    int n_samples, Coupling coupling,
                                    Rng& rng);

// Deterministic top-b by estimated top-1 probability (ranking instead of
// sampling); probability ties break by mean, then by lowest index, so a
// zero-variance head reduces this to top-b by mean.
SelectionResult top1_rank_select(const CandidateScores& scores, int b,
                                 int n_samples, Rng& rng,
                                 Coupling coupling = Coupling::Shared);

// Deterministic top-b by mean + standard deviation, the std estimated from
// n_samples posterior draws per candidate (unit exploration coefficient).
SelectionResult ucb_select(const CandidateScores& scores, int b, int n_samples,
                           Rng& rng);

// Deterministic top-b by mean value only; the conventional value-model
// selection baseline.
SelectionResult greedy_select(const CandidateScores& scores, int b);

// Head-facing forms of the operations above.
int thompson_select_one(const UvmHead& head, const CandidateSet& cset,
                        Rng& rng);
SelectionResult group_thompson_select(const UvmHead& head,
                                      const CandidateSet& cset, int b,
                                      int max_tries, Rng& rng);
Eigen::VectorXd top1_probability_mc(const UvmHead& head,
                                    const CandidateSet& cset, int n_samples,
                                    Coupling coupling, Rng& rng);
SelectionResult top1_rank_select(const UvmHead& head, const CandidateSet& cset,
                                 int b, int n_samples, Rng& rng,
                                 Coupling coupling = Coupling::Shared);
SelectionResult ucb_select(const UvmHead& head, const CandidateSet& cset,
                           int b, int n_samples, Rng& rng);

enum class SelectorKind { GroupThompson, Top1Rank, Ucb, OvmGreedy };

// Selector choice plus its parameters, as configured by the harness.
struct SelectorSpec {
  SelectorKind kind = SelectorKind::GroupThompson;
  int max_tries = kDefaultMaxTries;            // GroupThompson
  int n_samples = kDefaultRankSampleCount;     // Top1Rank, Ucb
  Coupling coupling = Coupling::Shared;        // Top1Rank

  std::string name() const;
  static SelectorSpec parse(const std::string& name);
};

SelectionResult run_selector(const SelectorSpec& spec,
                             const CandidateScores& scores, int b, Rng& rng);

}  // namespace uvs
