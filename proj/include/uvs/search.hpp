#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "uvs/selection.hpp"

namespace uvs {

// Extends an incomplete prefix by one step; may complete the path by
// attaching an answer. Returning nullopt signals generator failure, which
// freezes the beam as complete-without-answer.
using StepGenerator =
    std::function<std::optional<PartialPath>(const PartialPath& prefix, Rng&)>;

// Maps a candidate set to its posterior value geometry. Head-backed scorers
// attach representations; injected scorers may ignore them.
using CandidateScorer = std::function<CandidateScores(CandidateSet&)>;

// One selection round over scored candidates.
using Selector =
    std::function<SelectionResult(const CandidateScores&, int b, Rng&)>;

struct SearchConfig {
  int beam_width = 32;      // paths kept per round
  int candidate_size = 256; // candidates scored per round; divisible by width
  int max_steps = 10;
  std::uint64_t seed = 0;

  int per_beam() const { return candidate_size / beam_width; }
  void validate() const;
};

// Per-round record for offline analysis: exact means, one shared-index
// posterior sample per candidate (drawn from a dedicated stream so tracing
// never perturbs selection), the selected indices and the fallback count.
struct StepTrace {
  std::string question_id;
  int step = 0;
  Eigen::VectorXd means;
  Eigen::VectorXd sampled;
  std::vector<int> selected;
  int fallback_count = 0;
};

using TraceSink = std::function<void(const StepTrace&)>;

// Extends every beam by per_beam one-step continuations. All beams must be
// incomplete. Candidate order follows beam order, expansions consecutive.
CandidateSet expand_beam(const StepGenerator& generate,
                         const std::vector<PartialPath>& beams, int per_beam,
                         Rng& rng);

// Step-level beam search: one opening round of candidate_size first steps,
// then alternating expansion and selection until every kept path is complete
// or max_steps is reached. Completed beams are frozen: they re-enter the
// selection pool unexpanded and their expansion budget is redistributed to
// the incomplete beams (remainder to the earliest). Returns exactly
// beam_width paths.
std::vector<PartialPath> step_beam_search(const StepGenerator& generate,
                                          const CandidateScorer& score,
                                          const Selector& select,
                                          const std::string& question_id,
                                          const SearchConfig& cfg,
                                          const TraceSink& trace = nullptr);

// Head-facing form: scores candidates with the head over featurized paths and
// selects with the given selector spec.
std::vector<PartialPath> step_beam_search(
    const StepGenerator& generate, const UvmHead& head,
    const std::function<Representation(const PartialPath&)>& featurize,
    const SelectorSpec& selector, const std::string& question_id,
    const SearchConfig& cfg, const TraceSink& trace = nullptr);

// Candidate scorer backed by a head and a path featurizer.
CandidateScorer make_head_scorer(
    const UvmHead& head,
    const std::function<Representation(const PartialPath&)>& featurize);

// Zero-uncertainty scorer over an arbitrary path-level value function.
CandidateScorer make_value_scorer(
    const std::function<double(const PartialPath&)>& value);

Selector make_selector(const SelectorSpec& spec);

}  // namespace uvs
