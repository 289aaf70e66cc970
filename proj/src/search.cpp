#include "uvs/search.hpp"

#include <algorithm>
#include <stdexcept>

namespace uvs {

void SearchConfig::validate() const {
  if (beam_width < 1) throw std::invalid_argument("beam_width must be positive");
  if (candidate_size < beam_width || candidate_size % beam_width != 0)
    throw std::invalid_argument(
        "candidate_size must be a positive multiple of beam_width");
  if (max_steps < 1) throw std::invalid_argument("max_steps must be positive");
}

namespace {

// One-step continuations for a list of beams with a per-beam budget.
// Generator failure freezes the beam as complete-without-answer.
void expand_into(const StepGenerator& generate,
                 const std::vector<PartialPath>& beams,
                 const std::vector<int>& budget, std::uint64_t stream_seed,
                 std::vector<PartialPath>* out) {
  for (size_t i = 0; i < beams.size(); ++i) {
    Rng rng(Rng::derive(stream_seed, "expand-beam", i));
    for (int k = 0; k < budget[i]; ++k) {
      std::optional<PartialPath> next = generate(beams[i], rng);
      if (next.has_value()) {
        out->push_back(std::move(*next));
      } else {
        out->push_back(beams[i].with_answer(kInvalidAnswer));
      }
    }
  }
}

StepTrace make_trace(const std::string& question_id, int step,
                     const CandidateScores& scores,
                     const SelectionResult& sel, std::uint64_t stream_seed) {
  StepTrace t;
  t.question_id = question_id;
  t.step = step;
  t.means = scores.means;
  Rng rng(Rng::derive(stream_seed, "trace-sample", step));
  IndexVector z(scores.index_dim());
  for (int i = 0; i < z.size(); ++i) z[i] = rng.normal();
  t.sampled = scores.means + scores.loads.transpose() * z;
  t.selected = sel.indices;
  t.fallback_count = sel.fallback_count;
  return t;
}

}  // namespace

CandidateSet expand_beam(const StepGenerator& generate,
                         const std::vector<PartialPath>& beams, int per_beam,
                         Rng& rng) {
  if (beams.empty()) throw std::invalid_argument("no beams to expand");
  if (per_beam < 1) throw std::invalid_argument("per_beam must be positive");
  for (const PartialPath& b : beams)
    if (b.complete())
      throw std::invalid_argument("expand_beam requires incomplete beams");
  CandidateSet cset;
  cset.question_id = beams.front().question_id;
  std::vector<int> budget(beams.size(), per_beam);
  expand_into(generate, beams, budget, rng.next_u64(), &cset.paths);
  return cset;
}

std::vector<PartialPath> step_beam_search(const StepGenerator& generate,
                                          const CandidateScorer& score,
                                          const Selector& select,
                                          const std::string& question_id,
                                          const SearchConfig& cfg,
                                          const TraceSink& trace) {
  cfg.validate();
  const std::uint64_t root_seed = Rng::derive(cfg.seed, "search", fnv1a(question_id));
  const int b = cfg.beam_width;
  const int k = cfg.candidate_size;

  // Opening round: candidate_size first steps from the root.
  CandidateSet cset;
  cset.question_id = question_id;
  {
    const std::vector<PartialPath> root = {make_root(question_id)};
    const std::vector<int> budget = {k};
    expand_into(generate, root, budget, Rng::derive(root_seed, "round", 0),
                &cset.paths);
  }

  std::vector<PartialPath> beams;
  int round = 0;
  while (true) {
    CandidateScores scores = score(cset);
    Rng sel_rng(Rng::derive(root_seed, "select", round));
    const SelectionResult sel = select(scores, b, sel_rng);
    if (trace)
      trace(make_trace(question_id, round, scores, sel,
                       Rng::derive(root_seed, "trace", round)));
    beams.clear();
    for (int idx : sel.indices) beams.push_back(cset.paths[static_cast<size_t>(idx)]);

    ++round;
    const bool any_incomplete =
        std::any_of(beams.begin(), beams.end(),
                    [](const PartialPath& p) { return !p.complete(); });
    if (!any_incomplete || round >= cfg.max_steps) break;

    // Frozen completed beams re-enter the pool; incomplete beams share the
    // remaining candidate budget, earliest beams taking the remainder.
    std::vector<PartialPath> frozen;
    std::vector<PartialPath> open;
    for (const PartialPath& p : beams)
      (p.complete() ? frozen : open).push_back(p);
    const int open_budget = k - static_cast<int>(frozen.size());
    const int base = open_budget / static_cast<int>(open.size());
    const int rem = open_budget % static_cast<int>(open.size());
    std::vector<int> budget(open.size(), base);
    for (int i = 0; i < rem; ++i) budget[static_cast<size_t>(i)] += 1;

    cset = CandidateSet{};
    cset.question_id = question_id;
    cset.paths = frozen;
    expand_into(generate, open, budget, Rng::derive(root_seed, "round", round),
                &cset.paths);
  }
  return beams;
}

std::vector<PartialPath> step_beam_search(
    const StepGenerator& generate, const UvmHead& head,
    const std::function<Representation(const PartialPath&)>& featurize,
    const SelectorSpec& selector, const std::string& question_id,
    const SearchConfig& cfg, const TraceSink& trace) {
  return step_beam_search(generate, make_head_scorer(head, featurize),
                          make_selector(selector), question_id, cfg, trace);
}

CandidateScorer make_head_scorer(
    const UvmHead& head,
    const std::function<Representation(const PartialPath&)>& featurize) {
  return [head, featurize](CandidateSet& cset) {
    if (cset.reps.size() != cset.paths.size()) {
      cset.reps.clear();
      cset.reps.reserve(cset.paths.size());
      for (const PartialPath& p : cset.paths) cset.reps.push_back(featurize(p));
    }
    return score_candidates(head, cset);
  };
}

CandidateScorer make_value_scorer(
    const std::function<double(const PartialPath&)>& value) {
  return [value](CandidateSet& cset) {
    Eigen::VectorXd values(cset.size());
    for (int i = 0; i < cset.size(); ++i)
      values[i] = value(cset.paths[static_cast<size_t>(i)]);
    return point_scores(values);
  };
}

Selector make_selector(const SelectorSpec& spec) {
  return [spec](const CandidateScores& scores, int b, Rng& rng) {
    return run_selector(spec, scores, b, rng);
  };
}

}  // namespace uvs
