#include "uvs/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace uvs {

void CandidateSet::validate_reps() const {
  if (reps.size() != paths.size())
    throw std::invalid_argument("candidate set has no representations attached");
  for (const Representation& x : reps)
    if (x.size() != reps.front().size() || !x.allFinite())
      throw std::invalid_argument("candidate representations inconsistent");
}

CandidateScores score_candidates(const UvmHead& head,
                                 const CandidateSet& cset) {
  if (cset.size() < 1)
    throw std::invalid_argument("candidate set must be non-empty");
  cset.validate_reps();
  const Eigen::MatrixXd M = head.uncertainty_matrix();
  CandidateScores s;
  s.means.resize(cset.size());
  s.loads.resize(head.m, cset.size());
  for (int i = 0; i < cset.size(); ++i) {
    s.means[i] = mean_value(head, cset.reps[i]);
    s.loads.col(i) = M.transpose() * cset.reps[i];
  }
  return s;
}

CandidateScores point_scores(const Eigen::VectorXd& values) {
  CandidateScores s;
  s.means = values;
  s.loads = Eigen::MatrixXd::Zero(1, values.size());
  return s;
}

namespace {

int argmax_lowest(const Eigen::VectorXd& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

IndexVector gaussian_index(int m, Rng& rng) {
  IndexVector z(m);
  for (int i = 0; i < m; ++i) z[i] = rng.normal();
  return z;
}

// Top-b indices by score, ties by lowest index.
SelectionResult top_b_by(const Eigen::VectorXd& score, int b) {
  const int k = static_cast<int>(score.size());
  std::vector<int> order(static_cast<size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int c) {
    if (score[a] != score[c]) return score[a] > score[c];
    return a < c;
  });
  SelectionResult r;
  const int take = std::min(b, k);
  r.indices.assign(order.begin(), order.begin() + take);
  return r;
}

}  // namespace

int thompson_select_one(const CandidateScores& scores, Rng& rng) {
  if (scores.size() < 1)
    throw std::invalid_argument("candidate set must be non-empty");
  const IndexVector z = gaussian_index(scores.index_dim(), rng);
  const Eigen::VectorXd values = scores.means + scores.loads.transpose() * z;
  return argmax_lowest(values);
}

SelectionResult group_thompson_select(const CandidateScores& scores, int b,
                                      int max_tries, Rng& rng) {
  if (b < 1) throw std::invalid_argument("beam size must be positive");
  if (max_tries < 1) throw std::invalid_argument("max_tries must be positive");
  const int k = scores.size();
  const int target = std::min(b, k);
  SelectionResult result;
  std::vector<char> selected(static_cast<size_t>(k), 0);
  while (static_cast<int>(result.indices.size()) < target) {
    int tries = 0;
    bool filled = false;
    while (tries < max_tries) {
      const int i = thompson_select_one(scores, rng);
      ++tries;
      if (!selected[static_cast<size_t>(i)]) {
        selected[static_cast<size_t>(i)] = 1;
        result.indices.push_back(i);
        filled = true;
        break;
      }
    }
    if (!filled) {
      // Try budget exhausted: fill the slot uniformly from the rest.
      std::vector<int> unselected;
      for (int i = 0; i < k; ++i)
        if (!selected[static_cast<size_t>(i)]) unselected.push_back(i);
      const int pick = unselected[static_cast<size_t>(
          rng.uniform_int(static_cast<int>(unselected.size())))];
      selected[static_cast<size_t>(pick)] = 1;
      result.indices.push_back(pick);
      result.fallback_count += 1;
    }
  }
  return result;
}

Eigen::VectorXd top1_probability_mc(const CandidateScores& scores,
                                    int n_samples, Coupling coupling,
                                    Rng& rng) {
  if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
  const int k = scores.size();
  const int m = scores.index_dim();
  std::vector<long long> counts(static_cast<size_t>(k), 0);
  Eigen::VectorXd values(k);
  IndexVector z(m);
  for (int round = 0; round < n_samples; ++round) {
    if (coupling == Coupling::Shared) {
      z = gaussian_index(m, rng);
      values = scores.means + scores.loads.transpose() * z;
    } else {
      for (int i = 0; i < k; ++i) {
        z = gaussian_index(m, rng);
        values[i] = scores.means[i] + scores.loads.col(i).dot(z);
      }
    }
    counts[static_cast<size_t>(argmax_lowest(values))] += 1;
  }
  Eigen::VectorXd probs(k);
  for (int i = 0; i < k; ++i)
    probs[i] = static_cast<double>(counts[static_cast<size_t>(i)]) /
               static_cast<double>(n_samples);
  // Fold the float summation residual into the last entry with a nonzero
  // count; entries after it are exact zeros, so a left-to-right accumulation
  // of the vector gives exactly 1 while every entry stays non-negative.
  int last_hit = k - 1;
  while (counts[static_cast<size_t>(last_hit)] == 0) --last_hit;
  double partial = 0.0;
  for (int i = 0; i < last_hit; ++i) partial += probs[i];
  probs[last_hit] = 1.0 - partial;
  return probs;
}

SelectionResult top1_rank_select(const CandidateScores& scores, int b,
                                 int n_samples, Rng& rng, Coupling coupling) {
  if (b < 1) throw std::invalid_argument("beam size must be positive");
  const Eigen::VectorXd probs =
      top1_probability_mc(scores, n_samples, coupling, rng);
  // Estimated probabilities tie at zero for candidates that never won a
  // round; break those ties by mean so the ranking degenerates to the plain
  // value baseline when the head has no variance.
  const int k = scores.size();
  std::vector<int> order(static_cast<size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int c) {
    if (probs[a] != probs[c]) return probs[a] > probs[c];
    if (scores.means[a] != scores.means[c])
      return scores.means[a] > scores.means[c];
    return a < c;
  });
  SelectionResult r;
  r.indices.assign(order.begin(), order.begin() + std::min(b, k));
  return r;
}

SelectionResult ucb_select(const CandidateScores& scores, int b, int n_samples,
                           Rng& rng) {
  if (b < 1) throw std::invalid_argument("beam size must be positive");
  if (n_samples < 2)
    throw std::invalid_argument("ucb_select needs at least 2 samples");
  const int k = scores.size();
  const int m = scores.index_dim();
  Eigen::VectorXd score(k);
  std::vector<double> draws(static_cast<size_t>(n_samples));
  for (int i = 0; i < k; ++i) {
    for (int s = 0; s < n_samples; ++s) {
      double v = 0.0;
      for (int j = 0; j < m; ++j) v += scores.loads(j, i) * rng.normal();
      draws[static_cast<size_t>(s)] = v;
    }
    double mean = 0.0;
    for (double v : draws) mean += v;
    mean /= n_samples;
    double ss = 0.0;
    for (double v : draws) ss += (v - mean) * (v - mean);
    score[i] = scores.means[i] + std::sqrt(ss / (n_samples - 1));
  }
  return top_b_by(score, b);
}

SelectionResult greedy_select(const CandidateScores& scores, int b) {
  if (b < 1) throw std::invalid_argument("beam size must be positive");
  return top_b_by(scores.means, b);
}

int thompson_select_one(const UvmHead& head, const CandidateSet& cset,
                        Rng& rng) {
  return thompson_select_one(score_candidates(head, cset), rng);
}

SelectionResult group_thompson_select(const UvmHead& head,
                                      const CandidateSet& cset, int b,
                                      int max_tries, Rng& rng) {
  return group_thompson_select(score_candidates(head, cset), b, max_tries, rng);
}

Eigen::VectorXd top1_probability_mc(const UvmHead& head,
                                    const CandidateSet& cset, int n_samples,
                                    Coupling coupling, Rng& rng) {
  return top1_probability_mc(score_candidates(head, cset), n_samples, coupling,
                             rng);
}

SelectionResult top1_rank_select(const UvmHead& head, const CandidateSet& cset,
                                 int b, int n_samples, Rng& rng,
                                 Coupling coupling) {
  return top1_rank_select(score_candidates(head, cset), b, n_samples, rng,
                          coupling);
}

SelectionResult ucb_select(const UvmHead& head, const CandidateSet& cset,
                           int b, int n_samples, Rng& rng) {
  return ucb_select(score_candidates(head, cset), b, n_samples, rng);
}

std::string SelectorSpec::name() const {
  switch (kind) {
    case SelectorKind::GroupThompson:
      return "gts";
    case SelectorKind::Top1Rank:
      return "top1rank";
    case SelectorKind::Ucb:
      return "ucb";
    case SelectorKind::OvmGreedy:
      return "ovm_greedy";
  }
  throw std::logic_error("unreachable selector kind");
}

SelectorSpec SelectorSpec::parse(const std::string& name) {
  SelectorSpec spec;
  if (name == "gts")
    spec.kind = SelectorKind::GroupThompson;
  else if (name == "top1rank")
    spec.kind = SelectorKind::Top1Rank;
  else if (name == "ucb")
    spec.kind = SelectorKind::Ucb;
  else if (name == "ovm_greedy")
    spec.kind = SelectorKind::OvmGreedy;
  else
    throw std::invalid_argument("unknown selector: " + name);
  return spec;
}

SelectionResult run_selector(const SelectorSpec& spec,
                             const CandidateScores& scores, int b, Rng& rng) {
  switch (spec.kind) {
    case SelectorKind::GroupThompson:
      return group_thompson_select(scores, b, spec.max_tries, rng);
    case SelectorKind::Top1Rank:
      return top1_rank_select(scores, b, spec.n_samples, rng, spec.coupling);
    case SelectorKind::Ucb:
      return ucb_select(scores, b, spec.n_samples, rng);
    case SelectorKind::OvmGreedy:
      return greedy_select(scores, b);
  }
  throw std::logic_error("unreachable selector kind");
}

}  // namespace uvs
