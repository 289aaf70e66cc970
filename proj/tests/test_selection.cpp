#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "uvs/selection.hpp"

using namespace uvs;

namespace {

// Standard normal CDF, for the two-candidate closed form.
double phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

CandidateScores scores_of(std::vector<double> means,
                          std::vector<std::vector<double>> loads) {
  CandidateScores s;
  const int k = static_cast<int>(means.size());
  const int m = static_cast<int>(loads.front().size());
  s.means.resize(k);
  s.loads.resize(m, k);
  for (int i = 0; i < k; ++i) {
    s.means[i] = means[static_cast<size_t>(i)];
    for (int j = 0; j < m; ++j)
      s.loads(j, i) = loads[static_cast<size_t>(i)][static_cast<size_t>(j)];
  }
  return s;
}

CandidateScores random_scores(int k, int m, Rng& rng) {
  CandidateScores s;
  s.means.resize(k);
  s.loads.resize(m, k);
  for (int i = 0; i < k; ++i) {
    s.means[i] = rng.normal();
    for (int j = 0; j < m; ++j) s.loads(j, i) = 0.7 * rng.normal();
  }
  return s;
}

}  // namespace

TEST_CASE("thompson_select_one: zero variance picks the argmax of means") {
  Rng rng(1);
  const auto s = scores_of({3.0, 1.0, 2.0}, {{0.0}, {0.0}, {0.0}});
  for (int rep = 0; rep < 20; ++rep) CHECK(thompson_select_one(s, rng) == 0);
}

TEST_CASE("thompson_select_one: identical candidates tie to the lowest index") {
  Rng rng(2);
  const auto s = scores_of({0.4, 0.4}, {{0.9, -0.2}, {0.9, -0.2}});
  for (int rep = 0; rep < 50; ++rep) CHECK(thompson_select_one(s, rng) == 0);
}

TEST_CASE("thompson_select_one: opposite loadings split 50/50") {
  Rng rng(3);
  const auto s = scores_of({0.0, 0.0}, {{1.0}, {-1.0}});
  const int n = 100000;
  int first = 0;
  for (int rep = 0; rep < n; ++rep)
    if (thompson_select_one(s, rng) == 0) ++first;
  CHECK(std::abs(static_cast<double>(first) / n - 0.5) < 0.01);
}

TEST_CASE("group_thompson_select: zero-variance trace, K=3 b=2") {
  const auto s = scores_of({3.0, 1.0, 2.0}, {{0.0}, {0.0}, {0.0}});
  Rng rng(4);
  int second_counts[3] = {0, 0, 0};
  const int n = 20000;
  for (int rep = 0; rep < n; ++rep) {
    const SelectionResult r = group_thompson_select(s, 2, 5, rng);
    REQUIRE(r.indices.size() == 2);
    CHECK(r.indices[0] == 0);  // argmax of means, always
    CHECK(r.indices[1] != 0);
    CHECK(r.fallback_count == 1);  // the second slot always falls back
    second_counts[r.indices[1]] += 1;
  }
  // The fallback slot is uniform over the two remaining candidates.
  CHECK(std::abs(static_cast<double>(second_counts[1]) / n - 0.5) < 0.02);
  CHECK(std::abs(static_cast<double>(second_counts[2]) / n - 0.5) < 0.02);
}

TEST_CASE("group_thompson_select: b >= K returns everything") {
  Rng rng(5);
  const auto s = scores_of({1.0, 2.0}, {{0.3}, {-0.3}});
  const SelectionResult r = group_thompson_select(s, 5, 3, rng);
  REQUIRE(r.indices.size() == 2);
  std::vector<int> sorted = r.indices;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{0, 1});
}

TEST_CASE("group_thompson_select: indices are distinct, size min(b, K)") {
  Rng rng(6);
  for (int rep = 0; rep < 50; ++rep) {
    const int k = 1 + rng.uniform_int(8);
    const int b = 1 + rng.uniform_int(10);
    const auto s = random_scores(k, 3, rng);
    const SelectionResult r = group_thompson_select(s, b, 4, rng);
    CHECK(static_cast<int>(r.indices.size()) == std::min(b, k));
    std::vector<int> sorted = r.indices;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
    for (int idx : r.indices) {
      CHECK(idx >= 0);
      CHECK(idx < k);
    }
  }
}

TEST_CASE("group_thompson first pick matches shared-coupling top-1 MC") {
  Rng rng(7);
  for (int head = 0; head < 3; ++head) {
    const auto s = random_scores(5, 2, rng);
    const int n = 100000;
    std::vector<double> first_freq(5, 0.0);
    for (int rep = 0; rep < n; ++rep) {
      const SelectionResult r = group_thompson_select(s, 3, 5, rng);
      first_freq[static_cast<size_t>(r.indices[0])] += 1.0 / n;
    }
    const Eigen::VectorXd probs =
        top1_probability_mc(s, n, Coupling::Shared, rng);
    double tv = 0.0;
    for (int i = 0; i < 5; ++i) tv += std::abs(first_freq[i] - probs[i]);
    CHECK(tv / 2.0 <= 0.02);
  }
}

TEST_CASE("top1_probability_mc: single candidate gets probability one") {
  Rng rng(8);
  const auto s = scores_of({0.3}, {{0.5, 0.1}});
  const Eigen::VectorXd p = top1_probability_mc(s, 100, Coupling::Shared, rng);
  CHECK(p.size() == 1);
  CHECK(p[0] == 1.0);
}

TEST_CASE("top1_probability_mc: identical candidates and the tie rule") {
  Rng rng(9);
  const auto s = scores_of({0.2, 0.2}, {{0.7}, {0.7}});
  const Eigen::VectorXd p =
      top1_probability_mc(s, 10000, Coupling::Shared, rng);
  CHECK(p[0] == 1.0);
  CHECK(p[1] == 0.0);
}

TEST_CASE("top1_probability_mc: independent coupling breaks the tie") {
  Rng rng(10);
  const auto s = scores_of({0.0, 0.0}, {{1.0}, {-1.0}});
  const Eigen::VectorXd p =
      top1_probability_mc(s, 100000, Coupling::Independent, rng);
  CHECK(std::abs(p[0] - 0.5) < 0.01);
  CHECK(std::abs(p[1] - 0.5) < 0.01);
}

TEST_CASE("top1_probability_mc: two-candidate gaussian closed form") {
  Rng rng(11);
  for (int rep = 0; rep < 5; ++rep) {
    const double mu1 = rng.normal(), mu2 = rng.normal();
    const double s1 = 0.3 + 0.5 * rng.uniform(), s2 = 0.3 + 0.5 * rng.uniform();
    const auto s = scores_of({mu1, mu2}, {{s1, 0.0}, {0.0, s2}});
    const Eigen::VectorXd p =
        top1_probability_mc(s, 100000, Coupling::Independent, rng);
    const double expected = phi((mu1 - mu2) / std::sqrt(s1 * s1 + s2 * s2));
    CHECK(std::abs(p[0] - expected) < 0.01);
  }
}

TEST_CASE("top1_probability_mc: non-negative, sums to exactly one") {
  Rng rng(12);
  for (int rep = 0; rep < 30; ++rep) {
    const int k = 1 + rng.uniform_int(10);
    const auto s = random_scores(k, 2, rng);
    const int n = 1 + rng.uniform_int(999);
    const Coupling coupling =
        rng.uniform_int(2) == 0 ? Coupling::Shared : Coupling::Independent;
    const Eigen::VectorXd p = top1_probability_mc(s, n, coupling, rng);
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
      CHECK(p[i] >= 0.0);
      sum += p[i];
    }
    CHECK(sum == 1.0);
  }
}

TEST_CASE("top1_rank_select: zero variance equals top-b by mean") {
  Rng rng(13);
  const auto s =
      scores_of({0.1, 0.9, 0.5, 0.7}, {{0.0}, {0.0}, {0.0}, {0.0}});
  const SelectionResult r = top1_rank_select(s, 2, 1000, rng);
  CHECK(r.indices == std::vector<int>{1, 3});
  const SelectionResult all = top1_rank_select(s, 4, 1000, rng);
  CHECK(all.indices.size() == 4);
}

TEST_CASE("top1_rank_select: default sample count follows the baseline") {
  CHECK(kDefaultRankSampleCount == 100000);
  CHECK(SelectorSpec::parse("top1rank").n_samples == 100000);
  CHECK(SelectorSpec::parse("ucb").n_samples == 100000);
  CHECK(SelectorSpec::parse("gts").max_tries == 20);
  CHECK(SelectorSpec::parse("gts").coupling == Coupling::Shared);
}

TEST_CASE("ucb_select: hand-computed scores flip the order") {
  Rng rng(14);
  // Means (0.5, 0.4), stds (0.0, 0.2): scores (0.5, 0.6).
  const auto s = scores_of({0.5, 0.4}, {{0.0}, {0.2}});
  const SelectionResult r = ucb_select(s, 2, 100000, rng);
  CHECK(r.indices == std::vector<int>{1, 0});
}

TEST_CASE("ucb_select: zero variance equals top-b by mean") {
  Rng rng(15);
  const auto s = scores_of({0.3, 0.8, 0.1}, {{0.0}, {0.0}, {0.0}});
  const SelectionResult r = ucb_select(s, 2, 50, rng);
  CHECK(r.indices == std::vector<int>{1, 0});
}

TEST_CASE("selection is equivariant under candidate permutation") {
  // Means are separated well beyond the std-estimate noise, so the selected
  // set stays stable across the permuted Monte-Carlo streams.
  Rng rng(16);
  CandidateScores s;
  s.means.resize(6);
  s.loads.resize(3, 6);
  for (int i = 0; i < 6; ++i) {
    s.means[i] = 0.5 * i;
    for (int j = 0; j < 3; ++j) s.loads(j, i) = 0.2 * rng.normal();
  }
  CandidateScores rotated;
  rotated.means.resize(6);
  rotated.loads.resize(3, 6);
  for (int i = 0; i < 6; ++i) {
    rotated.means[(i + 2) % 6] = s.means[i];
    rotated.loads.col((i + 2) % 6) = s.loads.col(i);
  }
  Rng r1(77), r2(77);
  const SelectionResult a = ucb_select(s, 3, 4000, r1);
  const SelectionResult b = ucb_select(rotated, 3, 4000, r2);
  std::vector<int> mapped;
  for (int idx : a.indices) mapped.push_back((idx + 2) % 6);
  std::sort(mapped.begin(), mapped.end());
  std::vector<int> got = b.indices;
  std::sort(got.begin(), got.end());
  CHECK(mapped == got);
}

TEST_CASE("selectors are invariant to a constant mean shift") {
  Rng rng(17);
  const auto s = random_scores(7, 3, rng);
  CandidateScores shifted = s;
  shifted.means.array() += 4.2;

  SUBCASE("group thompson") {
    Rng r1(99), r2(99);
    const auto a = group_thompson_select(s, 3, 10, r1);
    const auto b = group_thompson_select(shifted, 3, 10, r2);
    CHECK(a.indices == b.indices);
    CHECK(a.fallback_count == b.fallback_count);
  }
  SUBCASE("ucb") {
    Rng r1(100), r2(100);
    CHECK(ucb_select(s, 3, 2000, r1).indices ==
          ucb_select(shifted, 3, 2000, r2).indices);
  }
  SUBCASE("top1 rank") {
    Rng r1(101), r2(101);
    CHECK(top1_rank_select(s, 3, 5000, r1).indices ==
          top1_rank_select(shifted, 3, 5000, r2).indices);
  }
  SUBCASE("greedy") {
    CHECK(greedy_select(s, 3).indices == greedy_select(shifted, 3).indices);
  }
}

TEST_CASE("degenerate agreement: zero variance aligns every selector's top pick") {
  Rng rng(18);
  for (int rep = 0; rep < 10; ++rep) {
    const int k = 2 + rng.uniform_int(6);
    std::vector<double> means;
    for (int i = 0; i < k; ++i) means.push_back(rng.normal());
    std::vector<std::vector<double>> loads(static_cast<size_t>(k), {0.0});
    const auto s = scores_of(means, loads);
    const int expect = greedy_select(s, 1).indices[0];
    Rng r1(rep), r2(rep + 1000), r3(rep + 2000);
    CHECK(group_thompson_select(s, 2, 3, r1).indices[0] == expect);
    CHECK(ucb_select(s, 2, 100, r2).indices[0] == expect);
    CHECK(top1_rank_select(s, 2, 500, r3).indices[0] == expect);
  }
}

TEST_CASE("head-facing wrappers agree with the score-level operations") {
  Rng rng(19);
  UvmHead h = UvmHead::init({3, 2, 1.0, 1.0}, 55);
  for (int i = 0; i < 3; ++i) h.mean_weights[i] = rng.normal();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) h.posterior_matrix(i, j) = rng.normal();
  CandidateSet cset;
  cset.question_id = "q";
  for (int i = 0; i < 4; ++i) {
    PartialPath p = make_root("q");
    p.steps = {i};
    cset.paths.push_back(p);
    Representation x(3);
    for (int j = 0; j < 3; ++j) x[j] = rng.normal();
    cset.reps.push_back(x);
  }
  const CandidateScores s = score_candidates(h, cset);
  for (int i = 0; i < 4; ++i)
    CHECK(s.means[i] == mean_value(h, cset.reps[static_cast<size_t>(i)]));
  Rng r1(7), r2(7);
  CHECK(thompson_select_one(h, cset, r1) == thompson_select_one(s, r2));
  Rng r3(8), r4(8);
  CHECK(group_thompson_select(h, cset, 2, 5, r3).indices ==
        group_thompson_select(s, 2, 5, r4).indices);
}
