#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "uvs/path.hpp"
#include "uvs/rng.hpp"
#include "uvs/uvm_head.hpp"

namespace uvs {

// Train/test regime of a problem's features and generation.
//   Id  - features drawn from the training region.
//   Ood - a fixed rotation plus shift moves features outside it.
//   Rtn - training paths are uniformly random token sequences; features are
//         untransformed, the shift comes from the data itself.
enum class ShiftTag { Id, Ood, Rtn };

std::string to_string(ShiftTag tag);
ShiftTag shift_tag_from_string(const std::string& s);

struct ProblemConfig {
  int branching = 4;
  int depth = 6;
  int vocab_size = 12;  // step-token alphabet; on-tree steps use [0, branching)
  double correct_fraction = 0.02;
  double clumpiness = 1.5;  // how strongly correct leaves cluster in subtrees

  void validate() const;
};

// A complete branching^depth tree with a planted set of correct leaves.
// Steps are child indices; the answer token of a complete on-tree path is its
// leaf id.
struct SyntheticProblem {
  std::string question_id;
  int branching = 0;
  int depth = 0;
  int vocab_size = 0;
  ShiftTag shift_tag = ShiftTag::Id;
  std::vector<std::uint64_t> correct_leaves;  // sorted leaf ids

  std::uint64_t leaf_count() const;
  // Leaf id of a full-depth step sequence (base-branching digits).
  std::uint64_t leaf_of(const std::vector<int>& steps) const;
  bool on_tree(const std::vector<int>& steps) const;
  bool is_correct_answer(AnswerToken a) const;
  // Whether any correct leaf lies below the given on-tree prefix.
  bool subtree_has_correct(const std::vector<int>& prefix) const;

  SyntheticProblem with_tag(ShiftTag tag) const;
};

// Samples a problem: correct leaves are planted by a recursive scheme that
// multiplies the target fraction by per-child lognormal weights (clumpiness
// controls their spread), then fixed up so the set is a non-empty strict
// subset of the leaves.
SyntheticProblem make_problem(const ProblemConfig& cfg,
                              const std::string& question_id, ShiftTag tag,
                              Rng& rng);

// Child distribution of the step policy at an on-tree prefix: softmax of
// bias * [child subtree contains a correct leaf].
Eigen::VectorXd step_policy(const SyntheticProblem& problem,
                            const std::vector<int>& prefix, double bias);

// Appends one policy-sampled child step; reaching full depth attaches the
// leaf answer and completes the path.
PartialPath gen_step(const SyntheticProblem& problem, const PartialPath& prefix,
                     double bias, Rng& rng);

// 1 iff the complete path reaches a correct leaf. Throws on incomplete paths.
int check_answer(const SyntheticProblem& problem, const PartialPath& path);

// Exact probability that a policy rollout from the prefix ends at a correct
// leaf, by backward induction over the subtree.
double true_prefix_value(const SyntheticProblem& problem,
                         const PartialPath& prefix, double generator_bias);

// Full policy rollout to completion.
PartialPath policy_rollout(const SyntheticProblem& problem, double bias,
                           Rng& rng);

// Randomized-token rollout: depth tokens uniform over the whole vocabulary.
// Off-tree sequences complete with the invalid answer token.
PartialPath rtn_rollout(const SyntheticProblem& problem, Rng& rng);

// Frozen featurizer: a fixed random projection of the path's normalized
// token histogram, depth one-hot and answered flag, plus a small
// deterministic hash perturbation per (question, path). Identical inputs give
// bit-identical vectors. Ood-tagged problems get a fixed rotation plus a
// shift of shift_factor along a fixed direction.
class Featurizer {
 public:
  Featurizer(int feature_dim, int vocab_size, int max_depth, double hash_scale,
             double shift_factor, std::uint64_t seed);

  int dim() const { return d_; }
  Representation featurize(const SyntheticProblem& problem,
                           const PartialPath& path) const;

 private:
  int d_;
  int vocab_;
  int max_depth_;
  double hash_scale_;
  double shift_factor_;
  Eigen::MatrixXd projection_;  // d x raw feature dim
  Eigen::MatrixXd rotation_;    // d x d orthogonal
  Eigen::VectorXd shift_dir_;   // unit length
};

// World spec: everything needed to regenerate a problem set bit-exactly.
struct WorldSpec {
  ProblemConfig problem;
  double generator_bias = 0.8;
  int feature_dim = 32;
  double hash_scale = 0.1;
  double shift_factor = 3.0;
  ShiftTag train_tag = ShiftTag::Id;  // Id or Rtn
  ShiftTag test_tag = ShiftTag::Id;   // Id or Ood
  int train_problems = 150;
  int test_problems = 200;
  std::uint64_t world_seed = 1;
  std::uint64_t featurizer_seed = 2;

  void validate() const;
};

std::string world_spec_to_string(const WorldSpec& spec);
WorldSpec world_spec_from_string(const std::string& body);
void save_world_spec(const WorldSpec& spec, const std::string& path);
WorldSpec load_world_spec(const std::string& path);

// Materialized world: train/test problem sets plus the shared frozen
// featurizer. Immutable after construction.
class World {
 public:
  static World build(const WorldSpec& spec);
  // Re-derives problem seeds (not the featurizer) for an experiment repeat.
  static World build(const WorldSpec& spec, std::uint64_t reseed);

  const WorldSpec& spec() const { return spec_; }
  const std::vector<SyntheticProblem>& train_problems() const {
    return train_;
  }
  const std::vector<SyntheticProblem>& test_problems() const { return test_; }
  const Featurizer& featurizer() const { return featurizer_; }

  const SyntheticProblem& problem(const std::string& question_id) const;
  Representation featurize_path(const PartialPath& path) const;
  // Tag-aware rollout: Rtn-tagged problems use the randomized-token
  // generator, all others the biased step policy.
  PartialPath rollout(const std::string& question_id, Rng& rng) const;
  PartialPath one_step(const PartialPath& prefix, Rng& rng) const;
  int label(const PartialPath& path) const;

 private:
  World(WorldSpec spec, Featurizer featurizer);
  WorldSpec spec_;
  Featurizer featurizer_;
  std::vector<SyntheticProblem> train_;
  std::vector<SyntheticProblem> test_;
};

}  // namespace uvs
