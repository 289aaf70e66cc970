#pragma once

#include <functional>
#include <string>
#include <vector>

#include "uvs/path.hpp"
#include "uvs/uvm_head.hpp"

namespace uvs {

// One (question, full path, binary outcome) training tuple. Paths that hit
// the generation cap without an answer are kept with label 0.
struct ValueExample {
  PartialPath path;
  int label = 0;

  bool complete() const { return path.complete(); }
};

enum class Optimizer { Sgd, AdamW };

struct TrainConfig {
  int paths_per_question = 50;
  int epochs = 1;
  int batch_size = 64;
  double learning_rate = 1e-2;
  double weight_decay = 0.0;
  Optimizer optimizer = Optimizer::AdamW;
  std::uint64_t seed = 0;

  void validate() const;
};

// Maps a (question, partial path) to its frozen representation. The
// featurizer carries no trainable parameters, so no gradient can leak out of
// the value head into it; a learned backbone substituted here must block the
// uncertainty-branch gradient itself.
using PrefixFeaturizer = std::function<Representation(const PartialPath&)>;

// Produces one full solution attempt for a question.
using RolloutGenerator =
    std::function<PartialPath(const std::string& question_id, Rng&)>;

// Ground-truth answer check for a complete path (1 correct / 0 incorrect).
using AnswerChecker = std::function<int(const PartialPath&)>;

// Samples paths_per_question rollouts per question and labels each path by
// its final answer. Per-question streams are derived from the root stream, so
// the result is independent of processing order.
std::vector<ValueExample> build_value_dataset(
    const RolloutGenerator& generate, const AnswerChecker& check,
    const std::vector<std::string>& question_ids, int paths_per_question,
    Rng& rng);

// Squared error of the mean branch against the label, summed over the step
// prefixes of the path. The final prefix of a complete path includes the
// answer token; no extra term is added for it.
double ovm_loss(const UvmHead& head, const ValueExample& example,
                const PrefixFeaturizer& featurize);

// Same prefix sum, but each term averages the squared error over the full
// enumeration of the 2m signed coordinate indices (no sampling).
double uvm_loss(const UvmHead& head, const ValueExample& example,
                const PrefixFeaturizer& featurize);

// Gradient of the mean batch uvm_loss. Only the mean weights and the
// posterior matrix receive gradient; the prior matrix is frozen by type.
struct HeadGradient {
  Eigen::VectorXd mean_weights;
  Eigen::MatrixXd posterior_matrix;
};

HeadGradient uvm_loss_gradient(const UvmHead& head,
                               const std::vector<ValueExample>& batch,
                               const PrefixFeaturizer& featurize);

struct LossRecord {
  int epoch = 0;
  int batch = 0;
  double loss = 0.0;
};

struct TrainResult {
  UvmHead head;
  std::vector<LossRecord> trace;
};

// Mini-batch training of (mean_weights, posterior_matrix). Deterministic
// given (config.seed, dataset order); aborts on non-finite loss.
TrainResult train_uvm(const UvmHead& head,
                      const std::vector<ValueExample>& dataset,
                      const PrefixFeaturizer& featurize,
                      const TrainConfig& cfg);

// The conventional outcome value model derived from a trained head: the
// deterministic mean branch as a standalone scorer.
using ValueScorer = std::function<double(const Representation&)>;
ValueScorer derive_ovm(const UvmHead& head);

// Dataset file: one JSON record per line {question_id, steps, answer, label}.
std::string dataset_to_jsonl(const std::vector<ValueExample>& dataset);
std::vector<ValueExample> dataset_from_jsonl(const std::string& body);
void save_dataset(const std::vector<ValueExample>& dataset,
                  const std::string& path);
std::vector<ValueExample> load_dataset(const std::string& path);

// Loss trace file: CSV with header epoch,batch,loss.
void save_loss_trace(const std::vector<LossRecord>& trace,
                     const std::string& path);

}  // namespace uvs
