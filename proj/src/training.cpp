#include "uvs/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "uvs/util.hpp"

namespace uvs {

void TrainConfig::validate() const {
  if (paths_per_question < 1)
    throw std::invalid_argument("paths_per_question must be positive");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("learning_rate must be positive");
  if (weight_decay < 0.0)
    throw std::invalid_argument("weight_decay must be non-negative");
}

std::vector<ValueExample> build_value_dataset(
    const RolloutGenerator& generate, const AnswerChecker& check,
    const std::vector<std::string>& question_ids, int paths_per_question,
    Rng& rng) {
  if (paths_per_question < 1)
    throw std::invalid_argument("paths_per_question must be positive");
  const std::uint64_t base = rng.next_u64();
  std::vector<ValueExample> dataset;
  dataset.reserve(question_ids.size() * static_cast<size_t>(paths_per_question));
  for (size_t qi = 0; qi < question_ids.size(); ++qi) {
    Rng qrng(Rng::derive(base, "dataset-question", qi));
    for (int k = 0; k < paths_per_question; ++k) {
      ValueExample ex;
      ex.path = generate(question_ids[qi], qrng);
      ex.label = ex.path.complete() ? check(ex.path) : 0;
      dataset.push_back(std::move(ex));
    }
  }
  return dataset;
}

namespace {

// Step prefixes of a path: t = 1..T where T is the step count. The last
// prefix of a complete path carries the answer.
PartialPath prefix_at(const PartialPath& path, int t) {
  PartialPath p;
  p.question_id = path.question_id;
  p.steps.assign(path.steps.begin(), path.steps.begin() + t);
  if (t == path.step_count() && path.complete()) p.answer = path.answer;
  return p;
}

}  // namespace

double ovm_loss(const UvmHead& head, const ValueExample& example,
                const PrefixFeaturizer& featurize) {
  const int T = example.path.step_count();
  if (T < 1) throw std::invalid_argument("example path has no steps");
  const double y = static_cast<double>(example.label);
  double loss = 0.0;
  for (int t = 1; t <= T; ++t) {
    const double v = mean_value(head, featurize(prefix_at(example.path, t)));
    loss += (v - y) * (v - y);
  }
  return loss;
}

double uvm_loss(const UvmHead& head, const ValueExample& example,
                const PrefixFeaturizer& featurize) {
  const int T = example.path.step_count();
  if (T < 1) throw std::invalid_argument("example path has no steps");
  const double y = static_cast<double>(example.label);
  const int two_m = 2 * head.m;
  double loss = 0.0;
  for (int t = 1; t <= T; ++t) {
    const Representation x = featurize(prefix_at(example.path, t));
    double term = 0.0;
    for (int i = 0; i < two_m; ++i) {
      const double v = posterior_value(head, x, signed_coordinate(head.m, i));
      term += (v - y) * (v - y);
    }
    loss += term / two_m;
  }
  return loss;
}

namespace {

struct BatchStats {
  double loss = 0.0;
  HeadGradient grad;
};

// Mean batch loss and its gradient in one pass. For a prefix with
// representation x, loading c = M^T x and mean v0, the 2m signed coordinate
// terms reduce to
//   (1/2m) sum_i (v_i - y)^2 = (v0 - y)^2 + (1/m) |c|^2
// with gradients 2 (v0 - y) x for the mean weights and
// (2 u / m) x c^T for the posterior matrix.
BatchStats batch_loss_and_gradient(const UvmHead& head,
                                   const std::vector<ValueExample>& batch,
                                   const PrefixFeaturizer& featurize) {
  if (batch.empty()) throw std::invalid_argument("batch must be non-empty");
  BatchStats st;
  st.grad.mean_weights = Eigen::VectorXd::Zero(head.d);
  st.grad.posterior_matrix = Eigen::MatrixXd::Zero(head.d, head.m);
  const Eigen::MatrixXd M = head.uncertainty_matrix();
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const ValueExample& ex : batch) {
    const int T = ex.path.step_count();
    if (T < 1) throw std::invalid_argument("example path has no steps");
    const double y = static_cast<double>(ex.label);
    for (int t = 1; t <= T; ++t) {
      const Representation x = featurize(prefix_at(ex.path, t));
      const double v0 = x.dot(head.mean_weights);
      const Eigen::VectorXd c = M.transpose() * x;
      st.loss += inv_n * ((v0 - y) * (v0 - y) + c.squaredNorm() / head.m);
      st.grad.mean_weights += (inv_n * 2.0 * (v0 - y)) * x;
      st.grad.posterior_matrix +=
          (inv_n * 2.0 * head.posterior_scale / head.m) * (x * c.transpose());
    }
  }
  return st;
}

struct AdamWState {
  Eigen::VectorXd m_mean, v_mean;
  Eigen::MatrixXd m_post, v_post;
  int step = 0;

  explicit AdamWState(const UvmHead& head)
      : m_mean(Eigen::VectorXd::Zero(head.d)),
        v_mean(Eigen::VectorXd::Zero(head.d)),
        m_post(Eigen::MatrixXd::Zero(head.d, head.m)),
        v_post(Eigen::MatrixXd::Zero(head.d, head.m)) {}
};

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void apply_update(UvmHead& head, const HeadGradient& grad,
                  const TrainConfig& cfg, AdamWState& adam) {
  const double lr = cfg.learning_rate;
  const double wd = cfg.weight_decay;
  if (cfg.optimizer == Optimizer::Sgd) {
    head.mean_weights -= lr * (grad.mean_weights + wd * head.mean_weights);
    head.posterior_matrix -=
        lr * (grad.posterior_matrix + wd * head.posterior_matrix);
    return;
  }
  adam.step += 1;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, adam.step);
  const double bc2 = 1.0 - std::pow(kAdamBeta2, adam.step);
  adam.m_mean = kAdamBeta1 * adam.m_mean + (1.0 - kAdamBeta1) * grad.mean_weights;
  adam.v_mean = kAdamBeta2 * adam.v_mean +
                (1.0 - kAdamBeta2) * grad.mean_weights.cwiseAbs2();
  adam.m_post =
      kAdamBeta1 * adam.m_post + (1.0 - kAdamBeta1) * grad.posterior_matrix;
  adam.v_post = kAdamBeta2 * adam.v_post +
                (1.0 - kAdamBeta2) * grad.posterior_matrix.cwiseAbs2();
  head.mean_weights -=
      lr * ((adam.m_mean / bc1).array() /
                ((adam.v_mean / bc2).array().sqrt() + kAdamEps) +
            wd * head.mean_weights.array())
               .matrix();
  head.posterior_matrix -=
      lr * ((adam.m_post / bc1).array() /
                ((adam.v_post / bc2).array().sqrt() + kAdamEps) +
            wd * head.posterior_matrix.array())
               .matrix();
}

}  // namespace

HeadGradient uvm_loss_gradient(const UvmHead& head,
                               const std::vector<ValueExample>& batch,
                               const PrefixFeaturizer& featurize) {
  return batch_loss_and_gradient(head, batch, featurize).grad;
}

TrainResult train_uvm(const UvmHead& head,
                      const std::vector<ValueExample>& dataset,
                      const PrefixFeaturizer& featurize,
                      const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("dataset must be non-empty");
  TrainResult result;
  result.head = head;
  Rng rng(Rng::derive(cfg.seed, "train-shuffle"));
  AdamWState adam(head);
  std::vector<size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), size_t{0});
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the derived stream keeps the schedule seed-stable.
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<size_t>(rng.uniform_int(static_cast<int>(i)))]);
    int batch_index = 0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end =
          std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<ValueExample> batch;
      batch.reserve(end - start);
      for (size_t i = start; i < end; ++i) batch.push_back(dataset[order[i]]);
      const BatchStats st =
          batch_loss_and_gradient(result.head, batch, featurize);
      if (!std::isfinite(st.loss))
        throw std::runtime_error(
            "training diverged: non-finite loss at epoch " +
            std::to_string(epoch) + " batch " + std::to_string(batch_index));
      result.trace.push_back({epoch, batch_index, st.loss});
      apply_update(result.head, st.grad, cfg, adam);
      ++batch_index;
    }
  }
  return result;
}

ValueScorer derive_ovm(const UvmHead& head) {
  return [head](const Representation& x) { return mean_value(head, x); };
}

std::string dataset_to_jsonl(const std::vector<ValueExample>& dataset) {
  std::ostringstream out;
  for (const ValueExample& ex : dataset) {
    nlohmann::json j;
    j["question_id"] = ex.path.question_id;
    nlohmann::json steps = nlohmann::json::array();
    for (int s : ex.path.steps) steps.push_back(std::to_string(s));
    j["steps"] = steps;
    if (ex.path.answer.has_value())
      j["answer"] = std::to_string(*ex.path.answer);
    else
      j["answer"] = nullptr;
    j["label"] = ex.label;
    out << j.dump() << "\n";
  }
  return out.str();
}

std::vector<ValueExample> dataset_from_jsonl(const std::string& body) {
  std::vector<ValueExample> dataset;
  std::istringstream in(body);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    ValueExample ex;
    ex.path.question_id = j.at("question_id").get<std::string>();
    for (const auto& s : j.at("steps"))
      ex.path.steps.push_back(std::stoi(s.get<std::string>()));
    if (!j.at("answer").is_null())
      ex.path.answer = std::stoll(j.at("answer").get<std::string>());
    ex.label = j.at("label").get<int>();
    dataset.push_back(std::move(ex));
  }
  return dataset;
}

void save_dataset(const std::vector<ValueExample>& dataset,
                  const std::string& path) {
  write_text_file(path, dataset_to_jsonl(dataset));
}

std::vector<ValueExample> load_dataset(const std::string& path) {
  return dataset_from_jsonl(read_text_file(path));
}

void save_loss_trace(const std::vector<LossRecord>& trace,
                     const std::string& path) {
  std::ostringstream out;
  out << "epoch,batch,loss\n";
  for (const LossRecord& r : trace)
    out << r.epoch << "," << r.batch << "," << fmt_double(r.loss) << "\n";
  write_text_file(path, out.str());
}

}  // namespace uvs
