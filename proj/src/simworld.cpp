#include "uvs/simworld.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>

#include "json.hpp"
#include "uvs/util.hpp"

namespace uvs {

std::string to_string(ShiftTag tag) {
  switch (tag) {
    case ShiftTag::Id:
      return "id";
    case ShiftTag::Ood:
      return "ood";
    case ShiftTag::Rtn:
      return "rtn";
  }
  throw std::logic_error("unreachable shift tag");
}

ShiftTag shift_tag_from_string(const std::string& s) {
  if (s == "id") return ShiftTag::Id;
  if (s == "ood") return ShiftTag::Ood;
  if (s == "rtn") return ShiftTag::Rtn;
  throw std::invalid_argument("unknown shift tag: " + s);
}

void ProblemConfig::validate() const {
  if (branching < 2) throw std::invalid_argument("branching must be >= 2");
  if (depth < 1) throw std::invalid_argument("depth must be >= 1");
  if (vocab_size < branching)
    throw std::invalid_argument("vocab_size must cover the child tokens");
  if (!(correct_fraction > 0.0) || !(correct_fraction < 1.0))
    throw std::invalid_argument("correct_fraction must be in (0, 1)");
  if (clumpiness < 0.0)
    throw std::invalid_argument("clumpiness must be non-negative");
  // Trees stay small enough for exhaustive oracles.
  double leaves = 1.0;
  for (int i = 0; i < depth; ++i) leaves *= branching;
  if (leaves > (1 << 20))
    throw std::invalid_argument("tree too large: branching^depth > 2^20");
}

std::uint64_t SyntheticProblem::leaf_count() const {
  std::uint64_t n = 1;
  for (int i = 0; i < depth; ++i) n *= static_cast<std::uint64_t>(branching);
  return n;
}

std::uint64_t SyntheticProblem::leaf_of(const std::vector<int>& steps) const {
  if (static_cast<int>(steps.size()) != depth)
    throw std::invalid_argument("leaf_of needs a full-depth step sequence");
  std::uint64_t id = 0;
  for (int s : steps) {
    if (s < 0 || s >= branching)
      throw std::invalid_argument("step token off the tree");
    id = id * static_cast<std::uint64_t>(branching) +
         static_cast<std::uint64_t>(s);
  }
  return id;
}

bool SyntheticProblem::on_tree(const std::vector<int>& steps) const {
  if (static_cast<int>(steps.size()) > depth) return false;
  for (int s : steps)
    if (s < 0 || s >= branching) return false;
  return true;
}

bool SyntheticProblem::is_correct_answer(AnswerToken a) const {
  if (a < 0) return false;
  return std::binary_search(correct_leaves.begin(), correct_leaves.end(),
                            static_cast<std::uint64_t>(a));
}

bool SyntheticProblem::subtree_has_correct(
    const std::vector<int>& prefix) const {
  if (!on_tree(prefix))
    throw std::invalid_argument("prefix off the tree");
  std::uint64_t lo = 0;
  for (int s : prefix)
    lo = lo * static_cast<std::uint64_t>(branching) +
         static_cast<std::uint64_t>(s);
  std::uint64_t width = 1;
  for (int i = static_cast<int>(prefix.size()); i < depth; ++i)
    width *= static_cast<std::uint64_t>(branching);
  lo *= width;
  const auto it =
      std::lower_bound(correct_leaves.begin(), correct_leaves.end(), lo);
  return it != correct_leaves.end() && *it < lo + width;
}

SyntheticProblem SyntheticProblem::with_tag(ShiftTag tag) const {
  SyntheticProblem p = *this;
  p.shift_tag = tag;
  return p;
}

namespace {

void plant_correct(const ProblemConfig& cfg, int level, std::uint64_t node,
                   double p, Rng& rng, std::vector<std::uint64_t>* out) {
  if (level == cfg.depth) {
    if (rng.uniform() < p) out->push_back(node);
    return;
  }
  const int b = cfg.branching;
  std::vector<double> w(static_cast<size_t>(b));
  double total = 0.0;
  for (int c = 0; c < b; ++c) {
    w[static_cast<size_t>(c)] = std::exp(cfg.clumpiness * rng.normal());
    total += w[static_cast<size_t>(c)];
  }
  for (int c = 0; c < b; ++c) {
    const double child_p =
        std::min(1.0, p * w[static_cast<size_t>(c)] * b / total);
    plant_correct(cfg, level + 1, node * static_cast<std::uint64_t>(b) +
                                      static_cast<std::uint64_t>(c),
                  child_p, rng, out);
  }
}

}  // namespace

SyntheticProblem make_problem(const ProblemConfig& cfg,
                              const std::string& question_id, ShiftTag tag,
                              Rng& rng) {
  cfg.validate();
  SyntheticProblem p;
  p.question_id = question_id;
  p.branching = cfg.branching;
  p.depth = cfg.depth;
  p.vocab_size = cfg.vocab_size;
  p.shift_tag = tag;
  plant_correct(cfg, 0, 0, cfg.correct_fraction, rng, &p.correct_leaves);
  const std::uint64_t leaves = p.leaf_count();
  if (p.correct_leaves.empty())
    p.correct_leaves.push_back(static_cast<std::uint64_t>(
        rng.uniform_int(static_cast<int>(leaves))));
  if (p.correct_leaves.size() == leaves)
    p.correct_leaves.erase(p.correct_leaves.begin() +
                           rng.uniform_int(static_cast<int>(leaves)));
  return p;
}

Eigen::VectorXd step_policy(const SyntheticProblem& problem,
                            const std::vector<int>& prefix, double bias) {
  if (static_cast<int>(prefix.size()) >= problem.depth)
    throw std::invalid_argument("policy undefined at a leaf");
  const int b = problem.branching;
  Eigen::VectorXd logits(b);
  std::vector<int> child = prefix;
  child.push_back(0);
  for (int c = 0; c < b; ++c) {
    child.back() = c;
    logits[c] = problem.subtree_has_correct(child) ? bias : 0.0;
  }
  const double mx = logits.maxCoeff();
  Eigen::VectorXd probs = (logits.array() - mx).exp();
  probs /= probs.sum();
  return probs;
}

PartialPath gen_step(const SyntheticProblem& problem, const PartialPath& prefix,
                     double bias, Rng& rng) {
  if (prefix.complete())
    throw std::invalid_argument("cannot extend a complete path");
  if (!problem.on_tree(prefix.steps) ||
      prefix.step_count() >= problem.depth)
    throw std::invalid_argument("prefix off the tree");
  const Eigen::VectorXd probs = step_policy(problem, prefix.steps, bias);
  const double u = rng.uniform();
  double acc = 0.0;
  int pick = problem.branching - 1;
  for (int c = 0; c < problem.branching; ++c) {
    acc += probs[c];
    if (u < acc) {
      pick = c;
      break;
    }
  }
  PartialPath next = prefix.with_step(pick);
  if (next.step_count() == problem.depth)
    next.answer = static_cast<AnswerToken>(problem.leaf_of(next.steps));
  return next;
}

int check_answer(const SyntheticProblem& problem, const PartialPath& path) {
  if (!path.complete())
    throw std::invalid_argument("check_answer needs a complete path");
  if (!problem.on_tree(path.steps) ||
      path.step_count() != problem.depth)
    return 0;
  return problem.is_correct_answer(*path.answer) ? 1 : 0;
}

namespace {

double subtree_value(const SyntheticProblem& problem, std::vector<int>& prefix,
                     double bias) {
  if (static_cast<int>(prefix.size()) == problem.depth)
    return problem.is_correct_answer(
               static_cast<AnswerToken>(problem.leaf_of(prefix)))
               ? 1.0
               : 0.0;
  const Eigen::VectorXd probs = step_policy(problem, prefix, bias);
  double v = 0.0;
  for (int c = 0; c < problem.branching; ++c) {
    prefix.push_back(c);
    v += probs[c] * subtree_value(problem, prefix, bias);
    prefix.pop_back();
  }
  return v;
}

}  // namespace

double true_prefix_value(const SyntheticProblem& problem,
                         const PartialPath& prefix, double generator_bias) {
  if (!problem.on_tree(prefix.steps))
    throw std::invalid_argument("prefix off the tree");
  std::vector<int> steps = prefix.steps;
  return subtree_value(problem, steps, generator_bias);
}

PartialPath policy_rollout(const SyntheticProblem& problem, double bias,
                           Rng& rng) {
  PartialPath path = make_root(problem.question_id);
  while (!path.complete()) path = gen_step(problem, path, bias, rng);
  return path;
}

PartialPath rtn_rollout(const SyntheticProblem& problem, Rng& rng) {
  PartialPath path = make_root(problem.question_id);
  for (int t = 0; t < problem.depth; ++t)
    path.steps.push_back(rng.uniform_int(problem.vocab_size));
  path.answer = problem.on_tree(path.steps)
                    ? static_cast<AnswerToken>(problem.leaf_of(path.steps))
                    : kInvalidAnswer;
  return path;
}

Featurizer::Featurizer(int feature_dim, int vocab_size, int max_depth,
                       double hash_scale, double shift_factor,
                       std::uint64_t seed)
    : d_(feature_dim),
      vocab_(vocab_size),
      max_depth_(max_depth),
      hash_scale_(hash_scale),
      shift_factor_(shift_factor) {
  if (d_ < 2) throw std::invalid_argument("feature_dim must be >= 2");
  if (vocab_ < 1 || max_depth_ < 1)
    throw std::invalid_argument("featurizer shape invalid");
  const int raw = vocab_ + (max_depth_ + 1) + 2;
  Rng rng(Rng::derive(seed, "featurizer-projection"));
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_));
  projection_.resize(d_, raw);
  for (int i = 0; i < d_; ++i)
    for (int j = 0; j < raw; ++j) projection_(i, j) = scale * rng.normal();
  // Random orthogonal matrix: QR of a Gaussian matrix, signs fixed so the
  // factorization is unique.
  Eigen::MatrixXd g(d_, d_);
  for (int i = 0; i < d_; ++i)
    for (int j = 0; j < d_; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  rotation_ = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < d_; ++j)
    if (r(j, j) < 0.0) rotation_.col(j) *= -1.0;
  shift_dir_.resize(d_);
  for (int i = 0; i < d_; ++i) shift_dir_[i] = rng.normal();
  shift_dir_.normalize();
}

Representation Featurizer::featurize(const SyntheticProblem& problem,
                                     const PartialPath& path) const {
  const int raw = vocab_ + (max_depth_ + 1) + 2;
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(raw);
  for (int s : path.steps) {
    if (s < 0 || s >= vocab_)
      throw std::invalid_argument("step token outside the vocabulary");
    phi[s] += 1.0;
  }
  const int t = std::min(path.step_count(), max_depth_);
  phi[vocab_ + t] = 1.0;
  phi[vocab_ + max_depth_ + 1] = path.complete() ? 1.0 : 0.0;
  phi[raw - 1] = 1.0;  // constant slot
  phi.normalize();
  Representation x = projection_ * phi;

  // Deterministic per-path perturbation so distinct paths with equal token
  // histograms stay distinguishable.
  std::uint64_t h = fnv1a(path.question_id);
  for (int s : path.steps) h = fnv1a_u64(static_cast<std::uint64_t>(s), h);
  h = fnv1a_u64(
      path.complete() ? static_cast<std::uint64_t>(*path.answer + 2) : 0ull,
      h);
  Rng hrng(Rng::derive(h, "featurizer-hash"));
  Eigen::VectorXd noise(d_);
  for (int i = 0; i < d_; ++i) noise[i] = hrng.normal();
  noise.normalize();
  x += hash_scale_ * noise;

  if (problem.shift_tag == ShiftTag::Ood)
    x = rotation_ * x + shift_factor_ * shift_dir_;
  return x;
}

void WorldSpec::validate() const {
  problem.validate();
  if (feature_dim < 2) throw std::invalid_argument("feature_dim must be >= 2");
  if (hash_scale < 0.0 || shift_factor < 0.0)
    throw std::invalid_argument("feature scales must be non-negative");
  if (train_tag == ShiftTag::Ood)
    throw std::invalid_argument("train_tag must be id or rtn");
  if (test_tag == ShiftTag::Rtn)
    throw std::invalid_argument("test_tag must be id or ood");
  if (train_problems < 1 || test_problems < 1)
    throw std::invalid_argument("problem counts must be positive");
  if (generator_bias < 0.0)
    throw std::invalid_argument("generator_bias must be non-negative");
}

std::string world_spec_to_string(const WorldSpec& spec) {
  nlohmann::json j;
  j["branching"] = spec.problem.branching;
  j["depth"] = spec.problem.depth;
  j["vocab_size"] = spec.problem.vocab_size;
  j["correct_fraction"] = spec.problem.correct_fraction;
  j["clumpiness"] = spec.problem.clumpiness;
  j["generator_bias"] = spec.generator_bias;
  j["feature_dim"] = spec.feature_dim;
  j["hash_scale"] = spec.hash_scale;
  j["shift_factor"] = spec.shift_factor;
  j["train_tag"] = to_string(spec.train_tag);
  j["test_tag"] = to_string(spec.test_tag);
  j["train_problems"] = spec.train_problems;
  j["test_problems"] = spec.test_problems;
  j["world_seed"] = spec.world_seed;
  j["featurizer_seed"] = spec.featurizer_seed;
  return j.dump(2) + "\n";
}

WorldSpec world_spec_from_string(const std::string& body) {
  nlohmann::json j = nlohmann::json::parse(body);
  WorldSpec spec;
  spec.problem.branching = j.at("branching").get<int>();
  spec.problem.depth = j.at("depth").get<int>();
  spec.problem.vocab_size = j.at("vocab_size").get<int>();
  spec.problem.correct_fraction = j.at("correct_fraction").get<double>();
  spec.problem.clumpiness = j.at("clumpiness").get<double>();
  spec.generator_bias = j.at("generator_bias").get<double>();
  spec.feature_dim = j.at("feature_dim").get<int>();
  spec.hash_scale = j.at("hash_scale").get<double>();
  spec.shift_factor = j.at("shift_factor").get<double>();
  spec.train_tag = shift_tag_from_string(j.at("train_tag").get<std::string>());
  spec.test_tag = shift_tag_from_string(j.at("test_tag").get<std::string>());
  spec.train_problems = j.at("train_problems").get<int>();
  spec.test_problems = j.at("test_problems").get<int>();
  spec.world_seed = j.at("world_seed").get<std::uint64_t>();
  spec.featurizer_seed = j.at("featurizer_seed").get<std::uint64_t>();
  spec.validate();
  return spec;
}

void save_world_spec(const WorldSpec& spec, const std::string& path) {
  write_text_file(path, world_spec_to_string(spec));
}

WorldSpec load_world_spec(const std::string& path) {
  return world_spec_from_string(read_text_file(path));
}

World::World(WorldSpec spec, Featurizer featurizer)
    : spec_(std::move(spec)), featurizer_(std::move(featurizer)) {}

World World::build(const WorldSpec& spec) { return build(spec, 0); }

World World::build(const WorldSpec& spec, std::uint64_t reseed) {
  spec.validate();
  World w(spec, Featurizer(spec.feature_dim, spec.problem.vocab_size,
                           spec.problem.depth, spec.hash_scale,
                           spec.shift_factor, spec.featurizer_seed));
  const std::uint64_t seed = Rng::derive(spec.world_seed, reseed);
  char buf[32];
  for (int i = 0; i < spec.train_problems; ++i) {
    std::snprintf(buf, sizeof(buf), "train-%04d", i);
    Rng rng(Rng::derive(seed, "train-problem", i));
    w.train_.push_back(make_problem(spec.problem, buf, spec.train_tag, rng));
  }
  for (int i = 0; i < spec.test_problems; ++i) {
    std::snprintf(buf, sizeof(buf), "test-%04d", i);
    Rng rng(Rng::derive(seed, "test-problem", i));
    w.test_.push_back(make_problem(spec.problem, buf, spec.test_tag, rng));
  }
  return w;
}

const SyntheticProblem& World::problem(const std::string& question_id) const {
  // Ids are "train-NNNN" / "test-NNNN" as produced by build().
  const auto dash = question_id.find('-');
  if (dash != std::string::npos) {
    const std::string split = question_id.substr(0, dash);
    const std::vector<SyntheticProblem>* pool =
        split == "train" ? &train_ : (split == "test" ? &test_ : nullptr);
    if (pool != nullptr) {
      const int idx = std::atoi(question_id.c_str() + dash + 1);
      if (idx >= 0 && idx < static_cast<int>(pool->size()) &&
          (*pool)[static_cast<size_t>(idx)].question_id == question_id)
        return (*pool)[static_cast<size_t>(idx)];
    }
  }
  throw std::invalid_argument("unknown question: " + question_id);
}

Representation World::featurize_path(const PartialPath& path) const {
  return featurizer_.featurize(problem(path.question_id), path);
}

PartialPath World::rollout(const std::string& question_id, Rng& rng) const {
  const SyntheticProblem& p = problem(question_id);
  if (p.shift_tag == ShiftTag::Rtn) return rtn_rollout(p, rng);
  return policy_rollout(p, spec_.generator_bias, rng);
}

PartialPath World::one_step(const PartialPath& prefix, Rng& rng) const {
  return gen_step(problem(prefix.question_id), prefix, spec_.generator_bias,
                  rng);
}

int World::label(const PartialPath& path) const {
  return check_answer(problem(path.question_id), path);
}

}  // namespace uvs
