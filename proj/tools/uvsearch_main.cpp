#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "uvs/harness.hpp"
#include "uvs/util.hpp"

namespace {

using namespace uvs;

std::vector<std::string> split_question_ids(const World& world,
                                            const std::string& split) {
  std::vector<std::string> ids;
  const auto& pool =
      split == "train" ? world.train_problems() : world.test_problems();
  for (const SyntheticProblem& p : pool) ids.push_back(p.question_id);
  return ids;
}

int cmd_gen_world(const std::string& config_path, const std::string& out_dir) {
  WorldSpec spec = [&] {
    try {
      return load_world_spec(config_path);
    } catch (const std::exception& e) {
      throw StageError("config", e.what());
    }
  }();
  try {
    World world = World::build(spec);
    std::filesystem::create_directories(out_dir);
    save_world_spec(spec, out_dir + "/world.json");
    nlohmann::json summary;
    summary["train_problems"] = world.train_problems().size();
    summary["test_problems"] = world.test_problems().size();
    summary["leaves_per_problem"] = world.train_problems().front().leaf_count();
    nlohmann::json counts = nlohmann::json::array();
    for (const SyntheticProblem& p : world.test_problems())
      counts.push_back(p.correct_leaves.size());
    summary["test_correct_leaf_counts"] = counts;
    write_text_file(out_dir + "/world_summary.json", summary.dump(2) + "\n");
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError("world", e.what());
  }
  std::cout << "world written to " << out_dir << "\n";
  return 0;
}

int cmd_build_dataset(const std::string& world_path, const std::string& split,
                      int paths_per_question, std::uint64_t seed,
                      const std::string& out_path) {
  try {
    World world = World::build(load_world_spec(world_path));
    Rng rng(Rng::derive(seed, "dataset"));
    const auto dataset = build_value_dataset(
        [&world](const std::string& qid, Rng& r) { return world.rollout(qid, r); },
        [&world](const PartialPath& p) { return world.label(p); },
        split_question_ids(world, split), paths_per_question, rng);
    save_dataset(dataset, out_path);
    int positives = 0;
    for (const ValueExample& ex : dataset) positives += ex.label;
    std::cout << "wrote " << dataset.size() << " examples (" << positives
              << " positive) to " << out_path << "\n";
  } catch (const std::exception& e) {
    throw StageError("dataset", e.what());
  }
  return 0;
}

int cmd_train(const std::string& world_path, const std::string& dataset_path,
              const UvmHeadConfig& head_cfg, TrainConfig train_cfg,
              std::uint64_t seed, const std::string& out_path,
              const std::string& trace_path) {
  try {
    World world = World::build(load_world_spec(world_path));
    const auto dataset = load_dataset(dataset_path);
    UvmHeadConfig cfg = head_cfg;
    cfg.d = world.featurizer().dim();
    UvmHead head = UvmHead::init(cfg, Rng::derive(seed, "prior"));
    train_cfg.seed = Rng::derive(seed, "train");
    const TrainResult result = train_uvm(
        head, dataset,
        [&world](const PartialPath& p) { return world.featurize_path(p); },
        train_cfg);
    save_checkpoint(result.head, out_path);
    if (!trace_path.empty()) save_loss_trace(result.trace, trace_path);
    std::cout << "trained on " << dataset.size() << " examples, checkpoint at "
              << out_path << "\n";
  } catch (const std::exception& e) {
    throw StageError("train", e.what());
  }
  return 0;
}

int cmd_search(const std::string& world_path, const std::string& ckpt_path,
               const std::string& selector_name, int max_tries, int n_samples,
               const std::string& coupling, SearchConfig scfg,
               const std::string& split, std::uint64_t seed,
               const std::string& out_path, const std::string& trace_path) {
  try {
    World world = World::build(load_world_spec(world_path));
    const UvmHead head = load_checkpoint(ckpt_path);
    SelectorSpec selector = SelectorSpec::parse(selector_name);
    selector.max_tries = max_tries;
    selector.n_samples = n_samples;
    selector.coupling =
        coupling == "independent" ? Coupling::Independent : Coupling::Shared;
    if (scfg.max_steps == 0) scfg.max_steps = world.spec().problem.depth;

    const StepGenerator generate =
        [&world](const PartialPath& prefix, Rng& r) -> std::optional<PartialPath> {
      return world.one_step(prefix, r);
    };
    const auto featurize = [&world](const PartialPath& p) {
      return world.featurize_path(p);
    };
    CandidateScorer scorer;
    if (selector.kind == SelectorKind::OvmGreedy) {
      const ValueScorer ovm = derive_ovm(head);
      scorer = make_value_scorer([ovm, featurize](const PartialPath& p) {
        return ovm(featurize(p));
      });
    } else {
      scorer = make_head_scorer(head, featurize);
    }

    std::ofstream trace_out;
    TraceSink sink = nullptr;
    if (!trace_path.empty()) {
      trace_out.open(trace_path, std::ios::binary | std::ios::trunc);
      sink = [&trace_out](const StepTrace& t) {
        nlohmann::json j;
        j["question_id"] = t.question_id;
        j["step"] = t.step;
        j["means"] = std::vector<double>(t.means.begin(),
                                         t.means.begin() + t.means.size());
        j["sampled"] = std::vector<double>(
            t.sampled.begin(), t.sampled.begin() + t.sampled.size());
        j["selected"] = t.selected;
        j["fallback_count"] = t.fallback_count;
        trace_out << j.dump() << "\n";
      };
    }

    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + out_path);
    const auto ids = split_question_ids(world, split);
    for (size_t qi = 0; qi < ids.size(); ++qi) {
      SearchConfig cfg = scfg;
      cfg.seed = Rng::derive(seed, "search", scfg.beam_width, qi);
      const auto paths = step_beam_search(generate, scorer,
                                          make_selector(selector), ids[qi],
                                          cfg, sink);
      nlohmann::json j;
      j["question_id"] = ids[qi];
      nlohmann::json jpaths = nlohmann::json::array();
      for (const PartialPath& p : paths) {
        nlohmann::json jp;
        jp["steps"] = p.steps;
        if (p.answer.has_value())
          jp["answer"] = *p.answer;
        else
          jp["answer"] = nullptr;
        jpaths.push_back(jp);
      }
      j["paths"] = jpaths;
      out << j.dump() << "\n";
    }
    std::cout << "searched " << ids.size() << " problems, paths at "
              << out_path << "\n";
  } catch (const std::exception& e) {
    throw StageError("search", e.what());
  }
  return 0;
}

int cmd_eval(const std::string& world_path, const std::string& paths_path,
             const std::string& out_path) {
  try {
    World world = World::build(load_world_spec(world_path));
    std::vector<std::vector<PartialPath>> path_sets;
    std::vector<SyntheticProblem> problems;
    std::istringstream in(read_text_file(paths_path));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      nlohmann::json j = nlohmann::json::parse(line);
      const std::string qid = j.at("question_id").get<std::string>();
      problems.push_back(world.problem(qid));
      std::vector<PartialPath> paths;
      for (const auto& jp : j.at("paths")) {
        PartialPath p;
        p.question_id = qid;
        p.steps = jp.at("steps").get<std::vector<int>>();
        if (!jp.at("answer").is_null())
          p.answer = jp.at("answer").get<AnswerToken>();
        paths.push_back(std::move(p));
      }
      path_sets.push_back(std::move(paths));
    }
    nlohmann::json metrics;
    metrics["problems"] = problems.size();
    metrics["coverage"] = coverage(path_sets, problems);
    metrics["precision"] = precision_majority_vote(path_sets, problems);
    const std::string body = metrics.dump(2) + "\n";
    if (!out_path.empty()) write_text_file(out_path, body);
    std::cout << body;
  } catch (const std::exception& e) {
    throw StageError("eval", e.what());
  }
  return 0;
}

int cmd_compare(const std::string& config_path, std::uint64_t seed,
                const std::string& out_override) {
  ExperimentConfig cfg = [&] {
    try {
      ExperimentConfig c = load_experiment_config(config_path);
      if (!out_override.empty()) c.output_dir = out_override;
      return c;
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError("config", e.what());
    }
  }();
  const RunReport report = run_compare(cfg, seed);
  std::cout << summary_csv(report);
  std::cout << "reports written to " << cfg.output_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uncertainty-aware value-guided beam search on synthetic worlds"};
  app.require_subcommand(1);

  // gen-world
  auto* gen_world = app.add_subcommand("gen-world", "materialize a world spec");
  std::string gw_config, gw_out = "world_out";
  gen_world->add_option("--config", gw_config, "world spec json")->required();
  gen_world->add_option("--out", gw_out, "output directory");

  // build-dataset
  auto* build = app.add_subcommand("build-dataset", "sample a value dataset");
  std::string bd_world, bd_split = "train", bd_out = "dataset.jsonl";
  int bd_n = 50;
  std::uint64_t bd_seed = 0;
  build->add_option("--world", bd_world, "world spec json")->required();
  build->add_option("--split", bd_split, "train or test");
  build->add_option("--paths-per-question", bd_n, "rollouts per question");
  build->add_option("--seed", bd_seed, "rng seed")->required();
  build->add_option("--out", bd_out, "output jsonl");

  // train
  auto* train = app.add_subcommand("train", "train a value head");
  std::string tr_world, tr_dataset, tr_out = "head.json", tr_trace;
  UvmHeadConfig tr_head;
  TrainConfig tr_cfg;
  std::uint64_t tr_seed = 0;
  std::string tr_opt = "adamw";
  train->add_option("--world", tr_world, "world spec json")->required();
  train->add_option("--dataset", tr_dataset, "dataset jsonl")->required();
  train->add_option("--m", tr_head.m, "ensemble components");
  train->add_option("--posterior-scale", tr_head.posterior_scale, "");
  train->add_option("--prior-scale", tr_head.prior_scale, "");
  train->add_option("--epochs", tr_cfg.epochs, "");
  train->add_option("--batch-size", tr_cfg.batch_size, "");
  train->add_option("--lr", tr_cfg.learning_rate, "");
  train->add_option("--weight-decay", tr_cfg.weight_decay, "");
  train->add_option("--optimizer", tr_opt, "sgd or adamw");
  train->add_option("--seed", tr_seed, "rng seed")->required();
  train->add_option("--out", tr_out, "checkpoint path");
  train->add_option("--loss-trace", tr_trace, "loss trace csv");

  // search
  auto* search = app.add_subcommand("search", "run guided beam search");
  std::string se_world, se_ckpt, se_selector = "gts", se_coupling = "shared";
  std::string se_split = "test", se_out = "paths.jsonl", se_trace;
  SearchConfig se_cfg;
  se_cfg.max_steps = 0;
  int se_tries = kDefaultMaxTries, se_samples = kDefaultRankSampleCount;
  std::uint64_t se_seed = 0;
  search->add_option("--world", se_world, "world spec json")->required();
  search->add_option("--ckpt", se_ckpt, "head checkpoint")->required();
  search->add_option("--selector", se_selector,
                     "gts | top1rank | ucb | ovm_greedy");
  search->add_option("--b", se_cfg.beam_width, "beam width");
  search->add_option("--K", se_cfg.candidate_size, "candidate size");
  search->add_option("--max-steps", se_cfg.max_steps, "0 = world depth");
  search->add_option("--max-tries", se_tries, "gts duplicate-try budget");
  search->add_option("--n-samples", se_samples, "rank selector samples");
  search->add_option("--coupling", se_coupling, "shared or independent");
  search->add_option("--split", se_split, "train or test");
  search->add_option("--seed", se_seed, "rng seed")->required();
  search->add_option("--out", se_out, "paths jsonl");
  search->add_option("--trace", se_trace, "step trace jsonl");

  // eval
  auto* eval = app.add_subcommand("eval", "score emitted paths");
  std::string ev_world, ev_paths, ev_out;
  eval->add_option("--world", ev_world, "world spec json")->required();
  eval->add_option("--paths", ev_paths, "paths jsonl")->required();
  eval->add_option("--out", ev_out, "metrics json");

  // compare
  auto* compare = app.add_subcommand("compare", "full pipeline comparison");
  std::string cp_config, cp_out;
  std::uint64_t cp_seed = 0;
  compare->add_option("--config", cp_config, "experiment json")->required();
  compare->add_option("--seed", cp_seed, "root seed")->required();
  compare->add_option("--out", cp_out, "override output dir");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_world->parsed()) return cmd_gen_world(gw_config, gw_out);
    if (build->parsed())
      return cmd_build_dataset(bd_world, bd_split, bd_n, bd_seed, bd_out);
    if (train->parsed()) {
      tr_cfg.optimizer = tr_opt == "sgd" ? Optimizer::Sgd : Optimizer::AdamW;
      return cmd_train(tr_world, tr_dataset, tr_head, tr_cfg, tr_seed, tr_out,
                       tr_trace);
    }
    if (search->parsed())
      return cmd_search(se_world, se_ckpt, se_selector, se_tries, se_samples,
                        se_coupling, se_cfg, se_split, se_seed, se_out,
                        se_trace);
    if (eval->parsed()) return cmd_eval(ev_world, ev_paths, ev_out);
    if (compare->parsed()) return cmd_compare(cp_config, cp_seed, cp_out);
  } catch (const uvs::StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
