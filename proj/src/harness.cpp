#include "uvs/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "uvs/util.hpp"

namespace uvs {

double coverage(const std::vector<std::vector<PartialPath>>& path_sets,
                const std::vector<SyntheticProblem>& problems) {
  if (path_sets.size() != problems.size())
    throw std::invalid_argument("path sets and problems misaligned");
  if (problems.empty()) throw std::invalid_argument("no problems");
  int hits = 0;
  for (size_t i = 0; i < problems.size(); ++i) {
    if (path_sets[i].empty())
      throw std::invalid_argument("empty path set for a problem");
    for (const PartialPath& p : path_sets[i]) {
      if (p.complete() && check_answer(problems[i], p) == 1) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(problems.size());
}

double precision_majority_vote(
    const std::vector<std::vector<PartialPath>>& path_sets,
    const std::vector<SyntheticProblem>& problems) {
  if (path_sets.size() != problems.size())
    throw std::invalid_argument("path sets and problems misaligned");
  if (problems.empty()) throw std::invalid_argument("no problems");
  int hits = 0;
  for (size_t i = 0; i < problems.size(); ++i) {
    if (path_sets[i].empty())
      throw std::invalid_argument("empty path set for a problem");
    std::map<AnswerToken, int> votes;
    for (const PartialPath& p : path_sets[i])
      if (p.complete() && *p.answer >= 0) votes[*p.answer] += 1;
    if (votes.empty()) continue;  // nothing voted: incorrect
    int best = 0;
    AnswerToken modal = kInvalidAnswer;
    bool tied = false;
    for (const auto& [answer, count] : votes) {
      if (count > best) {
        best = count;
        modal = answer;
        tied = false;
      } else if (count == best) {
        tied = true;
      }
    }
    if (tied) continue;  // modal tie: incorrect
    if (problems[i].is_correct_answer(modal)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(problems.size());
}

void ExperimentConfig::validate() const {
  world.validate();
  train.validate();
  if (search_grid.empty()) throw std::invalid_argument("empty search grid");
  for (const SearchGridEntry& e : search_grid) {
    if (e.beam_width < 1 || e.candidate_size < e.beam_width ||
        e.candidate_size % e.beam_width != 0)
      throw std::invalid_argument(
          "search grid entries need candidate_size a multiple of beam_width");
  }
  if (selectors.empty()) throw std::invalid_argument("no selectors configured");
  for (size_t i = 0; i < selectors.size(); ++i)
    for (size_t j = i + 1; j < selectors.size(); ++j)
      if (selectors[i].name() == selectors[j].name())
        throw std::invalid_argument("duplicate selector: " +
                                    selectors[i].name());
  if (repetitions < 1) throw std::invalid_argument("repetitions must be >= 1");
  if (!seeds.empty() && static_cast<int>(seeds.size()) != repetitions)
    throw std::invalid_argument("seeds list must match repetitions");
  if (max_steps < 0) throw std::invalid_argument("max_steps must be >= 0");
  if (head.m < 1) throw std::invalid_argument("head.m must be positive");
}

namespace {

nlohmann::json selector_to_json(const SelectorSpec& s) {
  nlohmann::json j;
  j["kind"] = s.name();
  j["max_tries"] = s.max_tries;
  j["n_samples"] = s.n_samples;
  j["coupling"] = s.coupling == Coupling::Shared ? "shared" : "independent";
  return j;
}

SelectorSpec selector_from_json(const nlohmann::json& j) {
  SelectorSpec s = SelectorSpec::parse(j.at("kind").get<std::string>());
  s.max_tries = j.value("max_tries", kDefaultMaxTries);
  s.n_samples = j.value("n_samples", kDefaultRankSampleCount);
  const std::string coupling = j.value("coupling", std::string("shared"));
  if (coupling == "shared")
    s.coupling = Coupling::Shared;
  else if (coupling == "independent")
    s.coupling = Coupling::Independent;
  else
    throw std::invalid_argument("unknown coupling: " + coupling);
  return s;
}

std::string optimizer_name(Optimizer o) {
  return o == Optimizer::Sgd ? "sgd" : "adamw";
}

Optimizer optimizer_from_name(const std::string& s) {
  if (s == "sgd") return Optimizer::Sgd;
  if (s == "adamw") return Optimizer::AdamW;
  throw std::invalid_argument("unknown optimizer: " + s);
}

}  // namespace

std::string experiment_config_to_string(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["world"] = nlohmann::json::parse(world_spec_to_string(cfg.world));
  j["head"] = {{"m", cfg.head.m},
               {"posterior_scale", cfg.head.posterior_scale},
               {"prior_scale", cfg.head.prior_scale}};
  j["train"] = {{"paths_per_question", cfg.train.paths_per_question},
                {"epochs", cfg.train.epochs},
                {"batch_size", cfg.train.batch_size},
                {"learning_rate", cfg.train.learning_rate},
                {"weight_decay", cfg.train.weight_decay},
                {"optimizer", optimizer_name(cfg.train.optimizer)}};
  nlohmann::json grid = nlohmann::json::array();
  for (const SearchGridEntry& e : cfg.search_grid)
    grid.push_back({{"b", e.beam_width}, {"K", e.candidate_size}});
  j["search"] = {{"grid", grid}, {"max_steps", cfg.max_steps}};
  nlohmann::json sels = nlohmann::json::array();
  for (const SelectorSpec& s : cfg.selectors) sels.push_back(selector_to_json(s));
  j["selectors"] = sels;
  j["repetitions"] = cfg.repetitions;
  j["seeds"] = cfg.seeds;
  j["emit_traces"] = cfg.emit_traces;
  j["output_dir"] = cfg.output_dir;
  return j.dump(2) + "\n";
}

ExperimentConfig experiment_config_from_string(const std::string& body) {
  nlohmann::json j = nlohmann::json::parse(body);
  ExperimentConfig cfg;
  cfg.world = world_spec_from_string(j.at("world").dump());
  cfg.head.d = cfg.world.feature_dim;
  if (j.contains("head")) {
    cfg.head.m = j["head"].value("m", 10);
    cfg.head.posterior_scale = j["head"].value("posterior_scale", 1.0);
    cfg.head.prior_scale = j["head"].value("prior_scale", 1.0);
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    cfg.train.paths_per_question = t.value("paths_per_question", 50);
    cfg.train.epochs = t.value("epochs", 1);
    cfg.train.batch_size = t.value("batch_size", 64);
    cfg.train.learning_rate = t.value("learning_rate", 1e-2);
    cfg.train.weight_decay = t.value("weight_decay", 0.0);
    cfg.train.optimizer =
        optimizer_from_name(t.value("optimizer", std::string("adamw")));
  }
  for (const auto& e : j.at("search").at("grid"))
    cfg.search_grid.push_back(
        {e.at("b").get<int>(), e.at("K").get<int>()});
  cfg.max_steps = j.at("search").value("max_steps", 0);
  for (const auto& s : j.at("selectors"))
    cfg.selectors.push_back(selector_from_json(s));
  cfg.repetitions = j.value("repetitions", 3);
  if (j.contains("seeds"))
    cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  cfg.emit_traces = j.value("emit_traces", false);
  cfg.output_dir = j.value("output_dir", std::string("out"));
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  return experiment_config_from_string(read_text_file(path));
}

namespace {

struct SeedRun {
  std::uint64_t seed = 0;
  UvmHead head;
  std::vector<CellResult> cells;
};

SeedRun run_one_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                     const std::string& trace_dir) {
  SeedRun out;
  out.seed = seed;

  World world = [&] {
    try {
      return World::build(cfg.world, seed);
    } catch (const std::exception& e) {
      throw StageError("world", e.what());
    }
  }();

  std::vector<ValueExample> dataset;
  try {
    std::vector<std::string> qids;
    for (const SyntheticProblem& p : world.train_problems())
      qids.push_back(p.question_id);
    Rng rng(Rng::derive(seed, "dataset"));
    dataset = build_value_dataset(
        [&world](const std::string& qid, Rng& r) { return world.rollout(qid, r); },
        [&world](const PartialPath& p) { return world.label(p); }, qids,
        cfg.train.paths_per_question, rng);
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError("dataset", e.what());
  }

  try {
    UvmHeadConfig head_cfg = cfg.head;
    head_cfg.d = world.featurizer().dim();
    UvmHead init = UvmHead::init(head_cfg, Rng::derive(seed, "prior"));
    TrainConfig train_cfg = cfg.train;
    train_cfg.seed = Rng::derive(seed, "train");
    PrefixFeaturizer featurize = [&world](const PartialPath& p) {
      return world.featurize_path(p);
    };
    out.head = train_uvm(init, dataset, featurize, train_cfg).head;
  } catch (const std::exception& e) {
    throw StageError("train", e.what());
  }

  try {
    const ValueScorer ovm = derive_ovm(out.head);
    const StepGenerator generate = [&world](const PartialPath& prefix,
                                            Rng& r) -> std::optional<PartialPath> {
      return world.one_step(prefix, r);
    };
    const auto featurize = [&world](const PartialPath& p) {
      return world.featurize_path(p);
    };
    const int max_steps =
        cfg.max_steps > 0 ? cfg.max_steps : cfg.world.problem.depth;

    for (const SearchGridEntry& entry : cfg.search_grid) {
      for (const SelectorSpec& selector : cfg.selectors) {
        CandidateScorer scorer;
        if (selector.kind == SelectorKind::OvmGreedy) {
          // The derived mean-only scorer from the same checkpoint.
          scorer = make_value_scorer([ovm, featurize](const PartialPath& p) {
            return ovm(featurize(p));
          });
        } else {
          scorer = make_head_scorer(out.head, featurize);
        }
        const Selector select = make_selector(selector);

        std::ofstream trace_out;
        TraceSink sink = nullptr;
        if (!trace_dir.empty()) {
          std::ostringstream name;
          name << trace_dir << "/" << selector.name() << "_b"
               << entry.beam_width << "_K" << entry.candidate_size << "_seed"
               << seed << ".jsonl";
          trace_out.open(name.str(), std::ios::binary | std::ios::trunc);
          sink = [&trace_out](const StepTrace& t) {
            nlohmann::json j;
            j["question_id"] = t.question_id;
            j["step"] = t.step;
            nlohmann::json means = nlohmann::json::array();
            for (int i = 0; i < t.means.size(); ++i) means.push_back(t.means[i]);
            nlohmann::json sampled = nlohmann::json::array();
            for (int i = 0; i < t.sampled.size(); ++i)
              sampled.push_back(t.sampled[i]);
            j["means"] = means;
            j["sampled"] = sampled;
            j["selected"] = t.selected;
            j["fallback_count"] = t.fallback_count;
            trace_out << j.dump() << "\n";
          };
        }

        std::vector<std::vector<PartialPath>> path_sets;
        path_sets.reserve(world.test_problems().size());
        for (size_t qi = 0; qi < world.test_problems().size(); ++qi) {
          SearchConfig scfg;
          scfg.beam_width = entry.beam_width;
          scfg.candidate_size = entry.candidate_size;
          scfg.max_steps = max_steps;
          scfg.seed = Rng::derive(seed, "search", entry.beam_width, qi);
          path_sets.push_back(step_beam_search(
              generate, scorer, select,
              world.test_problems()[qi].question_id, scfg, sink));
        }

        CellResult cell;
        cell.seed = seed;
        cell.selector = selector.name();
        cell.beam_width = entry.beam_width;
        cell.candidate_size = entry.candidate_size;
        cell.coverage = coverage(path_sets, world.test_problems());
        cell.precision =
            precision_majority_vote(path_sets, world.test_problems());
        out.cells.push_back(cell);
      }
    }
  } catch (const std::exception& e) {
    throw StageError("search", e.what());
  }
  return out;
}

std::vector<std::uint64_t> effective_seeds(const ExperimentConfig& cfg,
                                           std::uint64_t root_seed) {
  if (!cfg.seeds.empty()) return cfg.seeds;
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < cfg.repetitions; ++i)
    seeds.push_back(Rng::derive(root_seed, "repetition", i));
  return seeds;
}

RunReport run_experiment_impl(const ExperimentConfig& cfg,
                              std::uint64_t root_seed,
                              const std::string& trace_dir,
                              const std::string& ckpt_dir) {
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    throw StageError("config", e.what());
  }
  RunReport report;
  const std::vector<std::uint64_t> seeds = effective_seeds(cfg, root_seed);
  for (std::uint64_t seed : seeds) {
    SeedRun run = run_one_seed(cfg, seed, trace_dir);
    if (!ckpt_dir.empty())
      save_checkpoint(run.head,
                      ckpt_dir + "/head_" + std::to_string(seed) + ".json");
    report.raw.insert(report.raw.end(), run.cells.begin(), run.cells.end());
  }

  // Aggregate in configuration order: grid outer, selector inner.
  for (const SearchGridEntry& entry : cfg.search_grid) {
    for (const SelectorSpec& selector : cfg.selectors) {
      std::vector<double> covs, precs;
      for (const CellResult& c : report.raw)
        if (c.selector == selector.name() &&
            c.beam_width == entry.beam_width &&
            c.candidate_size == entry.candidate_size) {
          covs.push_back(c.coverage);
          precs.push_back(c.precision);
        }
      const auto mean_of = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
      };
      const auto std_of = [&](const std::vector<double>& v, double mean) {
        if (v.size() < 2) return 0.0;
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        return std::sqrt(ss / static_cast<double>(v.size() - 1));
      };
      AggregateRow row;
      row.selector = selector.name();
      row.beam_width = entry.beam_width;
      row.candidate_size = entry.candidate_size;
      row.coverage_mean = mean_of(covs);
      row.coverage_std = std_of(covs, row.coverage_mean);
      row.precision_mean = mean_of(precs);
      row.precision_std = std_of(precs, row.precision_mean);
      report.summary.push_back(row);
    }
  }
  return report;
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& cfg, std::uint64_t root_seed) {
  return run_experiment_impl(cfg, root_seed, "", "");
}

std::string raw_csv(const RunReport& report) {
  std::ostringstream out;
  out << "seed,selector,beam_width,candidate_size,coverage,precision\n";
  for (const CellResult& c : report.raw)
    out << c.seed << "," << c.selector << "," << c.beam_width << ","
        << c.candidate_size << "," << fmt_double(c.coverage) << ","
        << fmt_double(c.precision) << "\n";
  return out.str();
}

std::string summary_csv(const RunReport& report) {
  std::ostringstream out;
  out << "selector,beam_width,candidate_size,coverage_mean,coverage_std,"
         "precision_mean,precision_std\n";
  for (const AggregateRow& r : report.summary)
    out << r.selector << "," << r.beam_width << "," << r.candidate_size << ","
        << fmt_double(r.coverage_mean) << "," << fmt_double(r.coverage_std)
        << "," << fmt_double(r.precision_mean) << ","
        << fmt_double(r.precision_std) << "\n";
  return out.str();
}

RunReport run_compare(const ExperimentConfig& cfg, std::uint64_t root_seed) {
  namespace fs = std::filesystem;
  if (cfg.output_dir.empty())
    throw StageError("report", "output_dir must be set");
  fs::create_directories(cfg.output_dir);
  std::string trace_dir;
  if (cfg.emit_traces) {
    trace_dir = cfg.output_dir + "/trace";
    fs::create_directories(trace_dir);
  }
  RunReport report =
      run_experiment_impl(cfg, root_seed, trace_dir, cfg.output_dir);
  write_text_file(cfg.output_dir + "/raw.csv", raw_csv(report));
  write_text_file(cfg.output_dir + "/summary.csv", summary_csv(report));
  return report;
}

}  // namespace uvs
