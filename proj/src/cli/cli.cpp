// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#include "referee/cli/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "referee/avformer/train.hpp"
#include "referee/evalkit/evaluate.hpp"
#include "referee/numcore/checkpoint.hpp"
#include "referee/synthworld/dataset.hpp"

#ifndef REFEREE_VERSION
#define REFEREE_VERSION "unknown"
#endif

namespace referee::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kCheckpointFile[] = "model.bin";
constexpr char kTrainConfigFile[] = "config.json";
constexpr char kTrainLogFile[] = "train_log.jsonl";
constexpr char kRunFile[] = "run.json";

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw std::runtime_error("cannot create output directory " + dir.string());
  }
}

void require_exists(const fs::path& path, const char* what) {
  if (!fs::exists(path)) throw std::runtime_error(std::string(what) + " not found: " + path.string());
}

json resolve_config(const std::string& config_path, const json& defaults,
                    const std::vector<std::string>& sets) {
  json config = defaults;
  if (!config_path.empty()) config.merge_patch(read_json(config_path));
  for (const auto& s : sets) apply_override(config, s);
  return config;
}

void write_run(const fs::path& dir, const std::string& command, const json& config,
               std::uint64_t seed, const json& inputs) {
  write_json(dir / kRunFile, json{{"command", command},
                                  {"code_version", std::string(code_version())},
                                  {"seed", seed},
                                  {"config", config},
                                  {"inputs", inputs}});
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

// ---- gen-data --------------------------------------------------------------

int cmd_gen_data(const std::string& config_path, const std::vector<std::string>& sets,
                 const std::string& out_dir, const std::optional<std::uint64_t>& seed,
                 std::ostream& out) {
  json config = resolve_config(config_path, json(synthworld::DatasetConfig{}), sets);
  if (seed) config["seed"] = *seed;
  const auto dc = config.get<synthworld::DatasetConfig>();
  const auto ds = synthworld::Dataset::generate(dc);
  ensure_dir(out_dir);
  ds.save(out_dir);
  write_run(out_dir, "gen-data", json(dc), dc.seed, json::object());
  std::map<std::string, int> per_split;
  for (const auto& r : ds.clips()) per_split[std::string(synthworld::to_string(r.split))]++;
  out << json{{"clips", ds.clips().size()}, {"splits", per_split}, {"out", out_dir}}.dump()
      << '\n';
  return kExitOk;
}

// ---- train -----------------------------------------------------------------

avformer::Validator val_validator(const synthworld::Dataset& ds) {
  return [&ds](const avformer::RefereeModel<float>& model) {
    const evalkit::ModelScorer scorer(model);
    const auto r = evalkit::evaluate(scorer, ds, synthworld::Split::kVal, model.config());
    return json{{"acc", r.report.acc}, {"auc", r.report.auc}, {"ap", r.report.ap}};
  };
}

json train_into(const synthworld::Dataset& ds, const avformer::TrainConfig& tc,
                const fs::path& out_dir, const json& inputs) {
  ensure_dir(out_dir);
  write_json(out_dir / kTrainConfigFile, json(tc));
  avformer::RefereeModel<float> model(tc.model, tc.seed);
  std::ofstream log(out_dir / kTrainLogFile, std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write " + (out_dir / kTrainLogFile).string());
  const bool has_val = !ds.split_ids(synthworld::Split::kVal).empty();
  const auto summary =
      avformer::train(model, ds, tc, &log, has_val ? val_validator(ds) : avformer::Validator{});
  numcore::save_parameters(out_dir / kCheckpointFile, model.parameters());
  write_run(out_dir, "train", json(tc), tc.seed, inputs);
  return json{{"steps", summary.steps},
              {"n_params", summary.n_params},
              {"n_params_full", summary.n_params_full},
              {"final_loss", summary.final_loss},
              {"checkpoint", (out_dir / kCheckpointFile).string()}};
}

int cmd_train(const std::string& data_dir, const std::string& config_path,
              const std::vector<std::string>& sets, const std::string& out_dir,
              const std::optional<std::uint64_t>& seed, std::ostream& out) {
  require_exists(data_dir, "dataset directory");
  json config = resolve_config(config_path, json(avformer::TrainConfig{}), sets);
  if (seed) config["seed"] = *seed;
  const auto tc = config.get<avformer::TrainConfig>();
  tc.validate();
  const auto ds = synthworld::Dataset::load(data_dir);
  out << train_into(ds, tc, out_dir, json{{"data", data_dir}}).dump() << '\n';
  return kExitOk;
}

// ---- eval ------------------------------------------------------------------

struct LoadedModel {
  avformer::TrainConfig config;
  std::unique_ptr<avformer::RefereeModel<float>> model;
};

LoadedModel load_model(const fs::path& ckpt) {
  require_exists(ckpt, "checkpoint");
  const fs::path config_path = ckpt.parent_path() / kTrainConfigFile;
  require_exists(config_path, "training config next to checkpoint");
  LoadedModel lm;
  lm.config = read_json(config_path).get<avformer::TrainConfig>();
  lm.model = std::make_unique<avformer::RefereeModel<float>>(lm.config.model, lm.config.seed);
  auto params = lm.model->parameters();
  numcore::load_parameters(ckpt, params);
  return lm;
}

json report_json(const evalkit::EvalResult& r) { return json(r.report); }

int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& split_name,
             const std::string& scorer_name, const std::string& out_dir,
             const std::optional<std::uint64_t>& seed, std::ostream& out) {
  require_exists(data_dir, "dataset directory");
  const auto split = synthworld::parse_split(split_name);
  const auto ds = synthworld::Dataset::load(data_dir);
  avformer::ModelConfig model_config;
  model_config.seg.n_seg = ds.config().window_segments;
  LoadedModel lm;
  std::unique_ptr<evalkit::WindowScorer> scorer;
  const std::uint64_t s = seed.value_or(ds.config().seed);
  if (scorer_name == "model") {
    if (ckpt.empty()) throw UsageError("eval with the model scorer needs --ckpt");
    lm = load_model(ckpt);
    model_config = lm.config.model;
    scorer = std::make_unique<evalkit::ModelScorer>(*lm.model);
  } else if (scorer_name == "oracle") {
    scorer = std::make_unique<evalkit::OracleScorer>();
  } else if (scorer_name == "constant") {
    scorer = std::make_unique<evalkit::ConstantScorer>(0.5);
  } else if (scorer_name == "random") {
    scorer = std::make_unique<evalkit::RandomScorer>(s);
  } else {
    throw UsageError("unknown scorer '" + scorer_name + "'");
  }
  const auto result = evalkit::evaluate(*scorer, ds, split, model_config);
  const json report = report_json(result);
  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    write_json(fs::path(out_dir) / "report.json", report);
    std::ostringstream csv;
    evalkit::write_scores_csv(csv, result.clips);
    write_text(fs::path(out_dir) / "scores.csv", csv.str());
    write_run(out_dir, "eval",
              json{{"scorer", scorer_name}, {"split", std::string(synthworld::to_string(split))}},
              s, json{{"data", data_dir}, {"ckpt", ckpt}});
  }
  out << report.dump() << '\n';
  return kExitOk;
}

// ---- ablate ----------------------------------------------------------------

struct AblationRow {
  std::string name;
  std::vector<std::string> sets;
};

std::vector<AblationRow> suite_rows(const std::string& suite) {
  if (suite == "table4") {
    return {{"full", {}},
            {"no_identity_loss", {"model.loss.w_id=0", "model.aux_head=false"}},
            {"no_reference", {"model.use_reference=false"}}};
  }
  if (suite == "table5") {
    return {{"nq4_ca1", {"model.idb.n_q=4", "model.match.depth=1"}},
            {"nq4_ca2", {"model.idb.n_q=4", "model.match.depth=2"}},
            {"nq6_ca2", {"model.idb.n_q=6", "model.match.depth=2"}}};
  }
  throw UsageError("unknown ablation suite '" + suite + "' (expected table4 or table5)");
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      seeds.push_back(std::stoull(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("bad seed list '" + text + "'");
    }
  }
  if (seeds.empty()) throw UsageError("empty seed list");
  return seeds;
}

int cmd_ablate(const std::string& suite, const std::string& data_dir,
               const std::string& config_path, const std::vector<std::string>& sets,
               const std::string& seeds_text, const std::string& out_dir, std::ostream& out) {
  const auto rows = suite_rows(suite);
  const auto seeds = parse_seeds(seeds_text);
  require_exists(data_dir, "dataset directory");
  const auto ds = synthworld::Dataset::load(data_dir);
  ensure_dir(out_dir);
  const json base = resolve_config(config_path, json(avformer::TrainConfig{}), sets);
  const synthworld::Split splits[] = {synthworld::Split::kTestIn, synthworld::Split::kTestUnseen};

  json table = json::array();
  for (const auto& row : rows) {
    json runs = json::array();
    std::map<std::string, double> sums;
    std::size_t n_params = 0;
    for (std::uint64_t seed : seeds) {
      json config = base;
      for (const auto& s : row.sets) apply_override(config, s);
      config["seed"] = seed;
      const auto tc = config.get<avformer::TrainConfig>();
      const fs::path run_dir = fs::path(out_dir) / (row.name + "_seed" + std::to_string(seed));
      const json summary = train_into(ds, tc, run_dir, json{{"data", data_dir}, {"suite", suite}});
      n_params = summary.at("n_params").get<std::size_t>();
      const LoadedModel lm = load_model(run_dir / kCheckpointFile);
      json reports = json::object();
      for (auto split : splits) {
        const evalkit::ModelScorer scorer(*lm.model);
        const auto r = evalkit::evaluate(scorer, ds, split, lm.config.model);
        const std::string key(synthworld::to_string(split));
        reports[key] = json(r.report);
        write_json(run_dir / ("report_" + key + ".json"), reports[key]);
        sums[key + ".auc"] += r.report.auc;
        sums[key + ".ap"] += r.report.ap;
        sums[key + ".acc"] += r.report.acc;
      }
      runs.push_back(json{{"seed", seed}, {"train", summary}, {"reports", reports}});
    }
    json mean = json::object();
    for (const auto& [k, v] : sums) mean[k] = v / static_cast<double>(seeds.size());
    table.push_back(json{{"row", row.name}, {"overrides", row.sets}, {"n_params", n_params},
                         {"mean", mean}, {"runs", runs}});
  }

  std::ostringstream md;
  md << "| row | params | TEST_IN AUC | TEST_UNSEEN AUC | TEST_UNSEEN AP | TEST_UNSEEN ACC |\n"
     << "|---|---|---|---|---|---|\n";
  for (const auto& r : table) {
    const auto& m = r.at("mean");
    md << "| " << r.at("row").get<std::string>() << " | " << r.at("n_params").get<std::size_t>()
       << " | " << fmt(m.at("TEST_IN.auc").get<double>()) << " | "
       << fmt(m.at("TEST_UNSEEN.auc").get<double>()) << " | "
       << fmt(m.at("TEST_UNSEEN.ap").get<double>()) << " | "
       << fmt(m.at("TEST_UNSEEN.acc").get<double>()) << " |\n";
  }
  const json result{{"suite", suite}, {"seeds", seeds}, {"rows", table}};
  write_json(fs::path(out_dir) / "table.json", result);
  write_text(fs::path(out_dir) / "table.md", md.str());
  write_run(out_dir, "ablate", base, seeds.front(),
            json{{"data", data_dir}, {"suite", suite}, {"seeds", seeds}});
  out << md.str();
  return kExitOk;
}

}  // namespace

std::string_view code_version() { return REFEREE_VERSION; }

void apply_override(json& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw UsageError("override '" + std::string(assignment) + "' is not key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &config;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) throw UsageError("override key '" + key + "' crosses a non-object");
    node = &(*node)[parts[i]];
    if (node->is_null()) *node = json::object();
  }
  if (!node->is_object()) throw UsageError("override key '" + key + "' crosses a non-object");
  (*node)[parts.back()] = value;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reference-aware audiovisual deepfake detector on a synthetic identity world",
               "referee"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(code_version()));

  std::string config_path, out_dir, data_dir, ckpt, split = "test_unseen", scorer = "model";
  std::string suite, seeds_text = "1";
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen->add_option("--config", config_path, "Dataset config JSON");
  gen->add_option("--out", out_dir, "Output directory")->required();
  gen->add_option("--set", sets, "Override key=value (repeatable)");
  gen->add_option("--seed", seed, "Dataset seed");

  auto* tr = app.add_subcommand("train", "Train a detector");
  tr->add_option("--data", data_dir, "Dataset directory")->required();
  tr->add_option("--config", config_path, "Training config JSON");
  tr->add_option("--out", out_dir, "Run directory")->required();
  tr->add_option("--set", sets, "Override key=value (repeatable)");
  tr->add_option("--seed", seed, "Training seed");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  ev->add_option("--ckpt", ckpt, "Checkpoint (config.json must sit next to it)");
  ev->add_option("--data", data_dir, "Dataset directory")->required();
  ev->add_option("--split", split, "train, val, test_in or test_unseen");
  ev->add_option("--scorer", scorer, "model, oracle, constant or random");
  ev->add_option("--out", out_dir, "Write report.json, scores.csv and run.json here");
  ev->add_option("--seed", seed, "Seed for the random scorer");

  auto* ab = app.add_subcommand("ablate", "Run an ablation grid");
  ab->add_option("--suite", suite, "table4 or table5")->required();
  ab->add_option("--data", data_dir, "Dataset directory")->required();
  ab->add_option("--config", config_path, "Base training config JSON");
  ab->add_option("--set", sets, "Override key=value on the base config (repeatable)");
  ab->add_option("--seeds", seeds_text, "Comma-separated training seeds");
  ab->add_option("--out", out_dir, "Output directory")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << code_version() << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << '\n' << app.help();
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(config_path, sets, out_dir, seed, out);
    if (tr->parsed()) return cmd_train(data_dir, config_path, sets, out_dir, seed, out);
    if (ev->parsed()) return cmd_eval(ckpt, data_dir, split, scorer, out_dir, seed, out);
    if (ab->parsed()) return cmd_ablate(suite, data_dir, config_path, sets, seeds_text, out_dir, out);
  } catch (const UsageError& e) {
    err << "error: usage: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::string what = e.what();
    for (char& c : what) {
      if (c == '\n') c = ' ';
    }
    err << "error: " << what << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace referee::cli
