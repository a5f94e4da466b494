#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <omp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "mockskel/cli.hpp"
#include "mockskel/error.hpp"
#include "mockskel/serve.hpp"
#include "mockskel/synth.hpp"

namespace mockskel::cli {

namespace fs = std::filesystem;
using nlohmann::json;

traffic::TrafficLog load_inputs(const RunConfig& config) {
  if (config.inputs.empty()) throw usage_error("no input given");
  traffic::TrafficLog all;
  for (const auto& path : config.inputs) {
    auto log = traffic::load_traffic_file(path, config.format);
    all.skipped += log.skipped;
    for (auto& t : log.transactions) all.transactions.push_back(std::move(t));
  }
  for (std::size_t i = 0; i < all.transactions.size(); ++i) all.transactions[i].sequence = std::int64_t(i);
  all.source = config.inputs.front();
  return all;
}

const eval::TargetMetrics& select_best(const std::vector<const eval::TargetMetrics*>& candidates) {
  if (candidates.empty()) throw usage_error("no candidate models");
  const eval::TargetMetrics* best = candidates.front();
  for (const auto* c : candidates) {
    const auto key = [](const eval::TargetMetrics* m) { return std::tuple(-m->accuracy, m->model_size, int(m->learner)); };
    if (key(c) < key(best)) best = c;
  }
  return *best;
}

PipelineResult run_pipeline(const RunConfig& config, bool evaluate, bool emit) {
  if (config.learners.empty()) throw usage_error("select at least one learner");
  config.prep.validate();
  PipelineResult r;
  r.log = load_inputs(config);
  if (r.log.skipped) {
    r.warnings.push_back(std::to_string(r.log.skipped) + " entries with unsupported methods skipped");
  }
  if (r.log.transactions.empty()) throw degenerate_error("the traffic log has no transactions");

  const auto table = features::build_instance_table(r.log, config.features);
  std::tie(r.pruned, r.removals) = prep::prune_targets(table, config.prep);
  const auto datasets = prep::project_all(r.pruned, r.removals);
  const std::string dataset =
      config.dataset.empty() ? fs::path(config.inputs.front()).stem().string() : config.dataset;

  std::vector<eval::TargetMetrics> metrics;
  if (evaluate) {
    metrics = eval::evaluate_all(datasets, config.learners, config.params, config.cv);
    for (const auto& m : metrics) {
      if (m.leave_one_out) {
        r.warnings.push_back("'" + m.target + "': fewer instances than folds, using leave-one-out");
      }
    }
    r.report = eval::make_report(dataset, config.cv, config.learners, metrics, r.removals);
  }

  if (emit) {
    std::vector<skeleton::PredictedTarget> targets(datasets.size());
    std::vector<std::exception_ptr> errors(datasets.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t d = 0; d < datasets.size(); ++d) {
      try {
        auto& t = targets[d];
        t.target = datasets[d].target;
        learn::Learner learner = config.learners.front();
        if (evaluate) {
          std::vector<const eval::TargetMetrics*> candidates;
          for (const auto& m : metrics) {
            if (m.target == t.target) candidates.push_back(&m);
          }
          const auto& best = select_best(candidates);
          learner = best.learner;
          t.metrics = best;
        }
        t.model = learn::train(learner, learn::encode(datasets[d]), {}, config.params);
      } catch (...) {
        errors[d] = std::current_exception();
      }
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    skeleton::EmitOptions options;
    options.service = config.service.empty() ? dataset : config.service;
    options.seed = config.cv.seed;
    options.config = config.features;
    options.shapes = skeleton::path_shapes(r.log, config.features.resource);
    r.skeleton = skeleton::assemble_skeleton(r.pruned, r.removals, std::move(targets), options);
  }
  return r;
}

// ---------------------------------------------------------------------------

namespace {

// All files of one command are staged and renamed together, so a failure
// leaves no partial outputs.
class OutputSet {
 public:
  void add(const std::string& path, std::string content) {
    if (!path.empty()) files_.emplace_back(path, std::move(content));
  }
  void commit() {
    std::vector<std::string> staged;
    auto cleanup = [&] {
      for (const auto& s : staged) std::remove(s.c_str());
    };
    for (const auto& [path, content] : files_) {
      const auto tmp = path + ".tmp";
      std::ofstream f(tmp, std::ios::binary);
      f << content;
      f.close();
      if (!f) {
        cleanup();
        std::remove(tmp.c_str());
        throw io_error("cannot write '" + path + "'");
      }
      staged.push_back(tmp);
    }
    for (const auto& [path, content] : files_) {
      std::error_code ec;
      fs::rename(path + ".tmp", path, ec);
      if (ec) {
        cleanup();
        throw io_error("cannot write '" + path + "': " + ec.message());
      }
    }
  }

 private:
  std::vector<std::pair<std::string, std::string>> files_;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot read '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json read_json_file(const std::string& path) {
  auto j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw parse_error("'" + path + "' is not valid JSON");
  return j;
}

struct PipelineOptions {
  std::vector<std::string> inputs;
  std::string format;
  std::vector<std::string> learners;
  std::size_t max_target_cardinality = 32;
  double max_target_ratio = 0.5;
  bool keep_single_valued = false;
  double c45_confidence = 0.25;
  std::size_t c45_min_leaf = 2;
  bool c45_unpruned = false;
  std::size_t ripper_folds = 3;
  double ripper_min_coverage = 2.0;
  std::size_t ripper_optimizations = 2;
  double part_confidence = 0.25;
  std::size_t part_min_leaf = 2;
  std::uint64_t seed = 1;
  std::size_t folds = 10;
  int jobs = 0;
  std::string feature_config;
  std::string id_pattern;
  std::vector<std::string> verb_tokens;
  std::vector<std::string> id_fields;
  std::size_t max_path_depth = 0;
  std::string dataset;
  std::string service;
  std::string skeleton_out, report_out, csv_out, arff_out;
};

void add_input_options(CLI::App* app, PipelineOptions& o) {
  app->add_option("-i,--input", o.inputs, "Traffic log(s): JSONL or HAR")->required();
  app->add_option("--format", o.format, "Input format (default: by extension)")->check(CLI::IsMember({"jsonl", "har"}));
  app->add_option("--feature-config", o.feature_config, "JSON feature configuration");
  app->add_option("--id-pattern", o.id_pattern, "Regex for identifier path tokens");
  app->add_option("--verb-token", o.verb_tokens, "Operation path tokens stripped from resource keys")->delimiter(',');
  app->add_option("--id-field", o.id_fields, "Query/body fields carrying a resource id")->delimiter(',');
  app->add_option("--max-path-depth", o.max_path_depth, "Maximum uriPathToken depth");
  app->add_option("--max-target-cardinality", o.max_target_cardinality, "Drop targets with more distinct values");
  app->add_option("--max-target-ratio", o.max_target_ratio, "Drop targets whose distinct/instance ratio exceeds this");
  app->add_flag("--keep-single-valued-inputs", o.keep_single_valued, "Keep inputs with a single value");
  app->add_option("--dataset", o.dataset, "Dataset name for reports");
  app->add_option("--jobs", o.jobs, "Worker threads (default: logical cores)");
}

void add_learner_options(CLI::App* app, PipelineOptions& o) {
  app->add_option("--learner", o.learners, "c45, ripper, part (repeat or comma-separate)")
      ->delimiter(',')
      ->check(CLI::IsMember({"c45", "ripper", "part"}));
  app->add_option("--c45-confidence", o.c45_confidence, "C4.5 pruning confidence");
  app->add_option("--c45-min-leaf", o.c45_min_leaf, "C4.5 minimum instances per leaf");
  app->add_flag("--c45-unpruned", o.c45_unpruned, "Skip C4.5 pruning");
  app->add_option("--ripper-folds", o.ripper_folds, "RIPPER grow/prune folds");
  app->add_option("--ripper-min-coverage", o.ripper_min_coverage, "RIPPER minimum rule coverage");
  app->add_option("--ripper-optimizations", o.ripper_optimizations, "RIPPER optimization runs");
  app->add_option("--part-confidence", o.part_confidence, "PART pruning confidence");
  app->add_option("--part-min-leaf", o.part_min_leaf, "PART minimum instances per leaf");
  app->add_option("--seed", o.seed, "Seed for folds and RIPPER");
}

RunConfig to_run_config(const PipelineOptions& o, std::vector<learn::Learner> default_learners) {
  RunConfig c;
  c.inputs = o.inputs;
  if (o.format == "jsonl") c.format = traffic::Format::Jsonl;
  if (o.format == "har") c.format = traffic::Format::Har;
  c.learners.clear();
  for (const auto& name : o.learners) {
    const auto l = *learn::parse_learner(name);
    if (std::find(c.learners.begin(), c.learners.end(), l) == c.learners.end()) c.learners.push_back(l);
  }
  if (c.learners.empty()) c.learners = std::move(default_learners);
  c.prep.max_target_cardinality = o.max_target_cardinality;
  c.prep.max_target_distinct_ratio = o.max_target_ratio;
  c.prep.drop_single_valued_inputs = !o.keep_single_valued;
  c.params.c45 = {o.c45_confidence, o.c45_min_leaf, !o.c45_unpruned};
  c.params.ripper = {o.ripper_folds, o.ripper_min_coverage, o.ripper_optimizations, o.seed};
  c.params.part = {o.part_confidence, o.part_min_leaf};
  if (o.c45_confidence <= 0 || o.c45_confidence >= 1 || o.part_confidence <= 0 || o.part_confidence >= 1) {
    throw usage_error("confidence factors must lie in (0, 1)");
  }
  if (o.ripper_folds < 2) throw usage_error("--ripper-folds must be at least 2");
  if (o.folds < 2) throw usage_error("--folds must be at least 2");
  c.cv = {o.folds, o.seed};
  if (!o.feature_config.empty()) c.features = features::feature_config_from_json(read_json_file(o.feature_config));
  if (!o.id_pattern.empty()) c.features.resource.id_pattern = o.id_pattern;
  if (!o.verb_tokens.empty()) c.features.resource.verb_tokens = o.verb_tokens;
  if (!o.id_fields.empty()) c.features.resource.id_fields = o.id_fields;
  if (o.max_path_depth) c.features.max_path_depth = o.max_path_depth;
  c.dataset = o.dataset;
  c.service = o.service;
  return c;
}

void apply_jobs(int jobs) {
  if (jobs < 0) throw usage_error("--jobs must be positive");
  omp_set_num_threads(jobs > 0 ? jobs : omp_get_num_procs());
}

std::string arff_text(const PipelineResult& r, const std::string& relation) {
  std::ostringstream s;
  features::write_arff(s, r.pruned, relation);
  return s.str();
}

std::string csv_text(const eval::Report& report) {
  std::ostringstream s;
  eval::write_csv(s, report);
  return s.str();
}

// JSON config keys mirror long flag names. A key is injected only when the
// flag is absent from the command line, so flags win.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::optional<std::string> path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].starts_with("--config=")) path = args[i].substr(9);
  }
  if (!path || args.empty()) return args;
  const auto j = read_json_file(*path);
  if (!j.is_object()) throw parse_error("config file must hold a JSON object");
  auto present = [&](const std::string& flag) {
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.starts_with(flag + "="); });
  };
  std::vector<std::string> injected;
  for (const auto& [key, value] : j.items()) {
    const std::string flag = "--" + key;
    if (key == "config" || present(flag)) continue;
    auto scalar = [&](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (value.is_boolean()) {
      if (value.get<bool>()) injected.push_back(flag);
    } else if (value.is_array()) {
      for (const auto& v : value) {
        injected.push_back(flag);
        injected.push_back(scalar(v));
      }
    } else {
      injected.push_back(flag);
      injected.push_back(scalar(value));
    }
  }
  std::vector<std::string> out{args.front()};
  out.insert(out.end(), injected.begin(), injected.end());
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

std::atomic<serve::MockServer*> g_server{nullptr};

extern "C" void on_signal(int) {
  if (auto* s = g_server.load()) s->stop();
}

}  // namespace

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Learns editable mock skeletons from recorded HTTP traffic and serves them.", "mockskel"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  PipelineOptions po;
  std::string config_path;

  auto* train = app.add_subcommand("train", "Evaluate all learners, pick one per target and emit a skeleton");
  add_input_options(train, po);
  add_learner_options(train, po);
  train->add_option("--folds", po.folds, "Cross-validation folds");
  train->add_option("--service", po.service, "Service name in the skeleton");
  train->add_option("-s,--skeleton", po.skeleton_out, "Skeleton output file")->required();
  train->add_option("-r,--report", po.report_out, "Evaluation report (JSON)")->required();
  train->add_option("--csv", po.csv_out, "Per-target CSV export");
  train->add_option("--arff", po.arff_out, "Prepared instance table as ARFF");
  train->add_option("--config", config_path, "JSON file of flag values");

  auto* evaluate = app.add_subcommand("evaluate", "Cross-validate learners and print the summary grid");
  add_input_options(evaluate, po);
  add_learner_options(evaluate, po);
  evaluate->add_option("--folds", po.folds, "Cross-validation folds");
  evaluate->add_option("-r,--report", po.report_out, "Evaluation report (JSON)");
  evaluate->add_option("--csv", po.csv_out, "Per-target CSV export");
  evaluate->add_option("--arff", po.arff_out, "Prepared instance table as ARFF");
  evaluate->add_option("--config", config_path, "JSON file of flag values");

  auto* emit = app.add_subcommand("emit", "Train one learner on all data and emit a skeleton without evaluation");
  add_input_options(emit, po);
  add_learner_options(emit, po);
  emit->add_option("--service", po.service, "Service name in the skeleton");
  emit->add_option("-s,--skeleton", po.skeleton_out, "Skeleton output file")->required();
  emit->add_option("--arff", po.arff_out, "Prepared instance table as ARFF");
  emit->add_option("--config", config_path, "JSON file of flag values");

  std::string skeleton_path, resource_config, host = "127.0.0.1";
  int port = 8080;
  bool strict = false;
  auto* serve_cmd = app.add_subcommand("serve", "Serve a skeleton over HTTP");
  serve_cmd->add_option("-s,--skeleton", skeleton_path, "Skeleton file")->required();
  serve_cmd->add_option("-p,--port", port, "Port (0 picks a free one)");
  serve_cmd->add_option("--host", host, "Bind address");
  serve_cmd->add_flag("--strict", strict, "Answer 501 for request shapes never seen in training");
  serve_cmd->add_option("--resource-config", resource_config, "Feature config JSON that must match the skeleton's");
  serve_cmd->add_option("--config", config_path, "JSON file of flag values");

  std::string har_in, jsonl_out;
  auto* import_har = app.add_subcommand("import-har", "Convert a HAR archive to the JSONL traffic format");
  import_har->add_option("-i,--input", har_in, "HAR file")->required();
  import_har->add_option("-o,--output", jsonl_out, "JSONL output")->required();

  synth::SynthConfig sc;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Generate traffic from the built-in item service");
  synth_cmd->add_option("-o,--output", synth_out, "JSONL output")->required();
  synth_cmd->add_option("--transactions", sc.transactions, "Number of transactions");
  synth_cmd->add_option("--resources", sc.resources, "Number of items");
  synth_cmd->add_option("--seed", sc.seed, "Generator seed");

  try {
    auto args = expand_config(raw_args);
    std::reverse(args.begin(), args.end());
    try {
      app.parse(args);
    } catch (const CLI::ParseError& e) {
      std::ostringstream o, e2;
      const int code = app.exit(e, o, e2);
      out << o.str();
      err << e2.str();
      return code == 0 ? 0 : int(ErrorKind::Usage);
    }

    if (train->parsed() || evaluate->parsed() || emit->parsed()) {
      apply_jobs(po.jobs);
      const bool is_emit = emit->parsed();
      auto config = to_run_config(po, is_emit ? std::vector{learn::Learner::C45}
                                              : std::vector{learn::Learner::C45, learn::Learner::Ripper,
                                                            learn::Learner::Part});
      const bool do_eval = !is_emit;
      const bool do_emit = !evaluate->parsed();
      auto result = run_pipeline(config, do_eval, do_emit);
      for (const auto& w : result.warnings) err << "warning: " << w << '\n';

      OutputSet outputs;
      if (result.skeleton) outputs.add(po.skeleton_out, skeleton::emit_skeleton(*result.skeleton));
      if (do_eval) {
        outputs.add(po.report_out, eval::to_json(result.report).dump(2) + "\n");
        outputs.add(po.csv_out, csv_text(result.report));
      }
      outputs.add(po.arff_out, arff_text(result, result.report.dataset.empty() ? "traffic" : result.report.dataset));
      outputs.commit();

      if (do_eval) out << eval::render_table(std::span(&result.report, 1));
      out << result.log.transactions.size() << " transactions, " << result.pruned.schema.size()
          << " attributes after preparation, " << result.removals.size() << " removed\n";
      if (result.skeleton) {
        out << "skeleton: " << result.skeleton->targets.size() << " predicted targets, "
            << result.skeleton->unpredicted.size() << " unpredicted -> " << po.skeleton_out << '\n';
      }
      return 0;
    }

    if (serve_cmd->parsed()) {
      const auto text = read_file(skeleton_path);
      auto sk = skeleton::parse_skeleton(text);
      for (const auto& w : sk.warnings) err << "warning: " << w << '\n';
      if (!resource_config.empty()) {
        const auto rc = features::feature_config_from_json(read_json_file(resource_config));
        if (rc.resource != sk.config.resource) {
          throw usage_error("resource configuration differs from the one the skeleton was trained with");
        }
      }
      serve::MockServer server(std::move(sk), text, {strict, host, port}, &out);
      const int bound = server.bind();
      out << "serving " << skeleton_path << " on http://" << host << ':' << bound << (strict ? " (strict)" : "")
          << '\n'
          << std::flush;
      g_server = &server;
      auto prev_int = std::signal(SIGINT, on_signal);
      auto prev_term = std::signal(SIGTERM, on_signal);
      server.listen();
      g_server = nullptr;
      std::signal(SIGINT, prev_int);
      std::signal(SIGTERM, prev_term);
      return 0;
    }

    if (import_har->parsed()) {
      const auto log = traffic::load_traffic_file(har_in, traffic::Format::Har);
      std::ostringstream s;
      traffic::write_jsonl(s, log);
      OutputSet outputs;
      outputs.add(jsonl_out, s.str());
      outputs.commit();
      out << "imported " << log.transactions.size() << " transactions";
      if (log.skipped) out << " (" << log.skipped << " skipped)";
      out << '\n';
      return 0;
    }

    if (synth_cmd->parsed()) {
      const auto log = synth::generate(sc);
      std::ostringstream s;
      traffic::write_jsonl(s, log);
      OutputSet outputs;
      outputs.add(synth_out, s.str());
      outputs.commit();
      out << "generated " << log.transactions.size() << " transactions\n";
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const json::exception& e) {
    err << "error: " << e.what() << '\n';
    return int(ErrorKind::Parse);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return int(ErrorKind::Usage);
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, out, err);
}

}  // namespace mockskel::cli
