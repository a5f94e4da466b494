#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mockskel/evaluation.hpp"
#include "mockskel/features.hpp"
#include "mockskel/learners.hpp"
#include "mockskel/prep.hpp"
#include "mockskel/skeleton.hpp"
#include "mockskel/traffic.hpp"

namespace mockskel::cli {

struct RunConfig {
  std::vector<std::string> inputs;
  std::optional<traffic::Format> format;
  std::vector<learn::Learner> learners = {learn::Learner::C45, learn::Learner::Ripper, learn::Learner::Part};
  prep::PrepConfig prep;
  learn::LearnerParams params;
  features::FeatureConfig features;
  eval::CvConfig cv;
  std::string dataset;  // defaults to the first input's file stem
  std::string service;  // defaults to the dataset name
};

// Concatenates the inputs in order and renumbers sequences.
traffic::TrafficLog load_inputs(const RunConfig& config);

struct PipelineResult {
  traffic::TrafficLog log;
  features::InstanceTable pruned;
  prep::RemovalReport removals;
  eval::Report report;                      // empty unless evaluated
  std::optional<skeleton::MockSkeleton> skeleton;
  std::vector<std::string> warnings;
};

// Highest CV accuracy, then the smaller model, then c45 < ripper < part.
// `candidates` must be non-empty and share one target.
const eval::TargetMetrics& select_best(const std::vector<const eval::TargetMetrics*>& candidates);

// Runs ingest, extraction and preparation; then cross-validation when
// `evaluate`; then full-data training and skeleton assembly when `emit`.
// With `emit` but not `evaluate`, the first selected learner is used for
// every target and the skeleton carries no metrics.
PipelineResult run_pipeline(const RunConfig& config, bool evaluate, bool emit);

// Entry point of the command-line tool. `args` excludes the program name.
// Returns the process exit code: 0 ok, 2 usage, 3 io, 4 parse, 5 degenerate.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mockskel::cli
