#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mockskel/learners.hpp"
#include "mockskel/prep.hpp"

namespace mockskel::eval {

struct CvConfig {
  std::size_t folds = 10;
  std::uint64_t seed = 1;
};

// Rows are actual classes, columns predicted.
struct Confusion {
  std::vector<std::string> classes;
  std::vector<std::size_t> cells;

  explicit Confusion(std::vector<std::string> classes = {});
  std::size_t& at(std::size_t actual, std::size_t predicted) { return cells[actual * classes.size() + predicted]; }
  std::size_t at(std::size_t actual, std::size_t predicted) const {
    return cells[actual * classes.size() + predicted];
  }
  void add(const Confusion& other);

  std::size_t total() const;
  double accuracy() const;
  // Class-support-weighted one-vs-rest averages. Classes never predicted
  // contribute precision 0.
  double weighted_precision() const;
  double weighted_recall() const;
};

struct FoldMetrics {
  std::size_t instances = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double model_size = 0.0;
};

struct TargetMetrics {
  std::string target;
  learn::Learner learner = learn::Learner::C45;
  std::size_t instances = 0;
  std::size_t folds = 0;
  bool leave_one_out = false;
  double accuracy = 0.0;   // pooled over folds
  double precision = 0.0;
  double recall = 0.0;
  double model_size = 0.0;  // mean over folds
  std::vector<FoldMetrics> per_fold;
  Confusion confusion;
};

struct AggregateReport {
  std::string dataset;
  learn::Learner learner = learn::Learner::C45;
  std::size_t targets = 0;
  double mean_accuracy = 0.0, std_accuracy = 0.0;
  double mean_precision = 0.0, std_precision = 0.0;
  double mean_recall = 0.0, std_recall = 0.0;
  double mean_size = 0.0, std_size = 0.0;
};

// Shuffles with `seed`, groups by class and deals round-robin, so per-class
// counts differ by at most one across folds. Each fold is ascending. With
// fewer rows than `k` every row gets its own fold.
std::vector<std::vector<std::size_t>> stratified_folds(std::span<const std::uint32_t> labels, std::size_t k,
                                                       std::uint64_t seed);
std::vector<std::vector<std::size_t>> stratified_folds(const prep::PreparedDataset& dataset, std::size_t k,
                                                       std::uint64_t seed);

// Folds run in parallel; the serial variant is the reference and yields the
// same result. Throws Error(Degenerate) below two instances.
TargetMetrics cross_validate(const learn::CodedData& data, learn::Learner learner,
                             const learn::LearnerParams& params, const CvConfig& cv);
TargetMetrics cross_validate_serial(const learn::CodedData& data, learn::Learner learner,
                                    const learn::LearnerParams& params, const CvConfig& cv);
TargetMetrics cross_validate(const prep::PreparedDataset& dataset, learn::Learner learner,
                             const learn::LearnerParams& params = {}, const CvConfig& cv = {});

// Every (dataset, learner) pair, in dataset-major order. Pairs run in parallel.
std::vector<TargetMetrics> evaluate_all(std::span<const prep::PreparedDataset> datasets,
                                        std::span<const learn::Learner> learners,
                                        const learn::LearnerParams& params, const CvConfig& cv);
std::vector<TargetMetrics> evaluate_all_serial(std::span<const prep::PreparedDataset> datasets,
                                               std::span<const learn::Learner> learners,
                                               const learn::LearnerParams& params, const CvConfig& cv);

// Mean and sample standard deviation across targets (std 0 for one target).
// Throws Error(Usage) on an empty list.
AggregateReport aggregate(std::span<const TargetMetrics> metrics, std::string dataset = {});

double sample_std(std::span<const double> values);

struct Report {
  std::string dataset;
  CvConfig cv;
  std::vector<learn::Learner> learners;
  std::vector<TargetMetrics> targets;
  std::vector<AggregateReport> aggregates;  // one per learner with targets
  prep::RemovalReport removals;
};

Report make_report(std::string dataset, const CvConfig& cv, std::vector<learn::Learner> learners,
                   std::vector<TargetMetrics> targets, prep::RemovalReport removals = {});

nlohmann::ordered_json to_json(const TargetMetrics& m);
nlohmann::ordered_json to_json(const Report& report);

// Dataset × learner grids of mean±std, one grid per statistic.
std::string render_table(std::span<const Report> reports);

// One row per target and learner.
void write_csv(std::ostream& out, const Report& report);

}  // namespace mockskel::eval
