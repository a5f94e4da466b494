#include <algorithm>
#include <cmath>
#include <exception>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "mockskel/error.hpp"
#include "mockskel/evaluation.hpp"
#include "mockskel/util.hpp"

namespace mockskel::eval {

Confusion::Confusion(std::vector<std::string> cls)
    : classes(std::move(cls)), cells(classes.size() * classes.size(), 0) {}

void Confusion::add(const Confusion& other) {
  if (other.classes != classes) throw usage_error("confusion matrices over different classes");
  for (std::size_t i = 0; i < cells.size(); ++i) cells[i] += other.cells[i];
}

std::size_t Confusion::total() const { return std::accumulate(cells.begin(), cells.end(), std::size_t{0}); }

double Confusion::accuracy() const {
  const auto n = total();
  if (n == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t c = 0; c < classes.size(); ++c) correct += at(c, c);
  return double(correct) / double(n);
}

double Confusion::weighted_precision() const {
  const auto n = total();
  if (n == 0) return 0.0;
  const std::size_t k = classes.size();
  double sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t support = 0, predicted = 0;
    for (std::size_t o = 0; o < k; ++o) {
      support += at(c, o);
      predicted += at(o, c);
    }
    if (support == 0 || predicted == 0) continue;
    sum += double(support) * double(at(c, c)) / double(predicted);
  }
  return sum / double(n);
}

double Confusion::weighted_recall() const {
  const auto n = total();
  if (n == 0) return 0.0;
  const std::size_t k = classes.size();
  double sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t support = 0;
    for (std::size_t o = 0; o < k; ++o) support += at(c, o);
    if (support == 0) continue;
    sum += double(support) * double(at(c, c)) / double(support);
  }
  return sum / double(n);
}

// ---------------------------------------------------------------------------

std::vector<std::vector<std::size_t>> stratified_folds(std::span<const std::uint32_t> labels, std::size_t k,
                                                       std::uint64_t seed) {
  if (k < 2) throw usage_error("cross-validation needs at least 2 folds");
  const std::size_t n = labels.size();
  if (n < k) k = n;
  std::vector<std::vector<std::size_t>> folds(k);
  if (n == 0) return folds;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  stable_shuffle(order, rng);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return labels[a] < labels[b]; });
  for (std::size_t i = 0; i < n; ++i) folds[i % k].push_back(order[i]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

std::vector<std::vector<std::size_t>> stratified_folds(const prep::PreparedDataset& dataset, std::size_t k,
                                                       std::uint64_t seed) {
  const auto data = learn::encode(dataset);
  return stratified_folds(data.y, k, seed);
}

namespace {

struct FoldResult {
  Confusion confusion;
  FoldMetrics metrics;
};

FoldResult run_fold(const learn::CodedData& data, const std::vector<std::vector<std::size_t>>& folds,
                    std::size_t f, learn::Learner learner, const learn::LearnerParams& params) {
  std::vector<std::size_t> train;
  train.reserve(data.rows());
  for (std::size_t g = 0; g < folds.size(); ++g) {
    if (g != f) train.insert(train.end(), folds[g].begin(), folds[g].end());
  }
  std::sort(train.begin(), train.end());
  const auto model = learn::train(learner, data, train, params);

  FoldResult r{Confusion(data.classes), {}};
  for (std::size_t row : folds[f]) {
    const auto& predicted = learn::classify(model, [&](std::size_t a) -> std::string_view { return data.value(row, a); });
    const auto it = std::lower_bound(data.classes.begin(), data.classes.end(), predicted);
    const std::size_t p = std::size_t(it - data.classes.begin());
    r.confusion.at(data.y[row], p) += 1;
  }
  r.metrics.instances = folds[f].size();
  r.metrics.accuracy = r.confusion.accuracy();
  r.metrics.precision = r.confusion.weighted_precision();
  r.metrics.recall = r.confusion.weighted_recall();
  r.metrics.model_size = double(learn::model_size(model));
  return r;
}

std::vector<std::vector<std::size_t>> folds_for(const learn::CodedData& data, const CvConfig& cv) {
  if (data.rows() < 2) throw degenerate_error("cross-validation of '" + data.target + "' needs at least 2 instances");
  if (!std::is_sorted(data.classes.begin(), data.classes.end())) throw usage_error("class domain must be sorted");
  return stratified_folds(data.y, cv.folds, cv.seed);
}

TargetMetrics combine(const learn::CodedData& data, learn::Learner learner, const CvConfig& cv,
                      std::vector<FoldResult>& results) {
  TargetMetrics m;
  m.target = data.target;
  m.learner = learner;
  m.instances = data.rows();
  m.folds = results.size();
  m.leave_one_out = results.size() < cv.folds;
  m.confusion = Confusion(data.classes);
  double size = 0.0;
  for (auto& r : results) {
    m.confusion.add(r.confusion);
    size += r.metrics.model_size;
    m.per_fold.push_back(r.metrics);
  }
  m.accuracy = m.confusion.accuracy();
  m.precision = m.confusion.weighted_precision();
  m.recall = m.confusion.weighted_recall();
  m.model_size = size / double(results.size());
  return m;
}

}  // namespace

TargetMetrics cross_validate(const learn::CodedData& data, learn::Learner learner,
                             const learn::LearnerParams& params, const CvConfig& cv) {
  const auto folds = folds_for(data, cv);
  std::vector<FoldResult> results(folds.size());
  std::vector<std::exception_ptr> errors(folds.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t f = 0; f < folds.size(); ++f) {
    try {
      results[f] = run_fold(data, folds, f, learner, params);
    } catch (...) {
      errors[f] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return combine(data, learner, cv, results);
}

TargetMetrics cross_validate_serial(const learn::CodedData& data, learn::Learner learner,
                                    const learn::LearnerParams& params, const CvConfig& cv) {
  const auto folds = folds_for(data, cv);
  std::vector<FoldResult> results;
  for (std::size_t f = 0; f < folds.size(); ++f) results.push_back(run_fold(data, folds, f, learner, params));
  return combine(data, learner, cv, results);
}

TargetMetrics cross_validate(const prep::PreparedDataset& dataset, learn::Learner learner,
                             const learn::LearnerParams& params, const CvConfig& cv) {
  return cross_validate(learn::encode(dataset), learner, params, cv);
}

std::vector<TargetMetrics> evaluate_all(std::span<const prep::PreparedDataset> datasets,
                                        std::span<const learn::Learner> learners,
                                        const learn::LearnerParams& params, const CvConfig& cv) {
  std::vector<learn::CodedData> coded(datasets.size());
  std::vector<std::exception_ptr> errors(datasets.size() * learners.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    try {
      coded[d] = learn::encode(datasets[d]);
    } catch (...) {
      errors[d] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  const std::size_t pairs = datasets.size() * learners.size();
  std::vector<TargetMetrics> out(pairs);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < pairs; ++i) {
    try {
      out[i] = cross_validate(coded[i / learners.size()], learners[i % learners.size()], params, cv);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<TargetMetrics> evaluate_all_serial(std::span<const prep::PreparedDataset> datasets,
                                               std::span<const learn::Learner> learners,
                                               const learn::LearnerParams& params, const CvConfig& cv) {
  std::vector<TargetMetrics> out;
  for (const auto& ds : datasets) {
    const auto data = learn::encode(ds);
    for (auto l : learners) out.push_back(cross_validate_serial(data, l, params, cv));
  }
  return out;
}

// ---------------------------------------------------------------------------

double sample_std(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / double(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / double(values.size() - 1));
}

AggregateReport aggregate(std::span<const TargetMetrics> metrics, std::string dataset) {
  if (metrics.empty()) throw usage_error("aggregate of an empty metrics list");
  AggregateReport r;
  r.dataset = std::move(dataset);
  r.learner = metrics.front().learner;
  r.targets = metrics.size();
  auto stat = [&](auto field, double& mean, double& sd) {
    std::vector<double> v;
    for (const auto& m : metrics) v.push_back(m.*field);
    mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
    sd = sample_std(v);
  };
  stat(&TargetMetrics::accuracy, r.mean_accuracy, r.std_accuracy);
  stat(&TargetMetrics::precision, r.mean_precision, r.std_precision);
  stat(&TargetMetrics::recall, r.mean_recall, r.std_recall);
  stat(&TargetMetrics::model_size, r.mean_size, r.std_size);
  return r;
}

Report make_report(std::string dataset, const CvConfig& cv, std::vector<learn::Learner> learners,
                   std::vector<TargetMetrics> targets, prep::RemovalReport removals) {
  Report r;
  r.dataset = std::move(dataset);
  r.cv = cv;
  r.learners = std::move(learners);
  r.targets = std::move(targets);
  r.removals = std::move(removals);
  for (auto l : r.learners) {
    std::vector<TargetMetrics> subset;
    for (const auto& t : r.targets) {
      if (t.learner == l) subset.push_back(t);
    }
    if (!subset.empty()) r.aggregates.push_back(aggregate(subset, r.dataset));
  }
  return r;
}

nlohmann::ordered_json to_json(const TargetMetrics& m) {
  nlohmann::ordered_json j;
  j["target"] = m.target;
  j["learner"] = learn::to_string(m.learner);
  j["instances"] = m.instances;
  j["folds"] = m.folds;
  j["leaveOneOut"] = m.leave_one_out;
  j["accuracy"] = m.accuracy;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["modelSize"] = m.model_size;
  j["classes"] = m.confusion.classes;
  auto rows = nlohmann::ordered_json::array();
  const std::size_t k = m.confusion.classes.size();
  for (std::size_t a = 0; a < k; ++a) {
    auto row = nlohmann::ordered_json::array();
    for (std::size_t p = 0; p < k; ++p) row.push_back(m.confusion.at(a, p));
    rows.push_back(std::move(row));
  }
  j["confusion"] = std::move(rows);
  auto folds = nlohmann::ordered_json::array();
  for (const auto& f : m.per_fold) {
    folds.push_back({{"instances", f.instances},
                     {"accuracy", f.accuracy},
                     {"precision", f.precision},
                     {"recall", f.recall},
                     {"modelSize", f.model_size}});
  }
  j["perFold"] = std::move(folds);
  return j;
}

nlohmann::ordered_json to_json(const Report& r) {
  nlohmann::ordered_json j;
  j["dataset"] = r.dataset;
  j["seed"] = r.cv.seed;
  j["folds"] = r.cv.folds;
  j["scoring"] = "pooled confusion matrix";
  j["weighting"] = "class frequency";
  auto learners = nlohmann::ordered_json::array();
  for (auto l : r.learners) learners.push_back(learn::to_string(l));
  j["learners"] = std::move(learners);
  auto aggregates = nlohmann::ordered_json::array();
  for (const auto& a : r.aggregates) {
    aggregates.push_back({{"learner", learn::to_string(a.learner)},
                          {"targets", a.targets},
                          {"meanAccuracy", a.mean_accuracy},
                          {"stdAccuracy", a.std_accuracy},
                          {"meanPrecision", a.mean_precision},
                          {"stdPrecision", a.std_precision},
                          {"meanRecall", a.mean_recall},
                          {"stdRecall", a.std_recall},
                          {"meanSize", a.mean_size},
                          {"stdSize", a.std_size}});
  }
  j["aggregates"] = std::move(aggregates);
  auto targets = nlohmann::ordered_json::array();
  for (const auto& t : r.targets) targets.push_back(to_json(t));
  j["targets"] = std::move(targets);
  j["removed"] = prep::to_json(r.removals);
  return j;
}

namespace {

std::string mean_std(double mean, double sd, int precision) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << mean << "±" << sd;
  return s.str();
}

// Display width, counting UTF-8 code points.
std::size_t width(const std::string& s) {
  return std::size_t(std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

}  // namespace

std::string render_table(std::span<const Report> reports) {
  std::vector<learn::Learner> learners;
  for (const auto& r : reports) {
    for (auto l : r.learners) {
      if (std::find(learners.begin(), learners.end(), l) == learners.end()) learners.push_back(l);
    }
  }
  struct Stat {
    const char* title;
    double AggregateReport::*mean;
    double AggregateReport::*sd;
    int precision;
  };
  const Stat stats[] = {
      {"Accuracy", &AggregateReport::mean_accuracy, &AggregateReport::std_accuracy, 4},
      {"Precision", &AggregateReport::mean_precision, &AggregateReport::std_precision, 4},
      {"Recall", &AggregateReport::mean_recall, &AggregateReport::std_recall, 4},
      {"Model size", &AggregateReport::mean_size, &AggregateReport::std_size, 2},
  };

  std::ostringstream out;
  for (const auto& stat : stats) {
    std::vector<std::vector<std::string>> grid;
    std::vector<std::string> header{"dataset"};
    for (auto l : learners) header.emplace_back(learn::to_string(l));
    grid.push_back(header);
    for (const auto& r : reports) {
      std::vector<std::string> row{r.dataset};
      for (auto l : learners) {
        auto it = std::find_if(r.aggregates.begin(), r.aggregates.end(),
                               [&](const AggregateReport& a) { return a.learner == l; });
        row.push_back(it == r.aggregates.end() ? "-" : mean_std((*it).*stat.mean, (*it).*stat.sd, stat.precision));
      }
      grid.push_back(std::move(row));
    }
    std::vector<std::size_t> widths(header.size(), 0);
    for (const auto& row : grid) {
      for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], width(row[c]));
    }
    out << stat.title << '\n';
    for (const auto& row : grid) {
      for (std::size_t c = 0; c < row.size(); ++c) {
        out << (c ? "  " : "") << row[c];
        if (c + 1 < row.size()) out << std::string(widths[c] - width(row[c]), ' ');
      }
      out << '\n';
    }
    out << '\n';
  }
  return out.str();
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

}  // namespace

void write_csv(std::ostream& out, const Report& report) {
  out << "dataset,target,learner,instances,accuracy,precision,recall,modelSize\n";
  out << std::setprecision(6) << std::fixed;
  for (const auto& t : report.targets) {
    out << csv_field(report.dataset) << ',' << csv_field(t.target) << ',' << learn::to_string(t.learner) << ','
        << t.instances << ',' << t.accuracy << ',' << t.precision << ',' << t.recall << ',' << t.model_size << '\n';
  }
  out.unsetf(std::ios::floatfield);
}

}  // namespace mockskel::eval
