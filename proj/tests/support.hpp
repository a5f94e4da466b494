#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mockskel/features.hpp"
#include "mockskel/learners.hpp"
#include "mockskel/prep.hpp"
#include "mockskel/synth.hpp"

namespace support {

using Columns = std::vector<std::pair<std::string, std::vector<std::string>>>;

// A prepared dataset from named string columns; the last column is the
// target.
inline mockskel::prep::PreparedDataset dataset(const Columns& cols) {
  using namespace mockskel;
  features::InstanceTable t;
  const std::size_t n = cols.front().second.size();
  for (std::size_t c = 0; c < cols.size(); ++c) {
    t.schema.push_back({cols[c].first, c + 1 == cols.size() ? features::Role::Target : features::Role::Input, {}});
  }
  for (std::size_t r = 0; r < n; ++r) {
    features::Instance inst;
    for (const auto& c : cols) inst.values.push_back(c.second[r]);
    inst.transaction_id = "t" + std::to_string(r);
    t.instances.push_back(std::move(inst));
  }
  t = prep::coerce_to_nominal(std::move(t));
  prep::PreparedDataset d;
  d.table = std::move(t);
  d.target = cols.back().first;
  return d;
}

struct RandomTable {
  Columns columns;  // inputs a0..ak-1, then target "y"
  mockskel::learn::CodedData coded;
};

// Random nominal table. `arity` values per input, `classes` target values.
inline RandomTable random_table(std::mt19937_64& rng, std::size_t rows, std::size_t inputs, std::size_t arity,
                                std::size_t classes) {
  RandomTable t;
  std::uniform_int_distribution<std::size_t> v(0, arity - 1), c(0, classes - 1);
  for (std::size_t a = 0; a < inputs; ++a) {
    std::vector<std::string> col;
    for (std::size_t r = 0; r < rows; ++r) col.push_back("v" + std::to_string(v(rng)));
    t.columns.emplace_back("a" + std::to_string(a), std::move(col));
  }
  std::vector<std::string> y;
  for (std::size_t r = 0; r < rows; ++r) y.push_back("c" + std::to_string(c(rng)));
  t.columns.emplace_back("y", std::move(y));
  t.coded = mockskel::learn::encode(dataset(t.columns));
  return t;
}

inline std::vector<std::string> row_values(const mockskel::learn::CodedData& d, std::size_t row) {
  std::vector<std::string> out;
  for (std::size_t a = 0; a < d.width(); ++a) out.push_back(d.value(row, a));
  return out;
}

inline double training_accuracy(const mockskel::learn::Model& m, const mockskel::learn::CodedData& d) {
  std::size_t ok = 0;
  for (std::size_t r = 0; r < d.rows(); ++r) ok += mockskel::learn::classify(m, row_values(d, r)) == d.classes[d.y[r]];
  return double(ok) / double(d.rows());
}

// The synthetic item service, built and pruned with default settings.
inline mockskel::features::InstanceTable synthetic_table(std::size_t transactions = 5000, std::uint64_t seed = 1) {
  using namespace mockskel;
  synth::SynthConfig cfg;
  cfg.transactions = transactions;
  cfg.seed = seed;
  auto table = features::build_instance_table(synth::generate(cfg), {});
  return prep::prune_targets(table, {}).first;
}

inline mockskel::prep::PreparedDataset synthetic(std::string_view target, std::size_t transactions = 5000) {
  return mockskel::prep::project_for_target(synthetic_table(transactions), target);
}

// A fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path = std::filesystem::temp_directory_path() /
           ("mockskel-test-" + std::to_string(rd()) + "-" + std::to_string(++counter));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

inline std::string write_synthetic(const TempDir& dir, std::size_t transactions, std::uint64_t seed = 1,
                                   const std::string& name = "items.jsonl") {
  mockskel::synth::SynthConfig cfg;
  cfg.transactions = transactions;
  cfg.seed = seed;
  const auto path = dir.file(name);
  std::ofstream out(path);
  mockskel::traffic::write_jsonl(out, mockskel::synth::generate(cfg));
  return path;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace support
