#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mockskel/features.hpp"

namespace mockskel::prep {

struct PrepConfig {
  std::size_t max_target_cardinality = 32;
  double max_target_distinct_ratio = 0.5;  // of the instance count
  bool drop_single_valued_inputs = true;

  // Throws Error(Usage) when a threshold is out of range.
  void validate() const;
};

enum class RemovalReason { Unary, HighCardinality, SingleValuedInput };

std::string_view to_string(RemovalReason r);

struct Removal {
  std::string attribute;
  features::Role role = features::Role::Target;
  RemovalReason reason = RemovalReason::Unary;
  std::size_t distinct_count = 0;
  // The attribute's only value, recorded for unary targets.
  std::string constant;

  bool operator==(const Removal&) const = default;
};

using RemovalReport = std::vector<Removal>;

// [{attribute, role, reason, distinctCount}]
nlohmann::ordered_json to_json(const RemovalReport& report);

// Recomputes every domain as the sorted set of observed value strings.
features::InstanceTable coerce_to_nominal(features::InstanceTable table);

// Drops unary and high-cardinality targets, and single-valued inputs when
// configured. The report lists every dropped attribute.
std::pair<features::InstanceTable, RemovalReport> prune_targets(const features::InstanceTable& table,
                                                                const PrepConfig& config);

struct PreparedDataset {
  features::InstanceTable table;  // all inputs + exactly one target
  std::string target;
  RemovalReport provenance;

  std::size_t target_index() const;
  std::size_t input_count() const { return table.schema.size() - 1; }
};

// Throws Error(Usage) for an unknown or pruned target.
PreparedDataset project_for_target(const features::InstanceTable& pruned, std::string_view target,
                                   const RemovalReport& removals = {});

// One dataset per surviving target, in schema order.
std::vector<PreparedDataset> project_all(const features::InstanceTable& pruned, const RemovalReport& removals = {});

}  // namespace mockskel::prep
