#include "mockskel/prep.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "mockskel/error.hpp"

namespace mockskel::prep {

using features::InstanceTable;
using features::Role;

void PrepConfig::validate() const {
  if (max_target_cardinality < 2) throw usage_error("max target cardinality must be >= 2");
  if (!(max_target_distinct_ratio > 0.0 && max_target_distinct_ratio <= 1.0)) {
    throw usage_error("max target distinct ratio must be in (0, 1]");
  }
}

std::string_view to_string(RemovalReason r) {
  switch (r) {
    case RemovalReason::Unary: return "unary";
    case RemovalReason::HighCardinality: return "high-cardinality";
    case RemovalReason::SingleValuedInput: return "single-valued-input";
  }
  return "unary";
}

nlohmann::ordered_json to_json(const RemovalReport& report) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : report) {
    nlohmann::ordered_json j;
    j["attribute"] = r.attribute;
    j["role"] = r.role == Role::Input ? "input" : "target";
    j["reason"] = std::string(to_string(r.reason));
    j["distinctCount"] = r.distinct_count;
    arr.push_back(std::move(j));
  }
  return arr;
}

InstanceTable coerce_to_nominal(InstanceTable table) {
  for (std::size_t c = 0; c < table.schema.size(); ++c) {
    std::set<std::string> dom;
    for (const auto& inst : table.instances) dom.insert(inst.values[c]);
    table.schema[c].domain.assign(dom.begin(), dom.end());
  }
  return table;
}

std::pair<InstanceTable, RemovalReport> prune_targets(const InstanceTable& table, const PrepConfig& config) {
  config.validate();
  RemovalReport report;
  std::vector<std::size_t> keep;
  const double n = static_cast<double>(table.instances.size());
  const double limit = std::min(static_cast<double>(config.max_target_cardinality), config.max_target_distinct_ratio * n);
  for (std::size_t c = 0; c < table.schema.size(); ++c) {
    const auto& a = table.schema[c];
    const std::size_t distinct = a.domain.size();
    std::string constant = distinct == 1 ? a.domain.front() : std::string();
    if (a.role == Role::Target) {
      if (distinct <= 1) {
        report.push_back({a.name, a.role, RemovalReason::Unary, distinct, constant});
        continue;
      }
      if (static_cast<double>(distinct) > limit) {
        report.push_back({a.name, a.role, RemovalReason::HighCardinality, distinct, {}});
        continue;
      }
    } else if (config.drop_single_valued_inputs && distinct <= 1) {
      report.push_back({a.name, a.role, RemovalReason::SingleValuedInput, distinct, constant});
      continue;
    }
    keep.push_back(c);
  }

  InstanceTable out;
  out.response_array_paths = table.response_array_paths;
  out.path_depth = table.path_depth;
  for (std::size_t c : keep) out.schema.push_back(table.schema[c]);
  out.instances.reserve(table.instances.size());
  for (const auto& inst : table.instances) {
    features::Instance row;
    row.transaction_id = inst.transaction_id;
    row.values.reserve(keep.size());
    for (std::size_t c : keep) row.values.push_back(inst.values[c]);
    out.instances.push_back(std::move(row));
  }
  return {std::move(out), std::move(report)};
}

std::size_t PreparedDataset::target_index() const {
  for (std::size_t i = 0; i < table.schema.size(); ++i) {
    if (table.schema[i].role == Role::Target) return i;
  }
  throw usage_error("prepared dataset has no target");
}

PreparedDataset project_for_target(const InstanceTable& pruned, std::string_view target, const RemovalReport& removals) {
  const auto idx = pruned.index_of(target);
  if (!idx) {
    const bool was_pruned = std::any_of(removals.begin(), removals.end(),
                                        [&](const Removal& r) { return r.attribute == target; });
    throw usage_error(std::string(was_pruned ? "pruned target '" : "unknown target '") + std::string(target) + "'");
  }
  if (pruned.schema[*idx].role != Role::Target) {
    throw usage_error("'" + std::string(target) + "' is an input attribute, not a target");
  }
  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < pruned.schema.size(); ++c) {
    if (pruned.schema[c].role == Role::Input || c == *idx) keep.push_back(c);
  }
  PreparedDataset ds;
  ds.target = std::string(target);
  ds.provenance = removals;
  ds.table.path_depth = pruned.path_depth;
  ds.table.response_array_paths = pruned.response_array_paths;
  for (std::size_t c : keep) ds.table.schema.push_back(pruned.schema[c]);
  ds.table.instances.reserve(pruned.instances.size());
  for (const auto& inst : pruned.instances) {
    features::Instance row;
    row.transaction_id = inst.transaction_id;
    row.values.reserve(keep.size());
    for (std::size_t c : keep) row.values.push_back(inst.values[c]);
    ds.table.instances.push_back(std::move(row));
  }
  return ds;
}

std::vector<PreparedDataset> project_all(const InstanceTable& pruned, const RemovalReport& removals) {
  std::vector<PreparedDataset> out;
  for (const auto& a : pruned.schema) {
    if (a.role == Role::Target) out.push_back(project_for_target(pruned, a.name, removals));
  }
  return out;
}

}  // namespace mockskel::prep
