#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mockskel/evaluation.hpp"
#include "mockskel/features.hpp"
#include "mockskel/learners.hpp"
#include "mockskel/prep.hpp"
#include "mockskel/traffic.hpp"

namespace mockskel::skeleton {

enum class Origin { Learned, Edited };

std::string_view to_string(Origin o);

// Shown in place of a default an engineer still has to fill in.
inline constexpr std::string_view kPlaceholder = "<EDIT-ME>";

struct PredictedTarget {
  std::string target;
  learn::Model model;
  std::optional<eval::TargetMetrics> metrics;  // absent once edited
  std::vector<std::string> classes;            // values seen in training
  Origin origin = Origin::Learned;
};

struct UnpredictedTarget {
  std::string attribute;
  std::string reason;
  // A JSON literal, or nothing for the placeholder / an absent value.
  std::optional<nlohmann::json> default_value;
  bool absent = false;
  Origin origin = Origin::Learned;

  bool is_placeholder() const { return !default_value && !absent; }
};

struct InputAttribute {
  std::string name;
  std::optional<std::string> removed;  // removal reason

  bool operator==(const InputAttribute&) const = default;
};

struct MockSkeleton {
  std::string service;
  std::string schema_digest;
  std::uint64_t seed = 1;
  features::FeatureConfig config;
  std::set<std::string> response_array_paths;
  std::size_t path_depth = 0;
  std::vector<InputAttribute> inputs;
  std::set<std::string> shapes;  // "GET /items/{id}"
  std::vector<PredictedTarget> targets;
  std::vector<UnpredictedTarget> unpredicted;
  std::vector<std::string> warnings;  // filled by parse_skeleton

  // Names of the inputs models may test (removed ones excluded).
  std::vector<std::string> model_attributes() const;
  const PredictedTarget* find_target(std::string_view name) const;
  const UnpredictedTarget* find_unpredicted(std::string_view name) const;
};

// Hash over input and target names, in listed order.
std::string schema_digest(const std::vector<InputAttribute>& inputs, const std::vector<std::string>& targets);

// `GET /items/{id}`: identifier path tokens replaced by {id}.
std::string path_shape(const traffic::HttpRequest& request, const traffic::ResourceKeyConfig& config);
std::set<std::string> path_shapes(const traffic::TrafficLog& log, const traffic::ResourceKeyConfig& config);

struct EmitOptions {
  std::string service = "service";
  std::uint64_t seed = 1;
  features::FeatureConfig config;
  std::set<std::string> shapes;
};

// `pruned` is the table after prune_targets; `removals` its report. Every
// model must use the pruned table's inputs (Error(Usage) otherwise). Targets
// of the table without a model are listed as unpredicted ("not-trained").
MockSkeleton assemble_skeleton(const features::InstanceTable& pruned, const prep::RemovalReport& removals,
                               std::vector<PredictedTarget> targets, const EmitOptions& options);

std::string emit_skeleton(const MockSkeleton& skeleton);

std::string emit_skeleton(const features::InstanceTable& pruned, const prep::RemovalReport& removals,
                          std::vector<PredictedTarget> targets, const EmitOptions& options);

// Throws Error(Parse) with a line number on syntax errors and unknown
// attributes. Class values absent from training are accepted with a warning.
MockSkeleton parse_skeleton(std::string_view text);

// Value of an unpredicted default, unary literal or model class as JSON.
// Sentinels decode to nothing ("no-exist") and null ("null").
std::optional<nlohmann::json> decode_body_value(std::string_view nominal);

}  // namespace mockskel::skeleton
