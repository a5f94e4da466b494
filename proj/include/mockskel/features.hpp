#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mockskel/traffic.hpp"

namespace mockskel::features {

// Reserved nominal values.
inline constexpr std::string_view kNull = "null";         // absent URI path token, JSON null
inline constexpr std::string_view kNoExist = "no-exist";  // absent header, query key or JSON key
inline constexpr std::string_view kLiteralPrefix = "lit:";

// Observed literals that would read as a sentinel (or already carry the
// escape prefix) get "lit:" prepended, keeping the mapping injective.
std::string escape_literal(std::string_view value);
std::string unescape_literal(std::string_view value);

enum class Role { Input, Target };

// Roles follow from the attribute naming grammar: response-side names are
// targets, everything else is an input.
Role role_of(std::string_view attribute);

// The fill value for an attribute absent from one transaction.
std::string_view missing_value_for(std::string_view attribute);

using FeatureMap = std::map<std::string, std::string>;

enum class CrudClass { None, Create, Read, Update, Delete };

struct FeatureConfig {
  traffic::ResourceKeyConfig resource;
  std::vector<std::string> auth_headers = {"Authorization", "Cookie"};
  std::string auth_header_pattern = "^x-.*-token$";  // matched case-insensitively
  std::vector<std::pair<std::string, CrudClass>> crud_tokens = {
      {"postMessage", CrudClass::Create}, {"update", CrudClass::Update},
      {"delete", CrudClass::Delete},      {"destroy", CrudClass::Delete},
      {"show", CrudClass::Read},
  };
  std::size_t max_path_depth = 16;

  bool operator==(const FeatureConfig&) const = default;
};

nlohmann::ordered_json to_json(const FeatureConfig& config);
// Missing keys keep their defaults. Throws Error(Parse) on type mismatches.
FeatureConfig feature_config_from_json(const nlohmann::json& j);

FeatureMap extract_general(const traffic::HttpTransaction& txn);

FeatureMap tokenize_uri(const traffic::Uri& uri, std::size_t max_depth = 16);
FeatureMap tokenize_uri(std::string_view uri, std::size_t max_depth = 16);

enum class Side { Request, Response };

FeatureMap extract_payload_features(const traffic::HttpTransaction& txn, Side side);
FeatureMap extract_request_payload(const traffic::HttpRequest& request);
FeatureMap extract_response_payload(const traffic::HttpResponse& response,
                                     std::set<std::string>* array_paths = nullptr);

// Flattens `body` under `prefix` ("requestjson" / "responsejson"). Object
// keys become dot paths; arrays merge their elements' keys without indices,
// first non-null value winning. Paths that held arrays are recorded in
// `array_paths` when given.
void flatten_json(const nlohmann::json& body, std::string_view prefix, FeatureMap& out,
                  std::set<std::string>* array_paths = nullptr);
FeatureMap flatten_json(const nlohmann::json& body, std::string_view prefix);

std::string canonical_scalar(const nlohmann::json& value);

FeatureMap extract_header_features(const traffic::HttpTransaction& txn, const FeatureConfig& config);
FeatureMap extract_request_headers(const traffic::Headers& headers, const FeatureConfig& config);
FeatureMap extract_response_headers(const traffic::Headers& headers);

bool is_authorisation_header(std::string_view name, const FeatureConfig& config);

struct HistoryEntry {
  traffic::Method method = traffic::Method::Get;
  int status = 200;
  CrudClass crud = CrudClass::None;

  bool operator==(const HistoryEntry&) const = default;
};

CrudClass crud_class(traffic::Method method, const traffic::Uri& uri, const FeatureConfig& config);
std::string_view to_string(CrudClass c);
HistoryEntry summarize(const traffic::HttpTransaction& txn, const FeatureConfig& config);

// `history` holds the predecessors on the same resource, oldest first.
FeatureMap extract_state_features(std::span<const HistoryEntry> history);
FeatureMap extract_state_features(const traffic::HttpTransaction& txn,
                                  std::span<const traffic::HttpTransaction> history,
                                  const FeatureConfig& config);

// Every input feature of a request: general, URI, request payload, request
// headers and state. This is all a mock server sees.
FeatureMap extract_request_features(const traffic::HttpRequest& request,
                                    std::span<const HistoryEntry> history,
                                    const FeatureConfig& config);

struct AttributeSchema {
  std::string name;
  Role role = Role::Input;
  std::vector<std::string> domain;  // sorted distinct values

  bool operator==(const AttributeSchema&) const = default;
};

struct Instance {
  std::vector<std::string> values;  // aligned to the table schema
  std::string transaction_id;

  bool operator==(const Instance&) const = default;
};

struct InstanceTable {
  std::vector<AttributeSchema> schema;
  std::vector<Instance> instances;
  // responsejson paths that held arrays somewhere in the log.
  std::set<std::string> response_array_paths;
  std::size_t path_depth = 0;

  std::optional<std::size_t> index_of(std::string_view name) const;
  bool operator==(const InstanceTable&) const = default;
};

// Canonical attribute order: the feature-tree categories in a fixed
// sequence, then by name (path tokens by position).
bool attribute_order(std::string_view a, std::string_view b);

// OpenMP-parallel over transactions after one sequential pass that resolves
// resource histories, header spellings and path depth.
InstanceTable build_instance_table(const traffic::TrafficLog& log, const FeatureConfig& config);
// Single-threaded reference; must produce an identical table.
InstanceTable build_instance_table_serial(const traffic::TrafficLog& log, const FeatureConfig& config);

void write_arff(std::ostream& out, const InstanceTable& table, std::string_view relation);

}  // namespace mockskel::features
