#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mockskel::traffic {

enum class Method { Get, Head, Post, Put, Patch, Delete, Options };

std::optional<Method> parse_method(std::string_view name);
std::string_view to_string(Method m);

// Ordered header list. Names compare case-insensitively; duplicates allowed.
struct Headers {
  std::vector<std::pair<std::string, std::string>> entries;

  // First value under `name`, if any.
  std::optional<std::string_view> find(std::string_view name) const;
  // All values under `name` joined with ", ".
  std::optional<std::string> joined(std::string_view name) const;
  void add(std::string name, std::string value) { entries.emplace_back(std::move(name), std::move(value)); }

  bool operator==(const Headers&) const = default;
};

struct Uri {
  std::string scheme;
  std::string host;  // authority without userinfo; keeps an explicit port
  std::string path;
  std::optional<std::string> query;
  std::optional<std::string> fragment;

  // Throws Error(Parse) when `text` is not an absolute http(s)-style URI.
  static Uri parse(std::string_view text);
};

struct HttpRequest {
  Method method = Method::Get;
  std::string uri;
  Headers headers;
  std::optional<std::string> body;
  std::optional<std::string> body_content_type;

  bool operator==(const HttpRequest&) const = default;
};

struct HttpResponse {
  int status = 200;
  Headers headers;
  std::optional<std::string> body;

  bool operator==(const HttpResponse&) const = default;
};

struct HttpTransaction {
  std::string id;
  std::int64_t sequence = 0;
  std::optional<std::int64_t> timestamp;
  HttpRequest request;
  HttpResponse response;

  bool operator==(const HttpTransaction&) const = default;
};

struct TrafficLog {
  std::vector<HttpTransaction> transactions;  // ascending by sequence
  std::string source;
  // Entries dropped because their method is not supported.
  std::size_t skipped = 0;
};

enum class Format { Jsonl, Har };

// Throws Error(Parse) naming the offending line (JSONL, 1-based) or entry
// (HAR, 0-based) on malformed input.
TrafficLog load_traffic(std::istream& in, Format format, std::string source = {});
TrafficLog load_traffic_file(const std::string& path, std::optional<Format> format = std::nullopt);

void write_jsonl(std::ostream& out, const TrafficLog& log);
std::string to_jsonl_line(const HttpTransaction& txn);

struct ResourceKeyConfig {
  // Tokens matching this (ECMAScript) regex count as identifiers.
  std::string id_pattern =
      "^([0-9]+|[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{12})$";
  // Path tokens naming an operation rather than a resource; stripped from keys.
  std::vector<std::string> verb_tokens = {"postMessage", "update", "delete", "destroy", "show"};
  // Query parameters or top-level JSON body fields that carry the resource id
  // when the path does not end in one.
  std::vector<std::string> id_fields;

  bool operator==(const ResourceKeyConfig&) const = default;
};

struct ResourceKey {
  std::string value;
  auto operator<=>(const ResourceKey&) const = default;
};

bool is_identifier_token(std::string_view token, const ResourceKeyConfig& config);

ResourceKey resource_key(const HttpRequest& request, const ResourceKeyConfig& config);

// Indices into log.transactions, each list ascending by sequence.
using ResourceGroups = std::map<ResourceKey, std::vector<std::size_t>>;

ResourceGroups group_by_resource(const TrafficLog& log, const ResourceKeyConfig& config);

}  // namespace mockskel::traffic

namespace mockskel::traffic {

// `a=1&b=2` -> {{"a","1"},{"b","2"}}; a key without '=' maps to "".
std::vector<std::pair<std::string, std::string>> parse_query(std::string_view query);

}  // namespace mockskel::traffic
