#include "mockskel/features.hpp"

#include <algorithm>
#include <cctype>
#include <memory>
#include <mutex>
#include <ostream>
#include <regex>
#include <unordered_map>

#include "mockskel/error.hpp"
#include "mockskel/util.hpp"

namespace mockskel::features {

using nlohmann::json;
using traffic::HttpTransaction;
using traffic::Method;

std::string escape_literal(std::string_view value) {
  if (value == kNull || value == kNoExist || value.substr(0, kLiteralPrefix.size()) == kLiteralPrefix) {
    return std::string(kLiteralPrefix) + std::string(value);
  }
  return std::string(value);
}

std::string unescape_literal(std::string_view value) {
  if (value.substr(0, kLiteralPrefix.size()) == kLiteralPrefix) {
    return std::string(value.substr(kLiteralPrefix.size()));
  }
  return std::string(value);
}

Role role_of(std::string_view a) {
  if (a == "statusCode" || a.starts_with("responseheader:") || a.starts_with("responsejson:")) {
    return Role::Target;
  }
  return Role::Input;
}

std::string_view missing_value_for(std::string_view attribute) {
  return attribute.starts_with("uriPathToken") ? kNull : kNoExist;
}

// ---------------------------------------------------------------------------
// Config (de)serialization

namespace {

constexpr std::pair<std::string_view, CrudClass> kCrudNames[] = {
    {"none", CrudClass::None},     {"create", CrudClass::Create}, {"read", CrudClass::Read},
    {"update", CrudClass::Update}, {"delete", CrudClass::Delete},
};

CrudClass crud_from_string(std::string_view s) {
  for (const auto& [n, c] : kCrudNames) {
    if (n == s) return c;
  }
  throw parse_error("unknown CRUD class '" + std::string(s) + "'");
}

}  // namespace

std::string_view to_string(CrudClass c) {
  for (const auto& [n, value] : kCrudNames) {
    if (value == c) return n;
  }
  return "none";
}

nlohmann::ordered_json to_json(const FeatureConfig& c) {
  nlohmann::ordered_json j;
  j["resource"]["idPattern"] = c.resource.id_pattern;
  j["resource"]["verbTokens"] = c.resource.verb_tokens;
  j["resource"]["idFields"] = c.resource.id_fields;
  j["authHeaders"] = c.auth_headers;
  j["authHeaderPattern"] = c.auth_header_pattern;
  auto crud = nlohmann::ordered_json::array();
  for (const auto& [tok, cls] : c.crud_tokens) crud.push_back({tok, std::string(to_string(cls))});
  j["crudTokens"] = std::move(crud);
  j["maxPathDepth"] = c.max_path_depth;
  return j;
}

FeatureConfig feature_config_from_json(const json& j) {
  FeatureConfig c;
  try {
    if (!j.is_object()) throw parse_error("feature config must be a JSON object");
    if (auto r = j.find("resource"); r != j.end()) {
      c.resource.id_pattern = r->value("idPattern", c.resource.id_pattern);
      c.resource.verb_tokens = r->value("verbTokens", c.resource.verb_tokens);
      c.resource.id_fields = r->value("idFields", c.resource.id_fields);
    }
    c.auth_headers = j.value("authHeaders", c.auth_headers);
    c.auth_header_pattern = j.value("authHeaderPattern", c.auth_header_pattern);
    if (auto it = j.find("crudTokens"); it != j.end()) {
      c.crud_tokens.clear();
      for (const auto& pair : *it) {
        c.crud_tokens.emplace_back(pair.at(0).get<std::string>(), crud_from_string(pair.at(1).get<std::string>()));
      }
    }
    c.max_path_depth = j.value("maxPathDepth", c.max_path_depth);
  } catch (const json::exception& e) {
    throw parse_error(std::string("feature config: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Per-transaction extractors

FeatureMap extract_general(const HttpTransaction& txn) {
  return {{"method", std::string(traffic::to_string(txn.request.method))},
          {"statusCode", std::to_string(txn.response.status)}};
}

FeatureMap tokenize_uri(const traffic::Uri& uri, std::size_t max_depth) {
  FeatureMap out;
  out["schema"] = escape_literal(uri.scheme);
  out["host"] = escape_literal(uri.host);
  const auto tokens = split_nonempty(uri.path, '/');
  for (std::size_t i = 0; i < tokens.size() && i < max_depth; ++i) {
    out["uriPathToken" + std::to_string(i)] = escape_literal(tokens[i]);
  }
  if (uri.query) {
    for (const auto& [k, v] : traffic::parse_query(*uri.query)) {
      out.emplace("uriQuery:" + k, escape_literal(v));
    }
  }
  if (uri.fragment) out["uriFragment"] = escape_literal(*uri.fragment);
  return out;
}

FeatureMap tokenize_uri(std::string_view uri, std::size_t max_depth) {
  return tokenize_uri(traffic::Uri::parse(uri), max_depth);
}

std::string canonical_scalar(const json& v) {
  if (v.is_null()) return std::string(kNull);
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_string()) return escape_literal(v.get<std::string>());
  return v.dump();
}

namespace {

void put_first_non_null(FeatureMap& out, const std::string& key, std::string value) {
  auto [it, inserted] = out.emplace(key, value);
  if (!inserted && it->second == kNull && value != kNull) it->second = std::move(value);
}

void flatten_into(const json& v, const std::string& path, FeatureMap& out, std::set<std::string>* arrays) {
  if (v.is_object()) {
    for (auto it = v.begin(); it != v.end(); ++it) {
      flatten_into(*it, path.empty() ? it.key() : path + "." + it.key(), out, arrays);
    }
  } else if (v.is_array()) {
    if (arrays && !path.empty()) arrays->insert(path);
    for (const auto& el : v) {
      if (el.is_object() || el.is_array()) {
        flatten_into(el, path, out, arrays);
      } else if (!path.empty()) {
        put_first_non_null(out, path, canonical_scalar(el));
      }
    }
  } else if (!path.empty()) {
    put_first_non_null(out, path, canonical_scalar(v));
  }
}

bool json_content_type(const std::optional<std::string>& ct) {
  if (!ct) return true;
  return to_lower(*ct).find("json") != std::string::npos;
}

std::optional<json> parse_body(const std::optional<std::string>& body, const std::optional<std::string>& ct) {
  if (!body || body->empty() || !json_content_type(ct)) return std::nullopt;
  json j = json::parse(*body, nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  return j;
}

}  // namespace

void flatten_json(const json& body, std::string_view prefix, FeatureMap& out, std::set<std::string>* array_paths) {
  FeatureMap local;
  std::set<std::string> local_arrays;
  flatten_into(body, "", local, array_paths ? &local_arrays : nullptr);
  const std::string p = std::string(prefix) + ":";
  for (auto& [k, v] : local) out.emplace(p + k, std::move(v));
  if (array_paths) {
    for (const auto& a : local_arrays) array_paths->insert(p + a);
  }
}

FeatureMap flatten_json(const json& body, std::string_view prefix) {
  FeatureMap out;
  flatten_json(body, prefix, out);
  return out;
}

FeatureMap extract_request_payload(const traffic::HttpRequest& request) {
  FeatureMap out;
  const bool has = request.body && !request.body->empty();
  out["hasPayload"] = has ? "true" : "false";
  const auto parsed = parse_body(request.body, request.body_content_type);
  out["hasValidPayload"] = parsed ? "true" : "false";
  if (parsed) flatten_json(*parsed, "requestjson", out);
  return out;
}

FeatureMap extract_response_payload(const traffic::HttpResponse& response, std::set<std::string>* array_paths) {
  FeatureMap out;
  std::optional<std::string> ct;
  if (auto h = response.headers.find("Content-Type")) ct = std::string(*h);
  if (const auto parsed = parse_body(response.body, ct)) flatten_json(*parsed, "responsejson", out, array_paths);
  return out;
}

FeatureMap extract_payload_features(const HttpTransaction& txn, Side side) {
  return side == Side::Request ? extract_request_payload(txn.request) : extract_response_payload(txn.response);
}

namespace {

const std::regex& icase_regex(const std::string& pattern) {
  static std::mutex mu;
  static std::unordered_map<std::string, std::unique_ptr<std::regex>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[pattern];
  if (!slot) {
    try {
      slot = std::make_unique<std::regex>(pattern, std::regex::ECMAScript | std::regex::icase);
    } catch (const std::regex_error& e) {
      cache.erase(pattern);
      throw usage_error("invalid header pattern '" + pattern + "': " + e.what());
    }
  }
  return *slot;
}

void header_features(const traffic::Headers& headers, std::string_view prefix, FeatureMap& out) {
  std::vector<std::string> seen;
  for (const auto& [name, value] : headers.entries) {
    if (std::any_of(seen.begin(), seen.end(), [&](const auto& s) { return iequals(s, name); })) continue;
    seen.push_back(name);
    out[std::string(prefix) + name] = escape_literal(*headers.joined(name));
  }
}

}  // namespace

bool is_authorisation_header(std::string_view name, const FeatureConfig& config) {
  for (const auto& h : config.auth_headers) {
    if (iequals(h, name)) return true;
  }
  if (config.auth_header_pattern.empty()) return false;
  return std::regex_match(name.begin(), name.end(), icase_regex(config.auth_header_pattern));
}

FeatureMap extract_request_headers(const traffic::Headers& headers, const FeatureConfig& config) {
  FeatureMap out;
  header_features(headers, "requestheader:", out);
  const bool auth = std::any_of(headers.entries.begin(), headers.entries.end(),
                                [&](const auto& e) { return is_authorisation_header(e.first, config); });
  out["hasAuthorisationToken"] = auth ? "true" : "false";
  return out;
}

FeatureMap extract_response_headers(const traffic::Headers& headers) {
  FeatureMap out;
  header_features(headers, "responseheader:", out);
  return out;
}

FeatureMap extract_header_features(const HttpTransaction& txn, const FeatureConfig& config) {
  FeatureMap out = extract_request_headers(txn.request.headers, config);
  out.merge(extract_response_headers(txn.response.headers));
  return out;
}

CrudClass crud_class(Method method, const traffic::Uri& uri, const FeatureConfig& config) {
  for (const auto& tok : split_nonempty(uri.path, '/')) {
    for (const auto& [pattern, cls] : config.crud_tokens) {
      if (iequals(pattern, tok)) return cls;
    }
  }
  switch (method) {
    case Method::Post: return CrudClass::Create;
    case Method::Get:
    case Method::Head: return CrudClass::Read;
    case Method::Put:
    case Method::Patch: return CrudClass::Update;
    case Method::Delete: return CrudClass::Delete;
    case Method::Options: return CrudClass::None;
  }
  return CrudClass::None;
}

HistoryEntry summarize(const HttpTransaction& txn, const FeatureConfig& config) {
  return {txn.request.method, txn.response.status,
          crud_class(txn.request.method, traffic::Uri::parse(txn.request.uri), config)};
}

FeatureMap extract_state_features(std::span<const HistoryEntry> history) {
  FeatureMap out;
  out["hasImmediatePreviousTransaction"] = history.empty() ? "false" : "true";
  if (history.empty()) {
    out["prev:method"] = std::string(kNoExist);
    out["prev:statusCode"] = std::string(kNoExist);
  } else {
    out["prev:method"] = std::string(traffic::to_string(history.back().method));
    out["prev:statusCode"] = std::to_string(history.back().status);
  }
  auto ever = [&](CrudClass c) {
    return std::any_of(history.begin(), history.end(), [c](const auto& h) { return h.crud == c; }) ? "true"
                                                                                                    : "false";
  };
  out["everCreated"] = ever(CrudClass::Create);
  out["everRead"] = ever(CrudClass::Read);
  out["everUpdated"] = ever(CrudClass::Update);
  out["everDeleted"] = ever(CrudClass::Delete);
  return out;
}

FeatureMap extract_state_features(const HttpTransaction& txn, std::span<const HttpTransaction> history,
                                  const FeatureConfig& config) {
  std::vector<HistoryEntry> entries;
  entries.reserve(history.size());
  for (const auto& h : history) {
    if (h.sequence >= txn.sequence) break;
    entries.push_back(summarize(h, config));
  }
  return extract_state_features(entries);
}

FeatureMap extract_request_features(const traffic::HttpRequest& request, std::span<const HistoryEntry> history,
                                    const FeatureConfig& config) {
  FeatureMap out;
  out["method"] = std::string(traffic::to_string(request.method));
  out.merge(tokenize_uri(request.uri, config.max_path_depth));
  out.merge(extract_request_payload(request));
  out.merge(extract_request_headers(request.headers, config));
  out.merge(extract_state_features(history));
  return out;
}

// ---------------------------------------------------------------------------
// Instance table

namespace {

int category_rank(std::string_view a) {
  static constexpr std::pair<std::string_view, int> exact[] = {
      {"method", 0},           {"statusCode", 1},
      {"schema", 2},           {"host", 3},
      {"uriFragment", 6},      {"hasPayload", 7},
      {"hasValidPayload", 8},  {"hasAuthorisationToken", 10},
      {"hasImmediatePreviousTransaction", 12},
      {"prev:method", 13},     {"prev:statusCode", 14},
      {"everCreated", 15},     {"everRead", 16},
      {"everUpdated", 17},     {"everDeleted", 18},
  };
  for (const auto& [n, r] : exact) {
    if (n == a) return r;
  }
  if (a.starts_with("uriPathToken")) return 4;
  if (a.starts_with("uriQuery:")) return 5;
  if (a.starts_with("requestjson:")) return 9;
  if (a.starts_with("requestheader:")) return 11;
  if (a.starts_with("responseheader:")) return 19;
  if (a.starts_with("responsejson:")) return 20;
  return 21;
}

std::size_t path_index(std::string_view a) {
  std::size_t v = 0;
  for (char c : a.substr(std::string_view("uriPathToken").size())) {
    if (c < '0' || c > '9') return v;
    v = v * 10 + std::size_t(c - '0');
  }
  return v;
}

}  // namespace

bool attribute_order(std::string_view a, std::string_view b) {
  const int ra = category_rank(a), rb = category_rank(b);
  if (ra != rb) return ra < rb;
  if (ra == 4) {
    const auto ia = path_index(a), ib = path_index(b);
    if (ia != ib) return ia < ib;
  }
  return a < b;
}

std::optional<std::size_t> InstanceTable::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (schema[i].name == name) return i;
  }
  return std::nullopt;
}

namespace {

// Results of the sequential pass shared by both table builders.
struct Prepass {
  std::unordered_map<std::string, std::string> header_spelling;  // lower-case -> first seen
  std::size_t depth = 0;
  traffic::ResourceGroups groups;
};

Prepass run_prepass(const traffic::TrafficLog& log, const FeatureConfig& config) {
  Prepass p;
  for (const auto& t : log.transactions) {
    for (const auto* hs : {&t.request.headers, &t.response.headers}) {
      for (const auto& [name, _] : hs->entries) p.header_spelling.emplace(to_lower(name), name);
    }
    const auto uri = traffic::Uri::parse(t.request.uri);
    p.depth = std::max(p.depth, std::min(split_nonempty(uri.path, '/').size(), config.max_path_depth));
  }
  p.groups = traffic::group_by_resource(log, config.resource);
  return p;
}

void respell_headers(FeatureMap& fm, const Prepass& p) {
  FeatureMap out;
  for (auto& [k, v] : fm) {
    for (std::string_view prefix : {"requestheader:", "responseheader:"}) {
      if (k.starts_with(prefix)) {
        const auto name = std::string_view(k).substr(prefix.size());
        auto it = p.header_spelling.find(to_lower(name));
        if (it != p.header_spelling.end()) {
          out.emplace(std::string(prefix) + it->second, std::move(v));
          goto next;
        }
      }
    }
    out.emplace(k, std::move(v));
  next:;
  }
  fm = std::move(out);
}

FeatureMap extract_stateless(const HttpTransaction& t, const FeatureConfig& config, const Prepass& p,
                             std::set<std::string>& arrays) {
  FeatureMap fm = extract_general(t);
  fm.merge(tokenize_uri(t.request.uri, config.max_path_depth));
  fm.merge(extract_request_payload(t.request));
  fm.merge(extract_response_payload(t.response, &arrays));
  fm.merge(extract_header_features(t, config));
  respell_headers(fm, p);
  return fm;
}

// Incremental walk: one pass per resource group, O(n) overall.
std::vector<FeatureMap> state_features_incremental(const traffic::TrafficLog& log, const FeatureConfig& config,
                                                   const Prepass& p) {
  std::vector<FeatureMap> out(log.transactions.size());
  for (const auto& [key, idx] : p.groups) {
    bool ever[5] = {false, false, false, false, false};
    const HttpTransaction* prev = nullptr;
    for (std::size_t i : idx) {
      const auto& t = log.transactions[i];
      FeatureMap& fm = out[i];
      fm["hasImmediatePreviousTransaction"] = prev ? "true" : "false";
      fm["prev:method"] = prev ? std::string(traffic::to_string(prev->request.method)) : std::string(kNoExist);
      fm["prev:statusCode"] = prev ? std::to_string(prev->response.status) : std::string(kNoExist);
      fm["everCreated"] = ever[int(CrudClass::Create)] ? "true" : "false";
      fm["everRead"] = ever[int(CrudClass::Read)] ? "true" : "false";
      fm["everUpdated"] = ever[int(CrudClass::Update)] ? "true" : "false";
      fm["everDeleted"] = ever[int(CrudClass::Delete)] ? "true" : "false";
      ever[int(summarize(t, config).crud)] = true;
      prev = &t;
    }
  }
  return out;
}

InstanceTable assemble(std::vector<FeatureMap>& maps, const traffic::TrafficLog& log,
                       std::set<std::string> arrays, std::size_t depth, bool parallel) {
  InstanceTable table;
  table.path_depth = depth;
  table.response_array_paths = std::move(arrays);
  std::set<std::string> names;
  for (const auto& fm : maps) {
    for (const auto& [k, _] : fm) names.insert(k);
  }
  std::vector<std::string> ordered(names.begin(), names.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const std::string& a, const std::string& b) { return attribute_order(a, b); });
  for (auto& n : ordered) table.schema.push_back({n, role_of(n), {}});

  const auto n = static_cast<std::ptrdiff_t>(maps.size());
  table.instances.resize(maps.size());
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    auto& inst = table.instances[std::size_t(i)];
    const auto& fm = maps[std::size_t(i)];
    inst.transaction_id = log.transactions[std::size_t(i)].id;
    inst.values.reserve(table.schema.size());
    for (const auto& a : table.schema) {
      auto it = fm.find(a.name);
      inst.values.push_back(it != fm.end() ? it->second : std::string(missing_value_for(a.name)));
    }
  }

  const auto width = static_cast<std::ptrdiff_t>(table.schema.size());
#pragma omp parallel for schedule(dynamic, 4) if (parallel)
  for (std::ptrdiff_t c = 0; c < width; ++c) {
    std::set<std::string> dom;
    for (const auto& inst : table.instances) dom.insert(inst.values[std::size_t(c)]);
    table.schema[std::size_t(c)].domain.assign(dom.begin(), dom.end());
  }
  return table;
}

}  // namespace

InstanceTable build_instance_table(const traffic::TrafficLog& log, const FeatureConfig& config) {
  const Prepass p = run_prepass(log, config);
  std::vector<FeatureMap> maps = state_features_incremental(log, config, p);
  std::vector<std::set<std::string>> arrays(maps.size());

  const auto n = static_cast<std::ptrdiff_t>(log.transactions.size());
  std::vector<std::string> errors(log.transactions.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = std::size_t(i);
    try {
      maps[k].merge(extract_stateless(log.transactions[k], config, p, arrays[k]));
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw parse_error(e);
  }
  std::set<std::string> all_arrays;
  for (auto& a : arrays) all_arrays.merge(a);
  return assemble(maps, log, std::move(all_arrays), p.depth, true);
}

InstanceTable build_instance_table_serial(const traffic::TrafficLog& log, const FeatureConfig& config) {
  const Prepass p = run_prepass(log, config);
  std::vector<FeatureMap> maps(log.transactions.size());
  std::set<std::string> arrays;
  for (const auto& [key, idx] : p.groups) {
    std::vector<HistoryEntry> history;
    for (std::size_t i : idx) {
      const auto& t = log.transactions[i];
      maps[i] = extract_stateless(t, config, p, arrays);
      maps[i].merge(extract_state_features(history));
      history.push_back(summarize(t, config));
    }
  }
  return assemble(maps, log, std::move(arrays), p.depth, false);
}

// ---------------------------------------------------------------------------
// ARFF

namespace {
std::string arff_quote(std::string_view s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  out += '\'';
  return out;
}
}  // namespace

void write_arff(std::ostream& out, const InstanceTable& table, std::string_view relation) {
  out << "@relation " << arff_quote(relation) << "\n\n";
  for (const auto& a : table.schema) {
    out << "@attribute " << arff_quote(a.name) << " {";
    for (std::size_t i = 0; i < a.domain.size(); ++i) {
      if (i) out << ',';
      out << arff_quote(a.domain[i]);
    }
    out << "}\n";
  }
  out << "\n@data\n";
  for (const auto& inst : table.instances) {
    for (std::size_t i = 0; i < inst.values.size(); ++i) {
      if (i) out << ',';
      out << arff_quote(inst.values[i]);
    }
    out << '\n';
  }
}

}  // namespace mockskel::features
