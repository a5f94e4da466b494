#include "mockskel/traffic.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <mutex>
#include <ostream>
#include <regex>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "mockskel/error.hpp"
#include "mockskel/util.hpp"

namespace mockskel::traffic {

using nlohmann::json;

namespace {

constexpr std::pair<std::string_view, Method> kMethods[] = {
    {"GET", Method::Get},     {"HEAD", Method::Head},     {"POST", Method::Post},
    {"PUT", Method::Put},     {"PATCH", Method::Patch},   {"DELETE", Method::Delete},
    {"OPTIONS", Method::Options},
};

}  // namespace

std::optional<Method> parse_method(std::string_view name) {
  for (const auto& [text, m] : kMethods) {
    if (iequals(text, name)) return m;
  }
  return std::nullopt;
}

std::string_view to_string(Method m) {
  for (const auto& [text, value] : kMethods) {
    if (value == m) return text;
  }
  return "GET";
}

std::optional<std::string_view> Headers::find(std::string_view name) const {
  for (const auto& [n, v] : entries) {
    if (iequals(n, name)) return std::string_view(v);
  }
  return std::nullopt;
}

std::optional<std::string> Headers::joined(std::string_view name) const {
  std::optional<std::string> out;
  for (const auto& [n, v] : entries) {
    if (!iequals(n, name)) continue;
    if (out) {
      *out += ", ";
      *out += v;
    } else {
      out = v;
    }
  }
  return out;
}

Uri Uri::parse(std::string_view text) {
  Uri uri;
  const auto sep = text.find("://");
  if (sep == std::string_view::npos || sep == 0) {
    throw parse_error("unparseable uri '" + std::string(text) + "': missing scheme");
  }
  const auto scheme = text.substr(0, sep);
  if (!std::isalpha(static_cast<unsigned char>(scheme[0])) ||
      !std::all_of(scheme.begin(), scheme.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '-' || c == '.';
      })) {
    throw parse_error("unparseable uri '" + std::string(text) + "': bad scheme");
  }
  uri.scheme = to_lower(scheme);
  auto rest = text.substr(sep + 3);
  const auto auth_end = rest.find_first_of("/?#");
  auto authority = rest.substr(0, auth_end);
  if (const auto at = authority.rfind('@'); at != std::string_view::npos) authority = authority.substr(at + 1);
  if (authority.empty()) throw parse_error("unparseable uri '" + std::string(text) + "': empty host");
  if (authority.find_first_of(" \t\r\n") != std::string_view::npos) {
    throw parse_error("unparseable uri '" + std::string(text) + "': whitespace in host");
  }
  uri.host = to_lower(authority);
  rest = auth_end == std::string_view::npos ? std::string_view{} : rest.substr(auth_end);

  if (const auto hash = rest.find('#'); hash != std::string_view::npos) {
    uri.fragment = std::string(rest.substr(hash + 1));
    rest = rest.substr(0, hash);
  }
  if (const auto q = rest.find('?'); q != std::string_view::npos) {
    uri.query = std::string(rest.substr(q + 1));
    rest = rest.substr(0, q);
  }
  uri.path = std::string(rest);
  return uri;
}

std::vector<std::pair<std::string, std::string>> parse_query(std::string_view query) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& part : split_nonempty(query, '&')) {
    const auto eq = part.find('=');
    if (eq == std::string::npos) {
      out.emplace_back(part, "");
    } else {
      out.emplace_back(part.substr(0, eq), part.substr(eq + 1));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSONL / HAR ingestion

namespace {

Headers headers_from_pairs(const json& j, const std::string& where) {
  Headers h;
  if (j.is_null()) return h;
  if (!j.is_array()) throw parse_error(where + ": headers must be an array of [name, value] pairs");
  for (const auto& pair : j) {
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_string() || !pair[1].is_string()) {
      throw parse_error(where + ": header entry must be [name, value]");
    }
    h.add(pair[0].get<std::string>(), pair[1].get<std::string>());
  }
  return h;
}

json headers_to_pairs(const Headers& h) {
  json out = json::array();
  for (const auto& [n, v] : h.entries) out.push_back(json::array({n, v}));
  return out;
}

std::optional<std::string> body_from(const json& obj, const std::string& where) {
  if (auto it = obj.find("bodyB64"); it != obj.end() && !it->is_null()) {
    if (!it->is_string()) throw parse_error(where + ": bodyB64 must be a string");
    auto decoded = base64_decode(it->get<std::string>());
    if (!decoded) throw parse_error(where + ": bodyB64 is not valid base64");
    return decoded;
  }
  if (auto it = obj.find("body"); it != obj.end() && !it->is_null()) {
    if (!it->is_string()) throw parse_error(where + ": body must be a string");
    return it->get<std::string>();
  }
  return std::nullopt;
}

void body_to(json& obj, const std::optional<std::string>& body) {
  if (!body) return;
  if (is_valid_utf8(*body)) {
    obj["body"] = *body;
  } else {
    obj["bodyB64"] = base64_encode(*body);
  }
}

void check_uri(const std::string& uri, const std::string& where) {
  try {
    (void)Uri::parse(uri);
  } catch (const Error& e) {
    throw parse_error(where + ": " + e.what());
  }
}

void finalize(TrafficLog& log) {
  std::stable_sort(log.transactions.begin(), log.transactions.end(),
                   [](const auto& a, const auto& b) { return a.sequence < b.sequence; });
  std::set<std::string> ids;
  for (std::size_t i = 0; i < log.transactions.size(); ++i) {
    const auto& t = log.transactions[i];
    if (i > 0 && log.transactions[i - 1].sequence == t.sequence) {
      throw parse_error("duplicate sequence " + std::to_string(t.sequence));
    }
    if (!ids.insert(t.id).second) throw parse_error("duplicate transaction id '" + t.id + "'");
  }
}

TrafficLog load_jsonl(std::istream& in, std::string source) {
  TrafficLog log;
  log.source = std::move(source);
  std::string line;
  std::size_t line_no = 0;
  std::int64_t record = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw parse_error(where + ": " + e.what());
    }
    const std::int64_t ordinal = record++;
    try {
      if (!j.is_object()) throw parse_error(where + ": expected a JSON object");
      HttpTransaction t;
      if (!j.contains("id") || !j["id"].is_string()) throw parse_error(where + ": missing string field 'id'");
      t.id = j["id"].get<std::string>();
      if (auto it = j.find("sequence"); it != j.end()) {
        if (!it->is_number_integer()) throw parse_error(where + ": 'sequence' must be an integer");
        t.sequence = it->get<std::int64_t>();
      } else {
        t.sequence = ordinal;
      }
      if (auto it = j.find("timestamp"); it != j.end() && !it->is_null()) {
        if (!it->is_number_integer()) throw parse_error(where + ": 'timestamp' must be an integer");
        t.timestamp = it->get<std::int64_t>();
      }
      const auto& req = j.at("request");
      const auto& resp = j.at("response");
      if (!req.is_object() || !resp.is_object()) throw parse_error(where + ": request/response must be objects");
      if (!req.contains("method") || !req["method"].is_string()) throw parse_error(where + ": missing request.method");
      const auto method = parse_method(req["method"].get<std::string>());
      if (!method) {
        ++log.skipped;
        continue;
      }
      t.request.method = *method;
      if (!req.contains("uri") || !req["uri"].is_string()) throw parse_error(where + ": missing request.uri");
      t.request.uri = req["uri"].get<std::string>();
      check_uri(t.request.uri, where);
      t.request.headers = headers_from_pairs(req.value("headers", json()), where);
      t.request.body = body_from(req, where);
      if (auto ct = t.request.headers.find("Content-Type")) t.request.body_content_type = std::string(*ct);
      if (!resp.contains("status") || !resp["status"].is_number_integer()) {
        throw parse_error(where + ": missing integer response.status");
      }
      t.response.status = resp["status"].get<int>();
      if (t.response.status < 100 || t.response.status > 599) {
        throw parse_error(where + ": status out of range");
      }
      t.response.headers = headers_from_pairs(resp.value("headers", json()), where);
      t.response.body = body_from(resp, where);
      log.transactions.push_back(std::move(t));
    } catch (const json::exception& e) {
      throw parse_error(where + ": " + e.what());
    }
  }
  finalize(log);
  return log;
}

Headers har_headers(const json& arr, const std::string& where) {
  Headers h;
  if (arr.is_null()) return h;
  if (!arr.is_array()) throw parse_error(where + ": headers must be an array");
  for (const auto& e : arr) {
    if (!e.is_object() || !e.contains("name") || !e.contains("value")) {
      throw parse_error(where + ": header must have name and value");
    }
    auto name = e["name"].get<std::string>();
    if (!name.empty() && name[0] == ':') continue;  // HTTP/2 pseudo-headers
    h.add(std::move(name), e["value"].get<std::string>());
  }
  return h;
}

TrafficLog load_har(std::istream& in, std::string source) {
  TrafficLog log;
  log.source = std::move(source);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw parse_error(std::string("HAR document: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("log") || !doc["log"].is_object() ||
      !doc["log"].contains("entries") || !doc["log"]["entries"].is_array()) {
    throw parse_error("HAR document: missing log.entries array");
  }
  const auto& entries = doc["log"]["entries"];
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::string where = "entry " + std::to_string(i);
    const auto& e = entries[i];
    try {
      if (!e.is_object() || !e.contains("request") || !e.contains("response")) {
        throw parse_error(where + ": missing request/response");
      }
      const auto& req = e["request"];
      const auto& resp = e["response"];
      HttpTransaction t;
      t.id = e.contains("_id") && e["_id"].is_string() ? e["_id"].get<std::string>() : "har-" + std::to_string(i);
      t.sequence = static_cast<std::int64_t>(i);
      if (e.contains("startedDateTime") && e["startedDateTime"].is_string()) {
        t.timestamp = parse_iso8601_ms(e["startedDateTime"].get<std::string>());
        if (!t.timestamp) throw parse_error(where + ": bad startedDateTime");
      }
      const auto method = parse_method(req.at("method").get<std::string>());
      if (!method) {
        ++log.skipped;
        continue;
      }
      t.request.method = *method;
      t.request.uri = req.at("url").get<std::string>();
      check_uri(t.request.uri, where);
      t.request.headers = har_headers(req.value("headers", json()), where);
      if (auto pd = req.find("postData"); pd != req.end() && pd->is_object()) {
        if (pd->contains("text") && (*pd)["text"].is_string()) t.request.body = (*pd)["text"].get<std::string>();
        if (pd->contains("mimeType") && (*pd)["mimeType"].is_string()) {
          t.request.body_content_type = (*pd)["mimeType"].get<std::string>();
        }
      }
      if (!t.request.body_content_type) {
        if (auto ct = t.request.headers.find("Content-Type")) t.request.body_content_type = std::string(*ct);
      }
      if (!resp.contains("status") || !resp["status"].is_number_integer()) {
        throw parse_error(where + ": missing integer response.status");
      }
      t.response.status = resp["status"].get<int>();
      if (t.response.status < 100 || t.response.status > 599) throw parse_error(where + ": status out of range");
      t.response.headers = har_headers(resp.value("headers", json()), where);
      if (auto c = resp.find("content"); c != resp.end() && c->is_object()) {
        if (c->contains("text") && (*c)["text"].is_string()) {
          auto text = (*c)["text"].get<std::string>();
          if (c->value("encoding", "") == "base64") {
            auto decoded = base64_decode(text);
            if (!decoded) throw parse_error(where + ": content.text is not valid base64");
            text = std::move(*decoded);
          }
          if (!text.empty()) t.response.body = std::move(text);
        }
      }
      log.transactions.push_back(std::move(t));
    } catch (const json::exception& ex) {
      throw parse_error(where + ": " + ex.what());
    }
  }
  finalize(log);
  return log;
}

}  // namespace

TrafficLog load_traffic(std::istream& in, Format format, std::string source) {
  return format == Format::Har ? load_har(in, std::move(source)) : load_jsonl(in, std::move(source));
}

TrafficLog load_traffic_file(const std::string& path, std::optional<Format> format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open '" + path + "'");
  if (!format) {
    const bool har = path.size() >= 4 && iequals(std::string_view(path).substr(path.size() - 4), ".har");
    format = har ? Format::Har : Format::Jsonl;
  }
  return load_traffic(in, *format, path);
}

std::string to_jsonl_line(const HttpTransaction& t) {
  json j = json::object();
  j["id"] = t.id;
  j["sequence"] = t.sequence;
  if (t.timestamp) j["timestamp"] = *t.timestamp;
  json req = json::object();
  req["method"] = std::string(to_string(t.request.method));
  req["uri"] = t.request.uri;
  req["headers"] = headers_to_pairs(t.request.headers);
  body_to(req, t.request.body);
  json resp = json::object();
  resp["status"] = t.response.status;
  resp["headers"] = headers_to_pairs(t.response.headers);
  body_to(resp, t.response.body);
  j["request"] = std::move(req);
  j["response"] = std::move(resp);
  return j.dump();
}

void write_jsonl(std::ostream& out, const TrafficLog& log) {
  for (const auto& t : log.transactions) out << to_jsonl_line(t) << '\n';
}

// ---------------------------------------------------------------------------
// Resource keys

namespace {

const std::regex& cached_regex(const std::string& pattern) {
  static std::mutex mu;
  static std::unordered_map<std::string, std::unique_ptr<std::regex>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[pattern];
  if (!slot) {
    try {
      slot = std::make_unique<std::regex>(pattern, std::regex::ECMAScript | std::regex::optimize);
    } catch (const std::regex_error& e) {
      cache.erase(pattern);
      throw usage_error("invalid identifier pattern '" + pattern + "': " + e.what());
    }
  }
  return *slot;
}

std::optional<std::string> id_from_fields(const HttpRequest& request, const Uri& uri,
                                          const ResourceKeyConfig& config) {
  std::optional<json> body;
  for (const auto& field : config.id_fields) {
    if (uri.query) {
      for (const auto& [k, v] : parse_query(*uri.query)) {
        if (k == field && is_identifier_token(v, config)) return v;
      }
    }
    if (request.body) {
      if (!body) body = json::parse(*request.body, nullptr, false);
      if (body->is_object()) {
        if (auto it = body->find(field); it != body->end()) {
          std::string v = it->is_string() ? it->get<std::string>() : it->dump();
          if (is_identifier_token(v, config)) return v;
        }
      }
    }
  }
  return std::nullopt;
}

}  // namespace

bool is_identifier_token(std::string_view token, const ResourceKeyConfig& config) {
  return std::regex_match(token.begin(), token.end(), cached_regex(config.id_pattern));
}

ResourceKey resource_key(const HttpRequest& request, const ResourceKeyConfig& config) {
  const Uri uri = Uri::parse(request.uri);
  std::vector<std::string> tokens;
  for (auto& tok : split_nonempty(uri.path, '/')) {
    const bool verb = std::any_of(config.verb_tokens.begin(), config.verb_tokens.end(),
                                  [&](const std::string& v) { return iequals(v, tok); });
    if (!verb) tokens.push_back(std::move(tok));
  }
  if (!config.id_fields.empty() && (tokens.empty() || !is_identifier_token(tokens.back(), config))) {
    if (auto id = id_from_fields(request, uri, config)) tokens.push_back(std::move(*id));
  }
  std::string key = uri.host;
  for (const auto& t : tokens) {
    key += '/';
    key += t;
  }
  return ResourceKey{std::move(key)};
}

ResourceGroups group_by_resource(const TrafficLog& log, const ResourceKeyConfig& config) {
  ResourceGroups groups;
  for (std::size_t i = 0; i < log.transactions.size(); ++i) {
    groups[resource_key(log.transactions[i].request, config)].push_back(i);
  }
  return groups;
}

}  // namespace mockskel::traffic
