#include <algorithm>
#include <charconv>

#include <httplib.h>

#include "mockskel/error.hpp"
#include "mockskel/serve.hpp"
#include "mockskel/util.hpp"

namespace mockskel::serve {

using nlohmann::json;
using nlohmann::ordered_json;

std::shared_ptr<ServeState::Slot> ServeState::slot(const traffic::ResourceKey& key) {
  std::lock_guard lock(mutex_);
  auto& s = slots_[key];
  if (!s) s = std::make_shared<Slot>();
  return s;
}

std::size_t ServeState::history_length(const traffic::ResourceKey& key) const {
  std::shared_ptr<Slot> s;
  {
    std::lock_guard lock(mutex_);
    auto it = slots_.find(key);
    if (it == slots_.end()) return 0;
    s = it->second;
  }
  std::lock_guard lock(s->mutex);
  return s->history.size();
}

std::size_t ServeState::resources() const {
  std::lock_guard lock(mutex_);
  return slots_.size();
}

void ServeState::reset() {
  std::lock_guard lock(mutex_);
  slots_.clear();
  ++resets_;
}

void ServeState::count_request(bool unmatched) {
  ++requests_;
  if (unmatched) ++unmatched_;
}

void ServeState::count_rejected() { ++rejected_; }

Counters ServeState::counters() const { return {requests_.load(), unmatched_.load(), rejected_.load(), resets_.load()}; }

// ---------------------------------------------------------------------------

features::FeatureMap request_features(const skeleton::MockSkeleton& sk, const traffic::HttpRequest& request,
                                      std::span<const features::HistoryEntry> history, bool* unmatched) {
  auto raw = features::extract_request_features(request, history, sk.config);
  features::FeatureMap out;
  bool extra = false;
  for (auto& [name, value] : raw) {
    std::string resolved = name;
    auto known = std::find_if(sk.inputs.begin(), sk.inputs.end(), [&](const auto& in) { return in.name == name; });
    if (known == sk.inputs.end() && name.starts_with("requestheader:")) {
      known = std::find_if(sk.inputs.begin(), sk.inputs.end(), [&](const auto& in) { return iequals(in.name, name); });
    }
    if (known == sk.inputs.end()) {
      extra = true;
      continue;
    }
    out[known->name] = std::move(value);
  }
  if (unmatched) *unmatched = extra;
  return out;
}

std::optional<ordered_json> unflatten(const std::vector<std::pair<std::string, json>>& values,
                                      const std::set<std::string>& array_paths) {
  static constexpr std::string_view prefix = "responsejson:";
  ordered_json root = ordered_json::object();
  bool any = false;
  for (const auto& [name, value] : values) {
    if (!name.starts_with(prefix)) continue;
    const auto segments = split_nonempty(std::string_view(name).substr(prefix.size()), '.');
    if (segments.empty()) continue;
    ordered_json* node = &root;
    std::string path(prefix.substr(0, prefix.size() - 1));
    bool ok = true;
    for (std::size_t i = 0; i < segments.size() && ok; ++i) {
      path += (i == 0 ? ":" : ".") + segments[i];
      const bool array = array_paths.contains(path);
      const bool last = i + 1 == segments.size();
      if (!node->is_object()) {
        ok = false;
        break;
      }
      auto& slot = (*node)[segments[i]];
      if (last) {
        if (array) {
          slot = ordered_json::array({ordered_json(value)});
        } else {
          slot = ordered_json(value);
        }
        any = true;
      } else if (array) {
        if (!slot.is_array() || slot.empty() || !slot[0].is_object()) slot = ordered_json::array({ordered_json::object()});
        node = &slot[0];
      } else {
        if (!slot.is_object()) slot = ordered_json::object();
        node = &slot;
      }
    }
  }
  if (!any) return std::nullopt;
  return root;
}

namespace {

bool framing_header(std::string_view name) {
  return iequals(name, "Content-Length") || iequals(name, "Transfer-Encoding") || iequals(name, "Connection") ||
         iequals(name, "Keep-Alive");
}

std::optional<int> parse_status(std::string_view v) {
  int s = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), s);
  if (ec != std::errc() || p != v.data() + v.size() || s < 100 || s > 599) return std::nullopt;
  return s;
}

std::string header_text(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

}  // namespace

SynthesizedResponse synthesize_response(const skeleton::MockSkeleton& sk, const traffic::HttpRequest& request,
                                        ServeState& state) {
  const auto key = traffic::resource_key(request, sk.config.resource);
  const auto slot = state.slot(key);
  std::lock_guard lock(slot->mutex);

  bool unmatched = false;
  const auto fm = request_features(sk, request, slot->history, &unmatched);
  state.count_request(unmatched);

  const auto attrs = sk.model_attributes();
  std::vector<std::string> values;
  values.reserve(attrs.size());
  for (const auto& a : attrs) {
    auto it = fm.find(a);
    values.push_back(it != fm.end() ? it->second : std::string(features::missing_value_for(a)));
  }

  SynthesizedResponse out;
  std::optional<int> status;
  std::vector<std::pair<std::string, std::string>> headers;
  std::vector<std::pair<std::string, json>> body;

  for (const auto& t : sk.targets) {
    const auto& v = learn::classify(t.model, values);
    if (t.target == "statusCode") {
      status = parse_status(v);
    } else if (t.target.starts_with("responseheader:")) {
      if (v != features::kNoExist) headers.emplace_back(t.target, features::unescape_literal(v));
    } else if (auto decoded = skeleton::decode_body_value(v)) {
      body.emplace_back(t.target, std::move(*decoded));
    }
  }
  for (const auto& u : sk.unpredicted) {
    if (!u.default_value) continue;
    if (u.attribute == "statusCode") {
      if (!status && u.default_value->is_number_integer()) status = parse_status(std::to_string(u.default_value->get<int>()));
    } else if (u.attribute.starts_with("responseheader:")) {
      headers.emplace_back(u.attribute, header_text(*u.default_value));
    } else {
      body.emplace_back(u.attribute, *u.default_value);
    }
  }
  auto by_name = [](const auto& a, const auto& b) { return features::attribute_order(a.first, b.first); };
  std::stable_sort(headers.begin(), headers.end(), by_name);
  std::stable_sort(body.begin(), body.end(), by_name);

  out.status = status.value_or(200);
  constexpr std::string_view hprefix = "responseheader:";
  for (auto& [name, value] : headers) {
    const auto h = name.substr(hprefix.size());
    if (!framing_header(h)) out.headers.add(h, std::move(value));
  }
  const bool bodiless = out.status < 200 || out.status == 204 || out.status == 304;
  if (auto j = unflatten(body, sk.response_array_paths); j && !bodiless) {
    out.body = j->dump(-1, ' ', false, json::error_handler_t::replace);
    if (!out.headers.find("Content-Type")) out.headers.add("Content-Type", "application/json");
  }

  slot->history.push_back(
      {request.method, out.status, features::crud_class(request.method, traffic::Uri::parse(request.uri), sk.config)});
  return out;
}

// ---------------------------------------------------------------------------

struct MockServer::Impl {
  httplib::Server server;
  int port = 0;
};

MockServer::MockServer(skeleton::MockSkeleton skeleton, std::string skeleton_text, ServerOptions options,
                       std::ostream* log)
    : skeleton_(std::move(skeleton)),
      skeleton_text_(std::move(skeleton_text)),
      options_(std::move(options)),
      log_(log),
      impl_(std::make_unique<Impl>()) {
  auto& svr = impl_->server;

  svr.Post("/_mock/reset", [this](const httplib::Request&, httplib::Response& res) {
    reset();
    res.set_content(R"({"reset":true})", "application/json");
  });
  svr.Get("/_mock/stats", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(stats().dump(), "application/json");
  });
  svr.Get("/_mock/skeleton", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(skeleton_text_, "text/plain; charset=utf-8");
  });

  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    if (req.path.starts_with("/_mock/")) {
      res.status = 404;
      res.set_content(R"({"error":"unknown control endpoint"})", "application/json");
      return;
    }
    const auto method = traffic::parse_method(req.method);
    if (!method) {
      res.status = 405;
      return;
    }
    traffic::HttpRequest r;
    r.method = *method;
    auto host = req.get_header_value("Host");
    if (host.empty()) host = "localhost";
    r.uri = "http://" + host + req.target;
    for (const auto& [name, value] : req.headers) {
      if (name == "REMOTE_ADDR" || name == "REMOTE_PORT" || name == "LOCAL_ADDR" || name == "LOCAL_PORT") continue;
      r.headers.add(name, value);
      if (iequals(name, "Content-Type")) r.body_content_type = value;
    }
    if (!req.body.empty()) r.body = req.body;

    SynthesizedResponse out;
    try {
      out = handle(r);
    } catch (const Error& e) {
      out.status = 400;
      out.body = json({{"error", e.what()}}).dump();
      out.headers.add("Content-Type", "application/json");
    }
    res.status = out.status;
    std::string content_type = "application/json";
    for (const auto& [name, value] : out.headers.entries) {
      if (iequals(name, "Content-Type")) {
        content_type = value;
      } else {
        res.set_header(name, value);
      }
    }
    if (out.body) res.set_content(*out.body, content_type);
  };
  svr.Get(".*", handler);
  svr.Post(".*", handler);
  svr.Put(".*", handler);
  svr.Patch(".*", handler);
  svr.Delete(".*", handler);
  svr.Options(".*", handler);
}

MockServer::~MockServer() { stop(); }

SynthesizedResponse MockServer::handle(const traffic::HttpRequest& request) {
  SynthesizedResponse out;
  const auto shape = skeleton::path_shape(request, skeleton_.config.resource);
  if (options_.strict && !skeleton_.shapes.contains(shape)) {
    state_.count_request(false);
    state_.count_rejected();
    out.status = 501;
    out.body = R"({"error":"request shape not seen in training"})";
    out.headers.add("Content-Type", "application/json");
  } else {
    out = synthesize_response(skeleton_, request, state_);
  }
  if (log_) {
    const auto uri = traffic::Uri::parse(request.uri);
    std::lock_guard lock(log_mutex_);
    *log_ << traffic::to_string(request.method) << ' ' << uri.path << (uri.query ? "?" + *uri.query : std::string())
          << " -> " << out.status << '\n'
          << std::flush;
  }
  return out;
}

ordered_json MockServer::stats() const {
  const auto c = state_.counters();
  return {{"requests", c.requests},
          {"unmatched", c.unmatched},
          {"rejected", c.rejected},
          {"resets", c.resets},
          {"resources", state_.resources()}};
}

void MockServer::reset() { state_.reset(); }

int MockServer::bind() {
  auto& svr = impl_->server;
  if (options_.port == 0) {
    impl_->port = svr.bind_to_any_port(options_.host);
  } else {
    impl_->port = svr.bind_to_port(options_.host, options_.port) ? options_.port : -1;
  }
  if (impl_->port <= 0) {
    throw io_error("cannot bind " + options_.host + ":" + std::to_string(options_.port));
  }
  return impl_->port;
}

void MockServer::listen() { impl_->server.listen_after_bind(); }

void MockServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace mockskel::serve
