#include <algorithm>
#include <charconv>
#include <iomanip>
#include <map>
#include <regex>
#include <sstream>

#include "mockskel/error.hpp"
#include "mockskel/skeleton.hpp"
#include "mockskel/util.hpp"

namespace mockskel::skeleton {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(Origin o) { return o == Origin::Learned ? "learned" : "edited"; }

std::vector<std::string> MockSkeleton::model_attributes() const {
  std::vector<std::string> out;
  for (const auto& in : inputs) {
    if (!in.removed) out.push_back(in.name);
  }
  return out;
}

const PredictedTarget* MockSkeleton::find_target(std::string_view name) const {
  for (const auto& t : targets) {
    if (t.target == name) return &t;
  }
  return nullptr;
}

const UnpredictedTarget* MockSkeleton::find_unpredicted(std::string_view name) const {
  for (const auto& u : unpredicted) {
    if (u.attribute == name) return &u;
  }
  return nullptr;
}

std::string schema_digest(const std::vector<InputAttribute>& inputs, const std::vector<std::string>& targets) {
  std::vector<std::string> sorted = targets;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return features::attribute_order(a, b); });
  std::string text;
  for (const auto& in : inputs) text += "input " + in.name + '\n';
  for (const auto& t : sorted) text += "target " + t + '\n';
  return hex64(fnv1a64(text));
}

std::string path_shape(const traffic::HttpRequest& request, const traffic::ResourceKeyConfig& config) {
  const auto uri = traffic::Uri::parse(request.uri);
  std::string shape(traffic::to_string(request.method));
  shape += ' ';
  const auto tokens = split_nonempty(uri.path, '/');
  if (tokens.empty()) shape += '/';
  for (const auto& tok : tokens) {
    shape += '/';
    shape += traffic::is_identifier_token(tok, config) ? std::string("{id}") : tok;
  }
  return shape;
}

std::set<std::string> path_shapes(const traffic::TrafficLog& log, const traffic::ResourceKeyConfig& config) {
  std::set<std::string> out;
  for (const auto& t : log.transactions) out.insert(path_shape(t.request, config));
  return out;
}

std::optional<json> decode_body_value(std::string_view nominal) {
  if (nominal == features::kNoExist) return std::nullopt;
  if (nominal == features::kNull) return json(nullptr);
  if (nominal.starts_with(features::kLiteralPrefix)) return json(features::unescape_literal(nominal));
  if (nominal == "true") return json(true);
  if (nominal == "false") return json(false);
  static const std::regex number(R"(-?(0|[1-9][0-9]*)(\.[0-9]+)?([eE][+-]?[0-9]+)?)");
  if (std::regex_match(nominal.begin(), nominal.end(), number)) {
    auto j = json::parse(nominal, nullptr, false);
    if (!j.is_discarded()) return j;
  }
  return json(std::string(nominal));
}

namespace {

std::string model_digest(const learn::Model& m) { return hex64(fnv1a64(learn::render(m))); }

std::string default_text(const UnpredictedTarget& u) {
  if (u.absent) return "absent";
  if (!u.default_value) return json(std::string(kPlaceholder)).dump();
  return u.default_value->dump(-1, ' ', false, json::error_handler_t::replace);
}

std::string unpredicted_hash(const std::string& name, const std::string& reason, const std::string& deflt) {
  return hex64(fnv1a64(name + '\n' + reason + '\n' + deflt));
}

// Unary targets keep their single observed value as the default.
UnpredictedTarget unpredicted_from(const prep::Removal& r) {
  UnpredictedTarget u;
  u.attribute = r.attribute;
  u.reason = std::string(prep::to_string(r.reason));
  if (r.reason != prep::RemovalReason::Unary) return u;
  if (r.attribute == "statusCode") {
    auto j = json::parse(r.constant, nullptr, false);
    if (!j.is_discarded() && j.is_number_integer()) u.default_value = j;
  } else if (r.attribute.starts_with("responseheader:")) {
    if (r.constant == features::kNoExist) {
      u.absent = true;
    } else {
      u.default_value = json(features::unescape_literal(r.constant));
    }
  } else {
    auto v = decode_body_value(r.constant);
    if (v) {
      u.default_value = std::move(*v);
    } else {
      u.absent = true;
    }
  }
  return u;
}

std::string format_metric(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(6) << v;
  return s.str();
}

}  // namespace

MockSkeleton assemble_skeleton(const features::InstanceTable& pruned, const prep::RemovalReport& removals,
                               std::vector<PredictedTarget> targets, const EmitOptions& options) {
  MockSkeleton s;
  s.service = options.service;
  s.seed = options.seed;
  s.config = options.config;
  s.shapes = options.shapes;
  s.response_array_paths = pruned.response_array_paths;
  s.path_depth = pruned.path_depth;

  for (const auto& a : pruned.schema) {
    if (a.role == features::Role::Input) s.inputs.push_back({a.name, std::nullopt});
  }
  for (const auto& r : removals) {
    if (r.role == features::Role::Input) s.inputs.push_back({r.attribute, std::string(prep::to_string(r.reason))});
  }
  std::stable_sort(s.inputs.begin(), s.inputs.end(),
                   [](const auto& a, const auto& b) { return features::attribute_order(a.name, b.name); });

  const auto attrs = s.model_attributes();
  std::vector<std::string> all_targets;
  for (auto& t : targets) {
    if (learn::attributes_of(t.model) != attrs) {
      throw usage_error("schema mismatch: model for '" + t.target + "' was trained on different inputs");
    }
    if (learn::target_of(t.model) != t.target) {
      throw usage_error("model for '" + t.target + "' predicts '" + learn::target_of(t.model) + "'");
    }
    const auto idx = pruned.index_of(t.target);
    if (!idx || pruned.schema[*idx].role != features::Role::Target) {
      throw usage_error("schema mismatch: '" + t.target + "' is not a target of the table");
    }
    if (t.classes.empty()) t.classes = pruned.schema[*idx].domain;
  }
  for (const auto& a : pruned.schema) {
    if (a.role != features::Role::Target) continue;
    all_targets.push_back(a.name);
    const auto it = std::find_if(targets.begin(), targets.end(), [&](const auto& t) { return t.target == a.name; });
    if (it != targets.end()) {
      s.targets.push_back(std::move(*it));
    } else {
      s.unpredicted.push_back({a.name, "not-trained", std::nullopt, false, Origin::Learned});
    }
  }
  if (s.targets.size() != targets.size()) throw usage_error("duplicate target model");
  for (const auto& r : removals) {
    if (r.role != features::Role::Target) continue;
    all_targets.push_back(r.attribute);
    s.unpredicted.push_back(unpredicted_from(r));
  }
  std::stable_sort(s.unpredicted.begin(), s.unpredicted.end(), [](const auto& a, const auto& b) {
    return features::attribute_order(a.attribute, b.attribute);
  });
  s.schema_digest = schema_digest(s.inputs, all_targets);
  return s;
}

std::string emit_skeleton(const MockSkeleton& s) {
  std::ostringstream out;
  out << "# Mock skeleton. Model bodies, rules and defaults may be edited by hand.\n";
  out << "service: " << s.service << '\n';
  out << "digest: " << s.schema_digest << '\n';
  out << "seed: " << s.seed << '\n';
  ordered_json cfg;
  cfg["features"] = features::to_json(s.config);
  cfg["responseArrayPaths"] = s.response_array_paths;
  cfg["pathDepth"] = s.path_depth;
  out << "config: " << cfg.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';

  out << "\ninputs:\n";
  for (const auto& in : s.inputs) {
    out << "  " << learn::quote_token(in.name, true);
    if (in.removed) out << "  removed=" << *in.removed;
    out << '\n';
  }
  out << "\nshapes:\n";
  for (const auto& shape : s.shapes) out << "  " << shape << '\n';

  for (const auto& t : s.targets) {
    const bool tree = std::holds_alternative<learn::DecisionTree>(t.model);
    out << "\ntarget " << learn::quote_token(t.target, true) << (tree ? " tree:" : " rules:") << '\n';
    if (t.origin == Origin::Learned) {
      if (t.metrics) {
        const auto& m = *t.metrics;
        out << "# metrics: learner=" << learn::to_string(m.learner) << " instances=" << m.instances
            << " accuracy=" << format_metric(m.accuracy) << " precision=" << format_metric(m.precision)
            << " recall=" << format_metric(m.recall) << " size=" << format_metric(m.model_size) << '\n';
      }
      out << "# model-digest: " << model_digest(t.model) << '\n';
    } else {
      out << "# origin: edited\n";
    }
    out << "# classes: " << json(t.classes).dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
    std::istringstream body(learn::render(t.model));
    for (std::string line; std::getline(body, line);) out << "  " << line << '\n';
  }

  out << "\nunpredicted:\n";
  for (const auto& u : s.unpredicted) {
    const auto d = default_text(u);
    out << "  " << learn::quote_token(u.attribute, true) << "  reason=" << u.reason << "  default=" << d;
    if (u.origin == Origin::Learned) out << "  # h=" << unpredicted_hash(u.attribute, u.reason, d);
    out << '\n';
  }
  return out.str();
}

std::string emit_skeleton(const features::InstanceTable& pruned, const prep::RemovalReport& removals,
                          std::vector<PredictedTarget> targets, const EmitOptions& options) {
  return emit_skeleton(assemble_skeleton(pruned, removals, std::move(targets), options));
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

struct SrcLine {
  std::string_view text;
  std::size_t number;
  std::size_t offset;  // into the whole text
};

[[noreturn]] void fail(std::size_t line, const std::string& what) {
  throw parse_error("line " + std::to_string(line) + ": " + what);
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool indented(std::string_view s) { return !s.empty() && (s[0] == ' ' || s[0] == '\t'); }
bool blank_or_comment(std::string_view s) {
  const auto t = trim(s);
  return t.empty() || t[0] == '#';
}

// Reads a token at the start of `s`, bare or JSON-quoted; returns it and the
// remainder.
std::pair<std::string, std::string_view> take_token(std::string_view s, std::size_t line) {
  s = trim(s);
  if (s.empty()) fail(line, "expected a name");
  if (s[0] == '"') {
    std::size_t end = 1;
    while (end < s.size() && s[end] != '"') end += s[end] == '\\' ? 2 : 1;
    if (end >= s.size()) fail(line, "unterminated quoted name");
    auto j = json::parse(s.substr(0, end + 1), nullptr, false);
    if (j.is_discarded() || !j.is_string()) fail(line, "bad quoted name");
    return {j.get<std::string>(), s.substr(end + 1)};
  }
  std::size_t end = 0;
  while (end < s.size() && s[end] != ' ' && s[end] != '\t') ++end;
  return {std::string(s.substr(0, end)), s.substr(end)};
}

std::map<std::string, std::string> key_values(std::string_view s) {
  std::map<std::string, std::string> out;
  std::istringstream in{std::string(s)};
  for (std::string kv; in >> kv;) {
    const auto eq = kv.find('=');
    if (eq != std::string::npos) out[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return out;
}

double to_double(const std::string& s, std::size_t line) {
  double v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) fail(line, "bad number '" + s + "'");
  return v;
}

struct Section {
  std::string target;
  bool tree = true;
  std::size_t header_line = 0;
  std::size_t begin = 0, end = 0;  // byte range of the body
  std::optional<std::string> digest;
  std::optional<eval::TargetMetrics> metrics;
  std::optional<std::vector<std::string>> classes;
};

void collect_classes(const learn::TreeNode& n, std::set<std::string>& out) {
  if (n.is_leaf()) {
    out.insert(n.klass);
    return;
  }
  for (const auto& b : n.branches) collect_classes(b.child, out);
}

std::set<std::string> model_classes(const learn::Model& m) {
  std::set<std::string> out;
  if (const auto* t = std::get_if<learn::DecisionTree>(&m)) {
    collect_classes(t->root, out);
  } else {
    const auto& l = std::get<learn::RuleList>(m);
    for (const auto& r : l.rules) out.insert(r.klass);
    out.insert(l.default_class);
  }
  return out;
}

}  // namespace

MockSkeleton parse_skeleton(std::string_view text) {
  std::vector<SrcLine> lines;
  {
    std::size_t start = 0, no = 1;
    while (start < text.size()) {
      auto end = text.find('\n', start);
      if (end == std::string_view::npos) end = text.size();
      auto line = text.substr(start, end - start);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      lines.push_back({line, no++, start});
      start = end + 1;
    }
  }

  MockSkeleton s;
  std::optional<std::string> header_digest;
  bool have_service = false, have_inputs = false;
  std::vector<Section> sections;
  enum class Block { None, Inputs, Shapes, Target, Unpredicted } block = Block::None;

  for (const auto& l : lines) {
    if (indented(l.text) || blank_or_comment(l.text)) {
      if (block == Block::Target) {
        auto& sec = sections.back();
        const auto t = trim(l.text);
        if (t.starts_with("# metrics:")) {
          const auto kv = key_values(t.substr(10));
          eval::TargetMetrics m;
          m.target = sec.target;
          if (kv.contains("learner")) {
            const auto learner = learn::parse_learner(kv.at("learner"));
            if (!learner) fail(l.number, "unknown learner '" + kv.at("learner") + "'");
            m.learner = *learner;
          }
          if (kv.contains("instances")) m.instances = std::size_t(to_double(kv.at("instances"), l.number));
          if (kv.contains("accuracy")) m.accuracy = to_double(kv.at("accuracy"), l.number);
          if (kv.contains("precision")) m.precision = to_double(kv.at("precision"), l.number);
          if (kv.contains("recall")) m.recall = to_double(kv.at("recall"), l.number);
          if (kv.contains("size")) m.model_size = to_double(kv.at("size"), l.number);
          sec.metrics = std::move(m);
        } else if (t.starts_with("# model-digest:")) {
          sec.digest = std::string(trim(t.substr(15)));
        } else if (t.starts_with("# classes:")) {
          auto j = json::parse(trim(t.substr(10)), nullptr, false);
          if (j.is_discarded() || !j.is_array()) fail(l.number, "classes must be a JSON array");
          std::vector<std::string> cls;
          for (const auto& c : j) {
            if (!c.is_string()) fail(l.number, "classes must be strings");
            cls.push_back(c.get<std::string>());
          }
          sec.classes = std::move(cls);
        }
        sec.end = l.offset + l.text.size();
        continue;
      }
      if (blank_or_comment(l.text)) continue;
      const auto t = trim(l.text);
      switch (block) {
        case Block::Inputs: {
          auto [name, rest] = take_token(t, l.number);
          InputAttribute in{name, std::nullopt};
          rest = trim(rest);
          if (!rest.empty()) {
            if (!rest.starts_with("removed=")) fail(l.number, "expected 'removed=<reason>'");
            in.removed = std::string(trim(rest.substr(8)));
          }
          if (features::role_of(in.name) != features::Role::Input) fail(l.number, "'" + in.name + "' is not an input");
          if (std::any_of(s.inputs.begin(), s.inputs.end(), [&](const auto& o) { return o.name == in.name; })) {
            fail(l.number, "duplicate input '" + in.name + "'");
          }
          s.inputs.push_back(std::move(in));
          break;
        }
        case Block::Shapes: s.shapes.insert(std::string(t)); break;
        case Block::Unpredicted: {
          static const std::regex hash_tail(R"(\s+#\s*h=([0-9a-f]{16})\s*$)");
          std::string body(t);
          std::optional<std::string> hash;
          std::smatch m;
          if (std::regex_search(body, m, hash_tail)) {
            hash = m[1].str();
            body = body.substr(0, std::size_t(m.position(0)));
          }
          auto [name, rest] = take_token(body, l.number);
          rest = trim(rest);
          if (!rest.starts_with("reason=")) fail(l.number, "expected 'reason=<reason>'");
          const auto sp = rest.find_first_of(" \t");
          UnpredictedTarget u;
          u.attribute = name;
          u.reason = std::string(rest.substr(7, sp == std::string_view::npos ? std::string_view::npos : sp - 7));
          rest = sp == std::string_view::npos ? std::string_view{} : trim(rest.substr(sp));
          if (!rest.starts_with("default=")) fail(l.number, "expected 'default=<json literal>'");
          const auto d = trim(rest.substr(8));
          if (d == "absent") {
            u.absent = true;
          } else {
            auto j = json::parse(d, nullptr, false);
            if (j.is_discarded()) fail(l.number, "default is not a JSON literal: " + std::string(d));
            if (!(j.is_string() && j.get<std::string>() == kPlaceholder)) u.default_value = std::move(j);
          }
          if (features::role_of(u.attribute) != features::Role::Target) {
            fail(l.number, "'" + u.attribute + "' is not a response attribute");
          }
          if (s.find_unpredicted(u.attribute)) fail(l.number, "duplicate entry '" + u.attribute + "'");
          u.origin = hash && *hash == unpredicted_hash(u.attribute, u.reason, default_text(u)) ? Origin::Learned
                                                                                              : Origin::Edited;
          s.unpredicted.push_back(std::move(u));
          break;
        }
        default: fail(l.number, "unexpected indented line");
      }
      continue;
    }

    const auto t = trim(l.text);
    if (t.starts_with("service:")) {
      s.service = std::string(trim(t.substr(8)));
      have_service = true;
      block = Block::None;
    } else if (t.starts_with("digest:")) {
      header_digest = std::string(trim(t.substr(7)));
      block = Block::None;
    } else if (t.starts_with("seed:")) {
      s.seed = std::uint64_t(to_double(std::string(trim(t.substr(5))), l.number));
      block = Block::None;
    } else if (t.starts_with("config:")) {
      auto j = json::parse(trim(t.substr(7)), nullptr, false);
      if (j.is_discarded() || !j.is_object()) fail(l.number, "config must be a JSON object");
      try {
        if (j.contains("features")) s.config = features::feature_config_from_json(j["features"]);
        if (j.contains("responseArrayPaths")) {
          s.response_array_paths = j["responseArrayPaths"].get<std::set<std::string>>();
        }
        if (j.contains("pathDepth")) s.path_depth = j["pathDepth"].get<std::size_t>();
      } catch (const Error& e) {
        fail(l.number, e.what());
      } catch (const json::exception& e) {
        fail(l.number, std::string("bad config: ") + e.what());
      }
      block = Block::None;
    } else if (t == "inputs:") {
      block = Block::Inputs;
      have_inputs = true;
    } else if (t == "shapes:") {
      block = Block::Shapes;
    } else if (t == "unpredicted:") {
      block = Block::Unpredicted;
    } else if (t.starts_with("target ")) {
      if (!have_inputs) fail(l.number, "inputs: must precede target sections");
      if (!t.ends_with(":")) fail(l.number, "expected 'target <name> tree:' or 'target <name> rules:'");
      auto [name, rest] = take_token(t.substr(7, t.size() - 8), l.number);
      rest = trim(rest);
      Section sec;
      sec.target = name;
      sec.header_line = l.number;
      if (rest == "tree") {
        sec.tree = true;
      } else if (rest == "rules") {
        sec.tree = false;
      } else {
        fail(l.number, "model kind must be 'tree' or 'rules'");
      }
      if (features::role_of(name) != features::Role::Target) fail(l.number, "'" + name + "' is not a response attribute");
      if (std::any_of(sections.begin(), sections.end(), [&](const auto& o) { return o.target == name; })) {
        fail(l.number, "duplicate target '" + name + "'");
      }
      sec.begin = sec.end = l.offset + l.text.size();
      sections.push_back(std::move(sec));
      block = Block::Target;
    } else {
      fail(l.number, "unrecognised line");
    }
  }

  if (!have_service) throw parse_error("line 1: missing 'service:'");
  if (!have_inputs) throw parse_error("line " + std::to_string(lines.size()) + ": missing 'inputs:'");

  const auto attrs = s.model_attributes();
  for (const auto& sec : sections) {
    if (s.find_unpredicted(sec.target)) {
      fail(sec.header_line, "'" + sec.target + "' is both predicted and unpredicted");
    }
    const auto body = text.substr(sec.begin, sec.end - sec.begin);
    PredictedTarget p;
    p.target = sec.target;
    if (sec.tree) {
      p.model = learn::parse_tree(body, attrs, sec.target, sec.header_line);
    } else {
      p.model = learn::parse_rules(body, attrs, sec.target, sec.header_line);
    }
    const bool learned = sec.digest && *sec.digest == model_digest(p.model);
    p.origin = learned ? Origin::Learned : Origin::Edited;
    if (learned) p.metrics = sec.metrics;
    if (sec.classes) p.classes = *sec.classes;
    for (const auto& c : model_classes(p.model)) {
      if (sec.classes && std::find(sec.classes->begin(), sec.classes->end(), c) == sec.classes->end()) {
        s.warnings.push_back("target '" + sec.target + "': value '" + c + "' was not seen in training");
      }
    }
    s.targets.push_back(std::move(p));
  }

  std::vector<std::string> all_targets;
  for (const auto& t : s.targets) all_targets.push_back(t.target);
  for (const auto& u : s.unpredicted) all_targets.push_back(u.attribute);
  s.schema_digest = schema_digest(s.inputs, all_targets);
  if (header_digest && *header_digest != s.schema_digest) {
    s.warnings.push_back("schema digest " + *header_digest + " does not match the listed attributes (" +
                         s.schema_digest + ")");
  }
  return s;
}

}  // namespace mockskel::skeleton
