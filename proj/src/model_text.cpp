#include <algorithm>
#include <charconv>
#include <sstream>

#include <json.hpp>

#include "mockskel/error.hpp"
#include "mockskel/learners.hpp"

namespace mockskel::learn {

namespace {

bool is_special(char c, bool attribute) {
  switch (c) {
    case ' ': case '\t': case '"': case '(': case ')': case '=': return true;
    case ':': return !attribute;
    default: return static_cast<unsigned char>(c) < 0x20;
  }
}

}  // namespace

std::string quote_token(std::string_view token, bool is_attribute) {
  const bool bare = !token.empty() && token[0] != '|' &&
                    std::none_of(token.begin(), token.end(), [&](char c) { return is_special(c, is_attribute); });
  if (bare) return std::string(token);
  return nlohmann::json(std::string(token)).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

namespace {

void render_counts(std::ostringstream& out, std::size_t n, std::size_t e) { out << " (" << n << '/' << e << ')'; }

void render_node(const TreeNode& node, const std::vector<std::string>& attrs, std::size_t depth,
                 std::ostringstream& out) {
  for (const auto& b : node.branches) {
    for (std::size_t i = 0; i < depth; ++i) out << "|   ";
    out << quote_token(attrs[*node.attribute], true) << " = " << quote_token(b.value, false);
    if (b.child.is_leaf()) {
      out << ": " << quote_token(b.child.klass, false);
      render_counts(out, b.child.count, b.child.errors);
      out << '\n';
    } else {
      out << '\n';
      render_node(b.child, attrs, depth + 1, out);
    }
  }
}

}  // namespace

std::string render(const Model& model) {
  std::ostringstream out;
  if (const auto* tree = std::get_if<DecisionTree>(&model)) {
    if (tree->root.is_leaf()) {
      out << ": " << quote_token(tree->root.klass, false);
      render_counts(out, tree->root.count, tree->root.errors);
      out << '\n';
    } else {
      render_node(tree->root, tree->attributes, 0, out);
    }
    return out.str();
  }
  const auto& list = std::get<RuleList>(model);
  const auto target = quote_token(list.target, true);
  for (const auto& r : list.rules) {
    for (std::size_t i = 0; i < r.conditions.size(); ++i) {
      if (i) out << " and ";
      out << '(' << quote_token(list.attributes[r.conditions[i].attribute], true) << " = "
          << quote_token(r.conditions[i].value, false) << ')';
    }
    out << " => " << target << '=' << quote_token(r.klass, false);
    render_counts(out, r.count, r.errors);
    out << '\n';
  }
  out << "=> " << target << '=' << quote_token(list.default_class, false);
  render_counts(out, list.default_count, list.default_errors);
  out << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

class LineScanner {
 public:
  LineScanner(std::string_view line, std::size_t line_no) : s_(line), line_no_(line_no) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw parse_error("line " + std::to_string(line_no_) + ": " + what);
  }

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }
  bool at_end() {
    skip_ws();
    return pos_ >= s_.size();
  }
  bool peek(std::string_view lit) {
    skip_ws();
    return s_.substr(pos_, lit.size()) == lit;
  }
  bool accept(std::string_view lit) {
    if (!peek(lit)) return false;
    pos_ += lit.size();
    return true;
  }
  void expect(std::string_view lit) {
    if (!accept(lit)) fail("expected '" + std::string(lit) + "'");
  }

  std::string token(bool attribute) {
    skip_ws();
    if (pos_ >= s_.size()) fail("unexpected end of line");
    if (s_[pos_] == '"') {
      std::size_t end = pos_ + 1;
      while (end < s_.size() && s_[end] != '"') end += s_[end] == '\\' ? 2 : 1;
      if (end >= s_.size()) fail("unterminated quoted token");
      const auto text = s_.substr(pos_, end + 1 - pos_);
      pos_ = end + 1;
      try {
        return nlohmann::json::parse(text).get<std::string>();
      } catch (const nlohmann::json::exception&) {
        fail("bad quoted token " + std::string(text));
      }
    }
    const std::size_t start = pos_;
    while (pos_ < s_.size() && !is_special(s_[pos_], attribute)) ++pos_;
    if (pos_ == start) fail("expected a token");
    return std::string(s_.substr(start, pos_ - start));
  }

  // Optional "(N/E)" or "(N)".
  std::pair<std::size_t, std::size_t> counts() {
    if (!accept("(")) return {0, 0};
    const auto n = number();
    std::size_t e = 0;
    if (accept("/")) e = number();
    expect(")");
    return {n, e};
  }

  std::size_t number() {
    skip_ws();
    double v = 0;
    const char* begin = s_.data() + pos_;
    const auto [ptr, ec] = std::from_chars(begin, s_.data() + s_.size(), v);
    if (ec != std::errc() || v < 0) fail("expected a count");
    pos_ += std::size_t(ptr - begin);
    return static_cast<std::size_t>(v + 0.5);
  }

  std::size_t line_no() const { return line_no_; }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
  std::size_t line_no_;
};

struct Line {
  std::string_view text;
  std::size_t number;
};

std::vector<Line> model_lines(std::string_view text, std::size_t first_line) {
  std::vector<Line> out;
  std::size_t no = first_line;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto first = line.find_first_not_of(" \t");
    if (first != std::string_view::npos && line[first] != '#') out.push_back({line.substr(first), no});
    ++no;
    start = end + 1;
  }
  return out;
}

std::size_t resolve(const std::vector<std::string>& attrs, const std::string& name, const LineScanner& sc) {
  const auto it = std::find(attrs.begin(), attrs.end(), name);
  if (it == attrs.end()) sc.fail("unknown attribute '" + name + "'");
  return static_cast<std::size_t>(it - attrs.begin());
}

struct TreeLine {
  std::size_t depth;
  std::size_t attribute;
  std::string value;
  bool leaf;
  std::string klass;
  std::size_t count, errors;
  std::size_t number;
};

void finish_internal(TreeNode& node) {
  node.count = node.errors = 0;
  std::size_t best = 0;
  for (std::size_t i = 0; i < node.branches.size(); ++i) {
    node.count += node.branches[i].child.count;
    node.errors += node.branches[i].child.errors;
    if (node.branches[i].child.count > node.branches[best].child.count) best = i;
  }
  node.missing_branch = best;
  node.klass = node.branches[best].child.klass;
}

TreeNode build_level(const std::vector<TreeLine>& lines, std::size_t& i, std::size_t depth) {
  TreeNode node;
  node.attribute = lines[i].attribute;
  while (i < lines.size() && lines[i].depth == depth) {
    const auto& l = lines[i];
    if (l.attribute != *node.attribute) {
      throw parse_error("line " + std::to_string(l.number) + ": sibling branches must test the same attribute");
    }
    for (const auto& b : node.branches) {
      if (b.value == l.value) {
        throw parse_error("line " + std::to_string(l.number) + ": duplicate branch value '" + l.value + "'");
      }
    }
    ++i;
    TreeNode child;
    if (l.leaf) {
      child.klass = l.klass;
      child.count = l.count;
      child.errors = l.errors;
    } else {
      if (i >= lines.size() || lines[i].depth != depth + 1) {
        throw parse_error("line " + std::to_string(l.number) + ": branch has neither a class nor sub-branches");
      }
      child = build_level(lines, i, depth + 1);
    }
    node.branches.push_back({l.value, std::move(child)});
  }
  if (i < lines.size() && lines[i].depth > depth) {
    throw parse_error("line " + std::to_string(lines[i].number) + ": unexpected indentation");
  }
  finish_internal(node);
  return node;
}

}  // namespace

DecisionTree parse_tree(std::string_view text, const std::vector<std::string>& attributes, std::string_view target,
                        std::size_t first_line) {
  DecisionTree tree;
  tree.attributes = attributes;
  tree.target = std::string(target);
  const auto lines = model_lines(text, first_line);
  if (lines.empty()) throw parse_error("line " + std::to_string(first_line) + ": empty tree");

  if (lines.front().text.starts_with(":")) {
    LineScanner sc(lines.front().text, lines.front().number);
    sc.expect(":");
    tree.root.klass = sc.token(false);
    std::tie(tree.root.count, tree.root.errors) = sc.counts();
    if (!sc.at_end()) sc.fail("trailing text");
    if (lines.size() > 1) {
      throw parse_error("line " + std::to_string(lines[1].number) + ": a single-leaf tree has exactly one line");
    }
    return tree;
  }

  std::vector<TreeLine> parsed;
  for (const auto& l : lines) {
    std::size_t depth = 0;
    std::string_view rest = l.text;
    while (!rest.empty() && rest.front() == '|') {
      ++depth;
      rest.remove_prefix(1);
      while (!rest.empty() && (rest.front() == ' ' || rest.front() == '\t')) rest.remove_prefix(1);
    }
    LineScanner sc(rest, l.number);
    TreeLine tl{};
    tl.depth = depth;
    tl.number = l.number;
    tl.attribute = resolve(attributes, sc.token(true), sc);
    sc.expect("=");
    tl.value = sc.token(false);
    if (sc.accept(":")) {
      tl.leaf = true;
      tl.klass = sc.token(false);
      std::tie(tl.count, tl.errors) = sc.counts();
    }
    if (!sc.at_end()) sc.fail("trailing text");
    if (!parsed.empty() && depth > parsed.back().depth + 1) sc.fail("indentation skips a level");
    if (parsed.empty() && depth != 0) sc.fail("first branch must not be indented");
    parsed.push_back(std::move(tl));
  }
  std::size_t i = 0;
  tree.root = build_level(parsed, i, 0);
  if (i != parsed.size()) {
    throw parse_error("line " + std::to_string(parsed[i].number) + ": root branches must test one attribute");
  }
  return tree;
}

RuleList parse_rules(std::string_view text, const std::vector<std::string>& attributes, std::string_view target,
                     std::size_t first_line) {
  RuleList list;
  list.attributes = attributes;
  list.target = std::string(target);
  const auto lines = model_lines(text, first_line);
  bool have_default = false;
  for (const auto& l : lines) {
    LineScanner sc(l.text, l.number);
    if (have_default) sc.fail("rules after the default rule");
    Rule rule;
    while (sc.accept("(")) {
      Condition c;
      c.attribute = resolve(attributes, sc.token(true), sc);
      sc.expect("=");
      c.value = sc.token(false);
      sc.expect(")");
      if (std::any_of(rule.conditions.begin(), rule.conditions.end(),
                      [&](const Condition& o) { return o.attribute == c.attribute; })) {
        sc.fail("attribute tested twice in one rule");
      }
      rule.conditions.push_back(std::move(c));
      if (!sc.accept("and")) break;
    }
    sc.expect("=>");
    const auto t = sc.token(true);
    if (t != target) sc.fail("rule concludes '" + t + "', expected target '" + std::string(target) + "'");
    sc.expect("=");
    rule.klass = sc.token(false);
    std::tie(rule.count, rule.errors) = sc.counts();
    if (!sc.at_end()) sc.fail("trailing text");
    if (rule.conditions.empty()) {
      list.default_class = rule.klass;
      list.default_count = rule.count;
      list.default_errors = rule.errors;
      have_default = true;
    } else {
      list.rules.push_back(std::move(rule));
    }
  }
  if (!have_default) {
    throw parse_error("line " + std::to_string(lines.empty() ? first_line : lines.back().number) +
                      ": rule list must end with a default rule '=> target=class'");
  }
  return list;
}

}  // namespace mockskel::learn
