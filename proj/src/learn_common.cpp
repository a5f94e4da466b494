#include <algorithm>
#include <cmath>
#include <map>

#include <boost/math/special_functions/erf.hpp>

#include "mockskel/error.hpp"
#include "mockskel/learners.hpp"
#include "learn_internal.hpp"

namespace mockskel::learn {

std::string_view to_string(Learner l) {
  switch (l) {
    case Learner::C45: return "c45";
    case Learner::Ripper: return "ripper";
    case Learner::Part: return "part";
  }
  return "c45";
}

std::optional<Learner> parse_learner(std::string_view name) {
  if (name == "c45" || name == "C4.5" || name == "j48") return Learner::C45;
  if (name == "ripper" || name == "RIPPER" || name == "jrip") return Learner::Ripper;
  if (name == "part" || name == "PART") return Learner::Part;
  return std::nullopt;
}

CodedData encode(const prep::PreparedDataset& dataset) {
  CodedData d;
  const auto& schema = dataset.table.schema;
  const std::size_t target = dataset.target_index();
  std::vector<std::size_t> inputs;
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (c == target) continue;
    inputs.push_back(c);
    d.attributes.push_back(schema[c].name);
    d.domains.push_back(schema[c].domain);
  }
  d.target = schema[target].name;
  d.classes = schema[target].domain;

  std::vector<std::map<std::string_view, std::uint32_t>> index(inputs.size());
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    for (std::size_t v = 0; v < d.domains[a].size(); ++v) index[a][d.domains[a][v]] = std::uint32_t(v);
  }
  std::map<std::string_view, std::uint32_t> class_index;
  for (std::size_t v = 0; v < d.classes.size(); ++v) class_index[d.classes[v]] = std::uint32_t(v);

  d.x.reserve(dataset.table.instances.size() * inputs.size());
  for (const auto& inst : dataset.table.instances) {
    for (std::size_t a = 0; a < inputs.size(); ++a) {
      auto it = index[a].find(inst.values[inputs[a]]);
      if (it == index[a].end()) throw usage_error("value outside domain for '" + d.attributes[a] + "'");
      d.x.push_back(it->second);
    }
    auto it = class_index.find(inst.values[target]);
    if (it == class_index.end()) throw usage_error("value outside domain for target '" + d.target + "'");
    d.y.push_back(it->second);
  }
  return d;
}

const std::vector<std::string>& attributes_of(const Model& m) {
  return std::visit([](const auto& v) -> const std::vector<std::string>& { return v.attributes; }, m);
}

const std::string& target_of(const Model& m) {
  return std::visit([](const auto& v) -> const std::string& { return v.target; }, m);
}

// ---------------------------------------------------------------------------

double entropy(std::span<const double> counts) {
  double total = 0.0;
  for (double c : counts) total += c;
  if (total <= 0.0) throw degenerate_error("entropy of an empty set");
  double h = 0.0;
  for (double c : counts) {
    if (c > 0.0) {
      const double p = c / total;
      h -= p * std::log2(p);
    }
  }
  return h;
}

double entropy(std::span<const std::size_t> counts) {
  std::vector<double> d(counts.begin(), counts.end());
  return entropy(std::span<const double>(d));
}

namespace detail {

std::vector<std::size_t> all_rows(const CodedData& data, std::span<const std::size_t> rows) {
  if (!rows.empty()) return {rows.begin(), rows.end()};
  std::vector<std::size_t> out(data.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
  return out;
}

std::vector<std::size_t> class_counts(const CodedData& data, std::span<const std::size_t> rows) {
  std::vector<std::size_t> counts(data.classes.size(), 0);
  for (std::size_t r : rows) ++counts[data.y[r]];
  return counts;
}

std::size_t majority(std::span<const std::size_t> counts) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < counts.size(); ++c) {
    if (counts[c] > counts[best]) best = c;
  }
  return best;
}

double entropy_or_zero(std::span<const std::size_t> counts) {
  std::size_t total = 0;
  for (auto c : counts) total += c;
  return total == 0 ? 0.0 : entropy(counts);
}

}  // namespace detail

SplitScore score_split(const CodedData& data, std::span<const std::size_t> rows, std::size_t attribute,
                       std::size_t min_leaf) {
  SplitScore s;
  const std::size_t nv = data.domains[attribute].size();
  const std::size_t nc = data.classes.size();
  std::vector<std::size_t> table(nv * nc, 0), branch(nv, 0), klass(nc, 0);
  for (std::size_t r : rows) {
    const auto v = data.at(r, attribute);
    ++table[v * nc + data.y[r]];
    ++branch[v];
    ++klass[data.y[r]];
  }
  if (rows.empty()) return s;
  const double n = static_cast<double>(rows.size());
  double children = 0.0;
  std::size_t big = 0;
  for (std::size_t v = 0; v < nv; ++v) {
    if (branch[v] == 0) continue;
    if (branch[v] >= min_leaf) ++big;
    children += static_cast<double>(branch[v]) / n *
                detail::entropy_or_zero(std::span<const std::size_t>(&table[v * nc], nc));
  }
  s.gain = detail::entropy_or_zero(klass) - children;
  if (std::abs(s.gain) < 1e-12) s.gain = 0.0;
  s.split_info = detail::entropy_or_zero(branch);
  s.gain_ratio = s.split_info > 0.0 ? s.gain / s.split_info : 0.0;
  s.valid = big >= 2;
  return s;
}

double gain_ratio(const prep::PreparedDataset& dataset, std::string_view attribute) {
  const auto idx = dataset.table.index_of(attribute);
  if (!idx || *idx == dataset.target_index()) {
    throw usage_error("unknown attribute '" + std::string(attribute) + "'");
  }
  const CodedData data = encode(dataset);
  const auto a = static_cast<std::size_t>(std::find(data.attributes.begin(), data.attributes.end(), attribute) -
                                          data.attributes.begin());
  const auto rows = detail::all_rows(data, {});
  if (rows.empty()) throw degenerate_error("gain ratio on an empty dataset");
  return score_split(data, rows, a, 1).gain_ratio;
}

double pessimistic_extra_errors(double n, double e, double cf) {
  if (n <= 0.0) return 0.0;
  if (e < 1.0) {
    const double base = n * (1.0 - std::pow(cf, 1.0 / n));
    if (e == 0.0) return base;
    return base + e * (pessimistic_extra_errors(n, 1.0, cf) - base);
  }
  if (e + 0.5 >= n) return std::max(n - e, 0.0);
  // one-sided normal quantile for 1 - cf
  const double z = std::sqrt(2.0) * boost::math::erf_inv(1.0 - 2.0 * cf);
  const double f = (e + 0.5) / n;
  const double r = (f + z * z / (2.0 * n) + z * std::sqrt(f / n - f * f / n + z * z / (4.0 * n * n))) /
                   (1.0 + z * z / n);
  return r * n - e;
}

double estimated_errors(const TreeNode& node, double cf) {
  if (node.is_leaf()) {
    return static_cast<double>(node.errors) +
           pessimistic_extra_errors(double(node.count), double(node.errors), cf);
  }
  double sum = 0.0;
  for (const auto& b : node.branches) sum += estimated_errors(b.child, cf);
  return sum;
}

// ---------------------------------------------------------------------------

namespace {

const std::string& classify_tree(const TreeNode& root, const ValueLookup& value_of) {
  const TreeNode* node = &root;
  while (!node->is_leaf()) {
    const auto v = value_of(*node->attribute);
    const TreeNode* next = &node->branches[node->missing_branch].child;
    for (const auto& b : node->branches) {
      if (b.value == v) {
        next = &b.child;
        break;
      }
    }
    node = next;
  }
  return node->klass;
}

}  // namespace

std::size_t first_match(const RuleList& list, const ValueLookup& value_of) {
  for (std::size_t i = 0; i < list.rules.size(); ++i) {
    const auto& conds = list.rules[i].conditions;
    if (std::all_of(conds.begin(), conds.end(), [&](const Condition& c) { return value_of(c.attribute) == c.value; })) {
      return i;
    }
  }
  return list.rules.size();
}

const std::string& classify(const Model& model, const ValueLookup& value_of) {
  if (const auto* tree = std::get_if<DecisionTree>(&model)) return classify_tree(tree->root, value_of);
  const auto& list = std::get<RuleList>(model);
  const auto i = first_match(list, value_of);
  return i < list.rules.size() ? list.rules[i].klass : list.default_class;
}

const std::string& classify(const Model& model, std::span<const std::string> values) {
  const auto& attrs = attributes_of(model);
  if (values.size() != attrs.size()) {
    throw usage_error("schema mismatch: instance has " + std::to_string(values.size()) + " values, model expects " +
                      std::to_string(attrs.size()));
  }
  return classify(model, [&](std::size_t a) { return std::string_view(values[a]); });
}

const std::string& classify(const Model& model, const features::Instance& instance,
                            const std::vector<features::AttributeSchema>& schema) {
  const auto& attrs = attributes_of(model);
  std::vector<std::optional<std::size_t>> column(attrs.size());
  for (std::size_t a = 0; a < attrs.size(); ++a) {
    for (std::size_t c = 0; c < schema.size(); ++c) {
      if (schema[c].name == attrs[a]) {
        column[a] = c;
        break;
      }
    }
  }
  return classify(model, [&](std::size_t a) -> std::string_view {
    if (column[a]) return instance.values[*column[a]];
    return features::missing_value_for(attrs[a]);
  });
}

std::size_t node_count(const TreeNode& node) {
  std::size_t n = 1;
  for (const auto& b : node.branches) n += node_count(b.child);
  return n;
}

namespace {
std::size_t leaves(const TreeNode& node) {
  if (node.is_leaf()) return 1;
  std::size_t n = 0;
  for (const auto& b : node.branches) n += leaves(b.child);
  return n;
}

void collect_tested(const TreeNode& node, std::vector<bool>& seen) {
  if (node.is_leaf()) return;
  seen[*node.attribute] = true;
  for (const auto& b : node.branches) collect_tested(b.child, seen);
}
}  // namespace

std::size_t leaf_count(const DecisionTree& tree) { return leaves(tree.root); }

std::size_t model_size(const Model& model) {
  if (const auto* tree = std::get_if<DecisionTree>(&model)) return node_count(tree->root);
  return std::get<RuleList>(model).rules.size() + 1;
}

std::vector<std::string> tested_attributes(const Model& model) {
  const auto& attrs = attributes_of(model);
  std::vector<bool> seen(attrs.size(), false);
  if (const auto* tree = std::get_if<DecisionTree>(&model)) {
    collect_tested(tree->root, seen);
  } else {
    for (const auto& r : std::get<RuleList>(model).rules) {
      for (const auto& c : r.conditions) seen[c.attribute] = true;
    }
  }
  std::vector<std::string> out;
  for (std::size_t a = 0; a < attrs.size(); ++a) {
    if (seen[a]) out.push_back(attrs[a]);
  }
  return out;
}

Model train(Learner learner, const CodedData& data, std::span<const std::size_t> rows, const LearnerParams& params) {
  switch (learner) {
    case Learner::C45: return train_c45(data, rows, params.c45);
    case Learner::Ripper: return train_ripper(data, rows, params.ripper);
    case Learner::Part: return train_part(data, rows, params.part);
  }
  throw usage_error("unknown learner");
}

DecisionTree train_c45(const prep::PreparedDataset& dataset, const C45Params& params) {
  const auto data = encode(dataset);
  return train_c45(data, {}, params);
}

RuleList train_ripper(const prep::PreparedDataset& dataset, const RipperParams& params) {
  const auto data = encode(dataset);
  return train_ripper(data, {}, params);
}

RuleList train_part(const prep::PreparedDataset& dataset, const PartParams& params) {
  const auto data = encode(dataset);
  return train_part(data, {}, params);
}

}  // namespace mockskel::learn
