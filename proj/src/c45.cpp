#include <algorithm>

#include "mockskel/error.hpp"
#include "mockskel/learners.hpp"
#include "learn_internal.hpp"

namespace mockskel::learn {

namespace detail {

std::optional<std::size_t> best_split(const CodedData& data, std::span<const std::size_t> rows,
                                      const std::vector<bool>& used, std::size_t min_leaf) {
  std::optional<std::size_t> best;
  double best_ratio = 0.0;
  for (std::size_t a = 0; a < data.width(); ++a) {
    if (used[a]) continue;
    const auto s = score_split(data, rows, a, min_leaf);
    if (!s.valid || s.gain <= 0.0) continue;
    if (!best || s.gain_ratio > best_ratio + 1e-12) {
      best = a;
      best_ratio = s.gain_ratio;
    }
  }
  return best;
}

std::vector<std::pair<std::uint32_t, std::vector<std::size_t>>> partition(const CodedData& data,
                                                                         std::span<const std::size_t> rows,
                                                                         std::size_t attribute) {
  std::vector<std::vector<std::size_t>> by_value(data.domains[attribute].size());
  for (std::size_t r : rows) by_value[data.at(r, attribute)].push_back(r);
  std::vector<std::pair<std::uint32_t, std::vector<std::size_t>>> out;
  for (std::size_t v = 0; v < by_value.size(); ++v) {
    if (!by_value[v].empty()) out.emplace_back(std::uint32_t(v), std::move(by_value[v]));
  }
  return out;
}

void fill_rule_counts(RuleList& list, const CodedData& data, std::span<const std::size_t> rows) {
  for (auto& r : list.rules) r.count = r.errors = 0;
  list.default_count = list.default_errors = 0;
  for (std::size_t row : rows) {
    const auto i = first_match(list, [&](std::size_t a) { return std::string_view(data.value(row, a)); });
    const auto& actual = data.classes[data.y[row]];
    if (i < list.rules.size()) {
      ++list.rules[i].count;
      if (list.rules[i].klass != actual) ++list.rules[i].errors;
    } else {
      ++list.default_count;
      if (list.default_class != actual) ++list.default_errors;
    }
  }
}

}  // namespace detail

namespace {

struct Grower {
  const CodedData& data;
  const C45Params& params;

  TreeNode leaf_for(std::span<const std::size_t> rows) const {
    const auto counts = detail::class_counts(data, rows);
    const auto m = detail::majority(counts);
    TreeNode n;
    n.klass = data.classes[m];
    n.count = rows.size();
    n.errors = rows.size() - counts[m];
    return n;
  }

  TreeNode grow(std::span<const std::size_t> rows, std::vector<bool>& used) const {
    TreeNode node = leaf_for(rows);
    if (node.errors == 0 || rows.size() < 2 * params.min_leaf_instances) return node;
    const auto attr = detail::best_split(data, rows, used, params.min_leaf_instances);
    if (!attr) return node;
    node.attribute = *attr;
    used[*attr] = true;
    std::size_t best_count = 0;
    for (auto& [value, subset] : detail::partition(data, rows, *attr)) {
      if (subset.size() > best_count) {
        best_count = subset.size();
        node.missing_branch = node.branches.size();
      }
      node.branches.push_back(TreeBranch{data.domains[*attr][value], grow(subset, used)});
    }
    used[*attr] = false;
    return node;
  }
};

std::size_t subtree_training_errors(const TreeNode& node) {
  if (node.is_leaf()) return node.errors;
  std::size_t e = 0;
  for (const auto& b : node.branches) e += subtree_training_errors(b.child);
  return e;
}

void make_leaf(TreeNode& node) {
  node.attribute.reset();
  node.branches.clear();
  node.missing_branch = 0;
}

// Subtrees that do not reduce training error are replaced by their leaf.
void collapse(TreeNode& node) {
  if (node.is_leaf()) return;
  if (subtree_training_errors(node) >= node.errors) {
    make_leaf(node);
    return;
  }
  for (auto& b : node.branches) collapse(b.child);
}

// Bottom-up subtree replacement under the pessimistic error estimate.
void prune(TreeNode& node, double cf) {
  if (node.is_leaf()) return;
  for (auto& b : node.branches) prune(b.child, cf);
  const double as_leaf = double(node.errors) + pessimistic_extra_errors(double(node.count), double(node.errors), cf);
  const double as_tree = estimated_errors(node, cf);
  if (as_leaf <= as_tree + 1e-9) make_leaf(node);
}

}  // namespace

DecisionTree train_c45(const CodedData& data, std::span<const std::size_t> rows_in, const C45Params& params) {
  const auto rows = detail::all_rows(data, rows_in);
  if (rows.empty()) throw degenerate_error("cannot train on 0 instances");
  if (params.min_leaf_instances < 1) throw usage_error("min leaf instances must be >= 1");
  DecisionTree tree;
  tree.attributes = data.attributes;
  tree.target = data.target;
  std::vector<bool> used(data.width(), false);
  tree.root = Grower{data, params}.grow(rows, used);
  if (params.prune) {
    collapse(tree.root);
    prune(tree.root, params.confidence_factor);
  }
  return tree;
}

}  // namespace mockskel::learn
