#include <algorithm>
#include <numeric>

#include "mockskel/error.hpp"
#include "mockskel/learners.hpp"
#include "learn_internal.hpp"

namespace mockskel::learn {

namespace {

// Node of a partially expanded tree. Unexpanded subsets are simply absent
// from `children`.
struct PartialNode {
  std::optional<std::size_t> attribute;
  std::vector<std::pair<std::uint32_t, PartialNode>> children;
  std::uint32_t klass = 0;
  std::size_t count = 0;
  std::size_t errors = 0;

  bool is_leaf() const { return !attribute.has_value(); }
};

class PartialTreeBuilder {
 public:
  PartialTreeBuilder(const CodedData& data, const PartParams& params) : data_(data), params_(params) {}

  PartialNode build(std::span<const std::size_t> rows, std::vector<bool>& used) const {
    PartialNode node;
    const auto counts = detail::class_counts(data_, rows);
    node.klass = std::uint32_t(detail::majority(counts));
    node.count = rows.size();
    node.errors = rows.size() - counts[node.klass];
    if (node.errors == 0 || rows.size() < 2 * params_.min_leaf_instances) return node;
    const auto attr = detail::best_split(data_, rows, used, params_.min_leaf_instances);
    if (!attr) return node;

    auto subsets = detail::partition(data_, rows, *attr);
    std::vector<double> h(subsets.size());
    for (std::size_t i = 0; i < subsets.size(); ++i) {
      h[i] = detail::entropy_or_zero(detail::class_counts(data_, subsets[i].second));
    }
    std::vector<std::size_t> order(subsets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return h[a] < h[b]; });

    node.attribute = *attr;
    used[*attr] = true;
    bool all_leaves = true;
    for (std::size_t i : order) {
      PartialNode child = build(subsets[i].second, used);
      const bool leaf = child.is_leaf();
      node.children.emplace_back(subsets[i].first, std::move(child));
      if (!leaf) {
        all_leaves = false;
        break;
      }
    }
    used[*attr] = false;

    if (all_leaves && node.children.size() == subsets.size()) {
      const double cf = params_.confidence_factor;
      const double as_leaf = double(node.errors) + pessimistic_extra_errors(double(node.count), double(node.errors), cf);
      double as_tree = 0.0;
      for (const auto& [v, c] : node.children) {
        as_tree += double(c.errors) + pessimistic_extra_errors(double(c.count), double(c.errors), cf);
      }
      if (as_leaf <= as_tree + 1e-9) {
        node.attribute.reset();
        node.children.clear();
      }
    }
    return node;
  }

 private:
  const CodedData& data_;
  const PartParams& params_;
};

struct LeafPath {
  std::vector<std::pair<std::size_t, std::uint32_t>> conditions;
  const PartialNode* leaf = nullptr;
};

// Depth-first; the first leaf wins ties on coverage.
void best_leaf(const PartialNode& node, std::vector<std::pair<std::size_t, std::uint32_t>>& path, LeafPath& best) {
  if (node.is_leaf()) {
    if (!best.leaf || node.count > best.leaf->count) {
      best.leaf = &node;
      best.conditions = path;
    }
    return;
  }
  for (const auto& [v, child] : node.children) {
    path.emplace_back(*node.attribute, v);
    best_leaf(child, path, best);
    path.pop_back();
  }
}

}  // namespace

RuleList train_part(const CodedData& data, std::span<const std::size_t> rows_in, const PartParams& params) {
  const auto rows = detail::all_rows(data, rows_in);
  if (rows.empty()) throw degenerate_error("cannot train on 0 instances");
  if (params.min_leaf_instances < 1) throw usage_error("min leaf instances must be >= 1");

  RuleList list;
  list.attributes = data.attributes;
  list.target = data.target;

  const PartialTreeBuilder builder(data, params);
  std::vector<std::size_t> remaining = rows;
  std::vector<bool> used(data.width(), false);
  bool have_default = false;
  while (!remaining.empty()) {
    const PartialNode root = builder.build(remaining, used);
    LeafPath best;
    std::vector<std::pair<std::size_t, std::uint32_t>> path;
    best_leaf(root, path, best);
    if (best.conditions.empty()) {
      list.default_class = data.classes[best.leaf->klass];
      have_default = true;
      break;
    }
    Rule rule;
    for (const auto& [a, v] : best.conditions) rule.conditions.push_back({a, data.domains[a][v]});
    rule.klass = data.classes[best.leaf->klass];
    std::vector<std::size_t> rest;
    for (std::size_t r : remaining) {
      const bool covered = std::all_of(best.conditions.begin(), best.conditions.end(),
                                       [&](const auto& c) { return data.at(r, c.first) == c.second; });
      if (!covered) rest.push_back(r);
    }
    remaining = std::move(rest);
    list.rules.push_back(std::move(rule));
  }
  if (!have_default) list.default_class = list.rules.back().klass;
  detail::fill_rule_counts(list, data, rows);
  return list;
}

}  // namespace mockskel::learn
