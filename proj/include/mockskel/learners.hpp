#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mockskel/prep.hpp"

namespace mockskel::learn {

// ---------------------------------------------------------------------------
// Parameters. Defaults follow the usual J48 / JRip / PART defaults.

struct C45Params {
  double confidence_factor = 0.25;
  std::size_t min_leaf_instances = 2;
  bool prune = true;
};

struct RipperParams {
  std::size_t folds = 3;  // one fold prunes, the rest grow (2/3 grow)
  double min_rule_coverage = 2.0;
  std::size_t optimization_runs = 2;
  std::uint64_t seed = 1;
};

struct PartParams {
  double confidence_factor = 0.25;
  std::size_t min_leaf_instances = 2;
};

struct LearnerParams {
  C45Params c45;
  RipperParams ripper;
  PartParams part;
};

enum class Learner { C45, Ripper, Part };

std::string_view to_string(Learner l);
std::optional<Learner> parse_learner(std::string_view name);

// ---------------------------------------------------------------------------
// Dataset encoding

// Dense integer view of a PreparedDataset: inputs in schema order, values
// as indices into each attribute's domain.
struct CodedData {
  std::vector<std::string> attributes;
  std::vector<std::vector<std::string>> domains;
  std::string target;
  std::vector<std::string> classes;
  std::vector<std::uint32_t> x;  // row-major, rows * attributes.size()
  std::vector<std::uint32_t> y;

  std::size_t rows() const { return y.size(); }
  std::size_t width() const { return attributes.size(); }
  std::uint32_t at(std::size_t row, std::size_t attr) const { return x[row * attributes.size() + attr]; }
  const std::string& value(std::size_t row, std::size_t attr) const { return domains[attr][at(row, attr)]; }
};

CodedData encode(const prep::PreparedDataset& dataset);

// ---------------------------------------------------------------------------
// Models

struct TreeBranch;

struct TreeNode {
  std::optional<std::size_t> attribute;  // split attribute; empty for a leaf
  std::vector<TreeBranch> branches;
  std::size_t missing_branch = 0;  // unseen values follow this branch
  std::string klass;               // majority class of the instances reaching here
  std::size_t count = 0;           // training instances reaching the node
  std::size_t errors = 0;          // of those, not of `klass`

  bool is_leaf() const { return !attribute.has_value(); }
};

struct TreeBranch {
  std::string value;
  TreeNode child;
};

struct DecisionTree {
  std::vector<std::string> attributes;
  std::string target;
  TreeNode root;
};

struct Condition {
  std::size_t attribute = 0;
  std::string value;

  bool operator==(const Condition&) const = default;
};

struct Rule {
  std::vector<Condition> conditions;
  std::string klass;
  std::size_t count = 0;   // training instances this rule fires on first
  std::size_t errors = 0;

  bool operator==(const Rule&) const = default;
};

struct RuleList {
  std::vector<std::string> attributes;
  std::string target;
  std::vector<Rule> rules;
  std::string default_class;
  std::size_t default_count = 0;
  std::size_t default_errors = 0;
};

using Model = std::variant<DecisionTree, RuleList>;

const std::vector<std::string>& attributes_of(const Model& m);
const std::string& target_of(const Model& m);

// ---------------------------------------------------------------------------
// Split measures

// Shannon entropy in bits. Throws Error(Degenerate) when all counts are 0.
double entropy(std::span<const double> class_counts);
double entropy(std::span<const std::size_t> class_counts);

// Gain ratio of `attribute` (an input name) for the dataset's target.
double gain_ratio(const prep::PreparedDataset& dataset, std::string_view attribute);

struct SplitScore {
  double gain = 0.0;
  double split_info = 0.0;
  double gain_ratio = 0.0;
  // At least two branches hold `min_leaf` instances or more.
  bool valid = false;
};

SplitScore score_split(const CodedData& data, std::span<const std::size_t> rows, std::size_t attribute,
                       std::size_t min_leaf);

// Upper-confidence pessimistic error increment for `errors` mistakes out of
// `n` instances (the amount added to the observed errors).
double pessimistic_extra_errors(double n, double errors, double confidence);

// ---------------------------------------------------------------------------
// Training. `rows` selects the training instances; empty spans mean "all".
// All three throw Error(Degenerate) on zero instances.

DecisionTree train_c45(const CodedData& data, std::span<const std::size_t> rows, const C45Params& params = {});
RuleList train_ripper(const CodedData& data, std::span<const std::size_t> rows, const RipperParams& params = {});
RuleList train_part(const CodedData& data, std::span<const std::size_t> rows, const PartParams& params = {});

DecisionTree train_c45(const prep::PreparedDataset& dataset, const C45Params& params = {});
RuleList train_ripper(const prep::PreparedDataset& dataset, const RipperParams& params = {});
RuleList train_part(const prep::PreparedDataset& dataset, const PartParams& params = {});

Model train(Learner learner, const CodedData& data, std::span<const std::size_t> rows, const LearnerParams& params);

// ---------------------------------------------------------------------------
// Inference

using ValueLookup = std::function<std::string_view(std::size_t attribute)>;

// Total: unseen values follow the missing branch / fall to the default.
const std::string& classify(const Model& model, const ValueLookup& value_of);
// `values` aligned to the model's attributes; throws Error(Usage) on a size
// mismatch.
const std::string& classify(const Model& model, std::span<const std::string> values);
// `instance` aligned to a table schema; attributes are matched by name and
// absent ones read as their missing sentinel.
const std::string& classify(const Model& model, const features::Instance& instance,
                            const std::vector<features::AttributeSchema>& schema);

// Index of the rule that fires first, or rules.size() for the default.
std::size_t first_match(const RuleList& list, const ValueLookup& value_of);

// Tree: node count. Rule list: rules plus the default.
std::size_t model_size(const Model& model);
std::size_t leaf_count(const DecisionTree& tree);
std::size_t node_count(const TreeNode& node);

// Sum over leaves of observed plus pessimistic extra errors.
double estimated_errors(const TreeNode& node, double confidence);

// Attributes tested anywhere in the model.
std::vector<std::string> tested_attributes(const Model& model);

// ---------------------------------------------------------------------------
// Text form. Trees render as `attr = value: class (N/E)` lines indented with
// "|   "; rule lists as `(a = v) and (b = w) => target=class (N/E)` with a
// trailing `=> target=class (N/E)` default.

std::string render(const Model& model);

// Parses the text form back. Attribute names resolve against `attributes`;
// unknown ones raise Error(Parse) with the 1-based line (offset by
// `first_line`). Counts are optional on input.
DecisionTree parse_tree(std::string_view text, const std::vector<std::string>& attributes,
                        std::string_view target, std::size_t first_line = 1);
RuleList parse_rules(std::string_view text, const std::vector<std::string>& attributes,
                     std::string_view target, std::size_t first_line = 1);

// Token quoting used by the text form: bare when unambiguous, JSON string
// otherwise.
std::string quote_token(std::string_view token, bool is_attribute);

}  // namespace mockskel::learn
