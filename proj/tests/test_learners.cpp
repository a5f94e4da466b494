#include <algorithm>
#include <numeric>
#include <random>

#include <doctest.h>

#include "mockskel/error.hpp"
#include "mockskel/learners.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace mockskel;
using namespace mockskel::learn;

namespace {

std::vector<std::string> repeat(std::vector<std::string> pattern, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(pattern[i % pattern.size()]);
  return out;
}

void check_counts(const TreeNode& n) {
  if (n.is_leaf()) return;
  std::size_t sum = 0;
  for (const auto& b : n.branches) {
    sum += b.child.count;
    check_counts(b.child);
  }
  CHECK(sum == n.count);
}

// Every leaf of an unpruned tree is pure, or no unused attribute has a
// valid positive-gain split on the rows that reach it.
void check_purity(const CodedData& d, const TreeNode& node, const std::vector<std::size_t>& rows,
                  std::vector<bool> used, std::size_t min_leaf) {
  if (node.is_leaf()) {
    bool pure = std::all_of(rows.begin(), rows.end(), [&](std::size_t r) { return d.y[r] == d.y[rows[0]]; });
    if (pure) return;
    for (std::size_t a = 0; a < d.width(); ++a) {
      if (used[a]) continue;
      std::vector<std::string> col, ys;
      for (auto r : rows) {
        col.push_back(d.value(r, a));
        ys.push_back(d.classes[d.y[r]]);
      }
      auto s = oracle::split(col, ys, min_leaf);
      CHECK_FALSE((s.gain > 1e-9 && s.branches_at_least >= 2));
    }
    return;
  }
  const std::size_t a = *node.attribute;
  used[a] = true;
  for (const auto& b : node.branches) {
    std::vector<std::size_t> sub;
    for (auto r : rows)
      if (d.value(r, a) == b.value) sub.push_back(r);
    check_purity(d, b.child, sub, used, min_leaf);
  }
}

}  // namespace

TEST_SUITE("learners") {
  TEST_CASE("entropy reference values") {
    CHECK(entropy(std::vector<double>{5, 5}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(entropy(std::vector<double>{10, 0}) == 0.0);
    CHECK(entropy(std::vector<double>{6, 4}) == doctest::Approx(0.9710).epsilon(1e-4));
    CHECK(entropy(std::vector<std::size_t>{1, 1, 1, 1}) == doctest::Approx(2.0));
    CHECK_THROWS_AS(entropy(std::vector<double>{0, 0}), Error);
  }

  TEST_CASE("gain ratio matches brute force on random tables") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
      auto t = support::random_table(rng, 10 + trial, 3, 2 + trial % 3, 2 + trial % 4);
      auto d = support::dataset(t.columns);
      for (std::size_t a = 0; a < 3; ++a) {
        auto o = oracle::split(t.columns[a].second, t.columns.back().second, 1);
        CHECK(gain_ratio(d, t.columns[a].first) == doctest::Approx(o.ratio).epsilon(1e-9));
      }
    }
  }

  TEST_CASE("gain ratio edge cases") {
    auto d = support::dataset({{"a", {"x", "x", "x", "x"}}, {"b", {"p", "q", "p", "q"}}, {"y", {"1", "2", "1", "2"}}});
    CHECK(gain_ratio(d, "a") == 0.0);
    CHECK(gain_ratio(d, "b") == doctest::Approx(1.0));
    CHECK_THROWS_AS(gain_ratio(d, "nope"), Error);
    CHECK_THROWS_AS(gain_ratio(d, "y"), Error);
  }

  TEST_CASE("pessimistic error increments") {
    // e = 0 closed form: N * (1 - CF^(1/N)).
    CHECK(pessimistic_extra_errors(6, 0, 0.25) == doctest::Approx(6 * (1 - std::pow(0.25, 1.0 / 6))).epsilon(1e-9));
    // Normal approximation, hand computed.
    CHECK(pessimistic_extra_errors(16, 1, 0.25) == doctest::Approx(1.4757).epsilon(1e-3));
    CHECK(pessimistic_extra_errors(4, 4, 0.25) == 0.0);
    CHECK(pessimistic_extra_errors(10, 2, 0.1) > pessimistic_extra_errors(10, 2, 0.4));
  }

  TEST_CASE("C4.5 root maximises gain ratio (exhaustive over inputs)") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
      std::uniform_int_distribution<std::size_t> rows(8, 64), ins(1, 4), cls(2, 3);
      auto t = support::random_table(rng, rows(rng), ins(rng), 2, cls(rng));
      C45Params p;
      p.prune = false;
      auto tree = train_c45(t.coded, {}, p);
      double best = -1;
      for (std::size_t a = 0; a < t.coded.width(); ++a) {
        auto s = oracle::split(t.columns[a].second, t.columns.back().second, p.min_leaf_instances);
        if (s.gain > 1e-12 && s.branches_at_least >= 2) best = std::max(best, s.ratio);
      }
      if (best < 0) {
        CHECK(tree.root.is_leaf());
      } else {
        REQUIRE_FALSE(tree.root.is_leaf());
        auto s = oracle::split(t.columns[*tree.root.attribute].second, t.columns.back().second, 2);
        CHECK(s.ratio == doctest::Approx(best).epsilon(1e-9));
      }
    }
  }

  TEST_CASE("unpruned leaves are pure or unsplittable") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 60; ++trial) {
      auto t = support::random_table(rng, 40, 4, 3, 3);
      C45Params p;
      p.prune = false;
      auto tree = train_c45(t.coded, {}, p);
      std::vector<std::size_t> all(t.coded.rows());
      std::iota(all.begin(), all.end(), 0);
      check_purity(t.coded, tree.root, all, std::vector<bool>(t.coded.width(), false), p.min_leaf_instances);
      check_counts(tree.root);
    }
  }

  TEST_CASE("pruning never raises estimated error or size") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 60; ++trial) {
      auto t = support::random_table(rng, 60, 4, 3, 2 + trial % 2);
      C45Params un;
      un.prune = false;
      auto a = train_c45(t.coded, {}, un);
      auto b = train_c45(t.coded, {}, {});
      CHECK(estimated_errors(b.root, 0.25) <= estimated_errors(a.root, 0.25) + 1e-9);
      CHECK(node_count(b.root) <= node_count(a.root));
    }
  }

  TEST_CASE("deterministic single-attribute function is learned exactly") {
    std::mt19937_64 rng(19);
    for (int trial = 0; trial < 30; ++trial) {
      auto t = support::random_table(rng, 80, 3, 3, 2);
      // y := f(a1) for a random f.
      std::map<std::string, std::string> f;
      for (int v = 0; v < 3; ++v) f["v" + std::to_string(v)] = "c" + std::to_string(rng() % 2);
      for (std::size_t r = 0; r < 80; ++r) t.columns[3].second[r] = f[t.columns[1].second[r]];
      auto d = support::dataset(t.columns);
      if (d.table.schema.back().domain.size() < 2) continue;
      auto coded = encode(d);
      C45Params p;
      p.prune = false;
      p.min_leaf_instances = 1;
      CHECK(support::training_accuracy(train_c45(coded, {}, p), coded) == 1.0);
      CHECK(support::training_accuracy(train_part(coded, {}), coded) == 1.0);
      CHECK(support::training_accuracy(train_ripper(coded, {}), coded) == 1.0);
    }
  }

  TEST_CASE("small status-code service gives a small tree") {
    auto method = repeat({"GET", "POST", "DELETE", "GET"}, 48);
    auto token = repeat({"null", "7", "9"}, 48);
    auto noise = repeat({"a", "b", "c"}, 48);
    std::vector<std::string> status;
    for (std::size_t i = 0; i < 48; ++i) {
      if (method[i] == "POST") status.push_back("201");
      else if (method[i] == "DELETE") status.push_back("204");
      else status.push_back(token[i] == "null" ? "200" : "404");
    }
    auto d = support::dataset({{"method", method}, {"uriPathToken1", token}, {"requestheader:X", noise}, {"statusCode", status}});
    auto tree = train_c45(d);
    CHECK(model_size(tree) <= 7);
    CHECK(support::training_accuracy(tree, encode(d)) == 1.0);
    CHECK(tree.root.attribute.has_value());
    CHECK(tree.attributes[*tree.root.attribute] == "method");
  }

  TEST_CASE("near-constant target gives a single leaf") {
    std::vector<std::string> a, y;
    for (int i = 0; i < 5000; ++i) {
      a.push_back(i % 2 ? "p" : "q");
      y.push_back(i == 17 ? "503" : "200");
    }
    auto d = support::dataset({{"a", a}, {"y", y}});
    auto tree = train_c45(d);
    CHECK(tree.root.is_leaf());
    CHECK(tree.root.klass == "200");
    CHECK(model_size(tree) == 1);
    auto part = train_part(d);
    CHECK(part.rules.empty());
    CHECK(part.default_class == "200");
    auto rip = train_ripper(d);
    CHECK(rip.rules.empty());
    CHECK(rip.default_class == "200");
  }

  TEST_CASE("zero rows is degenerate") {
    auto d = support::dataset({{"a", {"x"}}, {"y", {"1"}}});
    auto coded = encode(d);
    coded.x.clear();
    coded.y.clear();
    CHECK_THROWS_AS(train_c45(coded, {}), Error);
    CHECK_THROWS_AS(train_part(coded, {}), Error);
    CHECK_THROWS_AS(train_ripper(coded, {}), Error);
  }

  TEST_CASE("row order does not change the models") {
    std::mt19937_64 rng(23);
    auto t = support::random_table(rng, 60, 4, 3, 3);
    auto cols = t.columns;
    std::vector<std::size_t> perm(60);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (auto& [name, col] : cols) {
      std::vector<std::string> out;
      for (auto i : perm) out.push_back(col[i]);
      col = out;
    }
    auto shuffled = encode(support::dataset(cols));
    CHECK(render(train_c45(t.coded, {})) == render(train_c45(shuffled, {})));
    CHECK(render(train_part(t.coded, {})) == render(train_part(shuffled, {})));
  }

  TEST_CASE("training is deterministic") {
    std::mt19937_64 rng(29);
    auto t = support::random_table(rng, 120, 4, 3, 3);
    CHECK(render(train_ripper(t.coded, {})) == render(train_ripper(t.coded, {})));
    CHECK(render(train_part(t.coded, {})) == render(train_part(t.coded, {})));
    CHECK(render(train_c45(t.coded, {})) == render(train_c45(t.coded, {})));
  }

  TEST_CASE("rule lists: first-match counts cover every row") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 30; ++trial) {
      auto t = support::random_table(rng, 80, 4, 3, 3);
      for (const RuleList& list : {train_ripper(t.coded, {}), train_part(t.coded, {})}) {
        std::size_t sum = list.default_count;
        for (const auto& r : list.rules) sum += r.count;
        CHECK(sum == t.coded.rows());
        std::vector<std::size_t> fired(list.rules.size() + 1, 0);
        for (std::size_t r = 0; r < t.coded.rows(); ++r) {
          auto v = support::row_values(t.coded, r);
          ++fired[first_match(list, [&](std::size_t a) -> std::string_view { return v[a]; })];
        }
        for (std::size_t i = 0; i < list.rules.size(); ++i) CHECK(fired[i] == list.rules[i].count);
        CHECK(fired.back() == list.default_count);
      }
    }
  }

  TEST_CASE("classification is total over unseen values") {
    std::mt19937_64 rng(37);
    auto t = support::random_table(rng, 80, 3, 3, 3);
    std::vector<std::string> unseen{"zz", "yy", "xx"};
    for (auto l : {Learner::C45, Learner::Ripper, Learner::Part}) {
      auto m = train(l, t.coded, {}, {});
      const auto& k = classify(m, unseen);
      CHECK(std::find(t.coded.classes.begin(), t.coded.classes.end(), k) != t.coded.classes.end());
    }
    auto tree = train_c45(t.coded, {});
    if (!tree.root.is_leaf()) {
      // An unseen value follows the most populated branch.
      const auto& mb = tree.root.branches[tree.root.missing_branch];
      for (const auto& b : tree.root.branches) CHECK(b.child.count <= mb.child.count);
    }
    CHECK_THROWS_AS(classify(Model{tree}, std::vector<std::string>{"a"}), Error);
  }

  TEST_CASE("model size") {
    DecisionTree t;
    t.root.klass = "a";
    CHECK(model_size(t) == 1);
    t.root.attribute = 0;
    t.root.branches.push_back({"x", TreeNode{}});
    t.root.branches.push_back({"y", TreeNode{}});
    CHECK(model_size(t) == 3);
    CHECK(leaf_count(t) == 2);
    RuleList r;
    CHECK(model_size(r) == 1);
    r.rules.push_back({});
    r.rules.push_back({});
    CHECK(model_size(r) == 3);
  }

  TEST_CASE("learner names") {
    CHECK(parse_learner("c45") == Learner::C45);
    CHECK(parse_learner("j48") == Learner::C45);
    CHECK(parse_learner("ripper") == Learner::Ripper);
    CHECK(parse_learner("part") == Learner::Part);
    CHECK_FALSE(parse_learner("svm"));
    CHECK(to_string(Learner::Ripper) == "ripper");
  }

  TEST_CASE("synthetic service status code") {
    auto d = support::synthetic("statusCode");
    auto coded = encode(d);
    auto rip = train_ripper(coded, {});
    auto part = train_part(coded, {});
    auto tree = train_c45(coded, {});
    CHECK(rip.rules.size() <= 5);
    CHECK(part.rules.size() <= 6);
    CHECK(support::training_accuracy(tree, coded) == 1.0);
    for (const Model& m : {Model{tree}, Model{rip}, Model{part}}) {
      auto used = tested_attributes(m);
      CHECK(std::find(used.begin(), used.end(), "everCreated") != used.end());
    }
  }
}
