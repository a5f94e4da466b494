#include <doctest.h>

#include "mockskel/error.hpp"
#include "mockskel/prep.hpp"

using namespace mockskel;
using namespace mockskel::features;
using namespace mockskel::prep;

namespace {

// Columns given as name -> values; roles follow the naming grammar.
InstanceTable make_table(const std::vector<std::pair<std::string, std::vector<std::string>>>& cols) {
  InstanceTable t;
  const std::size_t n = cols.empty() ? 0 : cols.front().second.size();
  for (const auto& [name, values] : cols) t.schema.push_back({name, role_of(name), {}});
  for (std::size_t r = 0; r < n; ++r) {
    Instance inst;
    for (const auto& c : cols) inst.values.push_back(c.second[r]);
    inst.transaction_id = "t" + std::to_string(r);
    t.instances.push_back(std::move(inst));
  }
  return coerce_to_nominal(std::move(t));
}

std::vector<std::string> repeat(std::vector<std::string> pattern, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(pattern[i % pattern.size()]);
  return out;
}

}  // namespace

TEST_SUITE("prep") {
  TEST_CASE("nominal coercion") {
    auto t = make_table({{"method", {"GET", "GET", "DELETE", "PUT"}}, {"statusCode", {"200", "404", "204", "503"}}});
    CHECK(t.schema[1].domain == std::vector<std::string>{"200", "204", "404", "503"});
    auto c = make_table({{"host", {"a", "a", "a"}}, {"statusCode", {"1", "1", "2"}}});
    CHECK(c.schema[0].domain.size() == 1);
    CHECK(coerce_to_nominal(t) == t);
  }

  TEST_CASE("config validation") {
    PrepConfig c;
    CHECK_NOTHROW(c.validate());
    c.max_target_cardinality = 1;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.max_target_distinct_ratio = 0.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c.max_target_distinct_ratio = 1.5;
    CHECK_THROWS_AS(c.validate(), Error);
  }

  TEST_CASE("unary targets, high-cardinality targets and constant inputs are removed") {
    std::vector<std::string> unique;
    for (int i = 0; i < 40; ++i) unique.push_back("msg" + std::to_string(i));
    auto t = make_table({{"method", repeat({"GET", "POST"}, 40)},
                         {"statusCode", repeat({"200"}, 40)},
                         {"host", repeat({"api.ex.com"}, 40)},
                         {"responsejson:message.text", unique},
                         {"responsejson:ok", repeat({"true", "false"}, 40)}});
    const auto [pruned, report] = prune_targets(t, {});
    CHECK_FALSE(pruned.index_of("statusCode"));
    CHECK_FALSE(pruned.index_of("host"));
    CHECK_FALSE(pruned.index_of("responsejson:message.text"));
    CHECK(pruned.index_of("responsejson:ok"));
    CHECK(pruned.index_of("method"));
    REQUIRE(report.size() == 3);

    auto find = [&](std::string_view name) {
      return *std::find_if(report.begin(), report.end(), [&](const Removal& r) { return r.attribute == name; });
    };
    CHECK(find("statusCode").reason == RemovalReason::Unary);
    CHECK(find("statusCode").constant == "200");
    CHECK(find("host").reason == RemovalReason::SingleValuedInput);
    CHECK(find("responsejson:message.text").reason == RemovalReason::HighCardinality);
    CHECK(find("responsejson:message.text").distinct_count == 40);

    // Nothing silently dropped.
    CHECK(pruned.schema.size() + report.size() == t.schema.size());

    const auto j = to_json(report);
    CHECK(j[0].contains("attribute"));
    CHECK(j[0].contains("role"));
    CHECK(j[0].contains("reason"));
    CHECK(j[0].contains("distinctCount"));
  }

  TEST_CASE("ratio threshold") {
    // 6 distinct of 10 instances exceeds half the instance count.
    auto t = make_table({{"method", repeat({"GET", "POST"}, 10)},
                         {"statusCode", repeat({"1", "2", "3", "4", "5", "6"}, 10)}});
    CHECK_FALSE(prune_targets(t, {}).first.index_of("statusCode"));
    PrepConfig loose;
    loose.max_target_distinct_ratio = 1.0;
    CHECK(prune_targets(t, loose).first.index_of("statusCode"));
  }

  TEST_CASE("single-valued inputs can be kept") {
    auto t = make_table({{"host", {"a", "a"}}, {"statusCode", {"1", "2"}}});
    PrepConfig keep;
    keep.drop_single_valued_inputs = false;
    CHECK(prune_targets(t, keep).first.index_of("host"));
  }

  TEST_CASE("projection keeps every input and one target") {
    std::vector<std::pair<std::string, std::vector<std::string>>> cols;
    for (int i = 0; i < 42; ++i) cols.push_back({"requestjson:f" + std::to_string(i), repeat({"a", "b"}, 8)});
    for (int i = 0; i < 17; ++i) cols.push_back({"responsejson:g" + std::to_string(i), repeat({"x", "y", "z"}, 8)});
    const auto t = make_table(cols);
    const auto [pruned, report] = prune_targets(t, {});
    const auto all = project_all(pruned, report);
    REQUIRE(all.size() == 17);
    for (const auto& d : all) {
      CHECK(d.input_count() == 42);
      CHECK(d.table.schema[d.target_index()].name == d.target);
      std::size_t targets = 0;
      for (const auto& s : d.table.schema) targets += s.role == Role::Target;
      CHECK(targets == 1);
    }
  }

  TEST_CASE("projection errors") {
    auto t = make_table({{"method", repeat({"GET", "POST"}, 6)},
                         {"statusCode", repeat({"200"}, 6)},
                         {"responsejson:a", repeat({"1", "2"}, 6)}});
    const auto [pruned, report] = prune_targets(t, {});
    CHECK(project_all(pruned, report).size() == 1);
    try {
      project_for_target(pruned, "statusCode", report);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("pruned") != std::string::npos);
    }
    try {
      project_for_target(pruned, "responsejson:zzz", report);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("unknown") != std::string::npos);
    }
  }
}
