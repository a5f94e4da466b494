#include <algorithm>
#include <map>
#include <random>
#include <sstream>

#include <doctest.h>

#include "mockskel/error.hpp"
#include "mockskel/evaluation.hpp"
#include "support.hpp"

using namespace mockskel;
using namespace mockskel::eval;
using learn::Learner;

namespace {

std::vector<std::uint32_t> labels(std::size_t zeros, std::size_t ones) {
  std::vector<std::uint32_t> out(zeros, 0);
  out.insert(out.end(), ones, 1);
  return out;
}

}  // namespace

TEST_SUITE("evaluation") {
  TEST_CASE("stratified folds keep class proportions") {
    auto y = labels(80, 20);
    auto folds = stratified_folds(y, 10, 1);
    REQUIRE(folds.size() == 10);
    std::vector<int> seen(100, 0);
    for (const auto& f : folds) {
      CHECK(f.size() == 10);
      CHECK(std::is_sorted(f.begin(), f.end()));
      std::size_t ones = 0;
      for (auto r : f) {
        ++seen[r];
        ones += y[r];
      }
      CHECK(ones == 2);
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
    CHECK(stratified_folds(y, 10, 1) == folds);
    CHECK(stratified_folds(y, 10, 2) != folds);
  }

  TEST_CASE("fold edge cases") {
    auto y = labels(7, 3);
    auto folds = stratified_folds(y, 10, 1);
    CHECK(folds.size() == 10);
    for (const auto& f : folds) CHECK(f.size() == 1);
    CHECK(stratified_folds(labels(2, 1), 10, 1).size() == 3);
    CHECK_THROWS_AS(stratified_folds(y, 1, 1), Error);
    auto uneven = stratified_folds(labels(13, 9), 4, 5);
    for (const auto& f : uneven) {
      std::size_t ones = 0;
      for (auto r : f) ones += r >= 13;
      CHECK((ones == 2 || ones == 3));
    }
  }

  TEST_CASE("confusion metrics by hand") {
    Confusion c({"a", "b"});
    c.at(0, 0) = 8;
    c.at(0, 1) = 2;
    c.at(1, 0) = 1;
    c.at(1, 1) = 9;
    CHECK(c.total() == 20);
    CHECK(c.accuracy() == doctest::Approx(0.85));
    CHECK(c.weighted_precision() == doctest::Approx((8.0 / 9 + 9.0 / 11) / 2));
    CHECK(c.weighted_recall() == doctest::Approx(c.accuracy()));
    Confusion never({"a", "b"});
    never.at(0, 0) = 19;
    never.at(1, 0) = 1;
    CHECK(never.weighted_precision() == doctest::Approx(0.95 * 0.95));
    CHECK(never.weighted_recall() == doctest::Approx(0.95));
    Confusion sum({"a", "b"});
    sum.add(c);
    sum.add(never);
    CHECK(sum.at(0, 0) == 27);
    CHECK(sum.total() == 40);
  }

  TEST_CASE("weighted recall equals accuracy under cross-validation") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 10; ++trial) {
      auto t = support::random_table(rng, 60, 3, 3, 3);
      for (auto l : {Learner::C45, Learner::Ripper, Learner::Part}) {
        auto m = cross_validate(t.coded, l, {}, {});
        CHECK(m.recall == doctest::Approx(m.accuracy).epsilon(1e-12));
        CHECK(m.confusion.total() == 60);
        CHECK(m.per_fold.size() == 10);
        CHECK(m.folds == 10);
      }
    }
  }

  TEST_CASE("aggregate mean and sample deviation") {
    TargetMetrics a, b;
    a.accuracy = 0.9;
    b.accuracy = 1.0;
    std::vector<TargetMetrics> v{a, b};
    auto r = aggregate(v, "x");
    CHECK(r.mean_accuracy == doctest::Approx(0.95));
    CHECK(r.std_accuracy == doctest::Approx(0.0707).epsilon(1e-3));
    CHECK(r.targets == 2);
    auto one = aggregate(std::span<const TargetMetrics>(v.data(), 1));
    CHECK(one.std_accuracy == 0.0);
    CHECK_THROWS_AS(aggregate(std::span<const TargetMetrics>{}), Error);
    std::vector<double> xs{2, 4, 4, 4, 5, 5, 7, 9};
    CHECK(sample_std(xs) == doctest::Approx(2.13809).epsilon(1e-5));
  }

  TEST_CASE("majority-only target") {
    std::vector<std::string> a, y;
    for (int i = 0; i < 5000; ++i) {
      a.push_back(i % 3 ? "p" : "q");
      y.push_back(i == 4321 ? "503" : "200");
    }
    auto d = support::dataset({{"a", a}, {"y", y}});
    for (auto l : {Learner::C45, Learner::Ripper, Learner::Part}) {
      auto m = cross_validate(d, l);
      CHECK(m.accuracy == doctest::Approx(0.9998).epsilon(1e-9));
      CHECK(m.model_size == 1.0);
    }
  }

  TEST_CASE("imbalanced noise target: precision below accuracy") {
    std::mt19937_64 rng(43);
    std::vector<std::string> a, b, y;
    for (int i = 0; i < 400; ++i) {
      a.push_back("v" + std::to_string(rng() % 3));
      b.push_back("v" + std::to_string(rng() % 2));
      y.push_back(i % 20 == 0 ? "500" : "200");
    }
    auto m = cross_validate(support::dataset({{"a", a}, {"b", b}, {"y", y}}), Learner::C45);
    CHECK(m.precision < m.accuracy);
  }

  TEST_CASE("too few instances") {
    auto d = support::dataset({{"a", {"x"}}, {"y", {"1"}}});
    CHECK_THROWS_AS(cross_validate(d, Learner::C45), Error);
    auto two = support::dataset({{"a", {"x", "z"}}, {"y", {"1", "2"}}});
    auto m = cross_validate(two, Learner::C45);
    CHECK(m.folds == 2);
    CHECK(m.leave_one_out);
  }

  TEST_CASE("parallel and serial evaluation agree") {
    std::mt19937_64 rng(47);
    std::vector<prep::PreparedDataset> ds;
    for (int i = 0; i < 4; ++i) ds.push_back(support::dataset(support::random_table(rng, 70, 4, 3, 3).columns));
    std::vector<Learner> ls{Learner::C45, Learner::Ripper, Learner::Part};
    auto p = evaluate_all(ds, ls, {}, {});
    auto s = evaluate_all_serial(ds, ls, {}, {});
    REQUIRE(p.size() == 12);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(to_json(p[i]).dump() == to_json(s[i]).dump());
    auto one = cross_validate(learn::encode(ds[0]), Learner::Part, {}, {});
    CHECK(to_json(one).dump() == to_json(cross_validate_serial(learn::encode(ds[0]), Learner::Part, {}, {})).dump());
  }

  TEST_CASE("report rendering") {
    auto d = support::synthetic("statusCode", 600);
    std::vector<Learner> ls{Learner::C45, Learner::Part};
    std::vector<prep::PreparedDataset> ds{d};
    auto rep = make_report("items", {}, ls, evaluate_all(ds, ls, {}, {}));
    CHECK(rep.aggregates.size() == 2);
    auto j = to_json(rep);
    CHECK(j["dataset"] == "items");
    CHECK(j["targets"].size() == 2);
    CHECK(j["targets"][0].contains("confusion"));
    std::vector<Report> reps{rep};
    auto table = render_table(reps);
    CHECK(table.find("Accuracy") != std::string::npos);
    CHECK(table.find("items") != std::string::npos);
    std::ostringstream csv;
    write_csv(csv, rep);
    const auto text = csv.str();
    CHECK(text.rfind("dataset,target,learner,instances,accuracy,precision,recall,modelSize\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 3);
  }
}
