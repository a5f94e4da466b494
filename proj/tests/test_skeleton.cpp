#include <doctest.h>

#include "mockskel/cli.hpp"
#include "mockskel/error.hpp"
#include "mockskel/serve.hpp"
#include "mockskel/skeleton.hpp"
#include "support.hpp"

using namespace mockskel;
using namespace mockskel::skeleton;

namespace {

cli::PipelineResult pipeline(const support::TempDir& dir, std::size_t n, learn::Learner l, bool evaluate = false) {
  cli::RunConfig cfg;
  cfg.inputs = {support::write_synthetic(dir, n)};
  cfg.learners = {l};
  return cli::run_pipeline(cfg, evaluate, true);
}

std::string insert_after(std::string text, const std::string& anchor, const std::string& line) {
  auto at = text.find(anchor);
  REQUIRE(at != std::string::npos);
  at = text.find('\n', at) + 1;
  text.insert(at, line);
  return text;
}

traffic::HttpRequest request(traffic::Method m, std::string uri) {
  traffic::HttpRequest r;
  r.method = m;
  r.uri = std::move(uri);
  r.headers.add("Accept", "application/json");
  return r;
}

}  // namespace

TEST_SUITE("skeleton") {
  TEST_CASE("emit, parse, emit is byte-identical") {
    support::TempDir dir;
    for (auto l : {learn::Learner::C45, learn::Learner::Ripper, learn::Learner::Part}) {
      auto res = pipeline(dir, 1000, l);
      REQUIRE(res.skeleton);
      const auto text = emit_skeleton(*res.skeleton);
      const auto parsed = parse_skeleton(text);
      CHECK(emit_skeleton(parsed) == text);
      CHECK(parsed.warnings.empty());
      REQUIRE(parsed.targets.size() == res.skeleton->targets.size());
      for (std::size_t t = 0; t < parsed.targets.size(); ++t) {
        CHECK(parsed.targets[t].origin == Origin::Learned);
        const auto& schema = res.pruned.schema;
        for (const auto& inst : res.pruned.instances) {
          CHECK(learn::classify(parsed.targets[t].model, inst, schema) ==
                learn::classify(res.skeleton->targets[t].model, inst, schema));
        }
      }
    }
  }

  TEST_CASE("metrics survive the round trip") {
    support::TempDir dir;
    auto res = pipeline(dir, 600, learn::Learner::C45, true);
    const auto text = emit_skeleton(*res.skeleton);
    CHECK(text.find("# metrics: learner=c45") != std::string::npos);
    auto parsed = parse_skeleton(text);
    REQUIRE(parsed.targets.front().metrics);
    CHECK(parsed.targets.front().metrics->accuracy == doctest::Approx(res.skeleton->targets.front().metrics->accuracy).epsilon(1e-6));
    CHECK(emit_skeleton(parsed) == text);
  }

  TEST_CASE("hand-written rule takes precedence") {
    support::TempDir dir;
    auto res = pipeline(dir, 1000, learn::Learner::Ripper);
    auto text = insert_after(emit_skeleton(*res.skeleton), "# classes: [\"200\"", "  (method = DELETE) => statusCode=503\n");
    auto sk = parse_skeleton(text);
    const auto* t = sk.find_target("statusCode");
    REQUIRE(t);
    CHECK(t->origin == Origin::Edited);
    CHECK_FALSE(t->metrics);
    CHECK(sk.warnings.size() == 1);  // 503 never seen in training
    serve::ServeState state;
    auto r = serve::synthesize_response(sk, request(traffic::Method::Delete, "https://api.example.com/items/3"), state);
    CHECK(r.status == 503);
    auto edited = emit_skeleton(sk);
    CHECK(edited.find("# origin: edited") != std::string::npos);
    CHECK(emit_skeleton(parse_skeleton(edited)) == edited);
  }

  TEST_CASE("unknown attribute is a parse error with a line number") {
    support::TempDir dir;
    auto res = pipeline(dir, 400, learn::Learner::Ripper);
    auto text = emit_skeleton(*res.skeleton);
    text = insert_after(text, "# classes: [\"200\"", "  (uriPathToken99 = 3) => statusCode=404\n");
    std::size_t line = 1;
    for (std::size_t i = 0; i < text.find("uriPathToken99"); ++i) line += text[i] == '\n';
    try {
      parse_skeleton(text);
      FAIL("expected a parse error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Parse);
      const std::string m = e.what();
      CHECK(m.find("uriPathToken99") != std::string::npos);
      CHECK(m.find(std::to_string(line)) != std::string::npos);
    }
  }

  TEST_CASE("syntax errors") {
    CHECK_THROWS_AS(parse_skeleton("service: x\ntarget statusCode rules:\n  => statusCode=200\n"), Error);
    CHECK_THROWS_AS(parse_skeleton("nonsense\n"), Error);
    CHECK_THROWS_AS(parse_skeleton("service: x\ndigest: 0\nseed: 1\ninputs:\n  method\ntarget statusCode forest:\n"), Error);
  }

  TEST_CASE("placeholders and unary defaults") {
    support::TempDir dir;
    auto res = pipeline(dir, 1000, learn::Learner::C45);
    const auto& sk = *res.skeleton;
    const auto* id = sk.find_unpredicted("responsejson:id");
    REQUIRE(id);
    CHECK(id->reason == "high-cardinality");
    CHECK(id->is_placeholder());
    auto text = emit_skeleton(sk);
    CHECK(text.find("default=\"<EDIT-ME>\"") != std::string::npos);
    // Filling in the placeholder by hand.
    auto at = text.find("responsejson:id  reason=high-cardinality  default=\"<EDIT-ME>\"");
    REQUIRE(at != std::string::npos);
    text.replace(text.find("\"<EDIT-ME>\"", at), 11, "7");
    auto edited = parse_skeleton(text);
    const auto* filled = edited.find_unpredicted("responsejson:id");
    REQUIRE(filled);
    CHECK(filled->origin == Origin::Edited);
    CHECK(*filled->default_value == 7);
    serve::ServeState state;
    serve::synthesize_response(edited, request(traffic::Method::Post, "https://api.example.com/items/5"), state);
    auto got = serve::synthesize_response(edited, request(traffic::Method::Get, "https://api.example.com/items/5"), state);
    REQUIRE(got.body);
    CHECK(nlohmann::json::parse(*got.body)["id"] == 7);
  }

  TEST_CASE("a service with no predictable target") {
    features::InstanceTable t;
    t.schema = {{"method", features::Role::Input, {}}, {"statusCode", features::Role::Target, {}},
                {"responseheader:Server", features::Role::Target, {}}, {"responsejson:ok", features::Role::Target, {}}};
    for (int i = 0; i < 6; ++i) {
      t.instances.push_back({{i % 2 ? "GET" : "PUT", "200", "nginx", "no-exist"}, "t" + std::to_string(i)});
    }
    t = prep::coerce_to_nominal(std::move(t));
    auto [pruned, removals] = prep::prune_targets(t, {});
    auto text = emit_skeleton(pruned, removals, {}, {});
    auto sk = parse_skeleton(text);
    CHECK(sk.targets.empty());
    REQUIRE(sk.unpredicted.size() == 3);
    CHECK(*sk.find_unpredicted("statusCode")->default_value == 200);
    CHECK(*sk.find_unpredicted("responseheader:Server")->default_value == "nginx");
    CHECK(sk.find_unpredicted("responsejson:ok")->absent);
    CHECK(emit_skeleton(sk) == text);
    serve::ServeState state;
    auto r = serve::synthesize_response(sk, request(traffic::Method::Get, "http://h/x"), state);
    CHECK(r.status == 200);
    CHECK_FALSE(r.body);
  }

  TEST_CASE("schema digest mismatch warns") {
    support::TempDir dir;
    auto res = pipeline(dir, 400, learn::Learner::C45);
    auto text = emit_skeleton(*res.skeleton);
    const auto at = text.find("digest: ") + 8;
    text[at] = text[at] == '0' ? '1' : '0';
    auto sk = parse_skeleton(text);
    CHECK_FALSE(sk.warnings.empty());
  }

  TEST_CASE("decoding nominal values") {
    CHECK_FALSE(decode_body_value("no-exist"));
    CHECK(decode_body_value("null")->is_null());
    CHECK(*decode_body_value("lit:null") == "null");
    CHECK(*decode_body_value("true") == true);
    CHECK(*decode_body_value("42") == 42);
    CHECK(*decode_body_value("-1.5") == -1.5);
    CHECK(*decode_body_value("item-3") == "item-3");
  }

  TEST_CASE("path shapes") {
    traffic::ResourceKeyConfig cfg;
    CHECK(path_shape(request(traffic::Method::Get, "https://a.com/items/42"), cfg) == "GET /items/{id}");
    CHECK(path_shape(request(traffic::Method::Post, "https://a.com/items"), cfg) == "POST /items");
    CHECK(schema_digest({{"a", {}}}, {"b"}) != schema_digest({{"a", {}}}, {"c"}));
  }
}
