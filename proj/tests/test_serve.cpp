#include <atomic>
#include <thread>

#include <doctest.h>
#include <httplib.h>

#include "mockskel/cli.hpp"
#include "mockskel/error.hpp"
#include "mockskel/serve.hpp"
#include "mockskel/skeleton.hpp"
#include "support.hpp"

using namespace mockskel;
using namespace mockskel::serve;
using traffic::Method;

namespace {

const std::string kBase = "https://api.example.com/items/";

// One skeleton learned from the synthetic service, shared across cases.
const skeleton::MockSkeleton& items_skeleton() {
  static const skeleton::MockSkeleton sk = [] {
    support::TempDir dir;
    cli::RunConfig cfg;
    cfg.inputs = {support::write_synthetic(dir, 3000)};
    cfg.learners = {learn::Learner::C45};
    return skeleton::parse_skeleton(skeleton::emit_skeleton(*cli::run_pipeline(cfg, false, true).skeleton));
  }();
  return sk;
}

traffic::HttpRequest request(Method m, std::string uri, std::optional<std::string> body = std::nullopt) {
  traffic::HttpRequest r;
  r.method = m;
  r.uri = std::move(uri);
  r.headers.add("Accept", "application/json");
  if (body) {
    r.headers.add("Content-Type", "application/json");
    r.body = std::move(body);
    r.body_content_type = "application/json";
  }
  return r;
}

int status_of(ServeState& state, Method m, const std::string& id, std::optional<std::string> body = std::nullopt) {
  return synthesize_response(items_skeleton(), request(m, kBase + id, std::move(body)), state).status;
}

}  // namespace

TEST_SUITE("serve") {
  TEST_CASE("stateful item lifecycle") {
    ServeState state;
    auto r = synthesize_response(items_skeleton(), request(Method::Get, kBase + "17"), state);
    CHECK(r.status == 404);
    CHECK(status_of(state, Method::Post, "17", R"({"name":"item-3"})") == 201);
    auto got = synthesize_response(items_skeleton(), request(Method::Get, kBase + "17"), state);
    CHECK(got.status == 200);
    REQUIRE(got.body);
    auto body = nlohmann::json::parse(*got.body);
    CHECK(body.contains("name"));
    CHECK(body.contains("done"));
    CHECK(got.headers.find("Content-Type") == std::optional<std::string_view>("application/json"));
    CHECK(status_of(state, Method::Patch, "17", R"({"done":true})") == 200);
    CHECK(status_of(state, Method::Patch, "17", "{done:") == 400);
    CHECK(status_of(state, Method::Delete, "17") == 204);
    CHECK(status_of(state, Method::Get, "18") == 404);
    CHECK(state.history_length(traffic::resource_key(request(Method::Get, kBase + "17"), {})) == 6);
    CHECK(state.resources() == 2);
  }

  TEST_CASE("bodiless statuses carry no body") {
    ServeState state;
    status_of(state, Method::Post, "4", R"({"name":"item-4"})");
    auto del = synthesize_response(items_skeleton(), request(Method::Delete, kBase + "4"), state);
    CHECK(del.status == 204);
    CHECK_FALSE(del.body);
  }

  TEST_CASE("unmatched requests are counted") {
    ServeState state;
    bool unmatched = false;
    auto f = request_features(items_skeleton(), request(Method::Get, kBase + "1/sub/2"), {}, &unmatched);
    CHECK(unmatched);
    request_features(items_skeleton(), request(Method::Get, kBase + "1"), {}, &unmatched);
    CHECK_FALSE(unmatched);
    MockServer server(items_skeleton(), "", {});
    server.handle(request(Method::Get, kBase + "1/sub/2"));
    server.handle(request(Method::Get, kBase + "1"));
    CHECK(server.stats()["unmatched"] == 1);
    CHECK(server.stats()["requests"] == 2);
  }

  TEST_CASE("header names match case-insensitively") {
    auto r = request(Method::Post, kBase + "1", R"({"name":"x"})");
    traffic::HttpRequest lower = r;
    lower.headers = {};
    lower.headers.add("accept", "application/json");
    lower.headers.add("content-type", "application/json");
    CHECK(request_features(items_skeleton(), lower, {}) == request_features(items_skeleton(), r, {}));
  }

  TEST_CASE("reset restores the initial state") {
    MockServer server(items_skeleton(), "", {});
    std::vector<traffic::HttpRequest> script{request(Method::Get, kBase + "9"),
                                             request(Method::Post, kBase + "9", R"({"name":"item-2"})"),
                                             request(Method::Get, kBase + "9")};
    std::vector<SynthesizedResponse> first, second;
    for (const auto& r : script) first.push_back(server.handle(r));
    server.reset();
    CHECK(server.state().resources() == 0);
    for (const auto& r : script) second.push_back(server.handle(r));
    CHECK(first == second);
    CHECK(server.stats()["resets"] == 1);
    MockServer other(items_skeleton(), "", {});
    for (std::size_t i = 0; i < script.size(); ++i) CHECK(other.handle(script[i]) == first[i]);
  }

  TEST_CASE("strict mode rejects unseen shapes") {
    ServerOptions opts;
    opts.strict = true;
    MockServer server(items_skeleton(), "", opts);
    CHECK(server.handle(request(Method::Put, kBase + "3")).status == 501);
    CHECK(server.handle(request(Method::Get, "https://api.example.com/other")).status == 501);
    CHECK(server.handle(request(Method::Get, kBase + "3")).status == 404);
    CHECK(server.stats()["rejected"] == 2);
    MockServer lenient(items_skeleton(), "", {});
    CHECK(lenient.handle(request(Method::Put, kBase + "3")).status != 501);
  }

  TEST_CASE("replaying the training traffic reproduces statuses") {
    synth::SynthConfig cfg;
    cfg.transactions = 3000;
    auto log = synth::generate(cfg);
    ServeState state;
    std::size_t same = 0;
    for (const auto& t : log.transactions) same += synthesize_response(items_skeleton(), t.request, state).status == t.response.status;
    CHECK(double(same) / double(log.transactions.size()) >= 0.95);
    CHECK(state.counters().unmatched == 0);
  }

  TEST_CASE("concurrent clients on distinct resources") {
    MockServer server(items_skeleton(), "", {});
    std::atomic<int> wrong{0};
    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t) {
      threads.emplace_back([&, t] {
        for (int i = 0; i < 20; ++i) {
          const auto uri = kBase + std::to_string(1000 + t * 100 + i);
          wrong += server.handle(request(Method::Get, uri)).status != 404;
          wrong += server.handle(request(Method::Post, uri, R"({"name":"item-1"})")).status != 201;
          wrong += server.handle(request(Method::Get, uri)).status != 200;
          wrong += server.handle(request(Method::Delete, uri)).status != 204;
        }
      });
    }
    for (auto& th : threads) th.join();
    CHECK(wrong == 0);
    CHECK(server.state().resources() == 160);
    CHECK(server.stats()["requests"] == 640);
  }

  TEST_CASE("unflatten") {
    using nlohmann::json;
    auto j = unflatten({{"responsejson:a.b", 1}, {"responsejson:a.c", "x"}, {"responsejson:items.name", "n"},
                        {"statusCode", 200}},
                       {"responsejson:items"});
    REQUIRE(j);
    CHECK(j->dump() == R"({"a":{"b":1,"c":"x"},"items":[{"name":"n"}]})");
    CHECK_FALSE(unflatten({{"statusCode", 200}}, {}));
  }

  TEST_CASE("HTTP front end") {
    const auto text = skeleton::emit_skeleton(items_skeleton());
    ServerOptions opts;
    opts.port = 0;
    MockServer server(items_skeleton(), text, opts);
    const int port = server.bind();
    REQUIRE(port > 0);
    std::thread th([&] { server.listen(); });
    httplib::Client client("127.0.0.1", port);
    client.set_default_headers({{"Host", "api.example.com"}});

    auto miss = client.Get("/items/77", {{"Accept", "application/json"}});
    REQUIRE(miss);
    CHECK(miss->status == 404);
    auto post = client.Post("/items/77", {{"Accept", "application/json"}}, R"({"name":"item-0"})", "application/json");
    REQUIRE(post);
    CHECK(post->status == 201);
    auto get = client.Get("/items/77", {{"Accept", "application/json"}});
    REQUIRE(get);
    CHECK(get->status == 200);
    CHECK(get->get_header_value("Content-Type") == "application/json");
    CHECK(nlohmann::json::parse(get->body).contains("done"));

    auto stats = client.Get("/_mock/stats");
    REQUIRE(stats);
    CHECK(nlohmann::json::parse(stats->body)["requests"] == 3);
    auto sk = client.Get("/_mock/skeleton");
    REQUIRE(sk);
    CHECK(sk->body == text);
    auto reset = client.Post("/_mock/reset", "", "text/plain");
    REQUIRE(reset);
    CHECK(reset->status == 200);
    auto again = client.Get("/items/77", {{"Accept", "application/json"}});
    REQUIRE(again);
    CHECK(again->status == 404);
    auto nope = client.Get("/_mock/nope");
    REQUIRE(nope);
    CHECK(nope->status == 404);

    server.stop();
    th.join();
  }

  TEST_CASE("binding a foreign address fails with an io error") {
    ServerOptions opts;
    opts.host = "203.0.113.7";
    opts.port = 0;
    MockServer b(items_skeleton(), "", opts);
    try {
      b.bind();
      FAIL("expected bind failure");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Io);
    }
  }
}
