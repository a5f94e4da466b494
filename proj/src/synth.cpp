#include <random>
#include <vector>

#include "mockskel/synth.hpp"

namespace mockskel::synth {

using traffic::Method;

int expected_status(Method method, bool exists, bool valid_json) {
  if (!exists) return method == Method::Post ? 201 : 404;
  switch (method) {
    case Method::Get: return 200;
    case Method::Patch: return valid_json ? 200 : 400;
    case Method::Delete: return 204;
    default: return 409;
  }
}

namespace {

enum class Stage { New, Live, Gone };

std::string item_body(std::size_t id, bool done) {
  return R"({"id":)" + std::to_string(id) + R"(,"name":"item-)" + std::to_string(id % 7) + R"(","done":)" +
         (done ? "true" : "false") + "}";
}

}  // namespace

traffic::TrafficLog generate(const SynthConfig& config) {
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Stage> stage(config.resources, Stage::New);
  std::vector<bool> done(config.resources, false);
  std::vector<std::size_t> live(config.resources);
  for (std::size_t i = 0; i < live.size(); ++i) live[i] = i;

  traffic::TrafficLog log;
  log.source = "synthetic";
  constexpr std::int64_t kBaseTime = 1700000000000;

  for (std::size_t seq = 0; seq < config.transactions && !live.empty(); ++seq) {
    const std::size_t slot = std::uniform_int_distribution<std::size_t>(0, live.size() - 1)(rng);
    const std::size_t id = live[slot] + 1;
    const bool exists = stage[id - 1] == Stage::Live;
    const double r = unit(rng);

    Method method;
    bool valid = true;
    if (!exists) {
      method = r < 0.5 ? Method::Post : r < 0.7 ? Method::Get : r < 0.85 ? Method::Patch : Method::Delete;
      if (method == Method::Patch) valid = unit(rng) < 0.5;
    } else {
      method = r < 0.55 ? Method::Get : r < 0.985 ? Method::Patch : Method::Delete;
      if (method == Method::Patch) valid = unit(rng) < 0.7;
    }

    traffic::HttpTransaction t;
    t.id = "t" + std::to_string(seq);
    t.sequence = std::int64_t(seq);
    t.timestamp = kBaseTime + std::int64_t(seq) * 1000;
    t.request.method = method;
    t.request.uri = config.base_url + "/" + std::to_string(id);
    t.request.headers.add("Accept", "application/json");
    if (method == Method::Post) {
      t.request.body = R"({"name":"item-)" + std::to_string(id % 7) + "\"}";
    } else if (method == Method::Patch) {
      t.request.body = valid ? std::string(R"({"done":true})") : std::string("{done:");
    }
    if (t.request.body) {
      t.request.headers.add("Content-Type", "application/json");
      t.request.body_content_type = "application/json";
    }

    const int status = expected_status(method, exists, valid);
    t.response.status = status;
    switch (status) {
      case 201:
        stage[id - 1] = Stage::Live;
        t.response.body = item_body(id, false);
        break;
      case 200:
        if (method == Method::Patch) done[id - 1] = true;
        t.response.body = item_body(id, done[id - 1]);
        break;
      case 204:
        stage[id - 1] = Stage::Gone;
        live.erase(live.begin() + std::ptrdiff_t(slot));
        break;
      case 404: t.response.body = R"({"error":"not_found"})"; break;
      case 400: t.response.body = R"({"error":"invalid_json"})"; break;
      default: break;
    }
    if (t.response.body) t.response.headers.add("Content-Type", "application/json");
    t.response.headers.add("X-Request-Id", "req-" + std::to_string(seq));
    log.transactions.push_back(std::move(t));
  }
  return log;
}

}  // namespace mockskel::synth
