#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mockskel/features.hpp"
#include "mockskel/skeleton.hpp"
#include "mockskel/traffic.hpp"

namespace mockskel::serve {

struct Counters {
  std::uint64_t requests = 0;
  std::uint64_t unmatched = 0;  // requests carrying inputs the skeleton never saw
  std::uint64_t rejected = 0;   // strict-mode 501s
  std::uint64_t resets = 0;
};

// Per-resource transaction summaries. Access to one resource is serialized;
// distinct resources proceed in parallel.
class ServeState {
 public:
  struct Slot {
    std::mutex mutex;
    std::vector<features::HistoryEntry> history;
  };

  // Slot for `key`, created on first use.
  std::shared_ptr<Slot> slot(const traffic::ResourceKey& key);
  std::size_t history_length(const traffic::ResourceKey& key) const;
  std::size_t resources() const;

  // Clears every history; counters survive.
  void reset();

  void count_request(bool unmatched);
  void count_rejected();
  Counters counters() const;

 private:
  mutable std::mutex mutex_;
  std::map<traffic::ResourceKey, std::shared_ptr<Slot>> slots_;
  std::atomic<std::uint64_t> requests_{0}, unmatched_{0}, rejected_{0}, resets_{0};
};

struct SynthesizedResponse {
  int status = 200;
  traffic::Headers headers;
  std::optional<std::string> body;

  bool operator==(const SynthesizedResponse&) const = default;
};

// Input features of `request` keyed by the skeleton's input names; request
// header names match case-insensitively. `unmatched` reports features the
// skeleton has no input for.
features::FeatureMap request_features(const skeleton::MockSkeleton& skeleton, const traffic::HttpRequest& request,
                                      std::span<const features::HistoryEntry> history, bool* unmatched = nullptr);

// Classifies every predicted target against `request` and the resource's
// history, assembles the response and appends the transaction to the history.
SynthesizedResponse synthesize_response(const skeleton::MockSkeleton& skeleton, const traffic::HttpRequest& request,
                                        ServeState& state);

// The body assembled from `responsejson:*` values (dot paths, array paths
// as single-element arrays). Nothing when no key has a value.
std::optional<nlohmann::ordered_json> unflatten(const std::vector<std::pair<std::string, nlohmann::json>>& values,
                                                const std::set<std::string>& array_paths);

struct ServerOptions {
  bool strict = false;
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
};

// HTTP front end. Control endpoints live under /_mock/.
class MockServer {
 public:
  MockServer(skeleton::MockSkeleton skeleton, std::string skeleton_text, ServerOptions options,
             std::ostream* log = nullptr);
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  // Handles one request in-process, as the HTTP front end would.
  SynthesizedResponse handle(const traffic::HttpRequest& request);
  nlohmann::ordered_json stats() const;
  void reset();

  // Binds and returns the port; throws Error(Io) when binding fails.
  int bind();
  // Serves until stop(); call bind() first.
  void listen();
  void stop();

  const ServeState& state() const { return state_; }

 private:
  struct Impl;
  skeleton::MockSkeleton skeleton_;
  std::string skeleton_text_;
  ServerOptions options_;
  std::ostream* log_;
  std::mutex log_mutex_;
  ServeState state_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mockskel::serve
