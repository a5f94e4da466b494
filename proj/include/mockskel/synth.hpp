#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "mockskel/traffic.hpp"

namespace mockskel::synth {

// A small create/read/update/delete item service with known behaviour:
//   POST on a new item            -> 201
//   GET/PATCH/DELETE on a new item -> 404
//   GET on a created item          -> 200
//   PATCH with a valid JSON body   -> 200, invalid JSON -> 400
//   DELETE on a created item       -> 204, after which the item sees no traffic
struct SynthConfig {
  std::size_t transactions = 5000;
  std::size_t resources = 200;
  std::uint64_t seed = 1;
  std::string base_url = "https://api.example.com/items";
};

traffic::TrafficLog generate(const SynthConfig& config = {});

// Status the service returns for a request, given whether the item exists.
int expected_status(traffic::Method method, bool exists, bool valid_json);

}  // namespace mockskel::synth
