#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mockskel {

bool iequals(std::string_view a, std::string_view b);
std::string to_lower(std::string_view s);
bool starts_with_icase(std::string_view s, std::string_view prefix);

// Splits on `sep`, dropping empty pieces.
std::vector<std::string> split_nonempty(std::string_view s, char sep);

std::string base64_encode(std::string_view bytes);
std::optional<std::string> base64_decode(std::string_view text);

bool is_valid_utf8(std::string_view bytes);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

// Parses an RFC 3339 / ISO 8601 timestamp into epoch milliseconds.
std::optional<std::int64_t> parse_iso8601_ms(std::string_view text);

// Deterministic Fisher-Yates shuffle driven by a 64-bit Mersenne twister.
// Does not go through std::uniform_int_distribution so results are stable
// across standard library implementations.
template <typename T, typename Rng>
void stable_shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace mockskel
