#pragma once

#include <span>
#include <vector>

#include "mockskel/learners.hpp"

namespace mockskel::learn::detail {

// Empty `rows` selects every row.
std::vector<std::size_t> all_rows(const CodedData& data, std::span<const std::size_t> rows);
std::vector<std::size_t> class_counts(const CodedData& data, std::span<const std::size_t> rows);
// Lowest class index wins ties.
std::size_t majority(std::span<const std::size_t> counts);
double entropy_or_zero(std::span<const std::size_t> counts);

// Best split among `candidates` by gain ratio: positive gain and at least two
// branches of `min_leaf` instances required; ties go to the lower attribute
// index. Returns nothing when no attribute qualifies.
std::optional<std::size_t> best_split(const CodedData& data, std::span<const std::size_t> rows,
                                      const std::vector<bool>& used, std::size_t min_leaf);

// Rows of `rows` grouped by their value of `attribute`, ascending value code,
// empty groups omitted.
std::vector<std::pair<std::uint32_t, std::vector<std::size_t>>> partition(const CodedData& data,
                                                                         std::span<const std::size_t> rows,
                                                                         std::size_t attribute);

// Fills first-match counts of a trained list over `rows`.
void fill_rule_counts(RuleList& list, const CodedData& data, std::span<const std::size_t> rows);

}  // namespace mockskel::learn::detail
