#pragma once

// Brute-force reference measures computed straight from string columns,
// sharing no code with the library.

#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace oracle {

inline double entropy_of(const std::map<std::string, double>& counts) {
  double total = 0;
  for (const auto& [k, c] : counts) total += c;
  double h = 0;
  for (const auto& [k, c] : counts) {
    if (c > 0) h -= c / total * std::log2(c / total);
  }
  return h;
}

inline double entropy(const std::vector<double>& counts) {
  std::map<std::string, double> m;
  for (std::size_t i = 0; i < counts.size(); ++i) m[std::to_string(i)] = counts[i];
  return entropy_of(m);
}

struct Split {
  double gain = 0;
  double split_info = 0;
  double ratio = 0;
  std::size_t branches_at_least = 0;  // branches holding >= min_leaf rows
};

// Contingency table of `attr` against `klass`.
inline Split split(const std::vector<std::string>& attr, const std::vector<std::string>& klass, std::size_t min_leaf) {
  std::map<std::string, std::map<std::string, double>> table;
  std::map<std::string, double> overall, sizes;
  for (std::size_t i = 0; i < attr.size(); ++i) {
    table[attr[i]][klass[i]] += 1;
    overall[klass[i]] += 1;
    sizes[attr[i]] += 1;
  }
  const double n = double(attr.size());
  Split s;
  double remainder = 0;
  for (const auto& [v, counts] : table) {
    remainder += sizes[v] / n * entropy_of(counts);
    s.split_info -= sizes[v] / n * std::log2(sizes[v] / n);
    if (sizes[v] >= double(min_leaf)) ++s.branches_at_least;
  }
  s.gain = entropy_of(overall) - remainder;
  s.ratio = s.split_info > 0 ? s.gain / s.split_info : 0.0;
  return s;
}

}  // namespace oracle
