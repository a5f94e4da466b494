#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mockskel/error.hpp"
#include "mockskel/learners.hpp"
#include "mockskel/util.hpp"
#include "learn_internal.hpp"

namespace mockskel::learn {

namespace {

constexpr double kMaxDlSurplus = 64.0;
constexpr double kTheoryWeight = 0.5;

using Cond = std::pair<std::size_t, std::uint32_t>;
using CodedRule = std::vector<Cond>;
using Ruleset = std::vector<CodedRule>;

double subset_dl(double t, double k, double p) {
  p = std::clamp(p, 0.0, 1.0 - 1e-12);
  double rt = p > 0.0 ? -k * std::log2(p) : 0.0;
  if (t - k > 0.0) rt -= (t - k) * std::log2(1.0 - p);
  return rt;
}

// Bits needed to encode a rule with k conditions drawn from `total`.
double theory_dl(std::size_t conditions, double total) {
  if (conditions == 0) return 0.0;
  const double k = static_cast<double>(conditions);
  double tdl = std::log2(k);
  if (k > 1.0) tdl += 2.0 * std::log2(tdl);
  tdl += subset_dl(total, k, k / total);
  return kTheoryWeight * tdl;
}

// Bits needed to encode the exceptions of a ruleset.
double data_dl(double exp_fp_rate, double cover, double uncover, double fp, double fn) {
  const double total_bits = std::log2(cover + uncover + 1.0);
  double cover_bits = 0.0, uncover_bits = 0.0;
  if (cover > uncover) {
    const double exp_err = exp_fp_rate * (fp + fn);
    cover_bits = subset_dl(cover, fp, exp_err / cover);
    uncover_bits = uncover > 0.0 ? subset_dl(uncover, fn, fn / uncover) : 0.0;
  } else {
    const double exp_err = (1.0 - exp_fp_rate) * (fp + fn);
    cover_bits = cover > 0.0 ? subset_dl(cover, fp, fp / cover) : 0.0;
    uncover_bits = subset_dl(uncover, fn, exp_err / uncover);
  }
  return total_bits + cover_bits + uncover_bits;
}

class ClassStage {
 public:
  ClassStage(const CodedData& data, const RipperParams& params, std::uint32_t positive, double exp_fp_rate,
             double total_conditions, std::mt19937_64& rng)
      : data_(data),
        params_(params),
        positive_(positive),
        exp_fp_rate_(exp_fp_rate),
        total_conditions_(total_conditions),
        rng_(rng) {}

  bool covers(const CodedRule& rule, std::size_t row) const {
    return std::all_of(rule.begin(), rule.end(), [&](const Cond& c) { return data_.at(row, c.first) == c.second; });
  }

  bool is_pos(std::size_t row) const { return data_.y[row] == positive_; }

  std::vector<std::size_t> uncovered(const CodedRule& rule, std::span<const std::size_t> rows) const {
    std::vector<std::size_t> out;
    for (std::size_t r : rows) {
      if (!covers(rule, r)) out.push_back(r);
    }
    return out;
  }

  std::size_t positives(std::span<const std::size_t> rows) const {
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [&](std::size_t r) { return is_pos(r); }));
  }

  double ruleset_dl(const Ruleset& rules, std::span<const std::size_t> stage) const {
    double theory = 0.0;
    for (const auto& r : rules) theory += theory_dl(r.size(), total_conditions_);
    double cover = 0, uncover = 0, fp = 0, fn = 0;
    for (std::size_t row : stage) {
      const bool c = std::any_of(rules.begin(), rules.end(), [&](const CodedRule& r) { return covers(r, row); });
      const bool p = is_pos(row);
      if (c) {
        ++cover;
        if (!p) ++fp;
      } else {
        ++uncover;
        if (p) ++fn;
      }
    }
    return theory + data_dl(exp_fp_rate_, cover, uncover, fp, fn);
  }

  // Stratified grow/prune split; (folds-1)/folds of each class grows.
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split(std::span<const std::size_t> rows) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t r : rows) (is_pos(r) ? pos : neg).push_back(r);
    stable_shuffle(pos, rng_);
    stable_shuffle(neg, rng_);
    const std::size_t folds = std::max<std::size_t>(params_.folds, 2);
    std::vector<std::size_t> grow, prune;
    for (auto* group : {&pos, &neg}) {
      const std::size_t g = group->size() - group->size() / folds;
      grow.insert(grow.end(), group->begin(), group->begin() + std::ptrdiff_t(g));
      prune.insert(prune.end(), group->begin() + std::ptrdiff_t(g), group->end());
    }
    return {std::move(grow), std::move(prune)};
  }

  // Adds conditions by FOIL-style information gain (Laplace-corrected
  // accuracies) until the rule covers no negatives of `grow`.
  CodedRule grow(CodedRule rule, std::span<const std::size_t> grow_rows) const {
    std::vector<std::size_t> cover;
    for (std::size_t r : grow_rows) {
      if (covers(rule, r)) cover.push_back(r);
    }
    std::vector<bool> used(data_.width(), false);
    for (const auto& c : rule) used[c.first] = true;

    while (!cover.empty()) {
      const double p0 = static_cast<double>(positives(cover));
      const double t0 = static_cast<double>(cover.size());
      if (p0 == t0) break;
      const double base = std::log2((p0 + 1.0) / (t0 + 1.0));
      double best_gain = 0.0;
      std::optional<Cond> best;
      for (std::size_t a = 0; a < data_.width(); ++a) {
        if (used[a]) continue;
        const std::size_t nv = data_.domains[a].size();
        std::vector<double> p(nv, 0.0), t(nv, 0.0);
        for (std::size_t r : cover) {
          const auto v = data_.at(r, a);
          t[v] += 1.0;
          if (is_pos(r)) p[v] += 1.0;
        }
        for (std::size_t v = 0; v < nv; ++v) {
          if (p[v] < params_.min_rule_coverage) continue;
          const double gain = p[v] * (std::log2((p[v] + 1.0) / (t[v] + 1.0)) - base);
          if (gain > best_gain + 1e-12) {
            best_gain = gain;
            best = Cond{a, std::uint32_t(v)};
          }
        }
      }
      if (!best) break;
      rule.push_back(*best);
      used[best->first] = true;
      std::vector<std::size_t> next;
      for (std::size_t r : cover) {
        if (data_.at(r, best->first) == best->second) next.push_back(r);
      }
      cover = std::move(next);
    }
    return rule;
  }

  // Keeps the prefix maximizing (p - n) / (p + n) on the prune rows, or,
  // with `whole`, the rule's accuracy over all prune rows. Shortest wins ties.
  CodedRule prune(CodedRule rule, std::span<const std::size_t> prune_rows, bool whole,
                  std::size_t keep_at_least = 1) const {
    if (prune_rows.empty() || rule.size() <= keep_at_least) return rule;
    double best_worth = -std::numeric_limits<double>::infinity();
    std::size_t best_len = rule.size();
    const double total = static_cast<double>(prune_rows.size());
    const double all_neg = total - static_cast<double>(positives(prune_rows));
    for (std::size_t len = std::max<std::size_t>(keep_at_least, 1); len <= rule.size(); ++len) {
      double p = 0, n = 0;
      for (std::size_t r : prune_rows) {
        bool c = true;
        for (std::size_t k = 0; k < len && c; ++k) c = data_.at(r, rule[k].first) == rule[k].second;
        if (!c) continue;
        (is_pos(r) ? p : n) += 1.0;
      }
      double worth;
      if (whole) {
        worth = (p + (all_neg - n)) / total;
      } else {
        worth = p + n > 0.0 ? (p - n) / (p + n) : 0.0;
      }
      if (worth > best_worth + 1e-12) {
        best_worth = worth;
        best_len = len;
      }
    }
    rule.resize(best_len);
    return rule;
  }

  CodedRule grow_and_prune(std::span<const std::size_t> rows) {
    if (rows.size() < params_.folds) return grow({}, rows);
    auto [g, p] = split(rows);
    return prune(grow({}, g), p, false);
  }

  // Adds rules until the positives run out or a stopping test fires.
  void extend(Ruleset& rules, std::span<const std::size_t> stage, double& min_dl) {
    std::vector<std::size_t> remaining(stage.begin(), stage.end());
    for (const auto& r : rules) remaining = uncovered(r, remaining);
    while (positives(remaining) > 0) {
      CodedRule rule = grow_and_prune(remaining);
      if (rule.empty()) break;
      double coverage = 0, tp = 0, fp = 0;
      for (std::size_t r : remaining) {
        if (!covers(rule, r)) continue;
        ++coverage;
        (is_pos(r) ? tp : fp) += 1.0;
      }
      rules.push_back(rule);
      const double dl = ruleset_dl(rules, stage);
      min_dl = std::min(min_dl, dl);
      const bool stop = dl > min_dl + kMaxDlSurplus || tp <= 0.0 || fp / coverage >= 0.5;
      if (stop) {
        rules.pop_back();
        break;
      }
      remaining = uncovered(rule, remaining);
    }
  }

  void optimize(Ruleset& rules, std::span<const std::size_t> stage) {
    Ruleset revised;
    std::vector<std::size_t> remaining(stage.begin(), stage.end());
    for (std::size_t i = 0; i < rules.size(); ++i) {
      if (positives(remaining) == 0) break;
      std::vector<CodedRule> variants = {rules[i]};
      if (remaining.size() >= params_.folds) {
        auto [g, p] = split(remaining);
        CodedRule replacement = prune(grow({}, g), p, true);
        if (!replacement.empty()) variants.push_back(std::move(replacement));
        CodedRule revision = prune(grow(rules[i], g), p, true, rules[i].size());
        if (revision != rules[i]) variants.push_back(std::move(revision));
      }
      std::size_t best = 0;
      double best_dl = std::numeric_limits<double>::infinity();
      for (std::size_t v = 0; v < variants.size(); ++v) {
        Ruleset candidate = revised;
        candidate.push_back(variants[v]);
        candidate.insert(candidate.end(), rules.begin() + std::ptrdiff_t(i) + 1, rules.end());
        const double dl = ruleset_dl(candidate, stage);
        if (dl < best_dl - 1e-9) {
          best_dl = dl;
          best = v;
        }
      }
      revised.push_back(variants[best]);
      remaining = uncovered(revised.back(), remaining);
    }
    double min_dl = ruleset_dl(revised, stage);
    extend(revised, stage, min_dl);
    rules = std::move(revised);
  }

  // Deletes rules, last first, whenever that lowers the description length.
  void reduce(Ruleset& rules, std::span<const std::size_t> stage) const {
    for (std::size_t i = rules.size(); i-- > 0;) {
      Ruleset without = rules;
      without.erase(without.begin() + std::ptrdiff_t(i));
      if (ruleset_dl(without, stage) < ruleset_dl(rules, stage) - 1e-9) rules = std::move(without);
    }
  }

 private:
  const CodedData& data_;
  const RipperParams& params_;
  std::uint32_t positive_;
  double exp_fp_rate_;
  double total_conditions_;
  std::mt19937_64& rng_;
};

}  // namespace

RuleList train_ripper(const CodedData& data, std::span<const std::size_t> rows_in, const RipperParams& params) {
  const auto rows = detail::all_rows(data, rows_in);
  if (rows.empty()) throw degenerate_error("cannot train on 0 instances");

  RuleList list;
  list.attributes = data.attributes;
  list.target = data.target;

  const auto counts = detail::class_counts(data, rows);
  std::vector<std::uint32_t> order;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] > 0) order.push_back(std::uint32_t(c));
  }
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return counts[a] < counts[b]; });

  double total_conditions = 0.0;
  for (const auto& d : data.domains) total_conditions += static_cast<double>(d.size());
  total_conditions = std::max(total_conditions, 1.0);

  std::mt19937_64 rng(params.seed);
  std::vector<std::size_t> stage = rows;
  for (std::size_t k = 0; k + 1 < order.size(); ++k) {
    const auto cls = order[k];
    double all = 0.0;
    for (std::size_t j = k; j < order.size(); ++j) all += static_cast<double>(counts[order[j]]);
    const double exp_fp_rate = static_cast<double>(counts[cls]) / all;

    ClassStage s(data, params, cls, exp_fp_rate, total_conditions, rng);
    const std::size_t pos = s.positives(stage);
    if (pos == 0) continue;
    double min_dl = data_dl(exp_fp_rate, 0.0, double(stage.size()), 0.0, double(pos));
    Ruleset rules;
    s.extend(rules, stage, min_dl);
    for (std::size_t run = 0; run < params.optimization_runs && !rules.empty(); ++run) s.optimize(rules, stage);
    s.reduce(rules, stage);

    for (const auto& r : rules) {
      Rule rule;
      for (const auto& [a, v] : r) rule.conditions.push_back({a, data.domains[a][v]});
      rule.klass = data.classes[cls];
      list.rules.push_back(std::move(rule));
      stage = s.uncovered(r, stage);
    }
  }
  list.default_class = data.classes[order.empty() ? 0 : order.back()];
  detail::fill_rule_counts(list, data, rows);
  return list;
}

}  // namespace mockskel::learn
