#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include "caa/error.hpp"
#include "caa/types.hpp"

namespace caa {

enum class AlphaMetric { Interval, Nominal };

struct AlphaResult {
  double alpha = 1.0;
  /// Expected disagreement is zero (one value used throughout); alpha is
  /// reported as 1.0 by convention.
  bool degenerate = false;
};

/// Krippendorff's alpha from the coincidence matrix. Each unit holds the
/// integer values assigned to it; units with fewer than two values are not
/// pairable and are ignored.
inline AlphaResult krippendorff_alpha(const std::vector<std::vector<int>>& units,
                                      AlphaMetric metric = AlphaMetric::Interval) {
  // Coincidences o[c][k], accumulated from per-unit value counts.
  std::map<int, std::map<int, double>> o;
  std::size_t pairable_units = 0;
  for (const auto& unit : units) {
    if (unit.size() < 2) continue;
    ++pairable_units;
    std::map<int, double> counts;
    for (int v : unit) counts[v] += 1.0;
    const double m = static_cast<double>(unit.size());
    for (const auto& [c, nc] : counts)
      for (const auto& [k, nk] : counts)
        o[c][k] += nc * (c == k ? nk - 1.0 : nk) / (m - 1.0);
  }
  if (pairable_units < 2)
    throw DataError("Krippendorff's alpha needs at least two units with two or more values");

  auto delta2 = [metric](int c, int k) {
    if (metric == AlphaMetric::Nominal) return c == k ? 0.0 : 1.0;
    double d = static_cast<double>(c - k);
    return d * d;
  };

  std::map<int, double> marginal;
  double n = 0;
  for (const auto& [c, row] : o)
    for (const auto& [k, v] : row) {
      marginal[c] += v;
      n += v;
    }

  double observed = 0;
  for (const auto& [c, row] : o)
    for (const auto& [k, v] : row) observed += v * delta2(c, k);
  observed /= n;

  double expected = 0;
  for (const auto& [c, nc] : marginal)
    for (const auto& [k, nk] : marginal) expected += nc * nk * delta2(c, k);
  expected /= n * (n - 1.0);

  if (expected == 0.0) return {1.0, true};
  return {1.0 - observed / expected, false};
}

/// Alpha over a lexicon's judgement values, one unit per instance.
inline AlphaResult krippendorff_alpha(const Lexicon& lexicon,
                                      AlphaMetric metric = AlphaMetric::Interval) {
  std::vector<std::vector<int>> units;
  units.reserve(lexicon.instances.size());
  for (const auto& inst : lexicon.instances) {
    std::vector<int> vals;
    for (const auto& j : inst.judgements) vals.push_back(j.value);
    units.push_back(std::move(vals));
  }
  return krippendorff_alpha(units, metric);
}

}  // namespace caa
