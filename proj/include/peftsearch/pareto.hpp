// Copyright 2026 The peftsearch Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PEFTSEARCH_PARETO_HPP_
#define PEFTSEARCH_PARETO_HPP_

#include <iosfwd>
#include <span>
#include <vector>

#include "peftsearch/config_space.hpp"

namespace peftsearch {

// Bi-objective value of a configuration: score is maximized, cost minimized.
// Scores are "higher is better"; a loss would enter here negated.
struct ObjectiveVector {
  double score = 0.0;
  double cost = 0.0;

  bool operator==(const ObjectiveVector&) const = default;
};

// u is no worse than v in both objectives and strictly better in one.
constexpr bool dominates(const ObjectiveVector& u, const ObjectiveVector& v) {
  return u.score >= v.score && u.cost <= v.cost && (u.score > v.score || u.cost < v.cost);
}

struct ParetoEntry {
  Configuration config;
  ObjectiveVector objectives;

  bool operator==(const ParetoEntry&) const = default;
};

// Mutually non-dominated entries in ascending cost (and therefore ascending
// score) order.
struct ParetoFront {
  std::vector<ParetoEntry> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
  std::vector<ObjectiveVector> objectives() const;

  bool operator==(const ParetoFront&) const = default;
};

// Indices of the maximal elements, ordered by ascending cost. Exact duplicate
// vectors keep only the first occurrence. O(n log n).
std::vector<std::size_t> non_dominated_indices(std::span<const ObjectiveVector> points);

ParetoFront non_dominated(std::span<const ParetoEntry> points);
std::vector<ObjectiveVector> non_dominated(std::span<const ObjectiveVector> points);

// Exact 2-D hypervolume of the region dominated by `points` and bounded by
// `ref`. Points that do not dominate `ref` contribute nothing; dominated
// points are allowed and ignored.
double hypervolume(std::span<const ObjectiveVector> points, const ObjectiveVector& ref);
double hypervolume(const ParetoFront& front, const ObjectiveVector& ref);

// hypervolume(front + {p}) - hypervolume(front) in O(|front|). `front` must be
// mutually non-dominated and sorted by ascending cost.
double hypervolume_improvement(std::span<const ObjectiveVector> front, const ObjectiveVector& p,
                               const ObjectiveVector& ref);

// (min score, max cost). Throws Error on empty input.
ObjectiveVector nadir(std::span<const ObjectiveVector> points);

// One line per entry: {"config":{...},"score":s,"cost":c}, ascending cost.
void write_front(std::ostream& out, const ParetoFront& front);
ParetoFront read_front(std::istream& in, const SearchSpaceSpec& spec);

}  // namespace peftsearch

#endif  // PEFTSEARCH_PARETO_HPP_
