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

#include "peftsearch/pareto.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>

#include "peftsearch/errors.hpp"
#include "peftsearch/io.hpp"

namespace peftsearch {

std::vector<ObjectiveVector> ParetoFront::objectives() const {
  std::vector<ObjectiveVector> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.objectives);
  return out;
}

std::vector<std::size_t> non_dominated_indices(std::span<const ObjectiveVector> points) {
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Ascending cost, then descending score; stable keeps first-seen duplicates first.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (points[a].cost != points[b].cost) return points[a].cost < points[b].cost;
    return points[a].score > points[b].score;
  });
  std::vector<std::size_t> keep;
  for (std::size_t idx : order) {
    // Anything kept so far is no more expensive, so only a strictly higher
    // score survives.
    if (keep.empty() || points[idx].score > points[keep.back()].score) keep.push_back(idx);
  }
  return keep;
}

ParetoFront non_dominated(std::span<const ParetoEntry> points) {
  std::vector<ObjectiveVector> obj;
  obj.reserve(points.size());
  for (const auto& p : points) obj.push_back(p.objectives);
  ParetoFront front;
  for (std::size_t idx : non_dominated_indices(obj)) front.entries.push_back(points[idx]);
  return front;
}

std::vector<ObjectiveVector> non_dominated(std::span<const ObjectiveVector> points) {
  std::vector<ObjectiveVector> out;
  for (std::size_t idx : non_dominated_indices(points)) out.push_back(points[idx]);
  return out;
}

double hypervolume(std::span<const ObjectiveVector> points, const ObjectiveVector& ref) {
  std::vector<ObjectiveVector> inside;
  for (const auto& p : points) {
    if (p.score > ref.score && p.cost < ref.cost) inside.push_back(p);
  }
  std::sort(inside.begin(), inside.end(), [](const ObjectiveVector& a, const ObjectiveVector& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.cost < b.cost;
  });
  double volume = 0.0;
  double prev_cost = ref.cost;
  for (const auto& p : inside) {
    if (p.cost < prev_cost) {
      volume += (p.score - ref.score) * (prev_cost - p.cost);
      prev_cost = p.cost;
    }
  }
  return volume;
}

double hypervolume(const ParetoFront& front, const ObjectiveVector& ref) {
  const auto obj = front.objectives();
  return hypervolume(obj, ref);
}

double hypervolume_improvement(std::span<const ObjectiveVector> front, const ObjectiveVector& p,
                               const ObjectiveVector& ref) {
  if (!(p.score > ref.score && p.cost < ref.cost)) return 0.0;
  // Best front score available at cost <= p.cost.
  auto it = std::upper_bound(front.begin(), front.end(), p.cost,
                             [](double c, const ObjectiveVector& v) { return c < v.cost; });
  double level = ref.score;
  if (it != front.begin()) level = std::max(level, std::prev(it)->score);
  double gain = 0.0;
  double from = p.cost;
  while (level < p.score) {
    const double to = (it == front.end()) ? ref.cost : std::min(it->cost, ref.cost);
    gain += (p.score - level) * (to - from);
    if (it == front.end() || it->cost >= ref.cost) break;
    level = std::max(level, it->score);
    from = to;
    ++it;
  }
  return gain;
}

ObjectiveVector nadir(std::span<const ObjectiveVector> points) {
  if (points.empty()) throw Error("nadir of an empty point set is undefined");
  ObjectiveVector n = points.front();
  for (const auto& p : points) {
    n.score = std::min(n.score, p.score);
    n.cost = std::max(n.cost, p.cost);
  }
  return n;
}

void write_front(std::ostream& out, const ParetoFront& front) {
  for (const auto& e : front.entries) {
    out << "{\"config\":" << to_text(e.config) << ",\"score\":" << format_double(e.objectives.score)
        << ",\"cost\":" << format_double(e.objectives.cost) << "}\n";
  }
}

ParetoFront read_front(std::istream& in, const SearchSpaceSpec& spec) {
  ParetoFront front;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const Json j = Json::parse(line);
      front.entries.push_back(ParetoEntry{
          config_from_json(spec, j.at("config")),
          ObjectiveVector{j.at("score").get<double>(), j.at("cost").get<double>()}});
    } catch (const Json::exception& e) {
      throw ParseError(e.what(), lineno);
    } catch (const InvalidConfigurationError& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return front;
}

}  // namespace peftsearch
