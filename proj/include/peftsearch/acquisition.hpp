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

#ifndef PEFTSEARCH_ACQUISITION_HPP_
#define PEFTSEARCH_ACQUISITION_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "peftsearch/config_space.hpp"
#include "peftsearch/gp_surrogate.hpp"
#include "peftsearch/objectives.hpp"
#include "peftsearch/pareto.hpp"

namespace peftsearch {

struct AcquisitionSpec {
  std::size_t mc_samples = 128;
  // Defaults to the nadir of the observations.
  std::optional<ObjectiveVector> ref_point;
  std::uint64_t seed = 0;
  // Surrogate for the score.
  gp::Ensemble ensemble;
  // Optional surrogate for the cost. When empty, costs are the exact
  // parameter fractions and only scores are sampled.
  gp::Ensemble cost_ensemble;
};

// Noisy expected hypervolume improvement, estimated by Monte Carlo.
//
// For every ensemble member and sample, scores at all observed
// configurations and at the candidate are drawn jointly from the posterior;
// the candidate's gain is the hypervolume it adds to the sampled front. The
// observed part of each draw is fixed at construction and the candidate part
// is drawn conditionally on it with a fixed base sample, so repeated calls
// are deterministic and candidates are compared under common random numbers.
class NehviAcquisition {
 public:
  struct Estimate {
    double value = 0.0;
    double std_error = 0.0;
  };

  NehviAcquisition(const SearchSpaceSpec& space, AcquisitionSpec spec,
                   std::span<const Observation> observations);
  ~NehviAcquisition();
  NehviAcquisition(NehviAcquisition&&) noexcept;
  NehviAcquisition& operator=(NehviAcquisition&&) noexcept;

  Estimate estimate(const Configuration& candidate) const;
  double operator()(const Configuration& candidate) const { return estimate(candidate).value; }

  const ObjectiveVector& ref_point() const;
  std::size_t mc_samples() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Convenience wrapper: builds the acquisition and evaluates one candidate.
double nehvi(const SearchSpaceSpec& space, const AcquisitionSpec& spec,
             std::span<const Observation> observations, const Configuration& candidate);

struct LocalSearchResult {
  Configuration config;
  double value = 0.0;
};

using AcquisitionFn = std::function<double(const Configuration&)>;
using ExcludedFn = std::function<bool(const Configuration&)>;

inline constexpr int kDefaultMaxSteps = 64;

// Hill-climbs from every start over config_space neighbors. Candidates are
// ranked by (acquisition desc, parameter count asc, encoding asc); a
// trajectory moves to its best neighbor while that neighbor ranks strictly
// above the current point, for at most max_steps moves. Returns the best
// ranked configuration seen on any trajectory (starts and scanned neighbors
// included) that is not excluded, or nullopt when every one was excluded.
// Throws std::invalid_argument on empty starts.
std::optional<LocalSearchResult> local_search(const SearchSpaceSpec& space,
                                              const AcquisitionFn& acq,
                                              std::span<const Configuration> starts,
                                              int max_steps = kDefaultMaxSteps,
                                              const ExcludedFn& excluded = {});

}  // namespace peftsearch

#endif  // PEFTSEARCH_ACQUISITION_HPP_
