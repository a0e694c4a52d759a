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

#ifndef PEFTSEARCH_ORCHESTRATOR_HPP_
#define PEFTSEARCH_ORCHESTRATOR_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "peftsearch/acquisition.hpp"
#include "peftsearch/config_space.hpp"
#include "peftsearch/errors.hpp"
#include "peftsearch/gp_surrogate.hpp"
#include "peftsearch/objectives.hpp"
#include "peftsearch/pareto.hpp"

namespace peftsearch {

enum class SearchMode { kBayesian, kRandom };

struct RunConfig {
  SearchSpaceSpec space = bert_base_space();
  std::size_t n_init = 100;
  std::size_t n_total = 200;
  std::size_t batch_q = 1;
  double fidelity = 0.05;
  std::uint64_t master_seed = 0;
  // Never evaluate a configuration twice.
  bool dedup = true;
  // Refit hyperparameters every k BO batches; in between, the last fit is
  // conditioned on the new data.
  std::size_t refit_every = 1;
  gp::FitOptions fit;
  std::size_t mc_samples = 128;
  // Fixed reference point for the acquisition; defaults to the running nadir.
  std::optional<ObjectiveVector> ref_point;
  // Model the cost with its own surrogate instead of using the exact fraction.
  bool model_cost = false;
  int max_steps = kDefaultMaxSteps;
  // Snapshot rewritten at every batch boundary.
  std::optional<std::filesystem::path> state_path;
  // Append-only log, one line per evaluation.
  std::optional<std::filesystem::path> log_path;
  // Progress and fallback messages.
  std::function<void(const std::string&)> log;

  // Throws std::invalid_argument.
  void validate() const;
};

struct HvPoint {
  std::size_t evals = 0;
  double hv = 0.0;

  bool operator==(const HvPoint&) const = default;
};

struct RunState {
  std::vector<Observation> observations;
  std::uint64_t master_seed = 0;
  // Number of random fallbacks after acquisition exhaustion.
  std::size_t fallbacks = 0;
  std::vector<HvPoint> hv_trajectory;

  std::size_t iteration() const { return observations.size(); }
};

// Backend failure during a run. The state up to the last completed batch has
// been persisted; resume_token() names the state file to resume from (empty
// when the run had no state path).
class RunAborted : public Error {
 public:
  RunAborted(const std::string& what, std::string resume_token)
      : Error(what), resume_token_(std::move(resume_token)) {}
  const std::string& resume_token() const { return resume_token_; }

 private:
  std::string resume_token_;
};

using RunResult = std::pair<ParetoFront, RunState>;

// Random initialization followed by NEHVI-driven batches until n_total
// evaluations. Deterministic for deterministic backends.
RunResult run(const RunConfig& config, Backend& backend);
// All n_total points drawn from the same stream as run()'s initial design.
RunResult random_search(const RunConfig& config, Backend& backend);
// Continues the run persisted at `state_path` up to config.n_total. The mode
// is taken from the state file. Throws StateMismatchError or ParseError.
RunResult resume(const std::filesystem::path& state_path, const RunConfig& config,
                 Backend& backend);

// The first `count` configurations of the run's random design (distinct when
// dedup is set).
std::vector<Configuration> initial_design(const SearchSpaceSpec& space, std::uint64_t master_seed,
                                          std::size_t count, bool dedup);

std::uint64_t evaluation_seed(std::uint64_t master_seed, std::size_t index);

// Hypervolume of every prefix's front, against the nadir of the whole
// trajectory. Empty for an empty state.
std::vector<HvPoint> hypervolume_trajectory(const RunState& state);
std::vector<HvPoint> hypervolume_trajectory(std::span<const Observation> observations,
                                            const ObjectiveVector& ref);

ParetoFront final_front(const RunState& state);

// ---------------------------------------------------------------------------
// Persistence

struct StateHeader {
  SearchSpaceSpec space;
  std::uint64_t master_seed = 0;
  std::size_t n_init = 0;
  std::size_t batch_q = 1;
  double fidelity = 1.0;
  SearchMode mode = SearchMode::kBayesian;
};

struct LoadedState {
  StateHeader header;
  RunState state;
};

// {"config":{...},"score":s,"cost":c,"fidelity":f,"seed":n,"iteration":i,"wall_time_s":t}
std::string observation_record(const Observation& obs, std::size_t iteration);
Observation parse_observation_record(const SearchSpaceSpec& space, std::string_view line);

void write_state(std::ostream& out, const StateHeader& header, const RunState& state);
// Throws ParseError naming the offending line.
LoadedState read_state(std::istream& in);
LoadedState load_state(const std::filesystem::path& path);
// Writes through a temporary file and renames it into place.
void save_state(const std::filesystem::path& path, const StateHeader& header,
                const RunState& state);

void write_hv_csv(std::ostream& out, std::span<const HvPoint> trajectory);

}  // namespace peftsearch

#endif  // PEFTSEARCH_ORCHESTRATOR_HPP_
