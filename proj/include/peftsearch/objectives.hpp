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

#ifndef PEFTSEARCH_OBJECTIVES_HPP_
#define PEFTSEARCH_OBJECTIVES_HPP_

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "peftsearch/config_space.hpp"
#include "peftsearch/pareto.hpp"

namespace peftsearch {

// An evaluated configuration. fidelity is the fraction of full training used
// (1.0 = full run).
struct Observation {
  Configuration config;
  double score = 0.0;
  double cost = 0.0;
  double fidelity = 1.0;
  std::uint64_t seed = 0;
  double wall_time_s = 0.0;

  ObjectiveVector objectives() const { return {score, cost}; }
};

struct BackendResult {
  double score = 0.0;
  // When absent the engine fills in param_fraction.
  std::optional<double> cost;
};

// Evaluation contract shared by every backend. Implementations must tolerate
// concurrent calls.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual BackendResult score(const Configuration& config, double fidelity,
                              std::uint64_t seed) = 0;
  virtual std::string name() const = 0;
};

// Validates inputs, calls the backend, fills cost and timing.
// Throws InvalidConfigurationError, std::invalid_argument for fidelity outside
// (0, 1], and whatever the backend throws.
Observation evaluate(Backend& backend, const SearchSpaceSpec& space, const Configuration& config,
                     double fidelity, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic landscape

struct SyntheticLandscapeSpec {
  std::uint64_t landscape_seed = 7;
  double noise_sd = 0.2;
  // Fraction of layers whose weight is close to zero.
  double sparse_fraction = 0.5;
  double c_sa = 1.0;
  double c_pa = 0.6;
  double c_pt = 0.8;
};

// score = 100 * s / (1 + s) + noise with
//   s = sum_i mask_i * w_i * (c_sa g(d_sa) + c_pa g(d_pa) + c_pt g(l_pt)),
//   g(v) = log2(1 + v) / log2(1 + D_h),
// and noise ~ N(0, noise_sd^2 / sqrt(fidelity)). Fidelity never moves the mean.
class SyntheticLandscape {
 public:
  SyntheticLandscape(SearchSpaceSpec space, SyntheticLandscapeSpec spec);
  // Explicit layer weights, for tests and hand-built landscapes.
  SyntheticLandscape(SearchSpaceSpec space, SyntheticLandscapeSpec spec,
                     std::vector<double> layer_weights);

  const SearchSpaceSpec& space() const { return space_; }
  const SyntheticLandscapeSpec& spec() const { return spec_; }
  const std::vector<double>& layer_weights() const { return weights_; }

  double size_utility(std::int64_t size) const;
  // Noise-free score.
  double mean_score(const Configuration& config) const;
  double noise_sd(double fidelity) const;
  double score(const Configuration& config, double fidelity, std::uint64_t seed) const;

 private:
  SearchSpaceSpec space_;
  SyntheticLandscapeSpec spec_;
  std::vector<double> weights_;
};

class SyntheticBackend final : public Backend {
 public:
  explicit SyntheticBackend(SyntheticLandscape landscape) : landscape_(std::move(landscape)) {}

  BackendResult score(const Configuration& config, double fidelity, std::uint64_t seed) override;
  std::string name() const override { return "synthetic"; }
  const SyntheticLandscape& landscape() const { return landscape_; }

 private:
  SyntheticLandscape landscape_;
};

// ---------------------------------------------------------------------------
// Tabular lookup

struct TabularRecord {
  double score = 0.0;
  std::optional<double> cost;
};

// Keyed by canonical configuration text form.
struct TabularBenchmark {
  std::map<std::string, TabularRecord> records;

  std::size_t size() const { return records.size(); }
  // Throws NotFoundError.
  const TabularRecord& lookup(const Configuration& config) const;
  void insert(const Configuration& config, TabularRecord record);
};

// Line-delimited {"config":{...},"score":s[,"cost":c]}. Blank lines are
// skipped. Throws ParseError / DuplicateKeyError carrying the line number.
TabularBenchmark load_tabular(std::istream& in, const SearchSpaceSpec& space);
TabularBenchmark load_tabular(const std::filesystem::path& path, const SearchSpaceSpec& space);
void write_tabular(std::ostream& out, const TabularBenchmark& bench);

class TabularBackend final : public Backend {
 public:
  explicit TabularBackend(TabularBenchmark bench) : bench_(std::move(bench)) {}

  BackendResult score(const Configuration& config, double fidelity, std::uint64_t seed) override;
  std::string name() const override { return "tabular"; }

 private:
  TabularBenchmark bench_;
};

// ---------------------------------------------------------------------------
// External worker client

struct WorkerRequest {
  std::string id;
  Configuration config;
  double fidelity = 1.0;
  std::uint64_t seed = 0;
};

struct WorkerResponse {
  std::string id;
  std::optional<double> score;
  std::optional<double> cost;
  std::optional<std::string> error;
};

// Wire format: one JSON object per line, '\n' terminated.
std::string encode_request(const WorkerRequest& request);
WorkerResponse decode_response(std::string_view line);

struct WorkerOptions {
  // Run through /bin/sh -c.
  std::string command;
  // Maximum number of worker processes alive at once.
  std::size_t pool_size = 1;
  std::chrono::milliseconds timeout{std::chrono::minutes(30)};
};

// Spawns worker processes lazily and talks to them over their standard
// streams. One request is in flight per process; concurrent callers use
// separate processes.
class WorkerBackend final : public Backend {
 public:
  explicit WorkerBackend(WorkerOptions options);
  ~WorkerBackend() override;
  WorkerBackend(const WorkerBackend&) = delete;
  WorkerBackend& operator=(const WorkerBackend&) = delete;

  BackendResult score(const Configuration& config, double fidelity, std::uint64_t seed) override;
  std::string name() const override { return "worker"; }

 private:
  struct Pool;
  std::unique_ptr<Pool> pool_;
};

}  // namespace peftsearch

#endif  // PEFTSEARCH_OBJECTIVES_HPP_
