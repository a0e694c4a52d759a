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

#include "peftsearch/objectives.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "peftsearch/errors.hpp"
#include "peftsearch/io.hpp"
#include "peftsearch/rng.hpp"

namespace peftsearch {

Observation evaluate(Backend& backend, const SearchSpaceSpec& space, const Configuration& config,
                     double fidelity, std::uint64_t seed) {
  validate(space, config);
  if (!(fidelity > 0.0 && fidelity <= 1.0)) {
    throw std::invalid_argument("fidelity must lie in (0, 1], got " + format_double(fidelity));
  }
  const auto start = std::chrono::steady_clock::now();
  BackendResult r = backend.score(config, fidelity, seed);
  const auto stop = std::chrono::steady_clock::now();
  if (!std::isfinite(r.score)) {
    throw EvaluationError(backend.name() + " backend returned a non-finite score");
  }
  Observation obs;
  obs.config = config;
  obs.score = r.score;
  obs.cost = r.cost.value_or(param_fraction(space, config));
  obs.fidelity = fidelity;
  obs.seed = seed;
  obs.wall_time_s = std::chrono::duration<double>(stop - start).count();
  return obs;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> draw_layer_weights(int num_layers, const SyntheticLandscapeSpec& spec) {
  if (!(spec.sparse_fraction >= 0.0 && spec.sparse_fraction <= 1.0)) {
    throw std::invalid_argument("sparse_fraction must lie in [0, 1]");
  }
  Rng rng = make_rng(spec.landscape_seed, "layer-weights");
  std::vector<int> order(static_cast<std::size_t>(num_layers));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_sparse = static_cast<std::size_t>(std::lround(spec.sparse_fraction * num_layers));
  std::uniform_real_distribution<double> near_zero(0.0, 0.02);
  std::uniform_real_distribution<double> relevant(0.5, 1.5);
  std::vector<double> w(static_cast<std::size_t>(num_layers));
  for (std::size_t k = 0; k < order.size(); ++k) {
    w[static_cast<std::size_t>(order[k])] = k < n_sparse ? near_zero(rng) : relevant(rng);
  }
  return w;
}

}  // namespace

SyntheticLandscape::SyntheticLandscape(SearchSpaceSpec space, SyntheticLandscapeSpec spec)
    : SyntheticLandscape(space, spec, draw_layer_weights(space.num_layers, spec)) {}

SyntheticLandscape::SyntheticLandscape(SearchSpaceSpec space, SyntheticLandscapeSpec spec,
                                       std::vector<double> layer_weights)
    : space_(std::move(space)), spec_(spec), weights_(std::move(layer_weights)) {
  space_.validate();
  if (weights_.size() != static_cast<std::size_t>(space_.num_layers)) {
    throw DimensionError("landscape needs one weight per layer");
  }
  if (!(spec_.noise_sd >= 0.0)) throw std::invalid_argument("noise_sd must be >= 0");
}

double SyntheticLandscape::size_utility(std::int64_t size) const {
  return std::log2(1.0 + static_cast<double>(size)) /
         std::log2(1.0 + static_cast<double>(space_.hidden_dim));
}

double SyntheticLandscape::mean_score(const Configuration& config) const {
  const double per_layer = spec_.c_sa * size_utility(config.d_sa) +
                           spec_.c_pa * size_utility(config.d_pa) +
                           spec_.c_pt * size_utility(config.l_pt);
  double layer_sum = 0.0;
  for (std::size_t i = 0; i < config.layer_mask.size(); ++i) {
    if (config.layer_mask[i]) layer_sum += weights_[i];
  }
  const double s = layer_sum * per_layer;
  return 100.0 * s / (1.0 + s);
}

double SyntheticLandscape::noise_sd(double fidelity) const {
  return spec_.noise_sd * std::pow(fidelity, -0.25);
}

double SyntheticLandscape::score(const Configuration& config, double fidelity,
                                 std::uint64_t seed) const {
  const double mean = mean_score(config);
  if (spec_.noise_sd == 0.0) return mean;
  Rng rng(derive_seed(spec_.landscape_seed, to_text(config), seed));
  std::normal_distribution<double> eps(0.0, noise_sd(fidelity));
  return mean + eps(rng);
}

BackendResult SyntheticBackend::score(const Configuration& config, double fidelity,
                                      std::uint64_t seed) {
  return BackendResult{landscape_.score(config, fidelity, seed), std::nullopt};
}

// ---------------------------------------------------------------------------

const TabularRecord& TabularBenchmark::lookup(const Configuration& config) const {
  const std::string key = to_text(config);
  auto it = records.find(key);
  if (it == records.end()) throw NotFoundError("no tabular record for " + key);
  return it->second;
}

void TabularBenchmark::insert(const Configuration& config, TabularRecord record) {
  const std::string key = to_text(config);
  if (!records.emplace(key, record).second) {
    throw DuplicateKeyError("duplicate tabular record for " + key);
  }
}

TabularBenchmark load_tabular(std::istream& in, const SearchSpaceSpec& space) {
  TabularBenchmark bench;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Configuration config;
    TabularRecord rec;
    try {
      const Json j = Json::parse(line);
      config = config_from_json(space, j.at("config"));
      rec.score = j.at("score").get<double>();
      if (j.contains("cost") && !j.at("cost").is_null()) rec.cost = j.at("cost").get<double>();
    } catch (const Json::exception& e) {
      throw ParseError(e.what(), lineno);
    } catch (const InvalidConfigurationError& e) {
      throw ParseError(e.what(), lineno);
    }
    const std::string key = to_text(config);
    if (!bench.records.emplace(key, rec).second) {
      throw DuplicateKeyError("duplicate record for " + key, lineno);
    }
  }
  return bench;
}

TabularBenchmark load_tabular(const std::filesystem::path& path, const SearchSpaceSpec& space) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open tabular benchmark " + path.string());
  return load_tabular(in, space);
}

void write_tabular(std::ostream& out, const TabularBenchmark& bench) {
  for (const auto& [key, rec] : bench.records) {
    out << "{\"config\":" << key << ",\"score\":" << format_double(rec.score);
    if (rec.cost) out << ",\"cost\":" << format_double(*rec.cost);
    out << "}\n";
  }
}

BackendResult TabularBackend::score(const Configuration& config, double, std::uint64_t) {
  const auto& rec = bench_.lookup(config);
  return BackendResult{rec.score, rec.cost};
}

}  // namespace peftsearch
