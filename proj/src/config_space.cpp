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

#include "peftsearch/config_space.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "peftsearch/errors.hpp"
#include "peftsearch/io.hpp"
#include "peftsearch/rng.hpp"

namespace peftsearch {

void SearchSpaceSpec::validate() const {
  if (num_layers < 1) throw InvalidSpaceError("num_layers must be >= 1");
  if (num_layers > 62) throw InvalidSpaceError("num_layers must be <= 62");
  if (hidden_dim < 1) throw InvalidSpaceError("hidden_dim must be positive");
  if (base_param_count < 1) throw InvalidSpaceError("base_param_count must be positive");
  if (size_grid.size() < 2) throw InvalidSpaceError("size_grid needs at least two levels");
  if (size_grid.front() != 0) throw InvalidSpaceError("size_grid must start at 0");
  if (size_grid.back() != hidden_dim) {
    throw InvalidSpaceError("size_grid must end at hidden_dim (" + std::to_string(hidden_dim) +
                            ")");
  }
  for (std::size_t i = 1; i < size_grid.size(); ++i) {
    if (size_grid[i] <= size_grid[i - 1]) {
      throw InvalidSpaceError("size_grid must be strictly increasing");
    }
  }
}

std::vector<std::int64_t> default_size_grid(std::int64_t hidden_dim) {
  std::vector<std::int64_t> grid{0, 1};
  for (int shift = 8; shift >= 0; --shift) {
    const std::int64_t v = hidden_dim >> shift;
    if (v > grid.back()) grid.push_back(v);
  }
  if (grid.back() != hidden_dim) grid.push_back(hidden_dim);
  return grid;
}

SearchSpaceSpec make_space(int num_layers, std::int64_t hidden_dim,
                           std::int64_t base_param_count) {
  SearchSpaceSpec spec{num_layers, hidden_dim, default_size_grid(hidden_dim), base_param_count};
  spec.validate();
  return spec;
}

SearchSpaceSpec bert_base_space() { return make_space(12, 768, 109'482'240); }

SearchSpaceSpec roberta_large_space() { return make_space(24, 1024, 355'359'744); }

int Configuration::active_layers() const {
  return static_cast<int>(std::count(layer_mask.begin(), layer_mask.end(), true));
}

std::optional<std::size_t> grid_index(const SearchSpaceSpec& spec, std::int64_t value) {
  auto it = std::lower_bound(spec.size_grid.begin(), spec.size_grid.end(), value);
  if (it == spec.size_grid.end() || *it != value) return std::nullopt;
  return static_cast<std::size_t>(it - spec.size_grid.begin());
}

void validate(const SearchSpaceSpec& spec, const Configuration& config) {
  if (config.layer_mask.size() != static_cast<std::size_t>(spec.num_layers)) {
    throw InvalidConfigurationError("layer mask has " + std::to_string(config.layer_mask.size()) +
                                    " entries, space has " + std::to_string(spec.num_layers) +
                                    " layers");
  }
  auto check = [&](std::int64_t v, const char* name) {
    if (!grid_index(spec, v)) {
      throw InvalidConfigurationError(std::string(name) + "=" + std::to_string(v) +
                                      " is not on the size grid");
    }
  };
  check(config.d_sa, "d_sa");
  check(config.d_pa, "d_pa");
  check(config.l_pt, "l_pt");
}

Configuration empty_config(const SearchSpaceSpec& spec) {
  return Configuration{std::vector<bool>(static_cast<std::size_t>(spec.num_layers), false), 0, 0,
                       0};
}

Configuration full_config(const SearchSpaceSpec& spec) {
  const auto top = spec.size_grid.back();
  return Configuration{std::vector<bool>(static_cast<std::size_t>(spec.num_layers), true), top,
                       top, top};
}

Configuration make_config(const SearchSpaceSpec& spec, const std::vector<int>& layers,
                          std::int64_t d_sa, std::int64_t d_pa, std::int64_t l_pt) {
  Configuration c = empty_config(spec);
  for (int layer : layers) {
    if (layer < 1 || layer > spec.num_layers) {
      throw InvalidConfigurationError("layer " + std::to_string(layer) + " out of range 1.." +
                                      std::to_string(spec.num_layers));
    }
    c.layer_mask[static_cast<std::size_t>(layer - 1)] = true;
  }
  c.d_sa = d_sa;
  c.d_pa = d_pa;
  c.l_pt = l_pt;
  validate(spec, c);
  return c;
}

std::uint64_t cardinality(const SearchSpaceSpec& spec) {
  const std::uint64_t g = spec.size_grid.size();
  return (std::uint64_t{1} << spec.num_layers) * g * g * g;
}

std::int64_t param_count(const SearchSpaceSpec& spec, const Configuration& config) {
  validate(spec, config);
  return std::int64_t{config.active_layers()} * 2 * spec.hidden_dim *
         (config.d_sa + config.d_pa + config.l_pt);
}

double param_fraction(const SearchSpaceSpec& spec, const Configuration& config) {
  return static_cast<double>(param_count(spec, config)) /
         static_cast<double>(spec.base_param_count);
}

EncodedPoint encode(const SearchSpaceSpec& spec, const Configuration& config) {
  validate(spec, config);
  EncodedPoint p;
  p.coords.reserve(spec.encoded_dim());
  for (bool bit : config.layer_mask) p.coords.push_back(bit ? 1.0 : 0.0);
  const double top = static_cast<double>(spec.size_grid.size() - 1);
  for (auto v : {config.d_sa, config.d_pa, config.l_pt}) {
    p.coords.push_back(static_cast<double>(*grid_index(spec, v)) / top);
  }
  return p;
}

Configuration decode(const SearchSpaceSpec& spec, const EncodedPoint& point) {
  constexpr double kTol = 1e-6;
  if (point.coords.size() != spec.encoded_dim()) {
    throw EncodingError("encoded point has dimension " + std::to_string(point.coords.size()) +
                        ", expected " + std::to_string(spec.encoded_dim()));
  }
  Configuration c = empty_config(spec);
  for (int i = 0; i < spec.num_layers; ++i) {
    const double x = point.coords[static_cast<std::size_t>(i)];
    if (std::abs(x) <= kTol) {
      c.layer_mask[static_cast<std::size_t>(i)] = false;
    } else if (std::abs(x - 1.0) <= kTol) {
      c.layer_mask[static_cast<std::size_t>(i)] = true;
    } else {
      throw EncodingError("layer coordinate " + std::to_string(i) + " is not 0 or 1");
    }
  }
  const double top = static_cast<double>(spec.size_grid.size() - 1);
  std::int64_t sizes[3];
  for (int k = 0; k < 3; ++k) {
    const double x = point.coords[static_cast<std::size_t>(spec.num_layers + k)] * top;
    const double r = std::round(x);
    if (std::abs(x - r) > kTol * top || r < 0 || r > top) {
      throw EncodingError("size coordinate " + std::to_string(k) + " is off the grid");
    }
    sizes[k] = spec.size_grid[static_cast<std::size_t>(r)];
  }
  c.d_sa = sizes[0];
  c.d_pa = sizes[1];
  c.l_pt = sizes[2];
  return c;
}

std::vector<Configuration> neighbors(const SearchSpaceSpec& spec, const Configuration& config) {
  validate(spec, config);
  std::vector<Configuration> out;
  out.reserve(static_cast<std::size_t>(spec.num_layers) + 6);
  for (std::size_t i = 0; i < config.layer_mask.size(); ++i) {
    Configuration n = config;
    n.layer_mask[i] = !n.layer_mask[i];
    out.push_back(std::move(n));
  }
  std::int64_t Configuration::*fields[] = {&Configuration::d_sa, &Configuration::d_pa,
                                           &Configuration::l_pt};
  for (auto field : fields) {
    const std::size_t idx = *grid_index(spec, config.*field);
    if (idx > 0) {
      Configuration n = config;
      n.*field = spec.size_grid[idx - 1];
      out.push_back(std::move(n));
    }
    if (idx + 1 < spec.size_grid.size()) {
      Configuration n = config;
      n.*field = spec.size_grid[idx + 1];
      out.push_back(std::move(n));
    }
  }
  return out;
}

Configuration sample_configuration(const SearchSpaceSpec& spec, std::mt19937_64& rng) {
  std::bernoulli_distribution bit(0.5);
  std::uniform_int_distribution<std::size_t> level(0, spec.size_grid.size() - 1);
  Configuration c = empty_config(spec);
  for (std::size_t i = 0; i < c.layer_mask.size(); ++i) c.layer_mask[i] = bit(rng);
  c.d_sa = spec.size_grid[level(rng)];
  c.d_pa = spec.size_grid[level(rng)];
  c.l_pt = spec.size_grid[level(rng)];
  return c;
}

std::vector<Configuration> random_sample(const SearchSpaceSpec& spec, std::uint64_t seed,
                                         std::size_t n) {
  Rng rng(seed);
  std::vector<Configuration> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) out.push_back(sample_configuration(spec, rng));
  return out;
}

std::uint64_t config_index(const SearchSpaceSpec& spec, const Configuration& config) {
  validate(spec, config);
  const std::uint64_t g = spec.size_grid.size();
  std::uint64_t mask = 0;
  for (std::size_t i = 0; i < config.layer_mask.size(); ++i) {
    if (config.layer_mask[i]) mask |= std::uint64_t{1} << i;
  }
  std::uint64_t idx = mask;
  idx = idx * g + *grid_index(spec, config.d_sa);
  idx = idx * g + *grid_index(spec, config.d_pa);
  idx = idx * g + *grid_index(spec, config.l_pt);
  return idx;
}

Configuration config_at(const SearchSpaceSpec& spec, std::uint64_t index) {
  if (index >= cardinality(spec)) throw InvalidConfigurationError("configuration index out of range");
  const std::uint64_t g = spec.size_grid.size();
  Configuration c = empty_config(spec);
  c.l_pt = spec.size_grid[index % g];
  index /= g;
  c.d_pa = spec.size_grid[index % g];
  index /= g;
  c.d_sa = spec.size_grid[index % g];
  index /= g;
  for (std::size_t i = 0; i < c.layer_mask.size(); ++i) c.layer_mask[i] = (index >> i) & 1U;
  return c;
}

std::vector<int> active_layer_list(const Configuration& config) {
  std::vector<int> layers;
  for (std::size_t i = 0; i < config.layer_mask.size(); ++i) {
    if (config.layer_mask[i]) layers.push_back(static_cast<int>(i) + 1);
  }
  return layers;
}

std::string to_text(const Configuration& config) { return config_to_json(config).dump(); }

Configuration config_from_text(const SearchSpaceSpec& spec, std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw InvalidConfigurationError(std::string("configuration text: ") + e.what());
  }
  return config_from_json(spec, j);
}

}  // namespace peftsearch
