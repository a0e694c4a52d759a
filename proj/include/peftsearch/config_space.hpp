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

#ifndef PEFTSEARCH_CONFIG_SPACE_HPP_
#define PEFTSEARCH_CONFIG_SPACE_HPP_

#include <compare>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace peftsearch {

// The search space: which layers may host PEFT modules and which module sizes
// are admissible. The same size grid is used for the serial adapter
// bottleneck, the parallel adapter bottleneck and the prefix length.
struct SearchSpaceSpec {
  int num_layers = 12;
  std::int64_t hidden_dim = 768;
  std::vector<std::int64_t> size_grid;
  std::int64_t base_param_count = 109'482'240;

  bool operator==(const SearchSpaceSpec&) const = default;

  // Throws InvalidSpaceError when an invariant is violated.
  void validate() const;

  std::size_t grid_levels() const { return size_grid.size(); }
  // Dimension of the encoded representation.
  std::size_t encoded_dim() const { return static_cast<std::size_t>(num_layers) + 3; }
};

// {0, 1, D/256, D/128, ..., D/2, D}, dropping values that collapse to 0 or 1.
std::vector<std::int64_t> default_size_grid(std::int64_t hidden_dim);

SearchSpaceSpec make_space(int num_layers, std::int64_t hidden_dim,
                           std::int64_t base_param_count);

// 12 layers, D_h = 768, 109,482,240 base parameters.
SearchSpaceSpec bert_base_space();
// 24 layers, D_h = 1024, 355,359,744 base parameters.
SearchSpaceSpec roberta_large_space();

// One point of the space. layer_mask[i] switches the whole PEFT block of
// layer i (0-based here, 1-based in every external format). A size of 0
// means the module is absent from every active layer.
struct Configuration {
  std::vector<bool> layer_mask;
  std::int64_t d_sa = 0;
  std::int64_t d_pa = 0;
  std::int64_t l_pt = 0;

  bool operator==(const Configuration&) const = default;
  auto operator<=>(const Configuration&) const = default;

  int active_layers() const;
};

struct EncodedPoint {
  std::vector<double> coords;

  bool operator==(const EncodedPoint&) const = default;
};

// Index of `value` in the grid, if present.
std::optional<std::size_t> grid_index(const SearchSpaceSpec& spec, std::int64_t value);

// Throws InvalidConfigurationError.
void validate(const SearchSpaceSpec& spec, const Configuration& config);

Configuration empty_config(const SearchSpaceSpec& spec);
// Every layer active, every size at the top of the grid.
Configuration full_config(const SearchSpaceSpec& spec);
// Builds a configuration from 1-based layer indices.
Configuration make_config(const SearchSpaceSpec& spec, const std::vector<int>& layers,
                          std::int64_t d_sa, std::int64_t d_pa, std::int64_t l_pt);

// 2^num_layers * |grid|^3.
std::uint64_t cardinality(const SearchSpaceSpec& spec);

// Trainable weights added by a configuration: 2 * D_h * (d_sa + d_pa + l_pt)
// per active layer (projection matrices and prefix rows only).
std::int64_t param_count(const SearchSpaceSpec& spec, const Configuration& config);
double param_fraction(const SearchSpaceSpec& spec, const Configuration& config);

EncodedPoint encode(const SearchSpaceSpec& spec, const Configuration& config);
// Throws EncodingError if a coordinate is off the grid by more than 1e-6.
Configuration decode(const SearchSpaceSpec& spec, const EncodedPoint& point);

// All configurations one step away: each single layer flip and each size
// moved one grid level up or down. Never contains `config` itself.
std::vector<Configuration> neighbors(const SearchSpaceSpec& spec, const Configuration& config);

// One uniform draw: each layer bit and each size level independently.
Configuration sample_configuration(const SearchSpaceSpec& spec, std::mt19937_64& rng);

// Independent uniform draws per dimension. Deterministic in `seed`.
std::vector<Configuration> random_sample(const SearchSpaceSpec& spec, std::uint64_t seed,
                                         std::size_t n);

// Dense index in [0, cardinality) and back; used for exhaustive sweeps.
std::uint64_t config_index(const SearchSpaceSpec& spec, const Configuration& config);
Configuration config_at(const SearchSpaceSpec& spec, std::uint64_t index);

// 1-based sorted list of active layers.
std::vector<int> active_layer_list(const Configuration& config);

// Canonical text form, e.g. {"layers":[3,4,8,9,10],"d_sa":12,"d_pa":96,"l_pt":1}.
std::string to_text(const Configuration& config);
// Parses and validates the text form against `spec`.
Configuration config_from_text(const SearchSpaceSpec& spec, std::string_view text);

}  // namespace peftsearch

#endif  // PEFTSEARCH_CONFIG_SPACE_HPP_
