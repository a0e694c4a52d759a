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

#ifndef PEFTSEARCH_IO_HPP_
#define PEFTSEARCH_IO_HPP_

#include <filesystem>
#include <string>

#include "json.hpp"
#include "peftsearch/config_space.hpp"

namespace peftsearch {

// Insertion-ordered so emitted objects keep their documented key order.
using Json = nlohmann::ordered_json;

// Locale-independent, 17 significant digits; parses back to the same double.
std::string format_double(double value);

Json config_to_json(const Configuration& config);
// Throws InvalidConfigurationError on a malformed or out-of-space object.
Configuration config_from_json(const SearchSpaceSpec& spec, const Json& j);

// Space file: {"num_layers":12,"hidden_dim":768,"size_grid":[...],"base_param_count":N}.
// size_grid may be omitted, in which case default_size_grid(hidden_dim) is used.
Json space_to_json(const SearchSpaceSpec& spec);
SearchSpaceSpec space_from_json(const Json& j);
SearchSpaceSpec load_space_file(const std::filesystem::path& path);

}  // namespace peftsearch

#endif  // PEFTSEARCH_IO_HPP_
