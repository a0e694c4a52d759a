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

#include "peftsearch/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "peftsearch/errors.hpp"

namespace peftsearch {

std::string format_double(double value) {
  if (!std::isfinite(value)) {
    // JSON has no representation for these; callers validate beforehand.
    throw NumericalError("cannot serialize non-finite value");
  }
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

Json config_to_json(const Configuration& config) {
  Json j;
  j["layers"] = active_layer_list(config);
  j["d_sa"] = config.d_sa;
  j["d_pa"] = config.d_pa;
  j["l_pt"] = config.l_pt;
  return j;
}

Configuration config_from_json(const SearchSpaceSpec& spec, const Json& j) {
  if (!j.is_object()) throw InvalidConfigurationError("configuration must be an object");
  for (const char* key : {"layers", "d_sa", "d_pa", "l_pt"}) {
    if (!j.contains(key)) {
      throw InvalidConfigurationError(std::string("configuration is missing '") + key + "'");
    }
  }
  const auto& layers = j.at("layers");
  if (!layers.is_array()) throw InvalidConfigurationError("'layers' must be an array");
  std::vector<int> idx;
  for (const auto& l : layers) {
    if (!l.is_number_integer()) throw InvalidConfigurationError("layer indices must be integers");
    idx.push_back(l.get<int>());
  }
  for (std::size_t i = 1; i < idx.size(); ++i) {
    if (idx[i] <= idx[i - 1]) {
      throw InvalidConfigurationError("'layers' must be sorted and free of duplicates");
    }
  }
  auto size_of = [&](const char* key) {
    const auto& v = j.at(key);
    if (!v.is_number_integer()) {
      throw InvalidConfigurationError(std::string("'") + key + "' must be an integer");
    }
    return v.get<std::int64_t>();
  };
  return make_config(spec, idx, size_of("d_sa"), size_of("d_pa"), size_of("l_pt"));
}

Json space_to_json(const SearchSpaceSpec& spec) {
  Json j;
  j["num_layers"] = spec.num_layers;
  j["hidden_dim"] = spec.hidden_dim;
  j["size_grid"] = spec.size_grid;
  j["base_param_count"] = spec.base_param_count;
  return j;
}

SearchSpaceSpec space_from_json(const Json& j) {
  if (!j.is_object()) throw InvalidSpaceError("space spec must be an object");
  SearchSpaceSpec spec;
  try {
    spec.num_layers = j.at("num_layers").get<int>();
    spec.hidden_dim = j.at("hidden_dim").get<std::int64_t>();
    spec.base_param_count = j.at("base_param_count").get<std::int64_t>();
    if (j.contains("size_grid")) {
      spec.size_grid = j.at("size_grid").get<std::vector<std::int64_t>>();
    } else {
      spec.size_grid = default_size_grid(spec.hidden_dim);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidSpaceError(std::string("space spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

SearchSpaceSpec load_space_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open space file " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  try {
    return space_from_json(j);
  } catch (const InvalidSpaceError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace peftsearch
