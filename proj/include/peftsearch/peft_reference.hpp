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

#ifndef PEFTSEARCH_PEFT_REFERENCE_HPP_
#define PEFTSEARCH_PEFT_REFERENCE_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "peftsearch/config_space.hpp"
#include "peftsearch/rng.hpp"

// Small dense implementation of the adapter and prefix modules. It backs the
// parameter-count formula with real weight matrices and documents the exact
// forward math the evaluation workers are expected to implement.
namespace peftsearch::peft {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Down-projection D_h x D followed by up-projection D x D_h.
struct BottleneckWeights {
  Matrix w_down;
  Matrix w_up;

  Eigen::Index hidden_dim() const { return w_down.rows(); }
  Eigen::Index bottleneck_dim() const { return w_down.cols(); }
  std::int64_t weight_count() const { return w_down.size() + w_up.size(); }
};

// Key and value prefixes, L_PT x D_h each.
struct PrefixWeights {
  Matrix p_k;
  Matrix p_v;

  Eigen::Index length() const { return p_k.rows(); }
  std::int64_t weight_count() const { return p_k.size() + p_v.size(); }
};

// Weights drawn uniformly from (-0.5, 0.5).
BottleneckWeights random_bottleneck(Eigen::Index hidden_dim, Eigen::Index bottleneck_dim, Rng& rng);
PrefixWeights random_prefix(Eigen::Index length, Eigen::Index hidden_dim, Rng& rng);
Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng);

// ReLU(h * W_down) * W_up. Throws DimensionError on shape mismatch.
Matrix serial_forward(const Matrix& h, const BottleneckWeights& w);
// Same functional form, fed from the FFN input instead of its output.
Matrix parallel_forward(const Matrix& x, const BottleneckWeights& w);

using Ffn = std::function<Matrix(const Matrix&)>;

// serial_forward(ffn(x), w_sa) + parallel_forward(x, w_pa).
Matrix sapa_forward(const Matrix& x, const Ffn& ffn, const BottleneckWeights& w_sa,
                    const BottleneckWeights& w_pa);

// Prepends the prefixes to the attention keys and values.
std::pair<Matrix, Matrix> prefix_extend(const Matrix& k, const Matrix& v, const PrefixWeights& p);

// The modules of one active layer. Absent modules (size 0) are not
// instantiated.
struct LayerModules {
  std::optional<BottleneckWeights> serial;
  std::optional<BottleneckWeights> parallel;
  std::optional<PrefixWeights> prefix;

  std::int64_t weight_count() const;
};

// Instantiates the modules of every active layer.
std::vector<LayerModules> instantiate(const SearchSpaceSpec& spec, const Configuration& config,
                                      Rng& rng);

// Counts scalar entries of the instantiated weights.
std::int64_t count_weights(const Configuration& config, const SearchSpaceSpec& spec);

}  // namespace peftsearch::peft

#endif  // PEFTSEARCH_PEFT_REFERENCE_HPP_
