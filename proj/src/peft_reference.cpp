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

#include "peftsearch/peft_reference.hpp"

#include <random>
#include <string>

#include "peftsearch/errors.hpp"

namespace peftsearch::peft {

namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void check_bottleneck(const Matrix& in, const BottleneckWeights& w) {
  if (w.w_up.rows() != w.w_down.cols() || w.w_up.cols() != w.w_down.rows()) {
    throw DimensionError("bottleneck weights " + shape(w.w_down) + " / " + shape(w.w_up) +
                         " are inconsistent");
  }
  if (in.cols() != w.w_down.rows()) {
    throw DimensionError("input " + shape(in) + " does not match W_down " + shape(w.w_down));
  }
}

Matrix bottleneck(const Matrix& in, const BottleneckWeights& w) {
  check_bottleneck(in, w);
  Matrix hidden = (in * w.w_down).cwiseMax(0.0);
  return hidden * w.w_up;
}

}  // namespace

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

BottleneckWeights random_bottleneck(Eigen::Index hidden_dim, Eigen::Index bottleneck_dim,
                                    Rng& rng) {
  if (bottleneck_dim < 1) throw DimensionError("bottleneck dimension must be >= 1");
  BottleneckWeights w;
  w.w_down = random_matrix(hidden_dim, bottleneck_dim, rng);
  w.w_up = random_matrix(bottleneck_dim, hidden_dim, rng);
  return w;
}

PrefixWeights random_prefix(Eigen::Index length, Eigen::Index hidden_dim, Rng& rng) {
  PrefixWeights p;
  p.p_k = random_matrix(length, hidden_dim, rng);
  p.p_v = random_matrix(length, hidden_dim, rng);
  return p;
}

Matrix serial_forward(const Matrix& h, const BottleneckWeights& w) { return bottleneck(h, w); }

Matrix parallel_forward(const Matrix& x, const BottleneckWeights& w) { return bottleneck(x, w); }

Matrix sapa_forward(const Matrix& x, const Ffn& ffn, const BottleneckWeights& w_sa,
                    const BottleneckWeights& w_pa) {
  Matrix f = ffn(x);
  if (f.rows() != x.rows() || f.cols() != x.cols()) {
    throw DimensionError("ffn maps " + shape(x) + " to " + shape(f));
  }
  return serial_forward(f, w_sa) + parallel_forward(x, w_pa);
}

std::pair<Matrix, Matrix> prefix_extend(const Matrix& k, const Matrix& v, const PrefixWeights& p) {
  if (k.cols() != v.cols() || k.rows() != v.rows()) {
    throw DimensionError("keys " + shape(k) + " and values " + shape(v) + " differ");
  }
  if (p.p_k.rows() != p.p_v.rows() || p.p_k.cols() != p.p_v.cols()) {
    throw DimensionError("prefix keys and values differ in shape");
  }
  if (p.length() > 0 && p.p_k.cols() != k.cols()) {
    throw DimensionError("prefix width " + std::to_string(p.p_k.cols()) +
                         " does not match hidden size " + std::to_string(k.cols()));
  }
  const Eigen::Index len = p.length();
  Matrix k_out(len + k.rows(), k.cols());
  Matrix v_out(len + v.rows(), v.cols());
  if (len > 0) {
    k_out.topRows(len) = p.p_k;
    v_out.topRows(len) = p.p_v;
  }
  k_out.bottomRows(k.rows()) = k;
  v_out.bottomRows(v.rows()) = v;
  return {std::move(k_out), std::move(v_out)};
}

std::int64_t LayerModules::weight_count() const {
  std::int64_t n = 0;
  if (serial) n += serial->weight_count();
  if (parallel) n += parallel->weight_count();
  if (prefix) n += prefix->weight_count();
  return n;
}

std::vector<LayerModules> instantiate(const SearchSpaceSpec& spec, const Configuration& config,
                                      Rng& rng) {
  validate(spec, config);
  const auto dh = static_cast<Eigen::Index>(spec.hidden_dim);
  std::vector<LayerModules> layers;
  for (bool active : config.layer_mask) {
    if (!active) continue;
    LayerModules m;
    if (config.d_sa > 0) m.serial = random_bottleneck(dh, config.d_sa, rng);
    if (config.d_pa > 0) m.parallel = random_bottleneck(dh, config.d_pa, rng);
    if (config.l_pt > 0) m.prefix = random_prefix(config.l_pt, dh, rng);
    layers.push_back(std::move(m));
  }
  return layers;
}

std::int64_t count_weights(const Configuration& config, const SearchSpaceSpec& spec) {
  validate(spec, config);
  const auto dh = static_cast<Eigen::Index>(spec.hidden_dim);
  std::int64_t total = 0;
  // Built and released one layer at a time.
  for (bool active : config.layer_mask) {
    if (!active) continue;
    LayerModules m;
    if (config.d_sa > 0) m.serial = BottleneckWeights{Matrix::Zero(dh, config.d_sa), Matrix::Zero(config.d_sa, dh)};
    if (config.d_pa > 0) m.parallel = BottleneckWeights{Matrix::Zero(dh, config.d_pa), Matrix::Zero(config.d_pa, dh)};
    if (config.l_pt > 0) m.prefix = PrefixWeights{Matrix::Zero(config.l_pt, dh), Matrix::Zero(config.l_pt, dh)};
    total += m.weight_count();
  }
  return total;
}

}  // namespace peftsearch::peft
