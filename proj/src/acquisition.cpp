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

#include "peftsearch/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <stdexcept>

#include "peftsearch/errors.hpp"
#include "peftsearch/rng.hpp"

namespace peftsearch {

namespace {

// Joint posterior draws of one GP member over the observed points, plus what
// is needed to extend each draw to a new point.
class MemberSampler {
 public:
  MemberSampler(const gp::GPModelState& model, const Eigen::MatrixXd& obs_x, std::size_t samples,
                Rng& rng)
      : model_(&model), obs_x_(obs_x) {
    const Eigen::Index n_obs = obs_x.rows();
    const auto k = static_cast<Eigen::Index>(samples);
    std::normal_distribution<double> normal;
    z_obs_.resize(n_obs, k);
    for (Eigen::Index j = 0; j < k; ++j) {
      for (Eigen::Index i = 0; i < n_obs; ++i) z_obs_(i, j) = normal(rng);
    }
    z_new_.resize(k);
    for (Eigen::Index j = 0; j < k; ++j) z_new_[j] = normal(rng);

    if (n_obs > 0) {
      const Eigen::MatrixXd k_xo = gp::kernel_matrix(model.hyperparams(), model.train_x(), obs_x);
      v_obs_ = model.factor().matrixL().solve(k_xo);
      Eigen::MatrixXd cov = gp::kernel_matrix(model.hyperparams(), obs_x, obs_x);
      cov.noalias() -= v_obs_.transpose() * v_obs_;
      l_obs_ = gp::robust_cholesky(cov).matrixL();
      const Eigen::VectorXd mean = k_xo.transpose() * model.alpha();
      draws_obs_ = l_obs_ * z_obs_;
      draws_obs_.colwise() += mean;
      draws_obs_ = (draws_obs_.array() * model.y_sd() + model.y_mean()).matrix();
    }
  }

  // n_obs x samples, original scale.
  const Eigen::MatrixXd& observed_draws() const { return draws_obs_; }

  // Draws at `x` (1 x d) consistent with observed_draws(), original scale.
  Eigen::VectorXd extend(const Eigen::MatrixXd& x) const {
    const auto& model = *model_;
    const auto& hp = model.hyperparams();
    const Eigen::VectorXd k_xc = gp::kernel_matrix(hp, model.train_x(), x).col(0);
    const Eigen::VectorXd v_c = model.factor().matrixL().solve(k_xc);
    const double mean = k_xc.dot(model.alpha());
    double var = hp.outputscale() - v_c.squaredNorm();
    Eigen::VectorXd f = Eigen::VectorXd::Constant(z_new_.size(), mean);
    if (obs_x_.rows() > 0) {
      const Eigen::VectorXd k_oc = gp::kernel_matrix(hp, obs_x_, x).col(0);
      const Eigen::VectorXd cross = k_oc - v_obs_.transpose() * v_c;
      const Eigen::VectorXd l = l_obs_.triangularView<Eigen::Lower>().solve(cross);
      var -= l.squaredNorm();
      f.noalias() += z_obs_.transpose() * l;
    }
    f += std::sqrt(std::max(var, 0.0)) * z_new_;
    return (f.array() * model.y_sd() + model.y_mean()).matrix();
  }

 private:
  const gp::GPModelState* model_;
  Eigen::MatrixXd obs_x_;
  Eigen::MatrixXd z_obs_;
  Eigen::VectorXd z_new_;
  Eigen::MatrixXd v_obs_;
  Eigen::MatrixXd l_obs_;
  Eigen::MatrixXd draws_obs_;
};

Eigen::MatrixXd encode_row(const SearchSpaceSpec& space, const Configuration& c) {
  const auto p = encode(space, c);
  Eigen::MatrixXd x(1, static_cast<Eigen::Index>(p.coords.size()));
  for (std::size_t j = 0; j < p.coords.size(); ++j) x(0, static_cast<Eigen::Index>(j)) = p.coords[j];
  return x;
}

}  // namespace

struct NehviAcquisition::Impl {
  SearchSpaceSpec space;
  AcquisitionSpec spec;
  ObjectiveVector ref;
  std::vector<MemberSampler> score_samplers;
  std::vector<MemberSampler> cost_samplers;
  // fronts[m * K + s]: sampled front of member m, draw s, ascending cost.
  std::vector<std::vector<ObjectiveVector>> fronts;
};

NehviAcquisition::NehviAcquisition(const SearchSpaceSpec& space, AcquisitionSpec spec,
                                   std::span<const Observation> observations)
    : impl_(std::make_unique<Impl>()) {
  if (spec.ensemble.empty()) throw Error("NEHVI needs a fitted surrogate ensemble");
  if (spec.mc_samples == 0) throw std::invalid_argument("mc_samples must be >= 1");
  auto& im = *impl_;
  im.space = space;
  im.spec = std::move(spec);
  const AcquisitionSpec& sp = im.spec;

  // Canonical order, so the estimate does not depend on how the caller
  // ordered its observations.
  std::vector<const Observation*> sorted;
  for (const auto& o : observations) sorted.push_back(&o);
  std::sort(sorted.begin(), sorted.end(), [](const Observation* a, const Observation* b) {
    if (a->config != b->config) return a->config < b->config;
    if (a->score != b->score) return a->score < b->score;
    return a->cost < b->cost;
  });
  std::vector<ObjectiveVector> obs_obj;
  std::vector<EncodedPoint> enc;
  for (const Observation* o : sorted) {
    obs_obj.push_back(o->objectives());
    enc.push_back(encode(space, o->config));
  }
  if (sp.ref_point) {
    im.ref = *sp.ref_point;
  } else if (!obs_obj.empty()) {
    im.ref = nadir(obs_obj);
  } else {
    throw std::invalid_argument("NEHVI without observations needs an explicit reference point");
  }
  const Eigen::MatrixXd obs_x =
      enc.empty() ? Eigen::MatrixXd(0, static_cast<Eigen::Index>(space.encoded_dim()))
                  : gp::to_matrix(enc);
  for (const auto& m : sp.ensemble) {
    if (m.dim() != static_cast<Eigen::Index>(space.encoded_dim())) {
      throw DimensionError("surrogate dimension does not match the search space");
    }
  }

  const std::size_t k = sp.mc_samples;
  for (std::size_t m = 0; m < sp.ensemble.size(); ++m) {
    Rng rng = make_rng(sp.seed, "nehvi-score", m);
    im.score_samplers.emplace_back(sp.ensemble[m], obs_x, k, rng);
  }
  for (std::size_t m = 0; m < sp.cost_ensemble.size(); ++m) {
    Rng rng = make_rng(sp.seed, "nehvi-cost", m);
    im.cost_samplers.emplace_back(sp.cost_ensemble[m], obs_x, k, rng);
  }

  im.fronts.resize(sp.ensemble.size() * k);
  std::vector<ObjectiveVector> pts(observations.size());
  for (std::size_t m = 0; m < sp.ensemble.size(); ++m) {
    const auto& sd = im.score_samplers[m].observed_draws();
    const MemberSampler* cs =
        im.cost_samplers.empty() ? nullptr : &im.cost_samplers[m % im.cost_samplers.size()];
    for (std::size_t s = 0; s < k; ++s) {
      for (std::size_t i = 0; i < observations.size(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const auto ss = static_cast<Eigen::Index>(s);
        pts[i].score = sd(ii, ss);
        pts[i].cost = cs ? cs->observed_draws()(ii, ss) : obs_obj[i].cost;
      }
      im.fronts[m * k + s] = non_dominated(pts);
    }
  }
}

NehviAcquisition::~NehviAcquisition() = default;
NehviAcquisition::NehviAcquisition(NehviAcquisition&&) noexcept = default;
NehviAcquisition& NehviAcquisition::operator=(NehviAcquisition&&) noexcept = default;

const ObjectiveVector& NehviAcquisition::ref_point() const { return impl_->ref; }
std::size_t NehviAcquisition::mc_samples() const { return impl_->spec.mc_samples; }

NehviAcquisition::Estimate NehviAcquisition::estimate(const Configuration& candidate) const {
  const auto& im = *impl_;
  const Eigen::MatrixXd x = encode_row(im.space, candidate);
  const double exact_cost = param_fraction(im.space, candidate);
  const std::size_t k = im.spec.mc_samples;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t m = 0; m < im.score_samplers.size(); ++m) {
    const Eigen::VectorXd scores = im.score_samplers[m].extend(x);
    Eigen::VectorXd costs;
    if (!im.cost_samplers.empty()) costs = im.cost_samplers[m % im.cost_samplers.size()].extend(x);
    for (std::size_t s = 0; s < k; ++s) {
      const auto ss = static_cast<Eigen::Index>(s);
      const ObjectiveVector p{scores[ss], costs.size() ? costs[ss] : exact_cost};
      const double hvi = hypervolume_improvement(im.fronts[m * k + s], p, im.ref);
      sum += hvi;
      sum_sq += hvi * hvi;
    }
  }
  const double n = static_cast<double>(im.score_samplers.size() * k);
  Estimate e;
  e.value = sum / n;
  if (n > 1) {
    const double var = std::max(0.0, (sum_sq - n * e.value * e.value) / (n - 1.0));
    e.std_error = std::sqrt(var / n);
  }
  return e;
}

double nehvi(const SearchSpaceSpec& space, const AcquisitionSpec& spec,
             std::span<const Observation> observations, const Configuration& candidate) {
  return NehviAcquisition(space, spec, observations)(candidate);
}

// ---------------------------------------------------------------------------

namespace {

struct Ranked {
  double value;
  std::int64_t count;
  EncodedPoint encoding;
};

// True if a ranks strictly above b.
bool ranks_above(const Ranked& a, const Ranked& b) {
  if (a.value != b.value) return a.value > b.value;
  if (a.count != b.count) return a.count < b.count;
  return a.encoding.coords < b.encoding.coords;
}

}  // namespace

std::optional<LocalSearchResult> local_search(const SearchSpaceSpec& space,
                                              const AcquisitionFn& acq,
                                              std::span<const Configuration> starts, int max_steps,
                                              const ExcludedFn& excluded) {
  if (starts.empty()) throw std::invalid_argument("local_search needs at least one start");
  std::map<Configuration, Ranked> seen;
  auto rank = [&](const Configuration& c) -> const Ranked& {
    auto it = seen.find(c);
    if (it == seen.end()) {
      it = seen.emplace(c, Ranked{acq(c), param_count(space, c), encode(space, c)}).first;
    }
    return it->second;
  };

  for (const auto& start : starts) {
    Configuration current = start;
    Ranked current_rank = rank(current);
    for (int step = 0; step < max_steps; ++step) {
      std::optional<Configuration> best;
      Ranked best_rank = current_rank;
      for (const auto& n : neighbors(space, current)) {
        const Ranked& r = rank(n);
        if (ranks_above(r, best_rank)) {
          best = n;
          best_rank = r;
        }
      }
      if (!best) break;
      current = std::move(*best);
      current_rank = best_rank;
    }
  }

  const Configuration* winner = nullptr;
  const Ranked* winner_rank = nullptr;
  for (const auto& [config, r] : seen) {
    if (excluded && excluded(config)) continue;
    if (!winner || ranks_above(r, *winner_rank)) {
      winner = &config;
      winner_rank = &r;
    }
  }
  if (!winner) return std::nullopt;
  return LocalSearchResult{*winner, winner_rank->value};
}

}  // namespace peftsearch
