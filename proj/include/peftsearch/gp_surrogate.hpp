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

#ifndef PEFTSEARCH_GP_SURROGATE_HPP_
#define PEFTSEARCH_GP_SURROGATE_HPP_

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "peftsearch/config_space.hpp"

namespace peftsearch::gp {

inline constexpr double kNoiseFloor = 1e-6;
// Jitter levels tried, in order, when a covariance fails to factorize. They
// are relative to the mean diagonal entry of the matrix.
inline constexpr double kJitterLadder[] = {1e-6, 1e-4, 1e-2};

// All positive hyperparameters are stored as logs. Inverse squared
// lengthscales (rho) carry a half-Cauchy(tau) prior and tau a
// half-Cauchy(tau_scale) prior, which pushes most rho towards zero.
struct KernelHyperparams {
  double log_outputscale = 0.0;
  double log_noise = -4.0;
  Eigen::VectorXd log_inv_sq_lengthscales;
  double log_tau = -2.0;

  Eigen::Index dim() const { return log_inv_sq_lengthscales.size(); }
  double outputscale() const;
  double noise() const;
  Eigen::VectorXd inv_sq_lengthscales() const;
  double tau() const;
};

// Matern-5/2 with ARD: k(a, b) = s (1 + sqrt5 r + 5/3 r^2) exp(-sqrt5 r),
// r^2 = sum_i rho_i (a_i - b_i)^2.
double matern52(const KernelHyperparams& hp, const Eigen::Ref<const Eigen::VectorXd>& a,
                const Eigen::Ref<const Eigen::VectorXd>& b);
// Rows of a and b are points.
Eigen::MatrixXd kernel_matrix(const KernelHyperparams& hp, const Eigen::MatrixXd& a,
                              const Eigen::MatrixXd& b);

// Cholesky of `m` with the jitter ladder. Throws NumericalError when even
// the largest jitter fails. `jitter_used` receives the absolute jitter added.
Eigen::LLT<Eigen::MatrixXd> robust_cholesky(const Eigen::MatrixXd& m, double* jitter_used = nullptr);

struct PosteriorMoments {
  double mean = 0.0;
  double variance = 0.0;
};

// A fitted Gaussian process on standardized targets. Immutable once built.
class GPModelState {
 public:
  // Standardizes `y` internally (mean 0, sd 1; sd 1 if all targets agree).
  GPModelState(KernelHyperparams hp, Eigen::MatrixXd x, const Eigen::VectorXd& y);
  // Keeps the given standardization constants.
  GPModelState(KernelHyperparams hp, Eigen::MatrixXd x, const Eigen::VectorXd& y, double y_mean,
               double y_sd);

  const KernelHyperparams& hyperparams() const { return hp_; }
  const Eigen::MatrixXd& train_x() const { return x_; }
  const Eigen::VectorXd& train_y() const { return y_; }
  double y_mean() const { return y_mean_; }
  double y_sd() const { return y_sd_; }
  Eigen::Index dim() const { return x_.cols(); }
  Eigen::Index size() const { return x_.rows(); }
  double jitter() const { return jitter_; }
  const Eigen::LLT<Eigen::MatrixXd>& factor() const { return llt_; }
  // (K + noise I)^{-1} y in standardized units.
  const Eigen::VectorXd& alpha() const { return alpha_; }
  // Value of the fitting objective at these hyperparameters.
  double log_posterior() const { return log_posterior_; }
  void set_log_posterior(double v) { log_posterior_ = v; }

  // De-standardized latent mean and variance (observation noise excluded).
  PosteriorMoments predict(const Eigen::Ref<const Eigen::VectorXd>& point) const;
  PosteriorMoments predict(const EncodedPoint& point) const;

  // Standardized latent posterior over the rows of `points`.
  Eigen::VectorXd posterior_mean_std(const Eigen::MatrixXd& points) const;
  Eigen::MatrixXd posterior_cov_std(const Eigen::MatrixXd& points) const;

  // Same hyperparameters and standardization, extra training data in the
  // original target scale.
  GPModelState with_observations(const Eigen::MatrixXd& x_new, const Eigen::VectorXd& y_new) const;

 private:
  void factorize();

  KernelHyperparams hp_;
  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;
  double y_mean_ = 0.0;
  double y_sd_ = 1.0;
  double jitter_ = 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
  double log_posterior_ = 0.0;
};

using Ensemble = std::vector<GPModelState>;

// Exact Gaussian log marginal likelihood of `y` (used as given).
double log_marginal_likelihood(const KernelHyperparams& hp, const Eigen::MatrixXd& x,
                               const Eigen::VectorXd& y);

// Value plus gradient with respect to the packed log-parameter vector
// [log_outputscale, log_noise, log_rho_1..d, log_tau].
struct ObjectiveValue {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

ObjectiveValue log_marginal_likelihood_with_gradient(const KernelHyperparams& hp,
                                                     const Eigen::MatrixXd& x,
                                                     const Eigen::VectorXd& y);
// Log density of the priors over the log-parameters (Jacobian included).
ObjectiveValue log_prior(const KernelHyperparams& hp, double tau_scale);

Eigen::VectorXd pack(const KernelHyperparams& hp);
KernelHyperparams unpack(const Eigen::VectorXd& packed);

struct FitOptions {
  std::size_t restarts = 8;
  int steps = 200;
  double learning_rate = 0.1;
  double tau_scale = 0.1;
  // Pin the noise at the floor (noise-free observations).
  bool fixed_noise = false;
  // Extra starting points tried before the random ones, e.g. a previous fit.
  std::vector<KernelHyperparams> warm_starts;
};

// MAP fits from `restarts` seeded initializations. Throws DimensionError on
// mismatched inputs and std::invalid_argument with fewer than two points.
Ensemble fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const FitOptions& options,
             std::uint64_t seed);
Ensemble fit(std::span<const EncodedPoint> points, std::span<const double> values,
             const FitOptions& options, std::uint64_t seed);

// Joint posterior draws of the latent function at the rows of `points`, in
// the original target scale. Row m * n_samples + s holds draw s of member m.
Eigen::MatrixXd sample_posterior(const Ensemble& ensemble, const Eigen::MatrixXd& points,
                                 std::size_t n_samples, std::uint64_t seed);

Eigen::MatrixXd to_matrix(std::span<const EncodedPoint> points);

}  // namespace peftsearch::gp

#endif  // PEFTSEARCH_GP_SURROGATE_HPP_
