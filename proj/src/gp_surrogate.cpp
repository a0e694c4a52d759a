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

#include "peftsearch/gp_surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "peftsearch/errors.hpp"
#include "peftsearch/rng.hpp"

namespace peftsearch::gp {

namespace {

constexpr double kSqrt5 = 2.23606797749978969640917366873128;

// Box constraints on the log-parameters.
constexpr double kLogOutputscaleMin = -6.0;
constexpr double kLogOutputscaleMax = 6.0;
const double kLogNoiseMin = std::log(kNoiseFloor);
constexpr double kLogNoiseMax = 1.0;
constexpr double kLogRhoMin = -20.0;
constexpr double kLogRhoMax = 10.0;
constexpr double kLogTauMin = -16.0;
constexpr double kLogTauMax = 4.0;

// Gamma(concentration, rate) priors on the outputscale and the noise.
constexpr double kOutputscaleShape = 2.0;
constexpr double kOutputscaleRate = 0.15;
constexpr double kNoiseShape = 0.9;
constexpr double kNoiseRate = 10.0;

// Pairwise scaled distances and the kernel built from them.
struct KernelParts {
  Eigen::MatrixXd r;
  Eigen::MatrixXd k;
};

Eigen::MatrixXd scaled(const Eigen::MatrixXd& x, const Eigen::VectorXd& rho) {
  return x * rho.cwiseSqrt().asDiagonal();
}

Eigen::MatrixXd distances(const KernelHyperparams& hp, const Eigen::MatrixXd& a,
                          const Eigen::MatrixXd& b) {
  if (a.cols() != hp.dim() || b.cols() != hp.dim()) {
    throw DimensionError("points have dimension " + std::to_string(a.cols()) + "/" +
                         std::to_string(b.cols()) + ", kernel has " + std::to_string(hp.dim()));
  }
  const Eigen::VectorXd rho = hp.inv_sq_lengthscales();
  const Eigen::MatrixXd as = scaled(a, rho);
  const Eigen::MatrixXd bs = scaled(b, rho);
  Eigen::MatrixXd r2 = -2.0 * as * bs.transpose();
  r2.colwise() += as.rowwise().squaredNorm();
  r2.rowwise() += bs.rowwise().squaredNorm().transpose();
  return r2.cwiseMax(0.0).cwiseSqrt();
}

KernelParts kernel_parts(const KernelHyperparams& hp, const Eigen::MatrixXd& a,
                         const Eigen::MatrixXd& b) {
  KernelParts p;
  p.r = distances(hp, a, b);
  const double s = hp.outputscale();
  p.k = p.r.unaryExpr([s](double r) {
    const double u = kSqrt5 * r;
    return s * (1.0 + u + u * u / 3.0) * std::exp(-u);
  });
  return p;
}

void clamp(Eigen::VectorXd& packed, bool fixed_noise) {
  const Eigen::Index d = packed.size() - 3;
  packed[0] = std::clamp(packed[0], kLogOutputscaleMin, kLogOutputscaleMax);
  packed[1] = fixed_noise ? kLogNoiseMin : std::clamp(packed[1], kLogNoiseMin, kLogNoiseMax);
  for (Eigen::Index i = 0; i < d; ++i) packed[2 + i] = std::clamp(packed[2 + i], kLogRhoMin, kLogRhoMax);
  packed[2 + d] = std::clamp(packed[2 + d], kLogTauMin, kLogTauMax);
}

double log_half_cauchy(double x, double scale) {
  return std::log(2.0 / (std::numbers::pi * scale)) - std::log1p((x / scale) * (x / scale));
}

double log_gamma_density(double x, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

}  // namespace

double KernelHyperparams::outputscale() const { return std::exp(log_outputscale); }
double KernelHyperparams::noise() const { return std::max(std::exp(log_noise), kNoiseFloor); }
Eigen::VectorXd KernelHyperparams::inv_sq_lengthscales() const {
  return log_inv_sq_lengthscales.array().exp();
}
double KernelHyperparams::tau() const { return std::exp(log_tau); }

double matern52(const KernelHyperparams& hp, const Eigen::Ref<const Eigen::VectorXd>& a,
                const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() != hp.dim() || b.size() != hp.dim()) throw DimensionError("matern52: dimension mismatch");
  const double r2 = (hp.inv_sq_lengthscales().array() * (a - b).array().square()).sum();
  const double u = kSqrt5 * std::sqrt(r2);
  return hp.outputscale() * (1.0 + u + u * u / 3.0) * std::exp(-u);
}

Eigen::MatrixXd kernel_matrix(const KernelHyperparams& hp, const Eigen::MatrixXd& a,
                              const Eigen::MatrixXd& b) {
  return kernel_parts(hp, a, b).k;
}

Eigen::LLT<Eigen::MatrixXd> robust_cholesky(const Eigen::MatrixXd& m, double* jitter_used) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() == Eigen::Success) {
    if (jitter_used) *jitter_used = 0.0;
    return llt;
  }
  const double base = std::max(m.diagonal().mean(), 1e-12);
  const Eigen::Index n = m.rows();
  for (double level : kJitterLadder) {
    const double jitter = level * base;
    llt.compute(m + jitter * Eigen::MatrixXd::Identity(n, n));
    if (llt.info() == Eigen::Success) {
      if (jitter_used) *jitter_used = jitter;
      return llt;
    }
  }
  throw NumericalError("covariance is not positive definite even with jitter " +
                       std::to_string(kJitterLadder[2]));
}

// ---------------------------------------------------------------------------

GPModelState::GPModelState(KernelHyperparams hp, Eigen::MatrixXd x, const Eigen::VectorXd& y)
    : hp_(std::move(hp)), x_(std::move(x)) {
  if (y.size() != x_.rows()) throw DimensionError("GPModelState: |x| != |y|");
  if (y.size() == 0) throw std::invalid_argument("GPModelState needs at least one point");
  y_mean_ = y.mean();
  const double var = (y.array() - y_mean_).square().sum() / static_cast<double>(y.size());
  y_sd_ = var > 0.0 ? std::sqrt(var) : 1.0;
  y_ = (y.array() - y_mean_) / y_sd_;
  factorize();
}

GPModelState::GPModelState(KernelHyperparams hp, Eigen::MatrixXd x, const Eigen::VectorXd& y,
                           double y_mean, double y_sd)
    : hp_(std::move(hp)), x_(std::move(x)), y_mean_(y_mean), y_sd_(y_sd) {
  if (y.size() != x_.rows()) throw DimensionError("GPModelState: |x| != |y|");
  if (!(y_sd_ > 0.0)) throw std::invalid_argument("GPModelState: y_sd must be positive");
  y_ = (y.array() - y_mean_) / y_sd_;
  factorize();
}

void GPModelState::factorize() {
  if (x_.cols() != hp_.dim()) {
    throw DimensionError("training points have dimension " + std::to_string(x_.cols()) +
                         ", hyperparameters " + std::to_string(hp_.dim()));
  }
  Eigen::MatrixXd k = kernel_matrix(hp_, x_, x_);
  k.diagonal().array() += hp_.noise();
  llt_ = robust_cholesky(k, &jitter_);
  alpha_ = llt_.solve(y_);
}

PosteriorMoments GPModelState::predict(const Eigen::Ref<const Eigen::VectorXd>& point) const {
  if (point.size() != dim()) {
    throw DimensionError("predict: point has dimension " + std::to_string(point.size()) +
                         ", model has " + std::to_string(dim()));
  }
  const Eigen::MatrixXd p = point.transpose();
  const Eigen::VectorXd k = kernel_matrix(hp_, x_, p).col(0);
  const Eigen::VectorXd v = llt_.matrixL().solve(k);
  const double var = std::max(0.0, hp_.outputscale() - v.squaredNorm());
  return PosteriorMoments{y_mean_ + y_sd_ * k.dot(alpha_), var * y_sd_ * y_sd_};
}

PosteriorMoments GPModelState::predict(const EncodedPoint& point) const {
  const Eigen::Map<const Eigen::VectorXd> p(point.coords.data(),
                                            static_cast<Eigen::Index>(point.coords.size()));
  return predict(Eigen::VectorXd(p));
}

Eigen::VectorXd GPModelState::posterior_mean_std(const Eigen::MatrixXd& points) const {
  return kernel_matrix(hp_, points, x_) * alpha_;
}

Eigen::MatrixXd GPModelState::posterior_cov_std(const Eigen::MatrixXd& points) const {
  const Eigen::MatrixXd kxp = kernel_matrix(hp_, x_, points);
  const Eigen::MatrixXd v = llt_.matrixL().solve(kxp);
  Eigen::MatrixXd cov = kernel_matrix(hp_, points, points);
  cov.noalias() -= v.transpose() * v;
  return cov;
}

GPModelState GPModelState::with_observations(const Eigen::MatrixXd& x_new,
                                             const Eigen::VectorXd& y_new) const {
  if (x_new.cols() != dim()) throw DimensionError("with_observations: dimension mismatch");
  if (x_new.rows() != y_new.size()) throw DimensionError("with_observations: |x| != |y|");
  Eigen::MatrixXd x(x_.rows() + x_new.rows(), x_.cols());
  x << x_, x_new;
  Eigen::VectorXd y(y_.size() + y_new.size());
  y << (y_.array() * y_sd_ + y_mean_).matrix(), y_new;
  GPModelState out(hp_, std::move(x), y, y_mean_, y_sd_);
  out.log_posterior_ = log_posterior_;
  return out;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd pack(const KernelHyperparams& hp) {
  const Eigen::Index d = hp.dim();
  Eigen::VectorXd p(d + 3);
  p[0] = hp.log_outputscale;
  p[1] = hp.log_noise;
  p.segment(2, d) = hp.log_inv_sq_lengthscales;
  p[2 + d] = hp.log_tau;
  return p;
}

KernelHyperparams unpack(const Eigen::VectorXd& packed) {
  if (packed.size() < 4) throw DimensionError("packed hyperparameters need at least 4 entries");
  const Eigen::Index d = packed.size() - 3;
  KernelHyperparams hp;
  hp.log_outputscale = packed[0];
  hp.log_noise = packed[1];
  hp.log_inv_sq_lengthscales = packed.segment(2, d);
  hp.log_tau = packed[2 + d];
  return hp;
}

double log_marginal_likelihood(const KernelHyperparams& hp, const Eigen::MatrixXd& x,
                               const Eigen::VectorXd& y) {
  if (x.rows() != y.size()) throw DimensionError("log_marginal_likelihood: |x| != |y|");
  Eigen::MatrixXd k = kernel_matrix(hp, x, x);
  k.diagonal().array() += hp.noise();
  const auto llt = robust_cholesky(k);
  const Eigen::VectorXd alpha = llt.solve(y);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double n = static_cast<double>(y.size());
  return -0.5 * y.dot(alpha) - 0.5 * log_det - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

ObjectiveValue log_marginal_likelihood_with_gradient(const KernelHyperparams& hp,
                                                     const Eigen::MatrixXd& x,
                                                     const Eigen::VectorXd& y) {
  if (x.rows() != y.size()) throw DimensionError("log_marginal_likelihood: |x| != |y|");
  const Eigen::Index n = x.rows();
  const Eigen::Index d = hp.dim();
  const KernelParts parts = kernel_parts(hp, x, x);
  Eigen::MatrixXd k = parts.k;
  const double noise = hp.noise();
  k.diagonal().array() += noise;
  const auto llt = robust_cholesky(k);
  const Eigen::VectorXd alpha = llt.solve(y);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();

  ObjectiveValue out;
  out.value = -0.5 * y.dot(alpha) - 0.5 * log_det -
              0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  out.gradient = Eigen::VectorXd::Zero(d + 3);

  // dL/dtheta = 1/2 tr(W dK/dtheta), W = alpha alpha^T - K^{-1}.
  Eigen::MatrixXd w = llt.solve(Eigen::MatrixXd::Identity(n, n));
  w = alpha * alpha.transpose() - w;

  out.gradient[0] = 0.5 * (w.array() * parts.k.array()).sum();
  // The noise is clamped at the floor; no gradient flows below it.
  out.gradient[1] = std::exp(hp.log_noise) >= kNoiseFloor ? 0.5 * noise * w.trace() : 0.0;

  // dk/drho_i = -5/6 s (1 + sqrt5 r) exp(-sqrt5 r) (a_i - b_i)^2.
  const double s = hp.outputscale();
  const Eigen::MatrixXd m = parts.r.unaryExpr([s](double r) {
    const double u = kSqrt5 * r;
    return -5.0 / 6.0 * s * (1.0 + u) * std::exp(-u);
  });
  const Eigen::MatrixXd g = w.cwiseProduct(m);
  const Eigen::VectorXd row_sums = g.rowwise().sum();
  const Eigen::MatrixXd gx = g * x;
  const Eigen::VectorXd rho = hp.inv_sq_lengthscales();
  for (Eigen::Index i = 0; i < d; ++i) {
    // sum_jk g_jk (x_ji - x_ki)^2 for symmetric g.
    const double quad = 2.0 * x.col(i).array().square().matrix().dot(row_sums) -
                        2.0 * x.col(i).dot(gx.col(i));
    out.gradient[2 + i] = 0.5 * rho[i] * quad;
  }
  return out;
}

ObjectiveValue log_prior(const KernelHyperparams& hp, double tau_scale) {
  const Eigen::Index d = hp.dim();
  ObjectiveValue out;
  out.gradient = Eigen::VectorXd::Zero(d + 3);

  const double s = hp.outputscale();
  out.value += log_gamma_density(s, kOutputscaleShape, kOutputscaleRate) + hp.log_outputscale;
  out.gradient[0] = kOutputscaleShape - kOutputscaleRate * s;

  const double noise = std::exp(hp.log_noise);
  out.value += log_gamma_density(noise, kNoiseShape, kNoiseRate) + hp.log_noise;
  out.gradient[1] = kNoiseShape - kNoiseRate * noise;

  const double tau = hp.tau();
  const double t = tau / tau_scale;
  out.value += log_half_cauchy(tau, tau_scale) + hp.log_tau;
  double g_tau = 1.0 - 2.0 * t * t / (1.0 + t * t);

  const Eigen::VectorXd rho = hp.inv_sq_lengthscales();
  for (Eigen::Index i = 0; i < d; ++i) {
    const double q = rho[i] / tau;
    out.value += log_half_cauchy(rho[i], tau) + hp.log_inv_sq_lengthscales[i];
    const double shrink = 2.0 * q * q / (1.0 + q * q);
    out.gradient[2 + i] = 1.0 - shrink;
    g_tau += -1.0 + shrink;
  }
  out.gradient[2 + d] = g_tau;
  return out;
}

// ---------------------------------------------------------------------------

namespace {

KernelHyperparams random_init(Eigen::Index d, Rng& rng, bool fixed_noise) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto log_uniform = [&](double lo, double hi) {
    return std::log(lo) + u(rng) * (std::log(hi) - std::log(lo));
  };
  KernelHyperparams hp;
  hp.log_outputscale = log_uniform(0.5, 2.0);
  hp.log_noise = fixed_noise ? std::log(kNoiseFloor) : log_uniform(1e-3, 1e-1);
  hp.log_tau = log_uniform(1e-2, 1.0);
  hp.log_inv_sq_lengthscales.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) hp.log_inv_sq_lengthscales[i] = log_uniform(1e-2, 1.0);
  return hp;
}

// Adam ascent on log posterior; returns the best point visited.
std::pair<Eigen::VectorXd, double> maximize(Eigen::VectorXd theta, const Eigen::MatrixXd& x,
                                            const Eigen::VectorXd& y, const FitOptions& opt) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  clamp(theta, opt.fixed_noise);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd best = theta;
  double best_value = -std::numeric_limits<double>::infinity();
  for (int step = 1; step <= opt.steps + 1; ++step) {
    const KernelHyperparams hp = unpack(theta);
    ObjectiveValue lml;
    try {
      lml = log_marginal_likelihood_with_gradient(hp, x, y);
    } catch (const NumericalError&) {
      break;
    }
    const ObjectiveValue prior = log_prior(hp, opt.tau_scale);
    const double value = lml.value + prior.value;
    if (!std::isfinite(value)) break;
    if (value > best_value) {
      best_value = value;
      best = theta;
    }
    if (step > opt.steps) break;
    Eigen::VectorXd grad = lml.gradient + prior.gradient;
    if (opt.fixed_noise) grad[1] = 0.0;
    m = kBeta1 * m + (1.0 - kBeta1) * grad;
    v = kBeta2 * v + (1.0 - kBeta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(kBeta1, step);
    const double c2 = 1.0 - std::pow(kBeta2, step);
    theta.array() += opt.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + kEps);
    clamp(theta, opt.fixed_noise);
  }
  return {best, best_value};
}

}  // namespace

Ensemble fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const FitOptions& options,
             std::uint64_t seed) {
  if (x.rows() != y.size()) {
    throw DimensionError("fit: " + std::to_string(x.rows()) + " points but " +
                         std::to_string(y.size()) + " values");
  }
  if (x.rows() < 2) throw std::invalid_argument("fit needs at least two observations");
  if (options.restarts == 0) throw std::invalid_argument("fit needs at least one restart");
  const Eigen::Index d = x.cols();
  for (const auto& w : options.warm_starts) {
    if (w.dim() != d) throw DimensionError("warm start has the wrong dimension");
  }

  const double y_mean = y.mean();
  const double var = (y.array() - y_mean).square().sum() / static_cast<double>(y.size());
  const double y_sd = var > 0.0 ? std::sqrt(var) : 1.0;
  const Eigen::VectorXd ys = (y.array() - y_mean) / y_sd;

  Ensemble ensemble;
  ensemble.reserve(options.restarts);
  for (std::size_t r = 0; r < options.restarts; ++r) {
    KernelHyperparams init;
    if (r < options.warm_starts.size()) {
      init = options.warm_starts[r];
      if (options.fixed_noise) init.log_noise = std::log(kNoiseFloor);
    } else {
      Rng rng = make_rng(seed, "gp-restart", r);
      init = random_init(d, rng, options.fixed_noise);
    }
    auto [theta, value] = maximize(pack(init), x, ys, options);
    if (!std::isfinite(value)) continue;
    GPModelState state(unpack(theta), x, y, y_mean, y_sd);
    state.set_log_posterior(value);
    ensemble.push_back(std::move(state));
  }
  if (ensemble.empty()) throw NumericalError("every GP restart failed to factorize");
  return ensemble;
}

Eigen::MatrixXd to_matrix(std::span<const EncodedPoint> points) {
  if (points.empty()) return Eigen::MatrixXd(0, 0);
  const auto d = static_cast<Eigen::Index>(points.front().coords.size());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(points.size()), d);
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (static_cast<Eigen::Index>(points[i].coords.size()) != d) {
      throw DimensionError("encoded points differ in dimension");
    }
    for (Eigen::Index j = 0; j < d; ++j) {
      x(static_cast<Eigen::Index>(i), j) = points[i].coords[static_cast<std::size_t>(j)];
    }
  }
  return x;
}

Ensemble fit(std::span<const EncodedPoint> points, std::span<const double> values,
             const FitOptions& options, std::uint64_t seed) {
  const Eigen::MatrixXd x = to_matrix(points);
  Eigen::VectorXd y(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) y[static_cast<Eigen::Index>(i)] = values[i];
  return fit(x, y, options, seed);
}

Eigen::MatrixXd sample_posterior(const Ensemble& ensemble, const Eigen::MatrixXd& points,
                                 std::size_t n_samples, std::uint64_t seed) {
  if (ensemble.empty()) throw std::invalid_argument("sample_posterior: empty ensemble");
  const Eigen::Index p = points.rows();
  const auto k = static_cast<Eigen::Index>(n_samples);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(ensemble.size()) * k, p);
  for (std::size_t m = 0; m < ensemble.size(); ++m) {
    const auto& model = ensemble[m];
    if (points.cols() != model.dim()) throw DimensionError("sample_posterior: dimension mismatch");
    const Eigen::VectorXd mean = model.posterior_mean_std(points);
    const auto llt = robust_cholesky(model.posterior_cov_std(points));
    Rng rng = make_rng(seed, "posterior-sample", m);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd z(p, k);
    for (Eigen::Index j = 0; j < k; ++j) {
      for (Eigen::Index i = 0; i < p; ++i) z(i, j) = normal(rng);
    }
    Eigen::MatrixXd f = llt.matrixL() * z;
    f.colwise() += mean;
    out.middleRows(static_cast<Eigen::Index>(m) * k, k) =
        (f.transpose().array() * model.y_sd() + model.y_mean()).matrix();
  }
  return out;
}

}  // namespace peftsearch::gp
