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


// Prints one PASS/FAIL line per acceptance criterion. Exit status is nonzero
// when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>

#include "peftsearch/acquisition.hpp"
#include "peftsearch/config_space.hpp"
#include "peftsearch/errors.hpp"
#include "peftsearch/gp_surrogate.hpp"
#include "peftsearch/orchestrator.hpp"
#include "peftsearch/pareto.hpp"
#include "peftsearch/peft_reference.hpp"
#include "peftsearch/rng.hpp"

using namespace peftsearch;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
  std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
  if (!ok) ++failures;
}

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---------------------------------------------------------------------------

void cardinality_criterion() {
  const auto t = Clock::now();
  const auto a = cardinality(bert_base_space());
  const auto b = cardinality(roberta_large_space());
  const double us = seconds_since(t) * 1e6;
  std::ostringstream d;
  d << "12 layers -> " << a << ", 24 layers -> " << b << ", " << fmt("%.1f us", us);
  report(a == 5'451'776ULL && b == 22'330'474'496ULL && us < 1000.0, "cardinality", d.str());
}

void table2_criterion() {
  const auto s = bert_base_space();
  const auto c = make_config(s, {3, 4, 8, 9, 10}, 12, 96, 1);
  const auto n = param_count(s, c);
  char shown[32];
  std::snprintf(shown, sizeof shown, "%.2f%%", 100.0 * param_fraction(s, c));
  std::ostringstream d;
  d << "param_count " << n << ", fraction " << shown << " of " << s.base_param_count;
  report(n == 837'120 && std::string(shown) == "0.76%", "reported configuration size", d.str());
}

void peft_reference_criterion() {
  const auto s = bert_base_space();
  int count_ok = 0;
  for (const auto& c : random_sample(s, 2024, 100)) count_ok += peft::count_weights(c, s) == param_count(s, c);
  int sapa_ok = 0;
  Rng rng(99);
  for (int t = 0; t < 100; ++t) {
    const Eigen::Index rows = 1 + t % 5, dh = 2 + t % 9;
    const peft::Matrix x = peft::random_matrix(rows, dh, rng);
    const peft::Matrix w = peft::random_matrix(dh, dh, rng);
    const peft::Ffn ffn = [&](const peft::Matrix& m) -> peft::Matrix { return m * w; };
    const auto sa = peft::random_bottleneck(dh, 1 + t % 4, rng);
    const auto pa = peft::random_bottleneck(dh, 1 + t % 6, rng);
    const peft::Matrix want = peft::serial_forward(ffn(x), sa) + peft::parallel_forward(x, pa);
    sapa_ok += peft::sapa_forward(x, ffn, sa, pa) == want;
  }
  std::ostringstream d;
  d << "count_weights == param_count on " << count_ok << "/100, sapa bit-exact on " << sapa_ok
    << "/100";
  report(count_ok == 100 && sapa_ok == 100, "module reference oracle", d.str());
}

void pareto_criterion() {
  const auto t = Clock::now();
  Rng rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> level(0, 9);
  std::uniform_int_distribution<std::size_t> size(1, 50);
  int nd_ok = 0;
  double worst_rel = 0.0;
  for (int set = 0; set < 1000; ++set) {
    const std::size_t n = size(rng);
    std::vector<ObjectiveVector> pts(n);
    for (auto& p : pts) p = set % 2 ? ObjectiveVector{u(rng), u(rng)} : ObjectiveVector{level(rng) / 10.0, level(rng) / 10.0};
    std::vector<std::size_t> oracle;
    for (std::size_t i = 0; i < n; ++i) {
      bool keep = true;
      for (std::size_t j = 0; j < n && keep; ++j) keep = !dominates(pts[j], pts[i]) && !(j < i && pts[j] == pts[i]);
      if (keep) oracle.push_back(i);
    }
    auto got = non_dominated_indices(pts);
    std::sort(got.begin(), got.end());
    nd_ok += got == oracle;

    if (set % 5 == 0) {
      // Integrate over 10^6 cost slices against ref (0, 1).
      const ObjectiveVector ref{0.0, 1.0};
      auto sorted = pts;
      std::sort(sorted.begin(), sorted.end(),
                [](const ObjectiveVector& a, const ObjectiveVector& b) { return a.cost < b.cost; });
      constexpr int kCells = 1'000'000;
      double area = 0.0, best = 0.0;
      std::size_t next = 0;
      for (int c = 0; c < kCells; ++c) {
        const double mid = (c + 0.5) / kCells;
        while (next < sorted.size() && sorted[next].cost <= mid) best = std::max(best, sorted[next++].score);
        area += best / kCells;
      }
      const double exact = hypervolume(pts, ref);
      if (area > 0.0) worst_rel = std::max(worst_rel, std::abs(exact - area) / area);
    }
  }
  const double secs = seconds_since(t);
  std::ostringstream d;
  d << "non_dominated matches pairwise oracle on " << nd_ok << "/1000 sets, worst hypervolume rel. error "
    << fmt("%.2e", worst_rel) << ", " << fmt("%.2f s", secs);
  report(nd_ok == 1000 && worst_rel < 1e-3 && secs < 10.0, "pareto and hypervolume oracles", d.str());
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd uniform_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = u(rng);
  }
  return m;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void gp_criterion() {
  const auto t = Clock::now();

  Eigen::MatrixXd x2(2, 1);
  x2 << 0.0, 1.0;
  Eigen::VectorXd y2(2);
  y2 << 0.0, 1.0;
  gp::FitOptions noiseless;
  noiseless.fixed_noise = true;
  double interp_err = 0.0;
  for (const auto& m : gp::fit(x2, y2, noiseless, 1)) {
    interp_err = std::max(interp_err, std::abs(m.predict(Eigen::VectorXd::Zero(1)).mean));
    interp_err = std::max(interp_err, std::abs(m.predict(Eigen::VectorXd::Ones(1)).mean - 1.0));
  }

  Rng rng(3);
  std::uniform_real_distribution<double> u(-1.5, 1.0);
  std::normal_distribution<double> z;
  double grad_err = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index d = 2 + trial % 4;
    const Eigen::MatrixXd x = uniform_matrix(15, d, rng);
    Eigen::VectorXd y(15);
    for (auto& v : y) v = z(rng);
    gp::KernelHyperparams hp;
    hp.log_outputscale = u(rng);
    hp.log_noise = -3.0 + u(rng);
    hp.log_tau = -2.0;
    hp.log_inv_sq_lengthscales.resize(d);
    for (auto& v : hp.log_inv_sq_lengthscales) v = 2.0 * u(rng);
    const auto g = gp::log_marginal_likelihood_with_gradient(hp, x, y).gradient;
    const Eigen::VectorXd theta = gp::pack(hp);
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      Eigen::VectorXd up = theta, down = theta;
      up[i] += 1e-5;
      down[i] -= 1e-5;
      const double fd = (gp::log_marginal_likelihood(gp::unpack(up), x, y) -
                         gp::log_marginal_likelihood(gp::unpack(down), x, y)) / 2e-5;
      grad_err = std::max(grad_err, std::abs(g[i] - fd) / std::max(std::abs(fd), 1e-2));
    }
  }

  int sparse_ok = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng r = make_rng(seed, "sparse-acceptance");
    const Eigen::MatrixXd x = uniform_matrix(60, 15, r);
    Eigen::VectorXd y(60);
    for (Eigen::Index i = 0; i < 60; ++i) y[i] = std::sin(4.0 * x(i, 2)) + 2.0 * x(i, 10) * x(i, 10);
    const auto ens = gp::fit(x, y, gp::FitOptions{}, seed);
    std::vector<double> rel, irr;
    for (Eigen::Index j = 0; j < 15; ++j) {
      std::vector<double> rho;
      for (const auto& m : ens) rho.push_back(m.hyperparams().inv_sq_lengthscales()[j]);
      (j == 2 || j == 10 ? rel : irr).push_back(median(rho));
    }
    sparse_ok += median(rel) >= 10.0 * median(irr);
  }
  const double secs = seconds_since(t);
  std::ostringstream d;
  d << "interpolation error " << fmt("%.1e", interp_err) << ", gradient rel. error "
    << fmt("%.1e", grad_err) << ", sparsity recovered on " << sparse_ok << "/5 seeds, "
    << fmt("%.1f s", secs);
  report(interp_err < 1e-3 && grad_err < 1e-4 && sparse_ok >= 4 && secs < 120.0,
         "surrogate checks", d.str());
}

// ---------------------------------------------------------------------------

void nehvi_criterion() {
  const auto s = bert_base_space();
  const auto a = make_config(s, {1, 2, 3}, 12, 0, 0);
  const auto b = make_config(s, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}, 192, 192, 192);
  const auto better = make_config(s, {1, 2, 3, 4}, 24, 0, 0);
  const auto worse = make_config(s, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}, 384, 384, 384);
  auto observation = [&](const Configuration& c, double score) {
    Observation o;
    o.config = c;
    o.score = score;
    o.cost = param_fraction(s, c);
    return o;
  };
  const std::vector<Observation> observed{observation(a, 0.010), observation(b, 0.030)};
  const ObjectiveVector ref{0.0, 0.5};
  auto spec_for = [&](const Configuration& cand, double score) {
    std::vector<EncodedPoint> pts{encode(s, a), encode(s, b), encode(s, cand)};
    Eigen::VectorXd y(3);
    y << 0.010, 0.030, score;
    gp::KernelHyperparams hp;
    hp.log_noise = std::log(gp::kNoiseFloor);
    hp.log_inv_sq_lengthscales = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.encoded_dim()));
    AcquisitionSpec spec;
    spec.seed = 5;
    spec.ref_point = ref;
    spec.ensemble.emplace_back(hp, gp::to_matrix(pts), y);
    return spec;
  };
  const double better_score = 0.025;
  std::vector<ObjectiveVector> base{observed[0].objectives(), observed[1].objectives()};
  auto with = base;
  with.push_back({better_score, param_fraction(s, better)});
  const double exact = hypervolume(with, ref) - hypervolume(base, ref);
  const double got = NehviAcquisition(s, spec_for(better, better_score), observed)(better);
  const auto dom = NehviAcquisition(s, spec_for(worse, 0.020), observed).estimate(worse);
  std::ostringstream d;
  d << "improving candidate " << fmt("%.9f", got) << " vs exact " << fmt("%.9f", exact)
    << ", dominated candidate " << fmt("%.2e", dom.value) << " (se " << fmt("%.2e", dom.std_error) << ")";
  report(std::abs(got - exact) < 1e-6 && dom.value <= 3.0 * dom.std_error + 1e-12 && dom.value < 1e-6,
         "acquisition degenerate cases", d.str());
}

// ---------------------------------------------------------------------------

struct TrueFront {
  std::vector<ObjectiveVector> points;
  double seconds = 0.0;
};

TrueFront enumerate_true_front(const SyntheticLandscape& land) {
  const auto t = Clock::now();
  const auto& s = land.space();
  const std::uint64_t n = cardinality(s);
  std::vector<ObjectiveVector> all;
  all.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto c = config_at(s, i);
    all.push_back({land.mean_score(c), param_fraction(s, c)});
  }
  TrueFront f;
  f.points = non_dominated(all);
  f.seconds = seconds_since(t);
  return f;
}

double rescored_hv(const SyntheticLandscape& land, const RunState& st, const ObjectiveVector& ref) {
  std::vector<ObjectiveVector> pts;
  for (const auto& o : st.observations) pts.push_back({land.mean_score(o.config), o.cost});
  return hypervolume(pts, ref);
}

double observed_hv(const RunState& st, const ObjectiveVector& ref) {
  std::vector<ObjectiveVector> pts;
  for (const auto& o : st.observations) pts.push_back(o.objectives());
  return hypervolume(pts, ref);
}

RunConfig standard_run(std::uint64_t seed) {
  RunConfig cfg;
  cfg.master_seed = seed;
  cfg.refit_every = 5;
  return cfg;
}

bool same_run(const RunState& a, const RunState& b) {
  if (a.observations.size() != b.observations.size()) return false;
  for (std::size_t i = 0; i < a.observations.size(); ++i) {
    const auto& x = a.observations[i];
    const auto& y = b.observations[i];
    if (x.config != y.config || x.score != y.score || x.cost != y.cost || x.seed != y.seed ||
        x.fidelity != y.fidelity) {
      return false;
    }
  }
  return a.hv_trajectory == b.hv_trajectory && a.fallbacks == b.fallbacks;
}

class FailAfter final : public Backend {
 public:
  FailAfter(Backend& inner, int budget) : inner_(inner), budget_(budget) {}
  BackendResult score(const Configuration& c, double f, std::uint64_t s) override {
    if (budget_-- <= 0) throw EvaluationError("injected failure");
    return inner_.score(c, f, s);
  }
  std::string name() const override { return "fail-after"; }

 private:
  Backend& inner_;
  int budget_;
};

void end_to_end_and_determinism() {
  const auto t = Clock::now();
  const SyntheticLandscape land(bert_base_space(), SyntheticLandscapeSpec{});
  const auto& s = land.space();
  const TrueFront truth = enumerate_true_front(land);
  const ObjectiveVector ref{0.0, param_fraction(s, full_config(s))};
  const double true_hv = hypervolume(truth.points, ref);

  int bo_wins = 0;
  double worst_ratio = 1.0;
  std::ostringstream per_seed;
  RunState seed0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SyntheticBackend backend(land);
    const auto cfg = standard_run(seed);
    const auto [bo_front, bo] = run(cfg, backend);
    const auto [rs_front, rs] = random_search(cfg, backend);
    const double hv_bo = observed_hv(bo, ref);
    const double hv_rs = observed_hv(rs, ref);
    const double ratio = rescored_hv(land, bo, ref) / true_hv;
    bo_wins += hv_bo >= hv_rs;
    worst_ratio = std::min(worst_ratio, ratio);
    per_seed << " seed " << seed << ": bo " << fmt("%.4f", hv_bo) << " rs " << fmt("%.4f", hv_rs)
             << " ratio " << fmt("%.3f", ratio) << ";";
    std::cerr << "end-to-end seed " << seed << " done at " << fmt("%.0f s", seconds_since(t)) << std::endl;
    if (seed == 0) seed0 = bo;
  }
  const double secs = seconds_since(t);
  std::ostringstream d;
  d << "(a) BO >= random on " << bo_wins << "/5 seeds; (b) worst BO/true hypervolume "
    << fmt("%.3f", worst_ratio) << " (true front " << truth.points.size() << " points, enumerated in "
    << fmt("%.1f s", truth.seconds) << "); total " << fmt("%.0f s", secs) << ";" << per_seed.str();
  report(bo_wins >= 4 && worst_ratio >= 0.90 && truth.seconds < 60.0 && secs < 1800.0,
         "end-to-end search", d.str());

  // Determinism: a second run of seed 0 must reproduce it exactly, including
  // after interruptions at the end of the initial design and mid-loop.
  const auto dt = Clock::now();
  const auto path = std::filesystem::temp_directory_path() / "peftsearch_acceptance_state.jsonl";
  bool resumed_ok = true;
  for (int stop : {100, 150}) {
    std::filesystem::remove(path);
    auto cfg = standard_run(0);
    cfg.state_path = path;
    SyntheticBackend inner(land);
    FailAfter failing(inner, stop);
    bool aborted = false;
    try {
      run(cfg, failing);
    } catch (const RunAborted&) {
      aborted = true;
    }
    SyntheticBackend fresh(land);
    const auto [front, resumed] = resume(path, cfg, fresh);
    resumed_ok = resumed_ok && aborted && same_run(resumed, seed0);
  }
  std::filesystem::remove(path);
  SyntheticBackend again(land);
  const bool repeat_ok = same_run(run(standard_run(0), again).second, seed0);
  std::ostringstream dd;
  dd << "repeat run identical: " << (repeat_ok ? "yes" : "no")
     << ", interrupted at 100 and 150 then resumed identical: " << (resumed_ok ? "yes" : "no")
     << ", " << fmt("%.0f s", seconds_since(dt));
  report(repeat_ok && resumed_ok, "determinism and resume", dd.str());
}

}  // namespace

int main() {
  cardinality_criterion();
  table2_criterion();
  peft_reference_criterion();
  pareto_criterion();
  gp_criterion();
  nehvi_criterion();
  end_to_end_and_determinism();
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
