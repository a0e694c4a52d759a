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

#include "peftsearch/orchestrator.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <set>
#include <sstream>
#include <stdexcept>

#include "peftsearch/io.hpp"
#include "peftsearch/rng.hpp"

namespace peftsearch {

void RunConfig::validate() const {
  space.validate();
  if (n_init < 1) throw std::invalid_argument("n_init must be >= 1");
  if (n_total <= n_init) throw std::invalid_argument("n_total must exceed n_init");
  if (batch_q < 1) throw std::invalid_argument("batch_q must be >= 1");
  if (refit_every < 1) throw std::invalid_argument("refit_every must be >= 1");
  if (!(fidelity > 0.0 && fidelity <= 1.0)) throw std::invalid_argument("fidelity must lie in (0, 1]");
  if (mc_samples < 1) throw std::invalid_argument("mc_samples must be >= 1");
  if (max_steps < 0) throw std::invalid_argument("max_steps must be >= 0");
  if (dedup && n_total > cardinality(space)) {
    throw std::invalid_argument("n_total exceeds the number of distinct configurations");
  }
}

std::vector<Configuration> initial_design(const SearchSpaceSpec& space, std::uint64_t master_seed,
                                          std::size_t count, bool dedup) {
  if (dedup && count > cardinality(space)) {
    throw std::invalid_argument("initial design larger than the search space");
  }
  Rng rng = make_rng(master_seed, "initial-design");
  std::vector<Configuration> design;
  std::set<Configuration> seen;
  design.reserve(count);
  while (design.size() < count) {
    Configuration c = sample_configuration(space, rng);
    if (dedup && !seen.insert(c).second) continue;
    design.push_back(std::move(c));
  }
  return design;
}

std::uint64_t evaluation_seed(std::uint64_t master_seed, std::size_t index) {
  return derive_seed(master_seed, "evaluation", index);
}

std::vector<HvPoint> hypervolume_trajectory(std::span<const Observation> observations,
                                            const ObjectiveVector& ref) {
  std::vector<HvPoint> out;
  std::vector<ObjectiveVector> front;
  for (std::size_t i = 0; i < observations.size(); ++i) {
    front.push_back(observations[i].objectives());
    front = non_dominated(front);
    out.push_back(HvPoint{i + 1, hypervolume(front, ref)});
  }
  return out;
}

std::vector<HvPoint> hypervolume_trajectory(const RunState& state) {
  if (state.observations.empty()) return {};
  std::vector<ObjectiveVector> all;
  for (const auto& o : state.observations) all.push_back(o.objectives());
  return hypervolume_trajectory(state.observations, nadir(all));
}

ParetoFront final_front(const RunState& state) {
  std::vector<ParetoEntry> entries;
  entries.reserve(state.observations.size());
  for (const auto& o : state.observations) entries.push_back(ParetoEntry{o.config, o.objectives()});
  return non_dominated(entries);
}

// ---------------------------------------------------------------------------

std::string observation_record(const Observation& obs, std::size_t iteration) {
  std::string line = "{\"config\":" + to_text(obs.config);
  line += ",\"score\":" + format_double(obs.score);
  line += ",\"cost\":" + format_double(obs.cost);
  line += ",\"fidelity\":" + format_double(obs.fidelity);
  line += ",\"seed\":" + std::to_string(obs.seed);
  line += ",\"iteration\":" + std::to_string(iteration);
  line += ",\"wall_time_s\":" + format_double(obs.wall_time_s);
  line += "}";
  return line;
}

Observation parse_observation_record(const SearchSpaceSpec& space, std::string_view line) {
  const Json j = Json::parse(line);
  Observation o;
  o.config = config_from_json(space, j.at("config"));
  o.score = j.at("score").get<double>();
  o.cost = j.at("cost").get<double>();
  o.fidelity = j.at("fidelity").get<double>();
  o.seed = j.at("seed").get<std::uint64_t>();
  o.wall_time_s = j.at("wall_time_s").get<double>();
  return o;
}

namespace {

constexpr const char* kStateFormat = "peftsearch-state";
constexpr int kStateVersion = 1;

const char* mode_name(SearchMode m) { return m == SearchMode::kRandom ? "random" : "bo"; }

std::string header_record(const StateHeader& h) {
  std::string line = "{\"format\":\"" + std::string(kStateFormat) + "\"";
  line += ",\"version\":" + std::to_string(kStateVersion);
  line += ",\"mode\":\"" + std::string(mode_name(h.mode)) + "\"";
  line += ",\"space\":" + space_to_json(h.space).dump();
  line += ",\"master_seed\":" + std::to_string(h.master_seed);
  line += ",\"n_init\":" + std::to_string(h.n_init);
  line += ",\"batch_q\":" + std::to_string(h.batch_q);
  line += ",\"fidelity\":" + format_double(h.fidelity);
  line += "}";
  return line;
}

StateHeader parse_header(std::string_view line) {
  const Json j = Json::parse(line);
  if (!j.is_object() || j.value("format", std::string()) != kStateFormat) {
    throw ParseError("not a peftsearch state file", 1);
  }
  if (j.at("version").get<int>() != kStateVersion) {
    throw ParseError("unsupported state version", 1);
  }
  StateHeader h;
  const auto mode = j.at("mode").get<std::string>();
  if (mode == "bo") {
    h.mode = SearchMode::kBayesian;
  } else if (mode == "random") {
    h.mode = SearchMode::kRandom;
  } else {
    throw ParseError("unknown search mode '" + mode + "'", 1);
  }
  h.space = space_from_json(j.at("space"));
  h.master_seed = j.at("master_seed").get<std::uint64_t>();
  h.n_init = j.at("n_init").get<std::size_t>();
  h.batch_q = j.at("batch_q").get<std::size_t>();
  h.fidelity = j.at("fidelity").get<double>();
  return h;
}

}  // namespace

void write_state(std::ostream& out, const StateHeader& header, const RunState& state) {
  out << header_record(header) << '\n';
  for (std::size_t i = 0; i < state.observations.size(); ++i) {
    out << observation_record(state.observations[i], i) << '\n';
  }
}

LoadedState read_state(std::istream& in) {
  LoadedState loaded;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      if (!have_header) {
        loaded.header = parse_header(line);
        have_header = true;
        continue;
      }
      loaded.state.observations.push_back(parse_observation_record(loaded.header.space, line));
    } catch (const ParseError&) {
      throw;
    } catch (const Json::exception& e) {
      throw ParseError(e.what(), lineno);
    } catch (const Error& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  if (!have_header) throw ParseError("state file is empty");
  loaded.state.master_seed = loaded.header.master_seed;
  loaded.state.hv_trajectory = hypervolume_trajectory(loaded.state);
  return loaded;
}

LoadedState load_state(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open state file " + path.string());
  try {
    return read_state(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void save_state(const std::filesystem::path& path, const StateHeader& header,
                const RunState& state) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot write state file " + tmp.string());
    write_state(out, header, state);
    out.flush();
    if (!out) throw Error("failed writing state file " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_hv_csv(std::ostream& out, std::span<const HvPoint> trajectory) {
  out << "evals,hv\n";
  for (const auto& p : trajectory) out << p.evals << ',' << format_double(p.hv) << '\n';
}

// ---------------------------------------------------------------------------

namespace {

class Driver {
 public:
  Driver(const RunConfig& cfg, Backend& backend, SearchMode mode, RunState state)
      : cfg_(cfg), backend_(backend), mode_(mode), state_(std::move(state)) {
    header_ = StateHeader{cfg.space, cfg.master_seed, cfg.n_init, cfg.batch_q, cfg.fidelity, mode};
    state_.master_seed = cfg.master_seed;
    for (const auto& o : state_.observations) evaluated_.insert(o.config);
  }

  RunResult go() {
    const std::size_t design_count = mode_ == SearchMode::kRandom ? cfg_.n_total : cfg_.n_init;
    const auto design = initial_design(cfg_.space, cfg_.master_seed, design_count, cfg_.dedup);
    const std::size_t prefix = std::min(design.size(), state_.observations.size());
    for (std::size_t i = 0; i < prefix; ++i) {
      if (state_.observations[i].config != design[i]) {
        throw StateMismatchError("observation " + std::to_string(i) +
                                 " does not match the run's initial design");
      }
    }
    const bool changed = state_.observations.size() < cfg_.n_total;

    while (state_.observations.size() < std::min(design_count, cfg_.n_total)) {
      evaluate_batch({design[state_.observations.size()]});
    }
    if (mode_ == SearchMode::kBayesian) {
      while (state_.observations.size() < cfg_.n_total) bo_step();
    }

    state_.hv_trajectory = hypervolume_trajectory(state_);
    if (changed) persist();
    return {final_front(state_), state_};
  }

 private:
  void log(const std::string& msg) const {
    if (cfg_.log) cfg_.log(msg);
  }

  void persist() const {
    if (cfg_.state_path) save_state(*cfg_.state_path, header_, state_);
  }

  void evaluate_batch(const std::vector<Configuration>& batch) {
    const std::size_t base = state_.observations.size();
    std::vector<Observation> results;
    try {
      if (batch.size() == 1) {
        results.push_back(evaluate(backend_, cfg_.space, batch[0], cfg_.fidelity,
                                   evaluation_seed(cfg_.master_seed, base)));
      } else {
        std::vector<std::future<Observation>> futures;
        for (std::size_t i = 0; i < batch.size(); ++i) {
          futures.push_back(std::async(std::launch::async, [this, &batch, base, i] {
            return evaluate(backend_, cfg_.space, batch[i], cfg_.fidelity,
                            evaluation_seed(cfg_.master_seed, base + i));
          }));
        }
        // Collect every future before rethrowing so no task outlives `batch`.
        std::exception_ptr first_error;
        for (auto& f : futures) {
          try {
            results.push_back(f.get());
          } catch (...) {
            if (!first_error) first_error = std::current_exception();
          }
        }
        if (first_error) std::rethrow_exception(first_error);
      }
    } catch (const std::exception& e) {
      persist();
      const std::string token = cfg_.state_path ? cfg_.state_path->string() : std::string();
      throw RunAborted("evaluation " + std::to_string(base) + " failed: " + e.what() +
                           (token.empty() ? "" : " (resume from " + token + ")"),
                       token);
    }
    for (auto& o : results) {
      if (cfg_.log_path) {
        std::ofstream log(*cfg_.log_path, std::ios::app);
        log << observation_record(o, state_.observations.size()) << '\n';
      }
      evaluated_.insert(o.config);
      state_.observations.push_back(std::move(o));
    }
    persist();
  }

  bool excluded(const Configuration& c) const {
    return pending_.count(c) > 0 || (cfg_.dedup && evaluated_.count(c) > 0);
  }

  Configuration fallback(std::size_t slot) {
    ++state_.fallbacks;
    Rng rng = make_rng(cfg_.master_seed, "fallback", state_.observations.size() + slot);
    const std::uint64_t card = cardinality(cfg_.space);
    if (card <= (std::uint64_t{1} << 20)) {
      std::vector<std::uint64_t> free;
      for (std::uint64_t i = 0; i < card; ++i) {
        if (!excluded(config_at(cfg_.space, i))) free.push_back(i);
      }
      if (free.empty()) throw Error("search space exhausted");
      std::uniform_int_distribution<std::size_t> pick(0, free.size() - 1);
      return config_at(cfg_.space, free[pick(rng)]);
    }
    for (;;) {
      Configuration c = sample_configuration(cfg_.space, rng);
      if (!excluded(c)) return c;
    }
  }

  static Eigen::MatrixXd encode_all(const SearchSpaceSpec& space,
                                    std::span<const Observation> obs) {
    std::vector<EncodedPoint> pts;
    for (const auto& o : obs) pts.push_back(encode(space, o.config));
    return gp::to_matrix(pts);
  }

  static Eigen::VectorXd column(std::span<const Observation> obs, bool cost) {
    Eigen::VectorXd y(static_cast<Eigen::Index>(obs.size()));
    for (std::size_t i = 0; i < obs.size(); ++i) {
      y[static_cast<Eigen::Index>(i)] = cost ? obs[i].cost : obs[i].score;
    }
    return y;
  }

  static gp::Ensemble condition(const gp::Ensemble& base, const Eigen::MatrixXd& x,
                                const Eigen::VectorXd& y) {
    if (x.rows() == 0) return base;
    gp::Ensemble out;
    for (const auto& m : base) out.push_back(m.with_observations(x, y));
    return out;
  }

  // Hyperparameters come from the fit at the start of the current refit
  // window; later observations are only conditioned on.
  std::pair<gp::Ensemble, gp::Ensemble> surrogates() {
    const std::size_t n = state_.observations.size();
    const std::size_t batch_index = (n - cfg_.n_init) / cfg_.batch_q;
    const std::size_t anchor_batch = batch_index - batch_index % cfg_.refit_every;
    const std::size_t anchor = std::min(n, cfg_.n_init + anchor_batch * cfg_.batch_q);
    std::span<const Observation> all(state_.observations);
    if (!base_ || base_anchor_ != anchor) {
      const auto head = all.first(anchor);
      const Eigen::MatrixXd x = encode_all(cfg_.space, head);
      base_ = gp::fit(x, column(head, false), cfg_.fit,
                      derive_seed(cfg_.master_seed, "gp-fit", anchor));
      if (cfg_.model_cost) {
        base_cost_ = gp::fit(x, column(head, true), cfg_.fit,
                             derive_seed(cfg_.master_seed, "gp-fit-cost", anchor));
      }
      base_anchor_ = anchor;
    }
    const auto tail = all.subspan(anchor);
    const Eigen::MatrixXd xt = encode_all(cfg_.space, tail);
    gp::Ensemble score = condition(*base_, xt, column(tail, false));
    gp::Ensemble cost = cfg_.model_cost ? condition(base_cost_, xt, column(tail, true)) : gp::Ensemble{};
    return {std::move(score), std::move(cost)};
  }

  void bo_step() {
    const std::size_t n = state_.observations.size();
    const std::size_t q = std::min(cfg_.batch_q, cfg_.n_total - n);
    std::vector<Configuration> batch;
    pending_.clear();

    if (n < 2) {
      for (std::size_t slot = 0; slot < q; ++slot) {
        batch.push_back(fallback(slot));
        pending_.insert(batch.back());
      }
      evaluate_batch(batch);
      return;
    }

    auto [score_model, cost_model] = surrogates();
    std::vector<Observation> working = state_.observations;
    AcquisitionSpec spec;
    spec.mc_samples = cfg_.mc_samples;
    spec.ref_point = cfg_.ref_point;
    spec.seed = derive_seed(cfg_.master_seed, "nehvi", n);
    spec.ensemble = std::move(score_model);
    spec.cost_ensemble = std::move(cost_model);

    for (std::size_t slot = 0; slot < q; ++slot) {
      const NehviAcquisition acq(cfg_.space, spec, working);
      std::vector<Configuration> starts;
      {
        std::vector<ParetoEntry> entries;
        for (const auto& o : working) entries.push_back(ParetoEntry{o.config, o.objectives()});
        for (auto& e : non_dominated(entries).entries) starts.push_back(std::move(e.config));
      }
      auto found = local_search(
          cfg_.space, [&acq](const Configuration& c) { return acq(c); }, starts, cfg_.max_steps,
          [this](const Configuration& c) { return excluded(c); });
      Configuration pick;
      if (found) {
        pick = std::move(found->config);
      } else {
        pick = fallback(slot);
        log("acquisition exhausted at " + std::to_string(n) + " evaluations; random fallback " +
            to_text(pick));
      }
      pending_.insert(pick);
      batch.push_back(pick);

      if (slot + 1 < q) {
        // Condition on the posterior mean at the pick and search again.
        const auto enc = encode(cfg_.space, pick);
        Eigen::MatrixXd x(1, static_cast<Eigen::Index>(enc.coords.size()));
        for (std::size_t j = 0; j < enc.coords.size(); ++j) {
          x(0, static_cast<Eigen::Index>(j)) = enc.coords[j];
        }
        auto mean_of = [&](const gp::Ensemble& e) {
          double m = 0.0;
          for (const auto& member : e) m += member.predict(Eigen::VectorXd(x.row(0).transpose())).mean;
          return m / static_cast<double>(e.size());
        };
        Observation fantasy;
        fantasy.config = pick;
        fantasy.score = mean_of(spec.ensemble);
        fantasy.cost = spec.cost_ensemble.empty() ? param_fraction(cfg_.space, pick)
                                                  : mean_of(spec.cost_ensemble);
        fantasy.fidelity = cfg_.fidelity;
        spec.ensemble = condition(spec.ensemble, x, Eigen::VectorXd::Constant(1, fantasy.score));
        if (!spec.cost_ensemble.empty()) {
          spec.cost_ensemble =
              condition(spec.cost_ensemble, x, Eigen::VectorXd::Constant(1, fantasy.cost));
        }
        working.push_back(std::move(fantasy));
      }
    }
    evaluate_batch(batch);
  }

  const RunConfig& cfg_;
  Backend& backend_;
  SearchMode mode_;
  RunState state_;
  StateHeader header_;
  std::set<Configuration> evaluated_;
  std::set<Configuration> pending_;
  std::optional<gp::Ensemble> base_;
  gp::Ensemble base_cost_;
  std::size_t base_anchor_ = 0;
};

}  // namespace

RunResult run(const RunConfig& config, Backend& backend) {
  config.validate();
  return Driver(config, backend, SearchMode::kBayesian, RunState{}).go();
}

RunResult random_search(const RunConfig& config, Backend& backend) {
  config.validate();
  return Driver(config, backend, SearchMode::kRandom, RunState{}).go();
}

RunResult resume(const std::filesystem::path& state_path, const RunConfig& config,
                 Backend& backend) {
  config.validate();
  LoadedState loaded = load_state(state_path);
  const auto& h = loaded.header;
  auto mismatch = [&](const std::string& field, const std::string& have, const std::string& want) {
    throw StateMismatchError(state_path.string() + ": " + field + " is " + have +
                             " in the state file but " + want + " was requested");
  };
  if (h.space != config.space) {
    mismatch("search space", space_to_json(h.space).dump(), space_to_json(config.space).dump());
  }
  if (h.master_seed != config.master_seed) {
    mismatch("master seed", std::to_string(h.master_seed), std::to_string(config.master_seed));
  }
  if (h.n_init != config.n_init) {
    mismatch("n_init", std::to_string(h.n_init), std::to_string(config.n_init));
  }
  if (h.batch_q != config.batch_q) {
    mismatch("batch_q", std::to_string(h.batch_q), std::to_string(config.batch_q));
  }
  if (h.fidelity != config.fidelity) {
    mismatch("fidelity", format_double(h.fidelity), format_double(config.fidelity));
  }
  RunConfig cfg = config;
  if (!cfg.state_path) cfg.state_path = state_path;
  return Driver(cfg, backend, h.mode, std::move(loaded.state)).go();
}

}  // namespace peftsearch
