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


#include <atomic>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "peftsearch/errors.hpp"
#include "peftsearch/orchestrator.hpp"

using namespace peftsearch;
namespace fs = std::filesystem;

namespace {

bool same_observations(const std::vector<Observation>& a, const std::vector<Observation>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].config != b[i].config || a[i].score != b[i].score || a[i].cost != b[i].cost ||
        a[i].fidelity != b[i].fidelity || a[i].seed != b[i].seed) {
      return false;
    }
  }
  return true;
}

RunConfig quick_config(std::uint64_t seed = 0) {
  RunConfig cfg;
  cfg.n_init = 10;
  cfg.n_total = 16;
  cfg.master_seed = seed;
  cfg.fit.restarts = 2;
  cfg.fit.steps = 40;
  cfg.mc_samples = 32;
  return cfg;
}

SyntheticBackend synthetic(const SearchSpaceSpec& s) {
  return SyntheticBackend(SyntheticLandscape(s, SyntheticLandscapeSpec{}));
}

// Tabular benchmark covering every configuration of a small space.
TabularBenchmark full_table(const SearchSpaceSpec& s) {
  const SyntheticLandscape land(s, SyntheticLandscapeSpec{});
  TabularBenchmark t;
  for (std::uint64_t i = 0; i < cardinality(s); ++i) {
    const auto c = config_at(s, i);
    t.insert(c, {land.score(c, 1.0, i), std::nullopt});
  }
  return t;
}

// Delegates to another backend and fails once `budget` calls have been made.
class FailingBackend final : public Backend {
 public:
  FailingBackend(Backend& inner, int budget) : inner_(inner), budget_(budget) {}
  BackendResult score(const Configuration& c, double f, std::uint64_t seed) override {
    if (budget_-- <= 0) throw EvaluationError("injected failure");
    return inner_.score(c, f, seed);
  }
  std::string name() const override { return "failing"; }

 private:
  Backend& inner_;
  std::atomic<int> budget_;
};

fs::path temp_path(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("peftsearch_test_" + name);
  fs::remove(p);
  return p;
}

std::vector<ObjectiveVector> objectives_of(const std::vector<Observation>& obs) {
  std::vector<ObjectiveVector> v;
  for (const auto& o : obs) v.push_back(o.objectives());
  return v;
}

// Brute-force O(n^2) maximal set, ascending cost.
std::vector<ObjectiveVector> brute_front(const std::vector<ObjectiveVector>& pts) {
  std::vector<ObjectiveVector> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    bool keep = true;
    for (std::size_t j = 0; j < pts.size() && keep; ++j) {
      keep = !dominates(pts[j], pts[i]) && !(j < i && pts[j] == pts[i]);
    }
    if (keep) out.push_back(pts[i]);
  }
  std::sort(out.begin(), out.end(),
            [](const ObjectiveVector& a, const ObjectiveVector& b) { return a.cost < b.cost; });
  return out;
}

}  // namespace

TEST_CASE("run configuration invariants") {
  RunConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.n_init == 100);
  CHECK(cfg.n_total == 200);
  CHECK(cfg.fidelity == 0.05);
  auto bad = cfg;
  bad.n_total = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.n_total = 100;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.n_init = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.fidelity = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.batch_q = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.space = make_space(2, 2, 100);
  bad.n_total = 109;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.dedup = false;
  CHECK_NOTHROW(bad.validate());
  auto backend = synthetic(cfg.space);
  cfg.n_init = 0;
  CHECK_THROWS_AS(run(cfg, backend), std::invalid_argument);
}

TEST_CASE("initial design") {
  const auto s = bert_base_space();
  const auto a = initial_design(s, 4, 100, true);
  CHECK(a == initial_design(s, 4, 100, true));
  CHECK(a != initial_design(s, 5, 100, true));
  CHECK(std::set<Configuration>(a.begin(), a.end()).size() == 100);
  const auto longer = initial_design(s, 4, 150, true);
  CHECK(std::equal(a.begin(), a.end(), longer.begin()));
  const auto tiny = make_space(1, 1, 10);
  const auto all = initial_design(tiny, 1, 16, true);
  CHECK(std::set<Configuration>(all.begin(), all.end()).size() == 16);
  CHECK_THROWS_AS(initial_design(tiny, 1, 17, true), std::invalid_argument);
}

TEST_CASE("front of a short run matches the brute-force set") {
  const auto s = make_space(2, 4, 100);
  RunConfig cfg = quick_config(3);
  cfg.space = s;
  cfg.n_init = 4;
  cfg.n_total = 6;
  TabularBackend backend(full_table(s));
  const auto [front, state] = run(cfg, backend);
  REQUIRE(state.observations.size() == 6);
  CHECK(front.objectives() == brute_front(objectives_of(state.observations)));
  for (const auto& e : front.entries) {
    bool found = false;
    for (const auto& o : state.observations) found |= o.config == e.config && o.objectives() == e.objectives;
    CHECK(found);
  }
}

TEST_CASE("exhausting a tiny space recovers its true front") {
  const auto s = make_space(2, 2, 100);
  REQUIRE(cardinality(s) == 108);
  RunConfig cfg = quick_config(1);
  cfg.space = s;
  cfg.n_init = 20;
  cfg.n_total = 108;
  cfg.fit.steps = 20;
  const auto table = full_table(s);
  TabularBackend backend(table);
  const auto [front, state] = run(cfg, backend);
  std::set<Configuration> seen;
  for (const auto& o : state.observations) seen.insert(o.config);
  CHECK(seen.size() == 108);
  std::vector<ParetoEntry> everything;
  for (const auto& [key, rec] : table.records) {
    const auto c = config_from_text(s, key);
    everything.push_back({c, {rec.score, param_fraction(s, c)}});
  }
  CHECK(front.objectives() == non_dominated(everything).objectives());
}

TEST_CASE("runs are deterministic and share their initial design with random search") {
  const RunConfig cfg = quick_config(11);
  auto b1 = synthetic(cfg.space);
  auto b2 = synthetic(cfg.space);
  const auto [front1, state1] = run(cfg, b1);
  const auto [front2, state2] = run(cfg, b2);
  CHECK(same_observations(state1.observations, state2.observations));
  CHECK(front1 == front2);
  CHECK(state1.hv_trajectory == state2.hv_trajectory);

  const auto [rfront, rstate] = random_search(cfg, b1);
  REQUIRE(rstate.observations.size() == cfg.n_total);
  for (std::size_t i = 0; i < cfg.n_init; ++i) {
    CHECK(rstate.observations[i].config == state1.observations[i].config);
    CHECK(rstate.observations[i].score == state1.observations[i].score);
  }
  const auto [rfront2, rstate2] = random_search(cfg, b2);
  CHECK(same_observations(rstate.observations, rstate2.observations));
}

TEST_CASE("run invariants") {
  RunConfig cfg = quick_config(5);
  cfg.batch_q = 3;
  cfg.n_total = 19;
  auto backend = synthetic(cfg.space);
  const auto [front, state] = run(cfg, backend);
  REQUIRE(state.observations.size() == 19);
  std::set<Configuration> seen;
  for (std::size_t i = 0; i < state.observations.size(); ++i) {
    const auto& o = state.observations[i];
    CHECK_NOTHROW(validate(cfg.space, o.config));
    CHECK(seen.insert(o.config).second);
    CHECK(o.cost == param_fraction(cfg.space, o.config));
    CHECK(o.seed == evaluation_seed(cfg.master_seed, i));
    CHECK(o.fidelity == cfg.fidelity);
  }
  CHECK(front == final_front(state));
  CHECK(front.objectives() == brute_front(objectives_of(state.observations)));
  REQUIRE(state.hv_trajectory.size() == 19);
  for (std::size_t i = 1; i < 19; ++i) {
    CHECK(state.hv_trajectory[i].hv >= state.hv_trajectory[i - 1].hv);
    CHECK(state.hv_trajectory[i].evals == i + 1);
  }
}

TEST_CASE("alternative modes") {
  RunConfig cfg = quick_config(6);
  cfg.model_cost = true;
  cfg.refit_every = 2;
  cfg.batch_q = 2;
  auto backend = synthetic(cfg.space);
  CHECK(run(cfg, backend).second.observations.size() == 16);

  RunConfig repeat = quick_config(6);
  repeat.dedup = false;
  repeat.space = make_space(1, 1, 10);
  repeat.n_init = 3;
  repeat.n_total = 30;
  auto tiny = synthetic(repeat.space);
  const auto [front, state] = run(repeat, tiny);
  CHECK(state.observations.size() == 30);
}

TEST_CASE("fallback when the acquisition has nothing left") {
  RunConfig cfg = quick_config(2);
  cfg.space = make_space(1, 1, 10);
  cfg.n_init = 2;
  cfg.n_total = 16;
  std::vector<std::string> messages;
  cfg.log = [&](const std::string& m) { messages.push_back(m); };
  auto backend = synthetic(cfg.space);
  const auto [front, state] = run(cfg, backend);
  std::set<Configuration> seen;
  for (const auto& o : state.observations) seen.insert(o.config);
  CHECK(seen.size() == 16);
  CHECK(state.fallbacks == messages.size());
}

TEST_CASE("hypervolume trajectory") {
  const auto s = bert_base_space();
  std::vector<Observation> obs(1);
  obs[0].config = empty_config(s);
  obs[0].score = 3.0;
  obs[0].cost = 0.2;
  RunState st;
  st.observations = obs;
  auto t = hypervolume_trajectory(st);
  REQUIRE(t.size() == 1);
  CHECK(t[0] == HvPoint{1, 0.0});

  st.observations.push_back(obs[0]);
  st.observations.back().score = 5.0;
  st.observations.back().cost = 0.1;
  st.observations.push_back(obs[0]);
  st.observations.back().score = 4.0;
  st.observations.back().cost = 0.15;
  t = hypervolume_trajectory(st);
  REQUIRE(t.size() == 3);
  CHECK(t[1].hv == doctest::Approx(2.0 * 0.1));
  CHECK(t[2].hv == t[1].hv);
  CHECK(hypervolume_trajectory(RunState{}).empty());
}

TEST_CASE("state round trip") {
  RunConfig cfg = quick_config(8);
  auto backend = synthetic(cfg.space);
  const auto [front, state] = run(cfg, backend);
  const StateHeader header{cfg.space, cfg.master_seed, cfg.n_init, cfg.batch_q, cfg.fidelity,
                           SearchMode::kBayesian};
  std::stringstream io;
  write_state(io, header, state);
  const auto loaded = read_state(io);
  CHECK(loaded.header.space == cfg.space);
  CHECK(loaded.header.master_seed == cfg.master_seed);
  CHECK(loaded.header.mode == SearchMode::kBayesian);
  REQUIRE(loaded.state.observations.size() == state.observations.size());
  for (std::size_t i = 0; i < state.observations.size(); ++i) {
    CHECK(loaded.state.observations[i].score == state.observations[i].score);
    CHECK(loaded.state.observations[i].cost == state.observations[i].cost);
    CHECK(loaded.state.observations[i].wall_time_s == state.observations[i].wall_time_s);
  }
  CHECK(loaded.state.hv_trajectory == state.hv_trajectory);

  const std::string rec = observation_record(state.observations[3], 3);
  CHECK(rec.find("{\"config\":") == 0);
  CHECK(rec.find("\"iteration\":3") != std::string::npos);
}

TEST_CASE("corrupted state files name the line") {
  RunConfig cfg = quick_config(9);
  auto backend = synthetic(cfg.space);
  const auto [front, state] = run(cfg, backend);
  const StateHeader header{cfg.space, cfg.master_seed, cfg.n_init, cfg.batch_q, cfg.fidelity,
                           SearchMode::kBayesian};
  std::stringstream io;
  write_state(io, header, state);
  std::string text = io.str();
  // Break the fourth line (third observation).
  std::size_t pos = 0;
  for (int i = 0; i < 3; ++i) pos = text.find('\n', pos) + 1;
  text.insert(pos + 5, "#");
  std::istringstream broken(text);
  try {
    read_state(broken);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
  }
  std::istringstream not_state("{\"hello\":1}\n");
  CHECK_THROWS_AS(read_state(not_state), ParseError);
  std::istringstream empty("");
  CHECK_THROWS_AS(read_state(empty), ParseError);
  CHECK_THROWS_AS(load_state("/nonexistent/state.jsonl"), ParseError);
}

TEST_CASE("interrupted runs resume to the uninterrupted result") {
  for (int variant = 0; variant < 3; ++variant) {
    RunConfig cfg = quick_config(21);
    int fail_after = 10;
    if (variant == 1) fail_after = 13;
    if (variant == 2) {
      cfg.batch_q = 2;
      cfg.refit_every = 2;
      cfg.n_total = 18;
      fail_after = 15;
    }
    auto clean_backend = synthetic(cfg.space);
    const auto [clean_front, clean] = run(cfg, clean_backend);

    const auto path = temp_path("resume_" + std::to_string(variant) + ".jsonl");
    const auto log = temp_path("resume_log_" + std::to_string(variant) + ".jsonl");
    RunConfig persisted = cfg;
    persisted.state_path = path;
    persisted.log_path = log;
    auto inner = synthetic(cfg.space);
    FailingBackend failing(inner, fail_after);
    CHECK_THROWS_AS(run(persisted, failing), RunAborted);
    const auto partial = load_state(path).state.observations.size();
    CHECK(partial <= static_cast<std::size_t>(fail_after));
    CHECK(partial >= static_cast<std::size_t>(fail_after) - (cfg.batch_q - 1));

    auto fresh = synthetic(cfg.space);
    const auto [front, resumed] = resume(path, persisted, fresh);
    CHECK(same_observations(resumed.observations, clean.observations));
    CHECK(front == clean_front);

    // The log holds exactly one line per evaluation.
    std::ifstream in(log);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) {
      CHECK(parse_observation_record(cfg.space, line).config == clean.observations[lines].config);
      ++lines;
    }
    CHECK(lines == clean.observations.size());
    fs::remove(path);
    fs::remove(log);
  }
}

TEST_CASE("resuming a finished run changes nothing") {
  RunConfig cfg = quick_config(4);
  const auto path = temp_path("finished.jsonl");
  cfg.state_path = path;
  auto backend = synthetic(cfg.space);
  const auto [front, state] = run(cfg, backend);
  const auto before = fs::last_write_time(path);
  std::ifstream a(path);
  const std::string text_before((std::istreambuf_iterator<char>(a)), {});
  FailingBackend never(backend, 0);
  const auto [front2, state2] = resume(path, cfg, never);
  CHECK(same_observations(state.observations, state2.observations));
  CHECK(front == front2);
  std::ifstream b(path);
  const std::string text_after((std::istreambuf_iterator<char>(b)), {});
  CHECK(text_before == text_after);
  CHECK(fs::last_write_time(path) == before);
  fs::remove(path);
}

TEST_CASE("resume refuses a state from another run") {
  RunConfig cfg = quick_config(4);
  const auto path = temp_path("mismatch.jsonl");
  cfg.state_path = path;
  auto backend = synthetic(cfg.space);
  run(cfg, backend);
  RunConfig other_seed = cfg;
  other_seed.master_seed = 5;
  CHECK_THROWS_AS(resume(path, other_seed, backend), StateMismatchError);
  RunConfig other_space = cfg;
  other_space.space = roberta_large_space();
  try {
    resume(path, other_space, backend);
    FAIL("expected StateMismatchError");
  } catch (const StateMismatchError& e) {
    CHECK(std::string(e.what()).find("search space") != std::string::npos);
  }
  RunConfig other_fidelity = cfg;
  other_fidelity.fidelity = 0.5;
  CHECK_THROWS_AS(resume(path, other_fidelity, backend), StateMismatchError);
  fs::remove(path);
}

TEST_CASE("random search resumes as random search") {
  RunConfig cfg = quick_config(12);
  auto clean_backend = synthetic(cfg.space);
  const auto [cf, clean] = random_search(cfg, clean_backend);
  const auto path = temp_path("random.jsonl");
  RunConfig persisted = cfg;
  persisted.state_path = path;
  auto inner = synthetic(cfg.space);
  FailingBackend failing(inner, 12);
  CHECK_THROWS_AS(random_search(persisted, failing), RunAborted);
  CHECK(load_state(path).header.mode == SearchMode::kRandom);
  const auto [f, resumed] = resume(path, persisted, inner);
  CHECK(same_observations(resumed.observations, clean.observations));
  fs::remove(path);
}
