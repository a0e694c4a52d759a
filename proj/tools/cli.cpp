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

#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "peftsearch/config_space.hpp"
#include "peftsearch/errors.hpp"
#include "peftsearch/io.hpp"
#include "peftsearch/objectives.hpp"
#include "peftsearch/orchestrator.hpp"
#include "peftsearch/pareto.hpp"

namespace peftsearch::cli {

namespace {

namespace fs = std::filesystem;

struct BackendFlags {
  std::string space_file;
  std::string backend = "synthetic";
  std::uint64_t landscape_seed = 7;
  double noise_sd = 0.2;
  std::string tabular_file;
  std::string worker_cmd;
  double worker_timeout_s = 1800.0;
};

struct SearchFlags {
  std::uint64_t seed = 0;
  std::size_t n_init = 100;
  std::size_t n_total = 200;
  std::size_t batch_q = 1;
  double fidelity = 0.05;
  std::string out;
  std::string state;
  std::size_t mc_samples = 128;
  std::size_t restarts = 8;
  int fit_steps = 200;
  std::size_t refit_every = 1;
  bool model_cost = false;
  bool no_dedup = false;
  bool resume = false;
};

// Usage problems detected after flag parsing.
class UsageError : public Error {
 public:
  using Error::Error;
};

void add_backend_flags(CLI::App* app, BackendFlags& f) {
  app->add_option("--space-file", f.space_file, "Search space JSON (default: 12 layers, D_h 768)");
  app->add_option("--backend", f.backend, "Evaluation backend")
      ->check(CLI::IsMember({"synthetic", "tabular", "worker"}));
  app->add_option("--landscape-seed", f.landscape_seed, "Synthetic landscape seed");
  app->add_option("--noise-sd", f.noise_sd, "Synthetic noise standard deviation")
      ->check(CLI::NonNegativeNumber);
  app->add_option("--tabular-file", f.tabular_file, "Tabular benchmark (line-delimited JSON)");
  app->add_option("--worker-cmd", f.worker_cmd, "Worker command, run through /bin/sh -c");
  app->add_option("--worker-timeout", f.worker_timeout_s, "Per-request worker timeout in seconds")
      ->check(CLI::PositiveNumber);
}

void add_search_flags(CLI::App* app, SearchFlags& f) {
  app->add_option("--seed", f.seed, "Master seed");
  app->add_option("--n-init", f.n_init, "Random initial evaluations");
  app->add_option("--n-total", f.n_total, "Total evaluations");
  app->add_option("--batch-q", f.batch_q, "Configurations per batch");
  app->add_option("--fidelity", f.fidelity, "Fraction of full training per evaluation");
  app->add_option("--out", f.out, "Output directory")->required();
  app->add_option("--state", f.state, "State file (default: <out>/state.jsonl)");
  app->add_option("--mc-samples", f.mc_samples, "Monte Carlo samples per ensemble member");
  app->add_option("--restarts", f.restarts, "Surrogate ensemble size");
  app->add_option("--fit-steps", f.fit_steps, "Optimizer steps per surrogate restart");
  app->add_option("--refit-every", f.refit_every, "Refit hyperparameters every k batches");
  app->add_flag("--model-cost", f.model_cost, "Model the cost with a second surrogate");
  app->add_flag("--no-dedup", f.no_dedup, "Allow re-evaluating configurations");
  app->add_flag("--resume", f.resume, "Continue from the state file if it exists");
}

SearchSpaceSpec load_space(const BackendFlags& f) {
  return f.space_file.empty() ? bert_base_space() : load_space_file(f.space_file);
}

std::unique_ptr<Backend> make_backend(const BackendFlags& f, const SearchSpaceSpec& space,
                                      std::size_t pool_size) {
  if (f.backend == "synthetic") {
    SyntheticLandscapeSpec spec;
    spec.landscape_seed = f.landscape_seed;
    spec.noise_sd = f.noise_sd;
    return std::make_unique<SyntheticBackend>(SyntheticLandscape(space, spec));
  }
  if (f.backend == "tabular") {
    if (f.tabular_file.empty()) throw UsageError("--backend tabular needs --tabular-file");
    return std::make_unique<TabularBackend>(load_tabular(fs::path(f.tabular_file), space));
  }
  if (f.worker_cmd.empty()) throw UsageError("--backend worker needs --worker-cmd");
  WorkerOptions opts;
  opts.command = f.worker_cmd;
  opts.pool_size = std::max<std::size_t>(pool_size, 1);
  opts.timeout = std::chrono::milliseconds(static_cast<std::int64_t>(f.worker_timeout_s * 1000.0));
  return std::make_unique<WorkerBackend>(std::move(opts));
}

std::string join_layers(const Configuration& c, char sep) {
  std::string s;
  for (int l : active_layer_list(c)) {
    if (!s.empty()) s += sep;
    s += std::to_string(l);
  }
  return s.empty() ? "-" : s;
}

void print_front_table(std::ostream& out, const ParetoFront& front) {
  char line[256];
  std::snprintf(line, sizeof line, "%8s %10s  %-30s %5s %5s %5s\n", "cost%", "score", "layers",
                "d_sa", "d_pa", "l_pt");
  out << line;
  for (const auto& e : front.entries) {
    std::snprintf(line, sizeof line, "%8.2f %10.2f  %-30s %5lld %5lld %5lld\n",
                  100.0 * e.objectives.cost, e.objectives.score,
                  join_layers(e.config, ',').c_str(), static_cast<long long>(e.config.d_sa),
                  static_cast<long long>(e.config.d_pa), static_cast<long long>(e.config.l_pt));
    out << line;
  }
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f << content;
  if (!f) throw Error("failed writing " + path.string());
}

std::string front_text(const ParetoFront& front) {
  std::ostringstream s;
  write_front(s, front);
  return s.str();
}

std::string hv_text(std::span<const HvPoint> trajectory) {
  std::ostringstream s;
  write_hv_csv(s, trajectory);
  return s.str();
}

std::string observations_csv(const RunState& state) {
  std::ostringstream s;
  s << "iteration,layers,d_sa,d_pa,l_pt,score,cost,fidelity,seed\n";
  for (std::size_t i = 0; i < state.observations.size(); ++i) {
    const auto& o = state.observations[i];
    s << i << ',' << join_layers(o.config, ' ') << ',' << o.config.d_sa << ',' << o.config.d_pa
      << ',' << o.config.l_pt << ',' << format_double(o.score) << ',' << format_double(o.cost)
      << ',' << format_double(o.fidelity) << ',' << o.seed << '\n';
  }
  return s.str();
}

// ---------------------------------------------------------------------------

int cmd_space(const BackendFlags& f, std::ostream& out) {
  const SearchSpaceSpec space = load_space(f);
  const Configuration full = full_config(space);
  std::ostringstream s;
  s << "num_layers: " << space.num_layers << '\n';
  s << "hidden_dim: " << space.hidden_dim << '\n';
  s << "size_grid:";
  for (auto v : space.size_grid) s << ' ' << v;
  s << '\n';
  s << "base_param_count: " << space.base_param_count << '\n';
  s << "cardinality: " << cardinality(space) << '\n';
  s << "param_count_min: 0\n";
  s << "param_count_max: " << param_count(space, full) << '\n';
  s << "param_fraction_min: 0\n";
  s << "param_fraction_max: " << format_double(param_fraction(space, full)) << '\n';
  out << s.str();
  return kExitOk;
}

int cmd_search(const BackendFlags& bf, const SearchFlags& sf, bool random, std::ostream& out,
               std::ostream& err) {
  RunConfig cfg;
  cfg.space = load_space(bf);
  cfg.n_init = sf.n_init;
  cfg.n_total = sf.n_total;
  cfg.batch_q = sf.batch_q;
  cfg.fidelity = sf.fidelity;
  cfg.master_seed = sf.seed;
  cfg.dedup = !sf.no_dedup;
  cfg.refit_every = sf.refit_every;
  cfg.fit.restarts = sf.restarts;
  cfg.fit.steps = sf.fit_steps;
  cfg.mc_samples = sf.mc_samples;
  cfg.model_cost = sf.model_cost;
  cfg.validate();
  if (sf.restarts < 1) throw std::invalid_argument("--restarts must be >= 1");

  auto backend = make_backend(bf, cfg.space, cfg.batch_q);
  const fs::path dir(sf.out);
  fs::create_directories(dir);
  const fs::path state_path = sf.state.empty() ? dir / "state.jsonl" : fs::path(sf.state);
  const fs::path log_path = dir / "observations.jsonl";
  cfg.state_path = state_path;
  cfg.log_path = log_path;
  cfg.log = [&err](const std::string& msg) { err << "peftsearch: " << msg << '\n'; };

  RunResult result;
  if (sf.resume && fs::exists(state_path)) {
    result = resume(state_path, cfg, *backend);
  } else {
    fs::remove(log_path);
    fs::remove(state_path);
    result = random ? random_search(cfg, *backend) : run(cfg, *backend);
  }
  const auto& [front, state] = result;
  write_file(dir / "front.jsonl", front_text(front));
  write_file(dir / "hv.csv", hv_text(state.hv_trajectory));
  print_front_table(out, front);
  if (!state.hv_trajectory.empty()) {
    out << "evaluations: " << state.observations.size()
        << "  hypervolume: " << format_double(state.hv_trajectory.back().hv) << '\n';
  }
  return kExitOk;
}

int cmd_scaling(const BackendFlags& bf, std::uint64_t seed, double fidelity,
                const std::string& out_path, std::ostream& out) {
  const SearchSpaceSpec space = load_space(bf);
  if (!(fidelity > 0.0 && fidelity <= 1.0)) throw std::invalid_argument("fidelity must lie in (0, 1]");
  auto backend = make_backend(bf, space, 1);
  std::vector<ParetoEntry> entries;
  for (std::size_t level = 0; level < space.grid_levels(); ++level) {
    Configuration c = full_config(space);
    c.d_sa = c.d_pa = c.l_pt = space.size_grid[level];
    const Observation o = evaluate(*backend, space, c, fidelity, evaluation_seed(seed, level));
    entries.push_back(ParetoEntry{o.config, o.objectives()});
  }
  const ParetoFront front = non_dominated(entries);
  write_file(out_path, front_text(front));
  print_front_table(out, front);
  return kExitOk;
}

int cmd_pareto(const std::string& state_path, const std::string& out_path, std::ostream& out) {
  const LoadedState loaded = load_state(state_path);
  const ParetoFront front = final_front(loaded.state);
  if (!out_path.empty()) write_file(out_path, front_text(front));
  print_front_table(out, front);
  return kExitOk;
}

int cmd_hv(const std::string& state_path, const std::string& out_path,
           const std::vector<double>& ref, std::ostream& out) {
  const LoadedState loaded = load_state(state_path);
  std::vector<HvPoint> trajectory = loaded.state.hv_trajectory;
  if (!ref.empty()) {
    trajectory = hypervolume_trajectory(loaded.state.observations, ObjectiveVector{ref[0], ref[1]});
  }
  const std::string text = hv_text(trajectory);
  if (out_path.empty()) {
    out << text;
  } else {
    write_file(out_path, text);
  }
  return kExitOk;
}

int cmd_export(const std::string& state_path, const std::string& out_dir, std::ostream& out) {
  const LoadedState loaded = load_state(state_path);
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  write_file(dir / "front.jsonl", front_text(final_front(loaded.state)));
  write_file(dir / "hv.csv", hv_text(loaded.state.hv_trajectory));
  write_file(dir / "observations.csv", observations_csv(loaded.state));
  out << "wrote " << (dir / "front.jsonl").string() << ", " << (dir / "hv.csv").string() << ", "
      << (dir / "observations.csv").string() << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-objective search over PEFT configurations", "peftsearch"};
  app.require_subcommand(1);

  BackendFlags space_flags;
  auto* space_cmd = app.add_subcommand("space", "Describe a search space");
  space_cmd->add_option("--space-file", space_flags.space_file, "Search space JSON");

  BackendFlags search_bf;
  SearchFlags search_sf;
  auto* search_cmd = app.add_subcommand("search", "Run the Bayesian optimization loop");
  add_backend_flags(search_cmd, search_bf);
  add_search_flags(search_cmd, search_sf);

  BackendFlags random_bf;
  SearchFlags random_sf;
  auto* random_cmd = app.add_subcommand("random", "Run the random-search baseline");
  add_backend_flags(random_cmd, random_bf);
  add_search_flags(random_cmd, random_sf);

  BackendFlags scaling_bf;
  std::uint64_t scaling_seed = 0;
  double scaling_fidelity = 0.05;
  std::string scaling_out;
  auto* scaling_cmd =
      app.add_subcommand("scaling", "Evaluate the maximal configuration scaled down in lockstep");
  add_backend_flags(scaling_cmd, scaling_bf);
  scaling_cmd->add_option("--seed", scaling_seed, "Master seed");
  scaling_cmd->add_option("--fidelity", scaling_fidelity, "Fraction of full training");
  scaling_cmd->add_option("--out", scaling_out, "Front file")->required();

  std::string pareto_state;
  std::string pareto_out;
  auto* pareto_cmd = app.add_subcommand("pareto", "Print the non-dominated set of a run");
  pareto_cmd->add_option("--state", pareto_state, "State file")->required();
  pareto_cmd->add_option("--out", pareto_out, "Front file");

  std::string hv_state;
  std::string hv_out;
  std::vector<double> hv_ref;
  auto* hv_cmd = app.add_subcommand("hv", "Hypervolume trajectory as CSV");
  hv_cmd->add_option("--state", hv_state, "State file")->required();
  hv_cmd->add_option("--out", hv_out, "CSV file (default: standard output)");
  hv_cmd->add_option("--ref", hv_ref, "Reference point: score cost (default: trajectory nadir)")
      ->expected(2);

  std::string export_state;
  std::string export_out;
  auto* export_cmd = app.add_subcommand("export", "Write front, trajectory and observations");
  export_cmd->add_option("--state", export_state, "State file")->required();
  export_cmd->add_option("--out", export_out, "Output directory")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (space_cmd->parsed()) return cmd_space(space_flags, out);
    if (search_cmd->parsed()) return cmd_search(search_bf, search_sf, false, out, err);
    if (random_cmd->parsed()) return cmd_search(random_bf, random_sf, true, out, err);
    if (scaling_cmd->parsed()) {
      return cmd_scaling(scaling_bf, scaling_seed, scaling_fidelity, scaling_out, out);
    }
    if (pareto_cmd->parsed()) return cmd_pareto(pareto_state, pareto_out, out);
    if (hv_cmd->parsed()) return cmd_hv(hv_state, hv_out, hv_ref, out);
    if (export_cmd->parsed()) return cmd_export(export_state, export_out, out);
  } catch (const UsageError& e) {
    err << "peftsearch: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "peftsearch: " << e.what() << '\n';
    return kExitUsage;
  } catch (const StateMismatchError& e) {
    err << "peftsearch: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InvalidSpaceError& e) {
    err << "peftsearch: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "peftsearch: " << e.what() << '\n';
    return kExitUsage;
  } catch (const RunAborted& e) {
    err << "peftsearch: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "peftsearch: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace peftsearch::cli
