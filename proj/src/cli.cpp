// SPDX-License-Identifier: Apache-2.0
#include "fedgame/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>

#include "fedgame/experiment.hpp"
#include "fedgame/format.hpp"
#include "fedgame/report.hpp"

namespace fedgame::cli {

namespace fs = std::filesystem;

ExperimentConfig resolve_config(const fs::path& config_path, const RunOverrides& overrides) {
  ExperimentConfig config = load_config(config_path);
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) config.output_dir = env;
  if (overrides.output_dir) config.output_dir = *overrides.output_dir;
  if (overrides.seed) config.seed = *overrides.seed;
  if (overrides.threads) config.threads = *overrides.threads;
  if (overrides.rounds) config.protocol.rounds = *overrides.rounds;
  auto problems = config_problems(config);
  if (!problems.empty()) throw ConfigValidationError(std::move(problems));
  return config;
}

namespace {

ExecutionOptions exec_options(const ExperimentConfig& config, const RunOverrides& overrides) {
  return ExecutionOptions{config.threads, overrides.reverse_client_order};
}

template <class Fn>
std::string render(Fn&& fn) {
  std::ostringstream os;
  fn(os);
  return os.str();
}

void write_outputs(const fs::path& dir, const ExperimentConfig& config, const ExperimentResult& result) {
  fs::create_directories(dir);
  write_text_file(dir / "config.json", to_json(config).dump(2) + "\n");
  write_text_file(dir / "rounds.jsonl", render([&](std::ostream& os) { write_rounds_jsonl(os, result.rounds); }));
  write_text_file(dir / "eval.json", to_json(result.eval).dump(2) + "\n");
  write_text_file(dir / "eval.csv", render([&](std::ostream& os) { write_eval_csv(os, result.eval); }));
  write_text_file(dir / "attention.csv", render([&](std::ostream& os) { write_attention_csv(os, result.rounds); }));
  write_text_file(dir / "diagnostics.csv",
                  render([&](std::ostream& os) { write_diagnostics_csv(os, result.diagnostics); }));
}

// Validation problems exit with 2, everything after validation with 1.
template <class Validate, class Execute>
int guarded(std::ostream& err, Validate&& validate, Execute&& execute) {
  try {
    validate();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  try {
    execute();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace

int cmd_run(const fs::path& config_path, const RunOverrides& overrides, std::ostream& out, std::ostream& err) {
  ExperimentConfig config;
  PreparedData data;
  return guarded(
      err,
      [&] {
        config = resolve_config(config_path, overrides);
        data = prepare_data(config);
      },
      [&] {
        for (const auto& w : data.warnings) err << "warning: " << w << '\n';
        const auto exec = exec_options(config, overrides);
        auto result = run_experiment(config, data, exec, [&](const RoundReport& r) {
          if (!overrides.quiet) {
            err << "round " << r.round << " done in " << format_double(r.wall_seconds) << " s, meta_loss "
                << format_double(r.meta_loss) << '\n';
          }
        });
        write_outputs(config.output_dir, config, result);
        out << "kind " << to_string(config.protocol.kind) << " qs " << format_double(result.eval.qs) << " mil "
            << format_double(result.eval.mil) << " icp " << format_double(result.eval.icp) << '\n';
        out << "wrote " << config.output_dir << '\n';
      });
}

int cmd_ablate(const fs::path& config_path, const RunOverrides& overrides, const std::vector<std::uint64_t>& seeds,
               std::ostream& out, std::ostream& err) {
  ExperimentConfig config;
  return guarded(
      err, [&] { config = resolve_config(config_path, overrides); },
      [&] {
        const std::vector<std::uint64_t> run_seeds = seeds.empty() ? std::vector<std::uint64_t>{config.seed} : seeds;
        const auto exec = exec_options(config, overrides);
        std::vector<AblationRow> rows;
        for (auto seed : run_seeds) {
          ExperimentConfig seeded = config;
          seeded.seed = seed;
          const PreparedData data = prepare_data(seeded);
          for (auto kind : config.baselines) {
            ExperimentConfig run = seeded;
            run.protocol.kind = kind;
            const auto result = run_experiment(run, data, exec);
            rows.push_back(AblationRow{to_string(kind), seed, result.eval.qs, result.eval.mil, result.eval.icp});
            if (!overrides.quiet) {
              err << "seed " << seed << ' ' << to_string(kind) << " qs " << format_double(result.eval.qs) << '\n';
            }
          }
        }
        const fs::path dir = config.output_dir;
        fs::create_directories(dir);
        write_text_file(dir / "config.json", to_json(config).dump(2) + "\n");
        const std::string table = render([&](std::ostream& os) { write_ablation_csv(os, rows); });
        write_text_file(dir / "ablation.csv", table);
        write_text_file(dir / "ablation_runs.csv", render([&](std::ostream& os) { write_ablation_runs_csv(os, rows); }));
        out << table;
      });
}

int cmd_comm(const fs::path& config_path, const CommOverrides& overrides, std::ostream& out, std::ostream& err) {
  ExperimentConfig config;
  std::size_t clients = 0, total = 0, head = 0;
  AggregatorKind kind = AggregatorKind::game;
  return guarded(
      err,
      [&] {
        config = resolve_config(config_path, RunOverrides{});
        kind = overrides.kind ? parse_aggregator_kind(*overrides.kind) : config.protocol.kind;
        if (overrides.total_params.has_value() != overrides.head_params.has_value()) {
          throw ConfigError("--total-params and --head-params must be given together");
        }
        if (overrides.total_params) {
          total = *overrides.total_params;
          head = *overrides.head_params;
          if (total == 0 || head > total) throw ConfigError("--head-params must not exceed --total-params (> 0)");
        } else {
          const auto spec = make_layer_spec(config.forecaster);
          total = spec->total();
          head = spec->head_length();
        }
        if (overrides.clients) {
          clients = *overrides.clients;
        } else if (config.data.source == DataSource::synth) {
          clients = config.data.n_clients;
        } else {
          clients = load_csv(config.data.csv_path).size();
        }
        if (clients < 1) throw ConfigError("--clients must be >= 1");
      },
      [&] {
        const auto c = comm_cost(clients, total, head, kind);
        out << "kind " << to_string(kind) << '\n';
        out << "clients " << clients << '\n';
        out << "total_params " << total << '\n';
        out << "head_params " << head << '\n';
        out << "head_fraction " << format_double(c.head_fraction) << '\n';
        out << "upstream_bytes " << c.upstream * kBytesPerScalar << '\n';
        out << "downstream_bytes " << c.downstream * kBytesPerScalar << '\n';
        out << "baseline_bytes " << c.baseline * kBytesPerScalar << '\n';
        out << "ratio " << format_double(c.ratio) << '\n';
        out << "overhead_percent " << format_double((c.ratio - 1.0) * 100.0) << '\n';
      });
}

int cmd_synth(const SynthOptions& o, std::ostream& out, std::ostream& err) {
  std::vector<SeriesShard> shards;
  return guarded(
      err,
      [&] {
        if (o.clients < 1 || o.clusters < 1 || o.clusters > o.clients) {
          throw ConfigError("--clusters must satisfy 1 <= clusters <= clients");
        }
        if (o.length < 1) throw ConfigError("--length must be >= 1");
        if (!(o.noise_sd >= 0.0)) throw ConfigError("--noise-sd must be >= 0");
      },
      [&] {
        shards = synth_generate(o.clients, o.clusters, o.length, o.noise_sd, derive_seed(o.seed, "data"));
        if (o.output.empty()) {
          write_csv(out, shards);
        } else {
          write_text_file(o.output, render([&](std::ostream& os) { write_csv(os, shards); }));
        }
      });
}

int main(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Personalized federated forecasting with graph-attention mixture-of-experts aggregation"};
  app.require_subcommand(1);

  std::string config_path;
  RunOverrides run_over;
  std::uint64_t seed = 0;
  std::string output_dir;
  int threads = 0;
  std::size_t rounds = 0;
  std::vector<std::uint64_t> seeds;

  auto add_run_flags = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "JSON experiment config")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "master seed (overrides the config)");
    sub->add_option("--output-dir", output_dir, std::string("output directory (overrides $") + kOutputDirEnv + ")");
    sub->add_option("--threads", threads, "OpenMP threads for per-client work (0: default)")->check(CLI::NonNegativeNumber);
    sub->add_option("--rounds", rounds, "number of rounds (overrides the config)");
    sub->add_flag("--reverse-order", run_over.reverse_client_order, "schedule clients last-to-first");
    sub->add_flag("--quiet", run_over.quiet, "no per-round progress on stderr");
  };

  auto* run = app.add_subcommand("run", "run one experiment and write reports");
  add_run_flags(run);
  auto* ablate = app.add_subcommand("ablate", "compare aggregator kinds on the same data and seeds");
  add_run_flags(ablate);
  ablate->add_option("--seeds", seeds, "seeds to run (default: the config seed)")->delimiter(',');

  auto* comm = app.add_subcommand("comm", "print per-round communication volume");
  CommOverrides comm_over;
  std::size_t clients = 0, total = 0, head = 0;
  std::string kind;
  comm->add_option("config", config_path, "JSON experiment config")->required()->check(CLI::ExistingFile);
  comm->add_option("--clients", clients, "number of clients");
  comm->add_option("--total-params", total, "total parameter count instead of the configured model");
  comm->add_option("--head-params", head, "head parameter count instead of the configured model");
  comm->add_option("--kind", kind, "aggregator kind");

  auto* synth = app.add_subcommand("synth", "emit a synthetic non-IID dataset as CSV");
  SynthOptions synth_opts;
  synth->add_option("--clients", synth_opts.clients, "number of clients");
  synth->add_option("--clusters", synth_opts.clusters, "number of clusters");
  synth->add_option("--length", synth_opts.length, "samples per client");
  synth->add_option("--noise-sd", synth_opts.noise_sd, "Gaussian noise standard deviation");
  synth->add_option("--seed", synth_opts.seed, "master seed");
  synth->add_option("-o,--output", synth_opts.output, "output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }

  if (*run || *ablate) {
    auto* sub = *run ? run : ablate;
    if (sub->count("--seed")) run_over.seed = seed;
    if (sub->count("--output-dir")) run_over.output_dir = output_dir;
    if (sub->count("--threads")) run_over.threads = threads;
    if (sub->count("--rounds")) run_over.rounds = rounds;
    return *run ? cmd_run(config_path, run_over, out, err) : cmd_ablate(config_path, run_over, seeds, out, err);
  }
  if (*comm) {
    if (comm->count("--clients")) comm_over.clients = clients;
    if (comm->count("--total-params")) comm_over.total_params = total;
    if (comm->count("--head-params")) comm_over.head_params = head;
    if (comm->count("--kind")) comm_over.kind = kind;
    return cmd_comm(config_path, comm_over, out, err);
  }
  return cmd_synth(synth_opts, out, err);
}

}  // namespace fedgame::cli
