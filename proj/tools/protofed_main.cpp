// protofed: federated prototype-learning experiment runner.
//
//   protofed run   --mode fedhpb --preset desk --rho 20 --out results/
//   protofed sweep --axis window --preset desk --out sweeps/
//
// `run` executes one experiment and writes manifest.json, metrics.csv,
// trajectory.csv, report.json and summary.json into --out. `sweep` repeats
// it along one axis and adds sweep_summary.csv.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "protofed/experiment.hpp"

namespace {

struct CliOptions {
  std::string mode = "fedhpb";
  std::string preset;
  std::string transport = "inproc";
  std::string second_term = "contrastive";
  std::string activation = "relu";
  std::string optimizer = "sgd";
  std::string aggregation = "normalized";
  std::string axis = "window";
  std::vector<double> axis_values;
  protofed::ExperimentConfig config;
};

void add_common_flags(CLI::App* cmd, CliOptions& opt) {
  protofed::ExperimentConfig& cfg = opt.config;

  cmd->add_option("--mode", opt.mode, "fedhpb | fedavg")
      ->check(CLI::IsMember({"fedhpb", "fedavg"}));
  cmd->add_option("--preset", opt.preset, "desk | full")
      ->check(CLI::IsMember({"desk", "full"}));

  cmd->add_option("--clients,-k", cfg.data.clients, "number of clients K");
  cmd->add_option("--rho", cfg.data.rho, "train imbalance ratio (non-icing : icing)");
  cmd->add_option("--window,-w", cfg.data.window, "window size T");
  cmd->add_option("--channels", cfg.data.channels, "sensor channels d");
  cmd->add_option("--train-windows", cfg.data.train_windows, "train windows per client");
  cmd->add_option("--data-seed", cfg.data.seed, "dataset generation seed");
  cmd->add_option("--data-csv", cfg.csv_paths,
                  "ingest real data from CSV files, one per client");

  cmd->add_option("--rounds,-r", cfg.rounds.rounds, "communication rounds R");
  cmd->add_option("--epochs,-e", cfg.rounds.epochs, "local epochs E");
  cmd->add_option("--batch", cfg.rounds.batch_size, "mini-batch size");
  cmd->add_option("--lr", cfg.rounds.lr, "learning rate");
  cmd->add_option("--momentum", cfg.rounds.momentum, "SGD momentum");
  cmd->add_option("--lambda", cfg.rounds.loss.lambda, "loss balance lambda");
  cmd->add_option("--tau", cfg.rounds.loss.tau, "contrastive temperature");
  cmd->add_option("--gamma", cfg.rounds.loss.gamma, "class-weight sensitivity");
  cmd->add_option("--seed,-s", cfg.rounds.seed, "experiment seed");

  cmd->add_option("--second-term", opt.second_term, "none | l2 | contrastive")
      ->check(CLI::IsMember({"none", "l2", "contrastive"}));
  cmd->add_option("--activation", opt.activation, "relu | silu")
      ->check(CLI::IsMember({"relu", "silu"}));
  cmd->add_option("--optimizer", opt.optimizer, "sgd | adam")
      ->check(CLI::IsMember({"sgd", "adam"}));
  cmd->add_option("--aggregation", opt.aggregation, "normalized | literal")
      ->check(CLI::IsMember({"normalized", "literal"}));
  cmd->add_option("--dropout", cfg.model.dropout_rate, "dropout rate after the LSTM");
  cmd->add_option("--lstm-hidden", cfg.model.lstm_hidden, "LSTM hidden size");

  cmd->add_option("--transport", opt.transport, "inproc | tcp")
      ->check(CLI::IsMember({"inproc", "tcp"}));
  cmd->add_option("--tcp-port", cfg.tcp_port, "TCP port (0 = ephemeral)")
      ->envname("PROTOFED_PORT");
  cmd->add_flag("--parallel", cfg.parallel_clients, "train clients on worker threads");

  cmd->add_option("--out,-o", cfg.out_dir, "output directory for artifacts");
  cmd->configurable();
}

void finalize(CliOptions& opt) {
  protofed::ExperimentConfig& cfg = opt.config;
  if (opt.preset == "desk") cfg.apply_desk_preset();
  if (opt.preset == "full") cfg.apply_full_preset();
  cfg.mode = protofed::fed_mode_from_string(opt.mode);
  cfg.rounds.second_term = protofed::second_term_from_string(opt.second_term);
  cfg.model.activation = protofed::activation_from_string(opt.activation);
  cfg.rounds.optimizer = protofed::optimizer_from_string(opt.optimizer);
  cfg.rounds.aggregation = protofed::aggregation_from_string(opt.aggregation);
  cfg.carrier = opt.transport == "tcp" ? protofed::CarrierKind::tcp
                                       : protofed::CarrierKind::inproc;
  cfg.model.input_dim = cfg.data.channels;
  cfg.model.window = cfg.data.window;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated prototype learning for imbalanced icing detection"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "key=value config file; subcommand options go in a [run] or "
                 "[sweep] section");

  CliOptions run_opt;
  CLI::App* run_cmd = app.add_subcommand("run", "run one experiment");
  add_common_flags(run_cmd, run_opt);

  CliOptions sweep_opt;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "run a parameter sweep");
  add_common_flags(sweep_cmd, sweep_opt);
  sweep_cmd->add_option("--axis", sweep_opt.axis, "window | rho | lambda")
      ->check(CLI::IsMember({"window", "rho", "lambda"}));
  sweep_cmd->add_option("--values", sweep_opt.axis_values,
                        "axis values (defaults per axis)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      finalize(run_opt);
      const protofed::ExperimentResult result = protofed::run_experiment(run_opt.config);
      std::printf("mode=%s avg_mfbeta=%.4f avg_mba=%.4f upload_bytes/round/client=%llu\n",
                  protofed::to_string(run_opt.config.mode).c_str(), result.avg_mfbeta,
                  result.avg_mba,
                  static_cast<unsigned long long>(result.upload_bytes_per_round_per_client));
    } else {
      finalize(sweep_opt);
      const protofed::SweepAxis axis = protofed::sweep_axis_from_string(sweep_opt.axis);
      const std::vector<double> values = sweep_opt.axis_values.empty()
                                             ? protofed::default_sweep_values(axis)
                                             : sweep_opt.axis_values;
      const protofed::SweepResult result =
          protofed::run_sweep(sweep_opt.config, axis, values, sweep_opt.config.out_dir);
      std::fputs(result.summary_csv().c_str(), stdout);
      for (const auto& row : result.rows) {
        if (!row.ok) return 1;
      }
    }
  } catch (const protofed::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
