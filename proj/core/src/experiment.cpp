#include "protofed/experiment.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace protofed {

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
  if (!out) throw DataError("write failed for " + path.string());
}

nlohmann::json config_json(const ExperimentConfig& c) {
  return {
      {"version", kVersion},
      {"mode", to_string(c.mode)},
      {"carrier", c.carrier == CarrierKind::inproc ? "inproc" : "tcp"},
      {"parallel_clients", c.parallel_clients},
      {"tcp_port", c.tcp_port},
      {"csv_paths", c.csv_paths},
      {"data",
       {{"channels", c.data.channels},
        {"window", c.data.window},
        {"rho", c.data.rho},
        {"test_rho", c.data.test_rho},
        {"train_windows", c.data.train_windows},
        {"train_fraction", c.data.train_fraction},
        {"clients", c.data.clients},
        {"seed", c.data.seed}}},
      {"model",
       {{"input_dim", c.model.input_dim},
        {"window", c.model.window},
        {"lstm_hidden", c.model.lstm_hidden},
        {"conv_channels", c.model.conv_channels},
        {"conv_kernel", c.model.conv_kernel},
        {"se_reduction", c.model.se_reduction},
        {"activation", to_string(c.model.activation)},
        {"dropout_rate", c.model.dropout_rate}}},
      {"rounds",
       {{"rounds", c.rounds.rounds},
        {"epochs", c.rounds.epochs},
        {"batch_size", c.rounds.batch_size},
        {"optimizer", to_string(c.rounds.optimizer)},
        {"lr", c.rounds.lr},
        {"momentum", c.rounds.momentum},
        {"lambda", c.rounds.loss.lambda},
        {"tau", c.rounds.loss.tau},
        {"gamma", c.rounds.loss.gamma},
        {"eps", c.rounds.loss.eps},
        {"second_term", to_string(c.rounds.second_term)},
        {"aggregation", to_string(c.rounds.aggregation)},
        {"clip_lstm", c.rounds.clip_lstm},
        {"clip_norm", c.rounds.clip_norm},
        {"seed", c.rounds.seed}}}};
}

}  // namespace

void ExperimentConfig::validate() const {
  model.validate();
  rounds.validate();
  if (csv_paths.empty()) {
    data.validate();
    if (model.input_dim != data.channels || model.window != data.window) {
      throw ConfigError("model input_dim/window must match the dataset spec");
    }
  } else if (csv_paths.size() != data.clients) {
    throw ConfigError("need one csv path per client (" + std::to_string(data.clients) +
                      "), got " + std::to_string(csv_paths.size()));
  }
}

std::string ExperimentConfig::manifest_json() const {
  return config_json(*this).dump(2);
}

void ExperimentConfig::apply_desk_preset() {
  data.clients = 4;
  data.train_windows = 4200;
  data.window = 32;
  model.window = 32;
  model.input_dim = data.channels;
  rounds.rounds = 5;
  rounds.epochs = 5;
  rounds.batch_size = 64;
}

void ExperimentConfig::apply_full_preset() {
  data.clients = 20;
  data.train_windows = 4200;
  data.window = 128;
  model.window = 128;
  model.input_dim = data.channels;
  rounds.rounds = 20;
  rounds.epochs = 100;
  rounds.batch_size = 64;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();

  std::filesystem::path out;
  const bool with_artifacts = !config.out_dir.empty();
  if (with_artifacts) {
    out = config.out_dir;
    std::filesystem::create_directories(out);
    write_file(out / "manifest.json", config.manifest_json());
  }

  std::vector<ClientDataset> datasets;
  if (config.csv_paths.empty()) {
    datasets = generate_synthetic(config.data);
  } else {
    CsvSchema schema;
    schema.channels = config.data.channels;
    schema.window = config.data.window;
    schema.stride = std::max<std::size_t>(1, config.data.window / 2);
    schema.train_fraction = config.data.train_fraction;
    schema.split_seed = config.data.seed;
    for (std::size_t i = 0; i < config.csv_paths.size(); ++i) {
      schema.turbine_id = static_cast<int>(i);
      datasets.push_back(load_csv(config.csv_paths[i], schema));
    }
  }
  if (with_artifacts && config.csv_paths.empty()) {
    write_file(out / "dataset.json", dataset_manifest(config.data, datasets));
  }

  std::vector<ClientState> clients =
      make_clients(std::move(datasets), config.model, config.rounds.seed);

  RunOptions options;
  options.carrier = config.carrier;
  options.parallel_clients = config.parallel_clients;
  options.tcp_port = config.tcp_port;

  ExperimentResult result;
  result.report = config.mode == FedMode::fedhpb
                      ? server_run(clients, config.rounds, options)
                      : fedavg_run(clients, config.rounds, options);
  result.avg_mfbeta = result.report.avg_mfbeta;
  result.avg_mba = result.report.avg_mba;
  const std::size_t round_count = result.report.rounds.size();
  if (round_count > 0 && !clients.empty()) {
    result.upload_bytes_per_round_per_client =
        result.report.upload_data_bytes / (round_count * clients.size());
  }
  result.out_dir = config.out_dir;

  if (with_artifacts) {
    write_file(out / "metrics.csv", result.report.metrics_csv());
    write_file(out / "trajectory.csv", result.report.trajectory_csv());
    write_file(out / "report.json", result.report.to_json());
    nlohmann::json summary{
        {"mode", to_string(config.mode)},
        {"avg_mfbeta", result.avg_mfbeta},
        {"avg_mba", result.avg_mba},
        {"upload_data_bytes", result.report.upload_data_bytes},
        {"download_data_bytes", result.report.download_data_bytes},
        {"upload_bytes_per_round_per_client", result.upload_bytes_per_round_per_client},
        {"wall_seconds", result.report.wall_seconds},
        {"seed", config.rounds.seed}};
    write_file(out / "summary.json", summary.dump(2));
  }
  return result;
}

SweepAxis sweep_axis_from_string(const std::string& name) {
  if (name == "window") return SweepAxis::window;
  if (name == "rho") return SweepAxis::rho;
  if (name == "lambda") return SweepAxis::lambda;
  throw ConfigError("unknown sweep axis: " + name);
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::window: return "window";
    case SweepAxis::rho: return "rho";
    default: return "lambda";
  }
}

std::vector<double> default_sweep_values(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::window: return {32, 64, 128, 256};
    case SweepAxis::rho: return {20, 50, 100};
    default: return {0.0, 0.25, 0.5, 0.75, 1.0};
  }
}

std::string SweepResult::summary_csv() const {
  std::string out = "axis,value,status,avg_mfbeta,avg_mba,upload_bytes_per_round_per_client,error\n";
  char buf[64];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.10g,%s,", to_string(axis).c_str(), row.value,
                  row.ok ? "ok" : "failed");
    out += buf;
    if (row.ok) {
      std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%llu,", row.avg_mfbeta, row.avg_mba,
                    static_cast<unsigned long long>(row.upload_bytes_per_round_per_client));
      out += buf;
    } else {
      out += ",,,";
    }
    std::string err = row.error;
    for (char& c : err) {
      if (c == ',' || c == '\n') c = ';';
    }
    out += err + "\n";
  }
  return out;
}

SweepResult run_sweep(const ExperimentConfig& base, SweepAxis axis,
                      const std::vector<double>& values, const std::string& out_dir) {
  SweepResult result;
  result.axis = axis;
  for (double value : values) {
    ExperimentConfig config = base;
    switch (axis) {
      case SweepAxis::window: {
        const auto window = static_cast<std::size_t>(value);
        config.data.window = window;
        config.model.window = window;
        break;
      }
      case SweepAxis::rho:
        config.data.rho = static_cast<std::size_t>(value);
        break;
      case SweepAxis::lambda:
        config.rounds.loss.lambda = value;
        break;
    }
    char label[64];
    std::snprintf(label, sizeof(label), "%s_%g", to_string(axis).c_str(), value);
    if (!out_dir.empty()) {
      config.out_dir = (std::filesystem::path(out_dir) / label).string();
    }

    SweepRow row;
    row.value = value;
    try {
      const ExperimentResult r = run_experiment(config);
      row.ok = true;
      row.avg_mfbeta = r.avg_mfbeta;
      row.avg_mba = r.avg_mba;
      row.upload_bytes_per_round_per_client = r.upload_bytes_per_round_per_client;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    result.rows.push_back(std::move(row));
  }
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_file(std::filesystem::path(out_dir) / "sweep_summary.csv",
               result.summary_csv());
  }
  return result;
}

}  // namespace protofed
