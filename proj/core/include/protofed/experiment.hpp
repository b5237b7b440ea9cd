#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "protofed/data.hpp"
#include "protofed/federation.hpp"
#include "protofed/model.hpp"

namespace protofed {

inline constexpr const char* kVersion = "0.1.0";

/// Everything one experiment needs: mode, data, model, round schedule,
/// carrier and output location.
struct ExperimentConfig {
  FedMode mode = FedMode::fedhpb;
  DatasetSpec data;
  LcnnConfig model;
  RoundConfig rounds;
  CarrierKind carrier = CarrierKind::inproc;
  bool parallel_clients = false;
  std::uint16_t tcp_port = 0;  // 0 = ephemeral
  std::string out_dir;         // empty: no artifacts written
  std::vector<std::string> csv_paths;  // optional real-data ingestion, one per client

  void validate() const;
  std::string manifest_json() const;

  /// Desk-scale preset sized so the whole acceptance suite finishes in
  /// minutes on a two-core machine: K=4 clients, 4200 train windows each,
  /// T=32, R=5, E=5.
  void apply_desk_preset();
  /// Paper-scale preset: K=20 clients, T=128, R=20, E=100.
  void apply_full_preset();
};

struct ExperimentResult {
  TrainReport report;
  double avg_mfbeta = 0.0;
  double avg_mba = 0.0;
  std::uint64_t upload_bytes_per_round_per_client = 0;
  std::string out_dir;
};

/// Builds the datasets and clients, runs the configured protocol and, when
/// out_dir is set, writes manifest.json, metrics.csv, trajectory.csv,
/// report.json and summary.json there.
ExperimentResult run_experiment(const ExperimentConfig& config);

enum class SweepAxis { window, rho, lambda };

SweepAxis sweep_axis_from_string(const std::string& name);
std::string to_string(SweepAxis axis);

/// Default axis values: window {32,64,128,256}, rho {20,50,100},
/// lambda {0, 0.25, 0.5, 0.75, 1}.
std::vector<double> default_sweep_values(SweepAxis axis);

struct SweepRow {
  double value = 0.0;
  bool ok = false;
  std::string error;
  double avg_mfbeta = 0.0;
  double avg_mba = 0.0;
  std::uint64_t upload_bytes_per_round_per_client = 0;
};

struct SweepResult {
  SweepAxis axis = SweepAxis::window;
  std::vector<SweepRow> rows;
  std::string summary_csv() const;
};

/// One sub-experiment per axis value; failures are recorded per row and do
/// not stop the sweep. Sub-run artifacts land in out_dir/<axis>_<value>/.
SweepResult run_sweep(const ExperimentConfig& base, SweepAxis axis,
                      const std::vector<double>& values, const std::string& out_dir);

}  // namespace protofed
