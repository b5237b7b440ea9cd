#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "protofed/losses.hpp"
#include "protofed/tensor.hpp"

namespace protofed {

/// One training unit: a T x d sensor window with its icing label.
struct WindowSample {
  std::vector<double> values;  // T * d, row-major (time, channel)
  int label = 0;               // 0 = non-icing, 1 = icing
  int turbine_id = 0;
};

/// How a window inherits a label from per-step icing flags.
enum class WindowLabelRule { any_step, majority };

struct DatasetSpec {
  std::size_t channels = 16;
  std::size_t window = 32;            // T
  std::size_t rho = 20;               // train imbalance non-icing : icing
  std::size_t test_rho = 10;          // fixed test imbalance
  std::size_t train_windows = 4200;   // requested per-client train size
  double train_fraction = 0.6;        // sizes the test split as train*(1-f)/f
  std::size_t clients = 4;
  std::uint64_t seed = 1;

  void validate() const;
  /// Test windows implied by train_windows and train_fraction.
  std::size_t test_windows() const;
};

struct ClientDataset {
  int client_id = 0;
  std::vector<WindowSample> train;
  std::vector<WindowSample> test;

  ClassCounts train_counts() const;
  ClassCounts test_counts() const;
};

/// Exact per-class sizes for a requested total at ratio rho:1
/// (minority = total / (rho + 1), majority = rho * minority).
/// Throws DataError when the minority count would be zero.
std::pair<std::size_t, std::size_t> imbalance_counts(std::size_t total,
                                                     std::size_t rho);

/// Synthetic SCADA-like generator. Non-icing windows are correlated AR(1)
/// channel processes; icing windows add a ramped level shift plus extra
/// noise on a channel subset. Each client gets its own per-channel affine
/// shift and a rotated icing signature, which makes the client
/// distributions measurably different.
std::vector<ClientDataset> generate_synthetic(const DatasetSpec& spec);

/// Slices a (rows x channels) series into windows of length `window` every
/// `stride` steps. A window is icing when any step inside it is flagged
/// (or the majority, under that rule).
std::vector<WindowSample> window_slice(const std::vector<double>& series,
                                       std::size_t rows, std::size_t channels,
                                       std::size_t window, std::size_t stride,
                                       const std::vector<int>& icing_flags,
                                       WindowLabelRule rule = WindowLabelRule::any_step);

/// Stratified split preserving class presence; deterministic in the seed.
std::pair<std::vector<WindowSample>, std::vector<WindowSample>> split_train_test(
    std::vector<WindowSample> windows, double fraction, std::uint64_t seed);

/// Parsed CSV series after imputation: values row-major, per-row flags.
struct CsvSeries {
  std::vector<double> values;
  std::vector<int> flags;
  std::size_t rows = 0;
  std::size_t channels = 0;
};

/// Reads `timestamp,ch01..chNN,label` rows. Missing numeric cells are
/// forward-filled, leading gaps take the column mean. Malformed rows and
/// schema mismatches raise DataError with the line number.
CsvSeries parse_csv(const std::string& path, std::size_t channels);

struct CsvSchema {
  std::size_t channels = 16;
  std::size_t window = 32;
  std::size_t stride = 16;  // window/2 by default
  WindowLabelRule label_rule = WindowLabelRule::any_step;
  bool normalize = true;    // per-channel z-score from train-split statistics
  double sigma_floor = 1e-8;
  double train_fraction = 0.6;
  std::uint64_t split_seed = 1;
  int turbine_id = 0;
};

/// Full ingestion path: parse, window, stratified split, then z-score both
/// splits with statistics computed on the train split only.
ClientDataset load_csv(const std::string& path, const CsvSchema& schema);

/// Writes windows as a contiguous `timestamp,ch01..,label` series (each
/// window contributes `window` rows carrying its label).
void export_csv(const std::string& path, const std::vector<WindowSample>& windows,
                std::size_t channels);

/// Dataset manifest (counts, spec echo, seed) as a JSON string.
std::string dataset_manifest(const DatasetSpec& spec,
                             const std::vector<ClientDataset>& clients);

// Batch assembly helpers shared by training and evaluation.
Tensor gather_batch(const std::vector<WindowSample>& windows,
                    const std::vector<std::size_t>& indices, std::size_t window,
                    std::size_t channels);
std::vector<int> gather_labels(const std::vector<WindowSample>& windows,
                               const std::vector<std::size_t>& indices);

}  // namespace protofed
