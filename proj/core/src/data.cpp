#include "protofed/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "protofed/rng.hpp"

namespace protofed {

namespace {

// Synthetic process constants. The icing signature is a ramped level shift
// on the first kSignatureChannels channels plus extra innovation noise;
// each client sees a rotated version of it.
constexpr double kArPhi = 0.9;
constexpr double kArSigma = 0.25;
constexpr double kCommonWeight = 0.4;
constexpr double kOffsetSigma = 0.4;
constexpr double kScaleLo = 0.9;
constexpr double kScaleHi = 1.15;
constexpr std::size_t kSignatureChannels = 6;
constexpr double kSignatureBase[kSignatureChannels] = {1.3, -1.1, 0.9, 1.2, -0.8, 1.0};
constexpr double kIcingNoiseFactor = 1.6;
constexpr double kRampStart = 0.25;

std::vector<double> client_signature(std::size_t channels, Rng& rng) {
  std::vector<double> sig(std::min(kSignatureChannels, channels));
  for (std::size_t i = 0; i < sig.size(); ++i) sig[i] = kSignatureBase[i];
  // Givens rotations between consecutive channels: same energy, different mix.
  for (std::size_t i = 0; i + 1 < sig.size(); ++i) {
    const double theta = rng.uniform(-0.35, 0.35);
    const double c = std::cos(theta), s = std::sin(theta);
    const double a = sig[i], b = sig[i + 1];
    sig[i] = c * a - s * b;
    sig[i + 1] = s * a + c * b;
  }
  return sig;
}

}  // namespace

void DatasetSpec::validate() const {
  if (channels < 1) throw ConfigError("dataset: channels must be >= 1");
  if (window < 1) throw ConfigError("dataset: window must be >= 1");
  if (rho < 1) throw ConfigError("dataset: imbalance ratio must be >= 1");
  if (test_rho < 1) throw ConfigError("dataset: test imbalance ratio must be >= 1");
  if (train_fraction <= 0.0 || train_fraction >= 1.0) {
    throw ConfigError("dataset: train_fraction must be in (0, 1)");
  }
  if (clients < 1) throw ConfigError("dataset: need at least one client");
  imbalance_counts(train_windows, rho);
  imbalance_counts(test_windows(), test_rho);
}

std::size_t DatasetSpec::test_windows() const {
  return static_cast<std::size_t>(std::llround(
      static_cast<double>(train_windows) * (1.0 - train_fraction) / train_fraction));
}

ClassCounts ClientDataset::train_counts() const {
  ClassCounts c;
  for (const auto& w : train) w.label == 0 ? ++c.n0 : ++c.n1;
  return c;
}

ClassCounts ClientDataset::test_counts() const {
  ClassCounts c;
  for (const auto& w : test) w.label == 0 ? ++c.n0 : ++c.n1;
  return c;
}

std::pair<std::size_t, std::size_t> imbalance_counts(std::size_t total,
                                                     std::size_t rho) {
  const std::size_t minority = total / (rho + 1);
  if (minority == 0) {
    throw DataError("imbalance ratio " + std::to_string(rho) +
                    ":1 leaves no minority samples for size " + std::to_string(total));
  }
  return {rho * minority, minority};
}

std::vector<ClientDataset> generate_synthetic(const DatasetSpec& spec) {
  spec.validate();
  std::vector<ClientDataset> out;
  out.reserve(spec.clients);

  for (std::size_t client = 0; client < spec.clients; ++client) {
    Rng shift_rng(derive_seed(spec.seed, 0xA000 + client));
    std::vector<double> offset(spec.channels), scale(spec.channels);
    for (std::size_t ch = 0; ch < spec.channels; ++ch) {
      offset[ch] = kOffsetSigma * shift_rng.normal();
      scale[ch] = shift_rng.uniform(kScaleLo, kScaleHi);
    }
    const std::vector<double> signature = client_signature(spec.channels, shift_rng);

    Rng rng(derive_seed(spec.seed, 0xB000 + client));
    auto make_window = [&](int label) {
      WindowSample w;
      w.label = label;
      w.turbine_id = static_cast<int>(client);
      w.values.resize(spec.window * spec.channels);
      const double marginal = kArSigma / std::sqrt(1.0 - kArPhi * kArPhi);

      std::vector<double> state(spec.channels);
      for (double& s : state) s = marginal * rng.normal();
      double common = marginal * rng.normal();

      for (std::size_t t = 0; t < spec.window; ++t) {
        common = kArPhi * common + kArSigma * rng.normal();
        const double ramp =
            spec.window > 1 ? kRampStart + (1.0 - kRampStart) * static_cast<double>(t) /
                                               static_cast<double>(spec.window - 1)
                            : 1.0;
        for (std::size_t ch = 0; ch < spec.channels; ++ch) {
          double noise = kArSigma * rng.normal();
          if (label == 1 && ch < signature.size()) {
            noise *= kIcingNoiseFactor;
          }
          state[ch] = kArPhi * state[ch] + noise;
          double v = state[ch] + kCommonWeight * common;
          if (label == 1 && ch < signature.size()) {
            v += ramp * signature[ch];
          }
          w.values[t * spec.channels + ch] = v * scale[ch] + offset[ch];
        }
      }
      return w;
    };

    auto build_split = [&](std::size_t total, std::size_t ratio) {
      const auto [n0, n1] = imbalance_counts(total, ratio);
      std::vector<WindowSample> windows;
      windows.reserve(n0 + n1);
      for (std::size_t i = 0; i < n0; ++i) windows.push_back(make_window(0));
      for (std::size_t i = 0; i < n1; ++i) windows.push_back(make_window(1));
      rng.shuffle(windows);
      return windows;
    };

    ClientDataset ds;
    ds.client_id = static_cast<int>(client);
    ds.train = build_split(spec.train_windows, spec.rho);
    ds.test = build_split(spec.test_windows(), spec.test_rho);
    out.push_back(std::move(ds));
  }
  return out;
}

std::vector<WindowSample> window_slice(const std::vector<double>& series,
                                       std::size_t rows, std::size_t channels,
                                       std::size_t window, std::size_t stride,
                                       const std::vector<int>& icing_flags,
                                       WindowLabelRule rule) {
  if (series.size() != rows * channels) {
    throw DimensionError("window_slice: series size does not match rows x channels");
  }
  if (icing_flags.size() != rows) {
    throw DimensionError("window_slice: one icing flag per row required");
  }
  if (window == 0 || stride == 0) throw ConfigError("window_slice: window and stride must be positive");
  if (rows < window) {
    throw DataError("window_slice: series shorter than the window (" +
                    std::to_string(rows) + " < " + std::to_string(window) + ")");
  }
  const std::size_t count = (rows - window) / stride + 1;
  std::vector<WindowSample> out;
  out.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t start = w * stride;
    WindowSample sample;
    sample.values.assign(series.begin() + start * channels,
                         series.begin() + (start + window) * channels);
    std::size_t flagged = 0;
    for (std::size_t t = 0; t < window; ++t) flagged += icing_flags[start + t] != 0;
    sample.label = rule == WindowLabelRule::any_step ? (flagged > 0 ? 1 : 0)
                                                     : (2 * flagged > window ? 1 : 0);
    out.push_back(std::move(sample));
  }
  return out;
}

std::pair<std::vector<WindowSample>, std::vector<WindowSample>> split_train_test(
    std::vector<WindowSample> windows, double fraction, std::uint64_t seed) {
  if (fraction <= 0.0 || fraction >= 1.0) {
    throw ConfigError("split_train_test: fraction must be in (0, 1)");
  }
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const int y = windows[i].label;
    if (y != 0 && y != 1) throw DataError("split_train_test: label out of range");
    by_class[static_cast<std::size_t>(y)].push_back(i);
  }
  if (by_class[0].empty() || by_class[1].empty()) {
    throw DataError("split_train_test: both classes must be present for stratification");
  }

  Rng rng(derive_seed(seed, 0x517));
  std::vector<WindowSample> train, test;
  for (auto& indices : by_class) {
    rng.shuffle(indices);
    auto take = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(indices.size())));
    if (indices.size() >= 2) {
      take = std::clamp<std::size_t>(take, 1, indices.size() - 1);
    }
    for (std::size_t i = 0; i < indices.size(); ++i) {
      (i < take ? train : test).push_back(std::move(windows[indices[i]]));
    }
  }
  return {std::move(train), std::move(test)};
}

namespace {

bool is_missing(const std::string& cell) {
  if (cell.empty()) return true;
  std::string lower = cell;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return lower == "nan" || lower == "na";
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

CsvSeries parse_csv(const std::string& path, std::size_t channels) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open csv file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_line(line);
  if (header.size() != channels + 2) {
    throw DataError(path + ": header has " + std::to_string(header.size()) +
                    " columns, expected " + std::to_string(channels + 2) +
                    " (timestamp, " + std::to_string(channels) + " channels, label)");
  }
  if (header.front() != "timestamp" || header.back() != "label") {
    throw DataError(path + ": header must start with 'timestamp' and end with 'label'");
  }

  CsvSeries series;
  series.channels = channels;
  std::vector<bool> missing_mask;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != channels + 2) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(channels + 2) + " cells, got " +
                      std::to_string(cells.size()));
    }
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const std::string& cell = cells[ch + 1];
      if (is_missing(cell)) {
        series.values.push_back(0.0);
        missing_mask.push_back(true);
        continue;
      }
      try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
        series.values.push_back(v);
        missing_mask.push_back(false);
      } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": cannot parse value '" + cell + "'");
      }
    }
    const std::string& label_cell = cells.back();
    if (label_cell == "0") {
      series.flags.push_back(0);
    } else if (label_cell == "1") {
      series.flags.push_back(1);
    } else {
      throw DataError(path + ":" + std::to_string(line_no) + ": label must be 0 or 1, got '" +
                      label_cell + "'");
    }
    ++series.rows;
  }
  if (series.rows == 0) throw DataError(path + ": no data rows");

  // Forward fill, then mean-impute whatever is left (leading gaps).
  for (std::size_t ch = 0; ch < channels; ++ch) {
    double mean = 0.0;
    std::size_t present = 0;
    for (std::size_t r = 0; r < series.rows; ++r) {
      if (!missing_mask[r * channels + ch]) {
        mean += series.values[r * channels + ch];
        ++present;
      }
    }
    if (present == 0) {
      throw DataError(path + ": channel " + std::to_string(ch + 1) + " has no values");
    }
    mean /= static_cast<double>(present);
    bool have_prev = false;
    double prev = 0.0;
    for (std::size_t r = 0; r < series.rows; ++r) {
      double& v = series.values[r * channels + ch];
      if (missing_mask[r * channels + ch]) {
        v = have_prev ? prev : mean;
      }
      prev = v;
      have_prev = true;
    }
  }
  return series;
}

ClientDataset load_csv(const std::string& path, const CsvSchema& schema) {
  CsvSeries series = parse_csv(path, schema.channels);
  std::vector<WindowSample> windows =
      window_slice(series.values, series.rows, series.channels, schema.window,
                   schema.stride, series.flags, schema.label_rule);
  for (auto& w : windows) w.turbine_id = schema.turbine_id;

  ClientDataset ds;
  ds.client_id = schema.turbine_id;
  auto [train, test] = split_train_test(std::move(windows), schema.train_fraction,
                                        schema.split_seed);
  ds.train = std::move(train);
  ds.test = std::move(test);

  if (schema.normalize) {
    const std::size_t d = schema.channels;
    std::vector<double> mean(d, 0.0), var(d, 0.0);
    std::size_t n = 0;
    for (const auto& w : ds.train) {
      for (std::size_t t = 0; t < schema.window; ++t) {
        for (std::size_t ch = 0; ch < d; ++ch) mean[ch] += w.values[t * d + ch];
      }
      n += schema.window;
    }
    for (double& m : mean) m /= static_cast<double>(n);
    for (const auto& w : ds.train) {
      for (std::size_t t = 0; t < schema.window; ++t) {
        for (std::size_t ch = 0; ch < d; ++ch) {
          const double delta = w.values[t * d + ch] - mean[ch];
          var[ch] += delta * delta;
        }
      }
    }
    for (double& v : var) v = std::sqrt(v / static_cast<double>(n));
    for (auto* split : {&ds.train, &ds.test}) {
      for (auto& w : *split) {
        for (std::size_t t = 0; t < schema.window; ++t) {
          for (std::size_t ch = 0; ch < d; ++ch) {
            double& v = w.values[t * d + ch];
            v = (v - mean[ch]) / std::max(var[ch], schema.sigma_floor);
          }
        }
      }
    }
  }
  return ds;
}

void export_csv(const std::string& path, const std::vector<WindowSample>& windows,
                std::size_t channels) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open csv file for writing: " + path);
  out << "timestamp";
  char name[16];
  for (std::size_t ch = 1; ch <= channels; ++ch) {
    std::snprintf(name, sizeof(name), ",ch%02zu", ch);
    out << name;
  }
  out << ",label\n";

  char cell[32];
  std::size_t row = 0;
  for (const auto& w : windows) {
    const std::size_t steps = w.values.size() / channels;
    for (std::size_t t = 0; t < steps; ++t, ++row) {
      out << row;
      for (std::size_t ch = 0; ch < channels; ++ch) {
        std::snprintf(cell, sizeof(cell), ",%.17g", w.values[t * channels + ch]);
        out << cell;
      }
      out << ',' << w.label << '\n';
    }
  }
  if (!out) throw DataError("csv write failed: " + path);
}

std::string dataset_manifest(const DatasetSpec& spec,
                             const std::vector<ClientDataset>& clients) {
  nlohmann::json j;
  j["spec"] = {{"channels", spec.channels},
               {"window", spec.window},
               {"rho", spec.rho},
               {"test_rho", spec.test_rho},
               {"train_windows", spec.train_windows},
               {"train_fraction", spec.train_fraction},
               {"clients", spec.clients},
               {"seed", spec.seed}};
  auto& arr = j["clients"] = nlohmann::json::array();
  for (const auto& c : clients) {
    const ClassCounts train = c.train_counts();
    const ClassCounts test = c.test_counts();
    arr.push_back({{"client_id", c.client_id},
                   {"train_non_icing", train.n0},
                   {"train_icing", train.n1},
                   {"test_non_icing", test.n0},
                   {"test_icing", test.n1}});
  }
  return j.dump(2);
}

Tensor gather_batch(const std::vector<WindowSample>& windows,
                    const std::vector<std::size_t>& indices, std::size_t window,
                    std::size_t channels) {
  Tensor x({indices.size(), window, channels});
  const std::size_t stride = window * channels;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& w = windows[indices[i]];
    if (w.values.size() != stride) {
      throw DimensionError("gather_batch: window size mismatch");
    }
    std::copy(w.values.begin(), w.values.end(), x.data.begin() + i * stride);
  }
  return x;
}

std::vector<int> gather_labels(const std::vector<WindowSample>& windows,
                               const std::vector<std::size_t>& indices) {
  std::vector<int> y(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) y[i] = windows[indices[i]].label;
  return y;
}

}  // namespace protofed
