#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "protofed/data.hpp"

using namespace protofed;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

DatasetSpec small_spec() {
  DatasetSpec spec;
  spec.channels = 6;
  spec.window = 8;
  spec.rho = 20;
  spec.train_windows = 420;
  spec.clients = 3;
  spec.seed = 7;
  return spec;
}

}  // namespace

TEST_CASE("imbalance counts honor the requested ratio exactly") {
  auto [n0, n1] = imbalance_counts(4200, 20);
  CHECK(n0 == 4000);
  CHECK(n1 == 200);

  auto [t0, t1] = imbalance_counts(1100, 10);
  CHECK(t0 == 1000);
  CHECK(t1 == 100);

  CHECK_THROWS_AS(imbalance_counts(50, 100), DataError);  // zero minority
}

TEST_CASE("generator produces the exact class counts") {
  DatasetSpec spec = small_spec();
  auto clients = generate_synthetic(spec);
  REQUIRE(clients.size() == 3);
  for (const auto& c : clients) {
    const ClassCounts train = c.train_counts();
    CHECK(train.n0 == 400);
    CHECK(train.n1 == 20);
    // test split: 420 * (0.4/0.6) = 280 windows at 10:1
    const ClassCounts test = c.test_counts();
    CHECK(test.n0 == 250);
    CHECK(test.n1 == 25);
    for (const auto& w : c.train) {
      CHECK(w.values.size() == spec.window * spec.channels);
      CHECK(w.turbine_id == c.client_id);
    }
  }
}

TEST_CASE("generator is deterministic in the seed") {
  DatasetSpec spec = small_spec();
  auto a = generate_synthetic(spec);
  auto b = generate_synthetic(spec);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].train.size() == b[i].train.size());
    for (std::size_t j = 0; j < a[i].train.size(); ++j) {
      CHECK(a[i].train[j].values == b[i].train[j].values);
      CHECK(a[i].train[j].label == b[i].train[j].label);
    }
  }
  spec.seed = 8;
  auto c = generate_synthetic(spec);
  CHECK(a[0].train[0].values != c[0].train[0].values);
}

TEST_CASE("generator values stay finite and bounded") {
  auto clients = generate_synthetic(small_spec());
  for (const auto& c : clients) {
    for (const auto& w : c.train) {
      for (double v : w.values) {
        CHECK(std::isfinite(v));
        CHECK(std::fabs(v) < 10.0);
      }
    }
  }
}

TEST_CASE("clients are measurably non-iid") {
  DatasetSpec spec = small_spec();
  spec.train_windows = 2100;
  auto clients = generate_synthetic(spec);

  // Per-window channel means are iid across windows, which makes a plain
  // two-sample z-test valid despite within-window autocorrelation.
  auto channel_stats = [&](const ClientDataset& c, std::size_t ch) {
    double sum = 0.0, sq = 0.0;
    for (const auto& w : c.train) {
      double m = 0.0;
      for (std::size_t t = 0; t < spec.window; ++t) m += w.values[t * spec.channels + ch];
      m /= static_cast<double>(spec.window);
      sum += m;
      sq += m * m;
    }
    const double n = static_cast<double>(c.train.size());
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    return std::pair<double, double>{mean, var / n};  // (mean, squared standard error)
  };

  for (std::size_t a = 0; a < clients.size(); ++a) {
    for (std::size_t b = a + 1; b < clients.size(); ++b) {
      double best = 0.0;
      for (std::size_t ch = 0; ch < spec.channels; ++ch) {
        const auto [ma, sa] = channel_stats(clients[a], ch);
        const auto [mb, sb] = channel_stats(clients[b], ch);
        best = std::max(best, std::fabs(ma - mb) / std::sqrt(sa + sb));
      }
      CHECK_MESSAGE(best > 3.0, "clients " << a << " and " << b
                                           << " are statistically indistinguishable");
    }
  }
}

TEST_CASE("icing windows carry a detectable signature") {
  DatasetSpec spec = small_spec();
  auto clients = generate_synthetic(spec);
  // Mean absolute channel-0..5 deviation should differ between classes.
  double icing = 0.0, clean = 0.0;
  std::size_t icing_n = 0, clean_n = 0;
  for (const auto& w : clients[0].train) {
    double m = 0.0;
    for (double v : w.values) m += std::fabs(v);
    m /= static_cast<double>(w.values.size());
    if (w.label == 1) {
      icing += m;
      ++icing_n;
    } else {
      clean += m;
      ++clean_n;
    }
  }
  CHECK(icing / static_cast<double>(icing_n) > clean / static_cast<double>(clean_n));
}

TEST_CASE("window_slice counting and labeling") {
  const std::size_t d = 2;
  std::vector<double> series(10 * d);
  for (std::size_t i = 0; i < series.size(); ++i) series[i] = static_cast<double>(i);
  std::vector<int> flags(10, 0);

  auto one = window_slice(series, 10, d, 10, 1, flags);
  CHECK(one.size() == 1);  // L == T
  CHECK(one[0].label == 0);

  auto four = window_slice(series, 10, d, 4, 2, flags);
  CHECK(four.size() == 4);  // floor((10-4)/2)+1
  for (const auto& w : four) CHECK(w.label == 0);

  flags[5] = 1;
  auto labeled = window_slice(series, 10, d, 4, 2, flags);
  // windows starting at 0,2,4,6: those covering step 5 are [2,6) and [4,8)
  CHECK(labeled[0].label == 0);
  CHECK(labeled[1].label == 1);
  CHECK(labeled[2].label == 1);
  CHECK(labeled[3].label == 0);

  // majority rule: a single flagged step in a window of 4 is not a majority
  auto majority = window_slice(series, 10, d, 4, 2, flags, WindowLabelRule::majority);
  for (const auto& w : majority) CHECK(w.label == 0);

  CHECK_THROWS_AS(window_slice(series, 10, d, 11, 1, flags), DataError);
}

TEST_CASE("stratified split sizes and properties") {
  std::vector<WindowSample> windows(100);
  for (std::size_t i = 0; i < 100; ++i) {
    windows[i].values = {static_cast<double>(i)};
    windows[i].label = i < 80 ? 0 : 1;
  }
  auto [train, test] = split_train_test(windows, 0.6, 3);
  CHECK(train.size() == 60);
  CHECK(test.size() == 40);

  std::multiset<double> seen;
  bool train_has[2] = {false, false}, test_has[2] = {false, false};
  for (const auto& w : train) {
    seen.insert(w.values[0]);
    train_has[w.label] = true;
  }
  for (const auto& w : test) {
    seen.insert(w.values[0]);
    test_has[w.label] = true;
  }
  CHECK(seen.size() == 100);  // disjoint union covers the input
  for (int cls = 0; cls < 2; ++cls) {
    CHECK(train_has[cls]);
    CHECK(test_has[cls]);
  }

  // reproducible
  auto [train2, test2] = split_train_test(windows, 0.6, 3);
  REQUIRE(train2.size() == train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    CHECK(train2[i].values == train[i].values);
  }
}

TEST_CASE("split rejects single-class input") {
  std::vector<WindowSample> windows(10);
  for (auto& w : windows) {
    w.values = {0.0};
    w.label = 0;
  }
  CHECK_THROWS_AS(split_train_test(windows, 0.6, 1), DataError);
}

TEST_CASE("csv export and reload round trip") {
  DatasetSpec spec = small_spec();
  spec.train_windows = 105;
  auto clients = generate_synthetic(spec);
  const auto& windows = clients[0].train;

  const std::string path = temp_path("protofed_roundtrip.csv");
  export_csv(path, windows, spec.channels);

  CsvSeries series = parse_csv(path, spec.channels);
  CHECK(series.rows == windows.size() * spec.window);
  auto reloaded = window_slice(series.values, series.rows, series.channels,
                               spec.window, spec.window, series.flags);
  REQUIRE(reloaded.size() == windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    CHECK(reloaded[i].label == windows[i].label);
    for (std::size_t j = 0; j < windows[i].values.size(); ++j) {
      CHECK(std::fabs(reloaded[i].values[j] - windows[i].values[j]) <= 1e-9);
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("csv schema violations are rejected with line numbers") {
  const std::string path = temp_path("protofed_bad.csv");

  {
    std::ofstream out(path);
    out << "timestamp,ch01,ch02\n0,1.0,0\n";  // label column missing
  }
  CHECK_THROWS_AS(parse_csv(path, 2), DataError);

  {
    std::ofstream out(path);
    out << "timestamp,ch01,ch02,label\n0,1.0,2.0,0\n1,oops,2.0,0\n";
  }
  try {
    parse_csv(path, 2);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }

  {
    std::ofstream out(path);
    out << "timestamp,ch01,ch02,label\n0,1.0,2.0,2\n";  // label out of range
  }
  CHECK_THROWS_AS(parse_csv(path, 2), DataError);
  std::remove(path.c_str());
}

TEST_CASE("csv missing values are forward-filled then mean-imputed") {
  const std::string path = temp_path("protofed_missing.csv");
  {
    std::ofstream out(path);
    out << "timestamp,ch01,label\n";
    out << "0,,0\n";     // leading gap -> column mean
    out << "1,2.0,0\n";
    out << "2,nan,0\n";  // forward fill -> 2.0
    out << "3,4.0,1\n";
  }
  CsvSeries series = parse_csv(path, 1);
  CHECK(series.values[0] == doctest::Approx(3.0));  // mean of {2, 4}
  CHECK(series.values[1] == doctest::Approx(2.0));
  CHECK(series.values[2] == doctest::Approx(2.0));
  CHECK(series.values[3] == doctest::Approx(4.0));
  CHECK(series.flags == std::vector<int>{0, 0, 0, 1});
  std::remove(path.c_str());
}

TEST_CASE("load_csv normalizes with train statistics and a sigma floor") {
  const std::string path = temp_path("protofed_norm.csv");
  {
    std::ofstream out(path);
    out << "timestamp,ch01,ch02,label\n";
    // ch02 is constant; a short icing burst up front keeps both classes
    for (int i = 0; i < 40; ++i) {
      out << i << ',' << (i % 7) << ",5.0," << (i < 2 ? 1 : 0) << "\n";
    }
  }
  CsvSchema schema;
  schema.channels = 2;
  schema.window = 4;
  schema.stride = 2;
  schema.split_seed = 5;
  ClientDataset ds = load_csv(path, schema);
  CHECK(!ds.train.empty());
  CHECK(!ds.test.empty());
  for (const auto* split : {&ds.train, &ds.test}) {
    for (const auto& w : *split) {
      for (std::size_t t = 0; t < schema.window; ++t) {
        CHECK(w.values[t * 2 + 1] == 0.0);  // constant channel maps to zeros
        CHECK(std::isfinite(w.values[t * 2]));
      }
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("dataset spec validation") {
  DatasetSpec spec = small_spec();
  spec.rho = 0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = small_spec();
  spec.train_fraction = 1.0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = small_spec();
  spec.train_windows = 10;  // rho 20 -> zero minority
  CHECK_THROWS_AS(spec.validate(), DataError);
}

TEST_CASE("gather_batch assembles contiguous window tensors") {
  std::vector<WindowSample> windows(3);
  for (std::size_t i = 0; i < 3; ++i) {
    windows[i].values = {double(i), double(i) + 0.5};
    windows[i].label = static_cast<int>(i % 2);
  }
  Tensor x = gather_batch(windows, {2, 0}, 1, 2);
  CHECK(x.shape == std::vector<std::size_t>{2, 1, 2});
  CHECK(x.data == std::vector<double>{2.0, 2.5, 0.0, 0.5});
  CHECK(gather_labels(windows, {2, 0}) == std::vector<int>{0, 0});
}
