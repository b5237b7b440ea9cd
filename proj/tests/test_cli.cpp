#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

// End-to-end checks of the command-line runner; the binary path comes from
// the build system.

namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PROTOFED_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

const char* kTinyFlags =
    "--clients 2 --channels 6 --window 8 --train-windows 110 --rho 10 "
    "--rounds 2 --epochs 1 --batch 16 --seed 3";

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("run subcommand writes the full artifact set") {
  const fs::path out = fresh_dir("protofed_cli_run");
  const int rc = run_cli(std::string("run --mode fedhpb ") + kTinyFlags +
                         " --out " + out.string());
  CHECK(rc == 0);
  for (const char* name : {"manifest.json", "dataset.json", "metrics.csv",
                           "trajectory.csv", "report.json", "summary.json"}) {
    CHECK_MESSAGE(fs::exists(out / name), name << " missing");
  }
  const std::string metrics = slurp(out / "metrics.csv");
  CHECK(metrics.rfind("round,client,tp,tn,fp,fn,precision,recall,fbeta,ba", 0) == 0);
  fs::remove_all(out);
}

TEST_CASE("identical invocations produce byte-identical metric files") {
  const fs::path out_a = fresh_dir("protofed_cli_det_a");
  const fs::path out_b = fresh_dir("protofed_cli_det_b");
  const std::string flags = std::string("run --mode fedhpb ") + kTinyFlags;
  REQUIRE(run_cli(flags + " --out " + out_a.string()) == 0);
  REQUIRE(run_cli(flags + " --out " + out_b.string()) == 0);
  CHECK(slurp(out_a / "metrics.csv") == slurp(out_b / "metrics.csv"));
  CHECK(slurp(out_a / "trajectory.csv") == slurp(out_b / "trajectory.csv"));
  fs::remove_all(out_a);
  fs::remove_all(out_b);
}

TEST_CASE("invalid configuration exits nonzero") {
  CHECK(run_cli("run --rho 0 --clients 1 --rounds 1 --epochs 1") != 0);
  CHECK(run_cli("run --bogus-flag 1") != 0);
  CHECK(run_cli("") != 0);  // a subcommand is required
}

TEST_CASE("fedavg mode runs and reports larger uploads") {
  const fs::path out = fresh_dir("protofed_cli_fedavg");
  const int rc = run_cli(std::string("run --mode fedavg ") + kTinyFlags +
                         " --lstm-hidden 4 --out " + out.string());
  CHECK(rc == 0);
  const std::string summary = slurp(out / "summary.json");
  CHECK(summary.find("\"mode\": \"fedavg\"") != std::string::npos);
  fs::remove_all(out);
}

TEST_CASE("sweep subcommand emits one summary row per value") {
  const fs::path out = fresh_dir("protofed_cli_sweep");
  const int rc = run_cli(std::string("sweep --axis rho --values 10 --values 20 ") +
                         kTinyFlags + " --out " + out.string());
  CHECK(rc == 0);
  const std::string csv = slurp(out / "sweep_summary.csv");
  std::size_t lines = 0;
  for (char c : csv) lines += c == '\n';
  CHECK(lines == 3);  // header + 2 rows
  CHECK(csv.find("rho,10,ok") != std::string::npos);
  CHECK(csv.find("rho,20,ok") != std::string::npos);
  fs::remove_all(out);
}

TEST_CASE("options can come from a config file") {
  const fs::path out = fresh_dir("protofed_cli_config");
  const fs::path cfg = fs::temp_directory_path() / "protofed_cli.cfg";
  {
    std::ofstream f(cfg);
    f << "[run]\nclients=2\nchannels=6\nwindow=8\ntrain-windows=110\nrho=10\n"
      << "rounds=1\nepochs=1\nbatch=16\nseed=4\nout=" << out.string() << "\n";
  }
  const int rc = run_cli("--config " + cfg.string() + " run");
  CHECK(rc == 0);
  CHECK(fs::exists(out / "summary.json"));
  // the resolved configuration reflects the file, not the defaults
  const std::string manifest = slurp(out / "manifest.json");
  CHECK(manifest.find("\"train_windows\": 110") != std::string::npos);
  fs::remove(cfg);
  fs::remove_all(out);
}

TEST_CASE("tcp transport over the cli") {
  const fs::path out = fresh_dir("protofed_cli_tcp");
  const int rc = run_cli(std::string("run --transport tcp ") + kTinyFlags +
                         " --out " + out.string());
  CHECK(rc == 0);
  fs::remove_all(out);
}
