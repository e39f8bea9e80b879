// End-to-end exercise of the command-line tool: simulate -> fit -> probs ->
// metrics, exit-code contract, manifest presence and rerun determinism.
// argv[1] = path to the panelmsm binary, argv[2] = path to the data/ tree.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

int g_failures = 0;

#define E2E_CHECK(cond)                                                       \
  do {                                                                        \
    if (!(cond)) {                                                            \
      std::cerr << "FAILED at " << __LINE__ << ": " #cond "\n";               \
      ++g_failures;                                                           \
    }                                                                         \
  } while (0)

int run(const std::string& cmd) {
  int status = std::system((cmd + " >/dev/null 2>&1").c_str());
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::cerr << "usage: cli_e2e <panelmsm-binary> <data-dir>\n";
    return 2;
  }
  const std::string cli = argv[1];
  const fs::path data = argv[2];
  const fs::path work = fs::temp_directory_path() / ("pmsm_cli_" + std::to_string(::getpid()));
  fs::create_directories(work);

  const std::string scenario1 = (data / "scenarios" / "scenario1.scenario").string();
  const std::string id_model = (data / "models" / "illness_death.model").string();
  const std::string exact_model = (data / "models" / "illness_death_exact.model").string();

  // --- simulate: determinism and artifacts
  E2E_CHECK(run(cli + " simulate " + scenario1 + " --n 40 --reps 2 --seed 5 --out " + (work / "sim").string()) == 0);
  E2E_CHECK(fs::exists(work / "sim" / "rep_1.csv"));
  E2E_CHECK(fs::exists(work / "sim" / "rep_2.csv"));
  E2E_CHECK(fs::exists(work / "sim" / "manifest.json"));
  E2E_CHECK(run(cli + " simulate " + scenario1 + " --n 40 --reps 2 --seed 5 --out " + (work / "sim_b").string()) == 0);
  E2E_CHECK(read_file(work / "sim" / "rep_1.csv") == read_file(work / "sim_b" / "rep_1.csv"));
  E2E_CHECK(read_file(work / "sim" / "rep_2.csv") == read_file(work / "sim_b" / "rep_2.csv"));
  E2E_CHECK(read_file(work / "sim" / "rep_1.csv") != read_file(work / "sim" / "rep_2.csv"));

  // usage errors
  E2E_CHECK(run(cli + " simulate " + scenario1 + " --reps 0 --out " + (work / "x").string()) == 2);
  E2E_CHECK(run(cli + " simulate /nonexistent.scenario --out " + (work / "x").string()) == 2);
  E2E_CHECK(run(cli + " fit") == 2);
  E2E_CHECK(run(cli + " frobnicate") == 2);

  // --- fit: happy path on both replicates
  const std::string rep1 = (work / "sim" / "rep_1.csv").string();
  const std::string rep2 = (work / "sim" / "rep_2.csv").string();
  const std::string fit1 = (work / "fit1").string();
  const std::string fit2 = (work / "fit2").string();
  E2E_CHECK(run(cli + " fit " + id_model + " " + rep1 + " --estimator multinomial --tol 1e-3 --quiet --out " + fit1) ==
            0);
  E2E_CHECK(run(cli + " fit " + id_model + " " + rep2 + " --estimator multinomial --tol 1e-3 --quiet --out " + fit2) ==
            0);
  for (const char* artifact : {"intensities.csv", "trace.csv", "gradient.csv", "manifest.json", "model.model"})
    E2E_CHECK(fs::exists(fs::path(fit1) / artifact));
  std::string manifest = read_file(fs::path(fit1) / "manifest.json");
  E2E_CHECK(manifest.find("\"config_digest\"") != std::string::npos);
  E2E_CHECK(manifest.find("\"stop_reason\"") != std::string::npos);

  // estimator/model incompatibility -> config error
  E2E_CHECK(run(cli + " fit " + exact_model + " " + rep1 + " --estimator poisson --quiet --out " +
                (work / "bad").string()) == 2);
  // unknown estimator -> usage error
  E2E_CHECK(run(cli + " fit " + id_model + " " + rep1 + " --estimator bogus --quiet --out " +
                (work / "bad").string()) == 2);
  // malformed panel -> data error
  std::ofstream(work / "broken.csv") << "id,time,state\nA,0,1\nA,0,2\n";
  E2E_CHECK(run(cli + " fit " + id_model + " " + (work / "broken.csv").string() + " --quiet --out " +
                (work / "bad").string()) == 3);
  // iteration cap -> non-convergence exit
  E2E_CHECK(run(cli + " fit " + id_model + " " + rep1 + " --max-iter 1 --quiet --out " + (work / "short").string()) ==
            5);

  // --- fit with a front-loaded initial estimate file built from fit1's grid
  {
    std::istringstream in(read_file(fs::path(fit1) / "intensities.csv"));
    std::string line;
    std::getline(in, line);
    std::vector<std::string> rows;
    int max_bin = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      rows.push_back(line);
      size_t p1 = line.find(',', line.find(',') + 1);
      max_bin = std::max(max_bin, std::atoi(line.c_str() + p1 + 1));
    }
    int head = max_bin / 10;
    std::ofstream out(work / "frontload.csv");
    out << "from,to,bin,tau,alpha\n";
    for (const std::string& row : rows) {
      size_t p1 = row.find(',');
      p1 = row.find(',', p1 + 1);
      int bin = std::atoi(row.c_str() + p1 + 1);
      size_t p_last = row.rfind(',');
      double alpha = bin <= head ? 0.9 / head : 0.1 / (max_bin - head);
      out << row.substr(0, p_last + 1) << alpha << "\n";
    }
  }
  E2E_CHECK(run(cli + " fit " + id_model + " " + rep1 + " --init file --init-file " +
                (work / "frontload.csv").string() + " --estimator poisson --tol 1e-3 --quiet --out " +
                (work / "fit_frontload").string()) == 0);
  std::string fl_manifest = read_file(work / "fit_frontload" / "manifest.json");
  E2E_CHECK(fl_manifest.find("frontload.csv") != std::string::npos);
  E2E_CHECK(fl_manifest.find("initial_estimate") != std::string::npos);

  // --- probs
  E2E_CHECK(run(cli + " probs " + fit1 + " --grid 0:15:5 --out " + (work / "probs.csv").string()) == 0);
  {
    std::istringstream in(read_file(work / "probs.csv"));
    std::string line;
    std::getline(in, line);
    E2E_CHECK(line == "from,to,s,t,prob");
    // rows sum to 1 per (from, t)
    double sum = 0.0;
    int rows_seen = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      size_t p = line.rfind(',');
      sum += std::atof(line.c_str() + p + 1);
      if (++rows_seen % 3 == 0) {
        E2E_CHECK(std::abs(sum - 1.0) < 1e-9);
        sum = 0.0;
      }
    }
    E2E_CHECK(rows_seen > 0);
  }
  E2E_CHECK(run(cli + " probs " + (work / "nonexistent_dir").string() + " --grid 0:15:5") == 2);

  // --- metrics over the two fits
  E2E_CHECK(run(cli + " metrics " + fit1 + " " + fit2 + " --scenario " + scenario1 + " --grid 0:15:1 --out " +
                (work / "metrics.csv").string()) == 0);
  {
    std::string metrics = read_file(work / "metrics.csv");
    E2E_CHECK(metrics.rfind("target,from,to,t,bias,variance,rmse", 0) == 0);
    E2E_CHECK(metrics.find("cumintensity,1,2,") != std::string::npos);
  }
  E2E_CHECK(run(cli + " metrics " + fit1 + " --scenario " + scenario1 + " --out " + (work / "m2.csv").string()) == 2);
  E2E_CHECK(run(cli + " metrics " + fit1 + " " + fit2 + " --scenario /nonexistent.scenario --out " +
                (work / "m3.csv").string()) == 2);

  std::error_code ec;
  fs::remove_all(work, ec);
  if (g_failures == 0) {
    std::cout << "cli e2e: all checks passed\n";
    return 0;
  }
  std::cerr << "cli e2e: " << g_failures << " checks failed\n";
  return 1;
}
