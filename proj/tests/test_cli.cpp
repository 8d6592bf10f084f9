#include "doctest.h"

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>

#include "kerrsf/correlations.hpp"
#include "kerrsf/fit_engine.hpp"
#include "kerrsf/io.hpp"
#include "kerrsf/medium_optics.hpp"
#include "oracles.hpp"

using namespace kerrsf;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "kerrsf_test_cli";

int run(const std::string& args) {
  fs::create_directories(kWork);
  const std::string cmd = "cd " + kWork.string() + " && " + KERRSF_CLI + " " + args +
                          " > last.log 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write(const std::string& name, const std::string& text) {
  fs::create_directories(kWork);
  const fs::path p = kWork / name;
  std::ofstream(p) << text;
  return p;
}

boost::property_tree::ptree read_ini(const fs::path& p) {
  boost::property_tree::ptree t;
  boost::property_tree::read_ini(p.string(), t);
  return t;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

const std::string kModel =
    "[model]\ndelta = 0.1\nrabi = 0.16\nkerr = 0.45\ngamma = 0.22\nfock_dim = 12\n"
    "[medium]\nf = 1.0\nbackground = 0.02\n"
    "[grid]\nmin = -1.5\nmax = 1.5\npoints = 61\n";

const std::string kTable = std::string(KERRSF_CONFIGS) + "/table1/";

}  // namespace

TEST_CASE("sf-test over the Table I fits") {
  REQUIRE(run("sf-test " + kTable + "fit_1.txt " + kTable + "fit_3.txt " + kTable + "fit_2.txt") == 0);
  const auto t = read_ini(kWork / "sf_report.txt");
  CHECK(t.get<double>("pair_1.lhs") == doctest::Approx(1.852).epsilon(0.0005));
  CHECK(t.get<double>("pair_1.kerr_ratio") == doctest::Approx(2.050).epsilon(0.0005));
  CHECK(t.get<double>("pair_2.lhs") == doctest::Approx(2.202).epsilon(0.0005));
  CHECK(t.get<double>("pair_2.kerr_ratio") == doctest::Approx(2.195).epsilon(0.0005));
  CHECK(t.get<std::string>("verdict.overall") == "superfluorescent");
}

TEST_CASE("sf-test identity and constant per-exciton drive") {
  REQUIRE(run("sf-test " + kTable + "fit_2.txt " + kTable + "fit_2.txt -o same.txt") == 0);
  auto t = read_ini(kWork / "same.txt");
  CHECK(t.get<double>("pair_1.lhs") == 1.0);
  CHECK(t.get<std::string>("verdict.overall") == "random_phase");

  write("p1.txt", "[result]\nlaser_power = 100\nrabi = 0.05\nkerr = 0.1\n");
  write("p2.txt", "[result]\nlaser_power = 400\nrabi = 0.1\nkerr = 0.1\n");
  REQUIRE(run("sf-test p1.txt p2.txt -o const.txt") == 0);
  t = read_ini(kWork / "const.txt");
  CHECK(t.get<double>("pair_1.lhs") == doctest::Approx(1.0));

  write("nopower.txt", "[result]\nrabi = 0.1\nkerr = 0.1\n");
  CHECK(run("sf-test p1.txt nopower.txt") == 2);
  CHECK(run("sf-test p1.txt") == 2);
}

TEST_CASE("simulate writes aligned columns that reload exactly") {
  write("sim.ini", kModel);
  REQUIRE(run("simulate -c sim.ini -o sim.csv") == 0);

  CollectiveModelParams p;
  p.delta = 0.1;
  p.rabi = 0.16;
  p.kerr = 0.45;
  p.gamma = 0.22;
  p.fock_dim = 12;
  MediumParams m;
  m.delta_res = 0.1;
  m.gamma = 0.22;
  m.background = 0.02;
  const auto grid = uniform_grid(-1.5, 1.5, 61);
  const auto internal = internal_spectrum(p, grid, 0.0107);
  const auto a = absorption(grid, m);
  const auto out = output_spectrum(internal.total, a, m);

  const auto file = kWork / "sim.csv";
  CHECK(load_spectrum(file, SpectrumColumns{0, 1, std::nullopt}).values() == internal.total.values());
  CHECK(load_spectrum(file, SpectrumColumns{0, 2, std::nullopt}).values() == a.values());
  const auto back = load_spectrum(file, SpectrumColumns{0, 3, std::nullopt});
  CHECK(back.values() == out.values());
  CHECK(back.delta_grid() == grid);
  CHECK(slurp(file).find("# delta_meV,S_internal,a,S_output") != std::string::npos);

  REQUIRE(run("simulate -c sim.ini -o sim.txt --format structured-text") == 0);
  const auto t = read_ini(kWork / "sim.txt");
  CHECK(t.get<double>("summary.occupation") == doctest::Approx(internal.occupation).epsilon(1e-14));
}

TEST_CASE("simulate limits") {
  write("dark.ini", kModel);
  REQUIRE(run("simulate -c dark.ini -s model.rabi=0 -o dark.csv") == 0);
  const auto file = kWork / "dark.csv";
  const auto internal = load_spectrum(file, SpectrumColumns{0, 1, std::nullopt});
  const auto output = load_spectrum(file, SpectrumColumns{0, 3, std::nullopt});
  for (double v : internal.values()) CHECK(v == 0.0);
  for (double v : output.values()) CHECK(v == 0.02);

  REQUIRE(run("simulate -c dark.ini -s model.kerr=0 --fock-dim 40 -o linear.csv") == 0);
  const auto s = load_spectrum(kWork / "linear.csv", SpectrumColumns{0, 1, std::nullopt});
  const double weight = 2.0 * std::numbers::pi * std::norm(oracle::coherent_amplitude(0.1, 0.16, 0.22));
  for (std::size_t k = 0; k < s.size(); ++k) {
    CHECK(s.values()[k] ==
          doctest::Approx(weight * oracle::lorentzian(s.delta_grid()[k], 0.0107)).epsilon(1e-7));
  }
}

TEST_CASE("noise injection needs a seed and is reproducible") {
  write("noise.ini", kModel + "[noise]\nrelative = 0.01\noutput = noisy.csv\n");
  CHECK(run("simulate -c noise.ini -o n.csv") == 2);
  REQUIRE(run("simulate -c noise.ini -o n.csv --seed 4") == 0);
  const auto first = slurp(kWork / "noisy.csv");
  REQUIRE(run("simulate -c noise.ini -o n.csv -s run.seed=4") == 0);
  CHECK(slurp(kWork / "noisy.csv") == first);
  REQUIRE(run("simulate -c noise.ini -o n.csv --seed 5") == 0);
  CHECK(slurp(kWork / "noisy.csv") != first);
  const auto data = load_spectrum(kWork / "noisy.csv");
  CHECK(data.weights().size() == data.size());
}

TEST_CASE("fit from the command line") {
  write("fit.ini", kModel +
                       "[noise]\nrelative = 0.01\noutput = fitdata.csv\n[run]\nseed = 1\n"
                       "[fit]\ndata = fitdata.csv\nfree = kerr\noptimizer = levenberg_marquardt\n"
                       "fock_dim = 12\nnormalize = false\n");
  REQUIRE(run("simulate -c fit.ini -o unused.csv") == 0);
  REQUIRE(run("fit -c fit.ini -s model.kerr=0.4 -o fit_report.txt") == 0);
  const auto t = read_ini(kWork / "fit_report.txt");
  CHECK(t.get<double>("result.kerr") == doctest::Approx(0.45).epsilon(0.02));
  CHECK(t.get<std::string>("result.converged") == "true");
  CHECK(t.get<std::string>("config.free") == "kerr");
  CHECK(t.get<double>("config.start_kerr") == 0.4);
  CHECK(t.get_optional<std::string>("report.units"));
}

TEST_CASE("oracle comparisons") {
  const std::string base =
      "[oracle]\nrabi_single = 0.03\nkerr_single = 0.05\ndelta = 0.08\ngamma = 0.15\n";
  write("o1.ini", base + "n_modes = 1\ndim_per_mode = 12\ncollective_dim = 12\n");
  REQUIRE(run("oracle -c o1.ini -o o1.txt") == 0);
  auto t = read_ini(kWork / "o1.txt");
  CHECK(t.get<double>("collective.occupation_rel_deviation") < 1e-12);

  write("o2.ini", base + "n_modes = 2\nphases = antiphase\ndim_per_mode = 6\n");
  REQUIRE(run("oracle -c o2.ini -o o2.txt") == 0);
  t = read_ini(kWork / "o2.txt");
  CHECK(t.get<double>("collective.occupation_collective") < 1e-12);
  CHECK(t.get<double>("multimode.occupation") < 1e-8);
}

TEST_CASE("exit codes") {
  CHECK(run("simulate -c /nonexistent/config.ini") == 5);
  write("bad.ini", "[model]\ndelta = 0.1\nrabi = -1\nkerr = 0\ngamma = 0.2\nfock_dim = 8\n");
  CHECK(run("simulate -c bad.ini") == 2);
  write("big.ini", "[oracle]\nn_modes = 6\ndim_per_mode = 5\nrabi_single = 0.01\n"
                   "kerr_single = 0.01\ndelta = 0\ngamma = 1\n");
  CHECK(run("oracle -c big.ini") == 4);
  write("runaway.ini", "[model]\ndelta = 0\nrabi = 3\nkerr = 0\ngamma = 0.2\n"
                       "[convergence]\nmax_dim = 16\n");
  CHECK(run("convergence -c runaway.ini") == 3);
  CHECK(run("frobnicate") == 2);
}

TEST_CASE("output directory override") {
  const fs::path dir = kWork / "redirected";
  fs::remove_all(dir);
  write("conv.ini", "[model]\ndelta = 0.1\nrabi = 0.16\nkerr = 0.45\ngamma = 0.22\n");
  REQUIRE(run("convergence -c conv.ini -o conv.csv") == 0);
  const std::string env = std::string(kOutputDirEnv) + "=" + dir.string() + " ";
  const std::string cmd = "cd " + kWork.string() + " && " + env + KERRSF_CLI +
                          " convergence -c conv.ini -o conv.csv > /dev/null";
  REQUIRE(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(dir / "conv.csv"));
  CHECK(slurp(dir / "conv.csv").find("d_star=8") != std::string::npos);
}
