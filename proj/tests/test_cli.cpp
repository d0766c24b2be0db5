#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kTmp = fs::temp_directory_path() / "fklab_cli_test";

int run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " \"" FKLAB_CLI "\" " + args + " > /dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_json(const std::string& name, const json& j) {
  fs::create_directories(kTmp);
  const auto p = kTmp / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

json small_config(double volume_coef, double c) {
  json j = json::parse(R"({
    "schema": 1, "mode": "theorem_1_3",
    "process": {"kind": "brownian", "dim": 3},
    "envelope": {"kind": "gaussian_UE", "phi": {"form": "power", "beta": 2, "coef": 2}, "dim": 3},
    "mesh": {"h": 0.0625, "L": 4},
    "n_paths": 4000, "seed": 3, "t_values": [0.5, 1, 2],
    "points": [[0, 0, 0], [0.5, 0, 0], [1, 0, 0], [2, 0, 0]]
  })");
  j["envelope"]["volume_coef"] = volume_coef;
  if (c > 0) j["mu"] = {{"pos", {{"uniform_ball", {{"c", c}, {"radius", 1}}}}}};
  return j;
}

constexpr double kVol3 = 44.54662397277873;

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("run"), 1);
  EXPECT_EQ(run_cli("no-such-command"), 1);
}

TEST(Cli, BadConfigExitsOne) {
  auto j = small_config(kVol3, 0.0);
  j["surprise"] = true;
  const auto p = write_json("bad.json", j);
  EXPECT_EQ(run_cli("run --config " + p.string() + " --out-dir " + (kTmp / "bad").string()), 1);
  EXPECT_FALSE(fs::exists(kTmp / "bad" / "summary.json"));
  EXPECT_EQ(run_cli("run --config " + (kTmp / "missing.json").string()), 1);
}

TEST(Cli, UnperturbedRunExitsZeroAndWritesReports) {
  const auto p = write_json("id.json", small_config(kVol3, 0.0));
  const auto out = kTmp / "id";
  EXPECT_EQ(run_cli("run --config " + p.string() + " --out-dir " + out.string()), 0);
  for (const char* f : {"summary.json", "spectral.json", "kernel.csv", "ratio.csv"}) EXPECT_TRUE(fs::exists(out / f)) << f;
  const auto s = json::parse(slurp(out / "summary.json"));
  EXPECT_EQ(s["schema"], 1);
  EXPECT_NE(s["verdict"]["status"], "inconsistent");
}

TEST(Cli, WrongEnvelopeConstantIsInconsistent) {
  // the envelope is a thousand times too small: no constant under the cap fits
  const auto p = write_json("wrong.json", small_config(1000 * kVol3, 0.5));
  const auto out = kTmp / "wrong";
  EXPECT_EQ(run_cli("run --config " + p.string() + " --out-dir " + out.string()), 2);
  const auto s = json::parse(slurp(out / "summary.json"));
  EXPECT_EQ(s["verdict"]["status"], "inconsistent");
}

TEST(Cli, OutputIndependentOfThreadCount) {
  const auto p = write_json("threads.json", small_config(kVol3, 0.5));
  const auto a = kTmp / "t1", b = kTmp / "t4";
  run_cli("run --config " + p.string() + " --out-dir " + a.string(), "FKLAB_THREADS=1");
  run_cli("run --config " + p.string() + " --out-dir " + b.string(), "FKLAB_THREADS=4");
  for (const char* f : {"kernel.csv", "ratio.csv", "spectral.json", "summary.json"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
}

TEST(Cli, KatoClassify) {
  const auto out = kTmp / "kc.json";
  EXPECT_EQ(run_cli("kato-classify --measure " FKLAB_CONFIG_DIR "/measure_ball_d3.json --process " FKLAB_CONFIG_DIR
                    "/process_brownian_d3.json --out " + out.string()),
            0);
  const auto j = json::parse(slurp(out));
  EXPECT_EQ(j["flags"]["kato"], "yes");
}

TEST(Cli, EnvelopeEval) {
  const auto out = kTmp / "env.csv";
  ASSERT_EQ(run_cli("envelope-eval --envelope " FKLAB_CONFIG_DIR "/envelope_gauss_d1.json --t 1 --r 0,1 --out " +
                    out.string()),
            0);
  std::istringstream in(slurp(out));
  std::string header, row;
  std::getline(in, header);
  EXPECT_EQ(header, "t,r,value");
  std::getline(in, row);
  const double v = std::stod(row.substr(row.rfind(',') + 1));
  EXPECT_NEAR(v, 1 / std::sqrt(2 * M_PI), 1e-8);
}

TEST(Cli, SpectralSubcommand) {
  const auto p = write_json("spec.json", small_config(kVol3, 0.5));
  const auto out = kTmp / "spectral.json";
  EXPECT_EQ(run_cli("spectral --config " + p.string() + " --out " + out.string()), 0);
  const auto j = json::parse(slurp(out));
  EXPECT_TRUE(j.contains("lambda"));
}
