#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fklab/experiment.hpp"
#include "fklab/io.hpp"

using namespace fklab;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

json base_config() {
  return json::parse(R"({
    "schema": 1, "mode": "theorem_1_3",
    "process": {"kind": "brownian", "dim": 3},
    "mu": {"pos": {"uniform_ball": {"c": 0.5, "radius": 1}}},
    "envelope": {"kind": "gaussian_UE", "phi": {"form": "power", "beta": 2, "coef": 2}, "dim": 3},
    "points": [[0, 0, 0], [1, 0, 0]]
  })");
}

bool config_error(const json& j) {
  try {
    experiment::config_from_json(j);
  } catch (const Error& e) {
    return e.code() == Errc::config_error;
  }
  return false;
}

fs::path temp_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("fklab_test_" + name);
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST(Config, ParsesBase) {
  const auto c = experiment::config_from_json(base_config());
  EXPECT_EQ(c.mode, experiment::Mode::theorem_1_3);
  EXPECT_EQ(c.pairs.size(), 3u);
  EXPECT_EQ(c.process.dim, 3);
  EXPECT_TRUE(c.envelope.has_value());
  EXPECT_EQ(c.n_paths, 100000);
}

TEST(Config, SchemaRequired) {
  auto j = base_config();
  j.erase("schema");
  EXPECT_TRUE(config_error(j));
  j["schema"] = 2;
  EXPECT_TRUE(config_error(j));
}

TEST(Config, UnknownKeysRejectedAtEveryLevel) {
  auto j = base_config();
  j["extra"] = 1;
  EXPECT_TRUE(config_error(j));
  j = base_config();
  j["process"]["colour"] = "red";
  EXPECT_TRUE(config_error(j));
  j = base_config();
  j["mu"]["pos"]["uniform_ball"]["sigma"] = 1;
  EXPECT_TRUE(config_error(j));
  j = base_config();
  j["tolerances"] = {{"growth", 0.1}};
  EXPECT_TRUE(config_error(j));
}

TEST(Config, ModeConstraints) {
  auto j = base_config();
  j["process"] = {{"kind", "brownian"}, {"dim", 1}};
  j["envelope"]["dim"] = 1;
  j["points"] = {0, 1};
  EXPECT_TRUE(config_error(j));  // recurrent process in the transient mode
  j = base_config();
  j["mode"] = "corollary_1_5";
  EXPECT_TRUE(config_error(j));  // alpha missing
  j["alpha"] = 2;
  EXPECT_FALSE(config_error(j));
  j = base_config();
  j.erase("envelope");
  EXPECT_TRUE(config_error(j));
  j = base_config();
  j["envelope"]["dim"] = 1;
  EXPECT_TRUE(config_error(j));
  j = base_config();
  j["points"] = {{0, 0}};
  EXPECT_TRUE(config_error(j));
  j = base_config();
  j["n_paths"] = 1.5;
  EXPECT_TRUE(config_error(j));
}

TEST(Config, ExampleFilesLoad) {
  for (const auto& e : fs::directory_iterator(FKLAB_CONFIG_DIR)) {
    const auto j = io::read_file(e.path().string());
    if (!j.contains("schema")) continue;  // component files
    EXPECT_NO_THROW(experiment::config_from_json(j)) << e.path();
  }
}

TEST(Json, ProcessRoundTrip) {
  for (const auto& s : {processes::brownian(3, 0.5), processes::stable(1.5, 0.02)}) {
    const auto back = io::process_from_json(io::to_json(s));
    EXPECT_EQ(back.kind, s.kind);
    EXPECT_EQ(back.dim, s.dim);
    EXPECT_EQ(back.kill_rate, s.kill_rate);
    EXPECT_EQ(back.alpha_stable_index, s.alpha_stable_index);
  }
}

TEST(Json, MeasureRoundTrip) {
  const auto m = MeasureSpec::from_profiles(Profile::power(2.0, -1.5, 0.5), Profile::gaussian_bump(1.0, 0.25), "m");
  const auto back = io::measure_from_json(io::to_json(m));
  const Point x{0.3, 0.1, 0.0};
  EXPECT_DOUBLE_EQ(back.pos(x), m.pos(x));
  EXPECT_DOUBLE_EQ(back.neg(x), m.neg(x));
  EXPECT_TRUE(io::measure_from_json(nullptr).is_zero());
}

TEST(Json, EnvelopeRoundTrip) {
  const auto f = envelopes::gaussian_heat_family(3);
  const auto back = io::envelope_from_json(io::to_json(f));
  for (double t : {0.5, 2.0})
    for (double r : {0.0, 1.0})
      EXPECT_NEAR(envelopes::eval_envelope_r(back, t, Point{0, 0, 0}, r), envelopes::eval_envelope_r(f, t, Point{0, 0, 0}, r),
                  1e-12);
}

TEST(Json, JumpAndPotential) {
  const auto F = io::jump_from_json(json::parse(R"({"pos": {"threshold": {"eps": 0.1, "min_jump": 1}}})"));
  ASSERT_TRUE(F.has_value());
  EXPECT_DOUBLE_EQ(F->value(Point{0.0}, Point{2.0}), 0.1);
  const auto u = io::potential_from_json(json::parse(R"({"kind": "ell_beta", "beta": -0.5, "eps": 0.001})"));
  ASSERT_TRUE(u.has_value());
  EXPECT_EQ(u->kind, functionals::PotentialU::Kind::ell_beta);
  EXPECT_THROW(io::potential_from_json(json::parse(R"({"kind": "ell_beta", "beta": 0.5})")), Error);
}

TEST(Json, InfinityEncoding) {
  EXPECT_EQ(io::real(kInf), json("inf"));
  EXPECT_TRUE(io::real(std::nan("")).is_null());
  EXPECT_EQ(io::num(json{{"x", "inf"}}, "x", "ctx"), kInf);
  EXPECT_THROW(io::num(json{{"x", "big"}}, "x", "ctx"), Error);
}

TEST(Format, FixedPrecision) {
  EXPECT_EQ(io::fmt(0.1), "0.1");
  EXPECT_EQ(io::fmt(1.0 / 3.0), "0.3333333333");
  EXPECT_EQ(io::fmt(-kInf), "-inf");
  EXPECT_EQ(io::fmt(1e-20), "1e-20");
}

TEST(Writer, AllOrNothing) {
  const auto d = temp_dir("writer");
  io::AtomicWriter w(d);
  EXPECT_THROW(w.commit(), Error);
  EXPECT_FALSE(fs::exists(d / "a.txt"));
  w.add("a.txt", "alpha");
  w.add("b.txt", "beta");
  w.commit();
  std::ifstream a(d / "a.txt");
  std::string s;
  a >> s;
  EXPECT_EQ(s, "alpha");
  EXPECT_FALSE(fs::exists(d / "a.txt.tmp"));
  fs::remove_all(d);
}

TEST(Writer, EmptyBundleWritesNothing) {
  const auto d = temp_dir("bundle");
  experiment::Bundle b;
  EXPECT_THROW(experiment::report(b, d.string()), Error);
  EXPECT_FALSE(fs::exists(d) && !fs::is_empty(d));
}

TEST(Files, MissingFileIsIoError) {
  try {
    io::read_file("/nonexistent/fklab.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::io_error);
  }
}
