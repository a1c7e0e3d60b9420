#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "cloak/runner.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cloak;
using nlohmann::json;

namespace {

std::string config_error(const json& j) {
  try {
    run(ScenarioConfig::from_json(j));
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ConfigInvalid);
    return e.message();
  }
  return "";
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("cloak_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

const json kCloakSpectrum = {
    {"experiment", "RadialSpectrum"},
    {"parameters",
     {{"scenario", {{"family", "cloak"}}}, {"n_max", 6}, {"method", "numeric"}, {"tolerance", 1e-8}}}};

}  // namespace

TEST_CASE("names round trip") {
  for (auto e : {Experiment::RadialSpectrum, Experiment::SpectrumCompare, Experiment::NearCloakSweep,
                 Experiment::InteriorInvisibility, Experiment::FemInvariance, Experiment::WosHitting,
                 Experiment::WosKakutani, Experiment::PushforwardCheck})
    CHECK(experiment_from_string(to_string(e)) == e);
  for (auto v : {Verdict::Pass, Verdict::Fail, Verdict::Informational})
    CHECK(verdict_from_string(to_string(v)) == v);
  CHECK(testutil::kind_of([] { experiment_from_string("Teleport"); }) == ErrorKind::ConfigInvalid);
  CHECK(format_from_string("csv") == Format::Csv);
  CHECK(testutil::kind_of([] { format_from_string("xml"); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("shortest round-trip numbers") {
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(0.5) == "0.5");
  CHECK(format_number(1e-300) == "1e-300");
  CHECK(format_number(-2.0) == "-2");
  for (double v : {0.1 + 0.2, 1.0 / 3.0, 6.02214076e23, 5e-324})
    CHECK(std::strtod(format_number(v).c_str(), nullptr) == v);
}

TEST_CASE("config validation") {
  CHECK(testutil::kind_of([] { ScenarioConfig::from_json({{"experiment", "RadialSpectrum"}, {"extra", 1}}); }) ==
        ErrorKind::ConfigInvalid);
  CHECK(testutil::kind_of([] { ScenarioConfig::from_json({{"parameters", json::object()}}); }) ==
        ErrorKind::ConfigInvalid);
  CHECK(testutil::kind_of([] {
          ScenarioConfig::from_json({{"experiment", "RadialSpectrum"}, {"parameters", 3}});
        }) == ErrorKind::ConfigInvalid);
  CHECK_NOTHROW(ScenarioConfig::from_json({{"$schema", "x"}, {"experiment", "WosHitting"}}));
}

TEST_CASE("parameter errors name the offending field") {
  CHECK(config_error({{"experiment", "NearCloakSweep"}, {"parameters", {{"epsilon", 1.5}}}})
            .find("epsilon") != std::string::npos);
  CHECK(config_error({{"experiment", "NearCloakSweep"}, {"parameters", {{"epsilons", {0.2, 1.5}}}}})
            .find("parameters.epsilons[1]") != std::string::npos);
  CHECK(config_error({{"experiment", "RadialSpectrum"}, {"parameters", {{"scenario", {{"family", "cloak"}}}, {"n_max", -1}}}})
            .find("parameters.n_max") != std::string::npos);
  CHECK(config_error({{"experiment", "RadialSpectrum"}, {"parameters", {{"scenario", {{"family", "cloak"}}}, {"bogus", 1}}}})
            .find("parameters.bogus") != std::string::npos);
  CHECK(config_error({{"experiment", "RadialSpectrum"}, {"parameters", {{"scenario", {{"family", "torus"}}}}}})
            .find("scenario.family") != std::string::npos);
  CHECK(config_error({{"experiment", "RadialSpectrum"}, {"parameters", {{"scenario", {{"family", "cloak"}}}, {"solver_tol", 1.0}}}})
            .find("solver_tol") != std::string::npos);
  CHECK(config_error({{"experiment", "WosHitting"}, {"parameters", {{"target_radius", 5.0}}}}) != "");
  CHECK(config_error({{"experiment", "FemInvariance"}, {"parameters", {{"map", {{"map", "blow_up"}}}}}}) != "");
  CHECK(config_error({{"experiment", "RadialSpectrum"}, {"parameters", {{"scenario", "missing.json"}}}}) != "");
}

TEST_CASE("radial spectrum run: verdict, tables and csv header") {
  const auto rep = run(ScenarioConfig::from_json(kCloakSpectrum));
  CHECK(rep.verdict == Verdict::Pass);
  REQUIRE(!rep.tables.empty());
  CHECK(rep.tables[0].name == "spectrum");
  CHECK(rep.tables[0].columns ==
        std::vector<std::string>{"degree", "mu", "reference", "abs_diff", "rel_diff"});
  CHECK(rep.tables[0].rows.size() == 7);
  CHECK(rep.summary["max_rel_diff"].get<double>() <= 1e-8);
  CHECK(rep.wall_time.has_value());

  const auto dir = scratch_dir("csv");
  const auto files = emit_report(rep, Format::Csv, dir);
  REQUIRE(!files.empty());
  CHECK(files[0].filename() == "radial_spectrum.csv");
  const std::string csv = slurp(files[0]);
  CHECK(csv.rfind("degree,mu,reference,abs_diff,rel_diff\n", 0) == 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("informational without a tolerance, fail when the tolerance is unmet") {
  json cfg = kCloakSpectrum;
  cfg["parameters"].erase("tolerance");
  CHECK(run(ScenarioConfig::from_json(cfg)).verdict == Verdict::Informational);

  const json cmp = {{"experiment", "SpectrumCompare"},
                    {"parameters", {{"scenario", {{"family", "cylinder"}, {"rho", 0.2}}}, {"n_max", 5}}}};
  const auto rep = run(ScenarioConfig::from_json(cmp));
  CHECK(rep.verdict == Verdict::Fail);
}

TEST_CASE("report json round trip and timing exclusion") {
  auto rep = run(ScenarioConfig::from_json(kCloakSpectrum));
  const json j = rep.to_json(false);
  CHECK_FALSE(j.contains("wall_time"));
  CHECK(rep.to_json(true).contains("wall_time"));
  const auto back = RunReport::from_json(j);
  CHECK(back.to_json(false) == j);
  CHECK(back.experiment == Experiment::RadialSpectrum);
  CHECK(back.verdict == rep.verdict);
  CHECK(back.tool_version == tool_version());
  CHECK(testutil::kind_of([] { RunReport::from_json({{"experiment", "RadialSpectrum"}}); }) ==
        ErrorKind::ParseError);
}

TEST_CASE("artifacts are byte identical across runs and thread counts") {
  const json cfg = {{"experiment", "WosHitting"},
                    {"output_path", "hit"},
                    {"parameters", {{"n", 2000}, {"seed", 5}, {"target_radius", 0.2}}}};
  const auto a = run(ScenarioConfig::from_json(cfg), {std::nullopt, 1});
  const auto b = run(ScenarioConfig::from_json(cfg), {std::nullopt, 3});
  const auto da = scratch_dir("a"), db = scratch_dir("b");
  for (auto fmt : {Format::Json, Format::Csv, Format::Text}) {
    const auto fa = emit_report(a, fmt, da);
    const auto fb = emit_report(b, fmt, db);
    REQUIRE(fa.size() == fb.size());
    for (std::size_t i = 0; i < fa.size(); ++i) {
      CHECK(fa[i].filename() == fb[i].filename());
      CHECK(slurp(fa[i]) == slurp(fb[i]));
    }
  }
  CHECK(std::filesystem::exists(da / "hit.json"));
  CHECK(std::filesystem::exists(da / "hit.txt"));
  std::filesystem::remove_all(da);
  std::filesystem::remove_all(db);

  const auto c = run(ScenarioConfig::from_json(cfg), {std::uint64_t{6}, 1});
  CHECK(c.to_json() != a.to_json());
  CHECK(c.config["parameters"]["seed"] == 6);
}

TEST_CASE("scenario paths resolve against the config directory") {
  const auto dir = scratch_dir("paths");
  std::filesystem::create_directories(dir / "scenarios");
  std::ofstream(dir / "scenarios" / "h.json") << R"({"family": "homogeneous"})";
  std::ofstream(dir / "exp.json")
      << R"({"experiment": "RadialSpectrum", "parameters": {"scenario": "scenarios/h.json", "n_max": 3}})";
  const auto rep = run(ScenarioConfig::load(dir / "exp.json"));
  CHECK(rep.tables[0].rows[2][1].get<double>() == doctest::Approx(1.0));
  std::ofstream(dir / "broken.json") << "{ nope";
  CHECK(testutil::kind_of([&] { ScenarioConfig::load(dir / "broken.json"); }) ==
        ErrorKind::ConfigInvalid);
  CHECK(testutil::kind_of([&] { ScenarioConfig::load(dir / "absent.json"); }) == ErrorKind::IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("shipped experiment configs load") {
  const std::filesystem::path root = std::string(CLOAK_SOURCE_DIR) + "/configs/experiments";
  int count = 0;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.path().extension() != ".json") continue;
    CHECK_NOTHROW(ScenarioConfig::load(entry.path()));
    ++count;
  }
  CHECK(count >= 10);
}
