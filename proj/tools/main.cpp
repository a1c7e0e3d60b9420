#include <cstdio>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "cloak/errors.hpp"
#include "cloak/runner.hpp"

namespace {

const std::map<std::string, std::vector<cloak::Experiment>> kSubcommands{
    {"spectrum", {cloak::Experiment::RadialSpectrum}},
    {"compare", {cloak::Experiment::SpectrumCompare}},
    {"nearcloak", {cloak::Experiment::NearCloakSweep}},
    {"invisibility", {cloak::Experiment::InteriorInvisibility}},
    {"fem-invariance", {cloak::Experiment::FemInvariance}},
    {"wos", {cloak::Experiment::WosHitting, cloak::Experiment::WosKakutani}},
    {"pushforward-check", {cloak::Experiment::PushforwardCheck}},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cloaking and DtN-map verification experiments"};
  app.set_version_flag("--version", cloak::tool_version());
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", format = "text";
  std::uint64_t seed = 0;
  unsigned threads = 1;
  auto* seed_opt = app.add_option("--seed", seed, "Override the config seed");
  app.add_option("--threads", threads, "Worker threads")->check(CLI::Range(1u, 256u));
  app.add_option("--config", config_path, "Experiment config (JSON)")->required();
  app.add_option("--out", out_dir, "Directory for report artifacts");
  app.add_option("--format", format, "Artifact format")
      ->check(CLI::IsMember({"csv", "json", "text"}));
  for (const auto& [name, _] : kSubcommands) app.add_subcommand(name)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string sub = app.get_subcommands().front()->get_name();
  try {
    const cloak::ScenarioConfig config = cloak::ScenarioConfig::load(config_path);
    const auto& allowed = kSubcommands.at(sub);
    if (std::find(allowed.begin(), allowed.end(), config.experiment) == allowed.end()) {
      std::cerr << "error: config experiment " << cloak::to_string(config.experiment)
                << " does not belong to subcommand '" << sub << "'\n";
      return 2;
    }
    cloak::RunOptions options;
    if (*seed_opt) options.seed = seed;
    options.threads = threads;
    const cloak::RunReport report = cloak::run(config, options);
    const auto files = cloak::emit_report(report, cloak::format_from_string(format), out_dir);
    std::cout << cloak::render_text(report, true);
    for (const auto& f : files) std::cerr << "wrote " << f.string() << "\n";
    return report.verdict == cloak::Verdict::Fail ? 1 : 0;
  } catch (const cloak::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == cloak::ErrorKind::ConfigInvalid ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
