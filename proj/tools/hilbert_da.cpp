#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "hilbertda/experiments.hpp"

namespace {

using Driver = std::function<int(const hilbertda::config::Config&, const std::string&,
                                 std::ostream&, std::ostream&)>;

const std::map<std::string, Driver> kDrivers = {
    {"field", hilbertda::experiments::cmd_field},
    {"lln", hilbertda::experiments::cmd_lln},
    {"cov-lln", hilbertda::experiments::cmd_cov_lln},
    {"enkf-converge", hilbertda::experiments::cmd_enkf_converge},
    {"curse", hilbertda::experiments::cmd_curse},
    {"etkf-check", hilbertda::experiments::cmd_etkf_check},
    {"char-fn", hilbertda::experiments::cmd_char_fn},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Seeded Hilbert-space statistics and data-assimilation experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed_override = 0;
  bool seed_given = false;

  for (const auto& [name, driver] : kDrivers) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "key=value configuration file")->required();
    sub->add_option("--seed", seed_override, "override the config seed")
        ->each([&](const std::string&) { seed_given = true; });
    sub->add_option("--out", out_dir, "directory for output CSV files");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Usage problems are configuration errors for exit-code purposes.
    const int cli_code = app.exit(e);
    return cli_code == 0 ? 0 : hilbertda::experiments::ExitConfig;
  }

  try {
    auto cfg = hilbertda::config::Config::parse_file(config_path);
    if (seed_given) cfg.set("seed", std::to_string(seed_override));
    cfg.get_seed();  // mandatory, fail before any work
    std::filesystem::create_directories(out_dir);
    const std::string name = app.get_subcommands().front()->get_name();
    return kDrivers.at(name)(cfg, out_dir, std::cout, std::cerr);
  } catch (const hilbertda::config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return hilbertda::experiments::ExitConfig;
  } catch (const hilbertda::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return hilbertda::experiments::ExitThreshold;
  }
}
