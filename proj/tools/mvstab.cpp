// mvstab stationary|spectrum|instability|sweep --config <file> [--out <dir>] [--seed <u64>]

#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "mvstab/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Stability analysis of stationary laws of 1-D McKean-Vlasov SDEs"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string command;
  for (const char* name : {"stationary", "spectrum", "instability", "sweep"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "experiment INI file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
    sub->add_option("--seed", seed, "base seed (overrides simulation.seed)")->each([&](const std::string&) {
      seed_given = true;
    });
    sub->callback([&command, name] { command = name; });
  }
  CLI11_PARSE(app, argc, argv);

  try {
    auto cfg = mvstab::load_config(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (seed_given) cfg.seed = seed;
    const auto result = mvstab::run_command(command, cfg);
    const auto& r = result.report;
    std::cout << command << ":";
    for (const char* key : {"branch_count", "verdict", "status", "sigma_c"})
      if (r.contains(key)) std::cout << ' ' << key << '=' << r[key].dump();
    std::cout << "\nwrote " << cfg.out_dir << ":";
    for (const auto& f : r["files"]) std::cout << ' ' << f.get<std::string>();
    std::cout << " manifest.json" << std::endl;
    if (result.exit_code == mvstab::kExitInconclusive)
      std::cerr << "mvstab: inconclusive: " << result.report.value("reason", std::string("see report")) << std::endl;
    return result.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "mvstab " << command << ": " << e.what() << std::endl;
    return mvstab::kExitError;
  }
}
