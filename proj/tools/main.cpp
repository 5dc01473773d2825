#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pimm/commands.hpp"
#include "pimm/config.hpp"

namespace {

pimm::RunConfig load_config(const std::string& path,
                            const std::vector<std::string>& overrides,
                            const std::string& seed_flag) {
  pimm::RunConfig config = path.empty() ? pimm::RunConfig()
                                        : pimm::RunConfig::from_file(path);
  for (const auto& assignment : overrides) {
    config.apply_override(assignment);
  }
  if (!seed_flag.empty()) {
    config.set("train.seeds", seed_flag);
  }
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task conversion models over cascaded binary tasks: "
               "curriculum-scheduled prior-information merging (pimm), its "
               "attention-only ablation (aitm), shared_bottom and esmm "
               "baselines, plus a synthetic cascade dataset generator and an "
               "AUC comparison harness."};
  app.footer(pimm::RunConfig::registry_help());

  std::string config_path;
  std::string out = ".";
  std::string seed_flag;
  std::size_t jobs = 1;
  std::vector<std::string> overrides;

  app.add_option("--config", config_path, "configuration file (see footer)");
  app.add_option("--set", overrides,
                 "override a config key: --set section.key=value")
      ->take_all();
  app.add_option("--seed", seed_flag,
                 "replace train.seeds with this single seed");
  app.add_option("--out", out, "output directory (default: .)");
  app.add_option("--jobs", jobs,
                 "parallel training runs in compare (default: 1)");

  auto* gen = app.add_subcommand("gen-data",
                                 "generate a synthetic cascade dataset "
                                 "(train.csv, test.csv, summary.json)");
  auto* train = app.add_subcommand("train",
                                   "train one model kind; writes metrics, "
                                   "loss curves and checkpoints");
  auto* compare = app.add_subcommand("compare",
                                     "train every kind in compare.models on "
                                     "a shared seed list and tabulate AUC");
  app.require_subcommand(1);

  CLI11_PARSE(app, argc, argv);

  try {
    const pimm::RunConfig config =
        load_config(config_path, overrides, seed_flag);
    if (gen->parsed()) {
      pimm::cmd_gen_data(config, out);
    } else if (train->parsed()) {
      pimm::cmd_train(config, out);
    } else if (compare->parsed()) {
      pimm::cmd_compare(config, out, jobs);
    }
    return 0;
  } catch (...) {
    return pimm::exit_code_for_current_exception();
  }
}
