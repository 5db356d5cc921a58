// hardylab: numerical experiments on local Hardy spaces, Lipschitz norms and
// inhomogeneous Calderon-Zygmund operators over periodic grids.
//
// usage: hardylab <subcommand> [config.ini] [--seed N] [--threads N] [--out DIR]
//
// Exit codes: 0 pass, 1 numeric failure, 2 configuration error.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <string>

#include "hardylab/config.hpp"
#include "hardylab/runners.hpp"

int main(int argc, char** argv) {
  CLI::App app{"hardylab: local Hardy space laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed_override = 0;
  bool seed_set = false;
  int threads_override = 0;

  std::string chosen;
  for (const auto& name : hardylab::cli::subcommands()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("config", config_path, "configuration file (key=value with [sections])");
    sub->add_option("--out", out_dir, "output directory (overrides config and env)");
    sub->add_option("--seed", seed_override, "random seed override")->each([&](const std::string&) {
      seed_set = true;
    });
    sub->add_option("--threads", threads_override, "worker threads for independent sweep cases");
    sub->callback([&chosen, name] { chosen = name; });
  }

  CLI11_PARSE(app, argc, argv);

  try {
    hardylab::KeyValueConfig kv = config_path.empty()
                                      ? hardylab::KeyValueConfig{}
                                      : hardylab::KeyValueConfig::parse_file(config_path);
    hardylab::RunConfig cfg = hardylab::RunConfig::from(kv);
    if (const char* env = std::getenv("HARDYLAB_OUTPUT_DIR")) cfg.output_dir = env;
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (seed_set) cfg.seed = seed_override;
    if (threads_override > 0) cfg.threads = threads_override;
    cfg.validate();

    const int rc = hardylab::cli::run_subcommand(chosen, cfg);
    if (rc == 0) {
      std::printf("%s: pass (reports in %s)\n", chosen.c_str(), cfg.output_dir.c_str());
    } else {
      std::printf("%s: FAIL (reports in %s)\n", chosen.c_str(), cfg.output_dir.c_str());
    }
    return rc;
  } catch (const hardylab::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
