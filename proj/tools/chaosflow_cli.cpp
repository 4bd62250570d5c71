// chaosflow <kind> [--config PATH] [--seed U64] [--out-dir PATH] [--workers INT] [--quiet]
//
// Exit codes: 0 pass, 1 invariant breach, 2 config error.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "chaosflow/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Wiener chaos solver for passive scalar transport"};
  app.require_subcommand(1);
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  int workers = 0;
  bool quiet = false;
  app.add_option("--config", config_path, "Config file (key = value lines)");
  auto* seed_opt = app.add_option("--seed", seed, "Override run.master_seed");
  app.add_option("--out-dir", out_dir, "Override run.out_dir");
  app.add_option("--workers", workers, "Worker threads (1 = serial)")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", quiet, "Suppress progress output");
  for (const auto& kind : chaosflow::experiment_kinds()) app.add_subcommand(kind, "Run the " + kind + " study")->fallthrough();
  app.set_version_flag("--version", chaosflow::kVersion);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  const std::string kind = app.get_subcommands().front()->get_name();

  try {
    chaosflow::ExperimentConfig cfg;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw chaosflow::ConfigError("cannot open config file '" + config_path + "'");
      std::stringstream text;
      text << in.rdbuf();
      // The subcommand supplies the kind when the file leaves it out.
      std::string body = text.str();
      bool has_kind = false;
      std::istringstream lines(body);
      for (std::string line; std::getline(lines, line);) {
        const auto key = line.find_first_not_of(" \t");
        if (key != std::string::npos && line.compare(key, 4, "kind") == 0 &&
            line.find_first_not_of(" \t", key + 4) == line.find('=', key + 4)) {
          has_kind = true;
        }
      }
      if (!has_kind) body = "kind = " + kind + "\n" + body;
      cfg = chaosflow::parse_config_text(body);
    } else {
      cfg = chaosflow::parse_config_text("kind = " + kind + "\n");
    }
    if (cfg.kind != kind) {
      throw chaosflow::ConfigError("config kind '" + cfg.kind + "' does not match subcommand '" + kind + "'");
    }
    if (seed_opt->count()) cfg.master_seed = seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (workers > 0) cfg.workers = workers;
    cfg.validate();

    const chaosflow::RunResult res = chaosflow::run_experiment(cfg, quiet ? nullptr : &std::cout);
    for (const auto& b : res.breaches) std::cerr << "invariant breach: " << b << '\n';
    if (!quiet) {
      for (const auto& f : res.files) std::cout << "wrote " << cfg.out_dir << '/' << f << '\n';
    }
    return res.exit_code;
  } catch (const chaosflow::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
