#pragma once

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "eldm/cli/pipeline.hpp"

namespace eldm::cli {

struct CliArgs {
  std::string config;
  Overrides overrides;
};

namespace detail {

inline void add_common_options(CLI::App& app, CliArgs& args) {
  app.add_option("--config", args.config, "JSON pipeline configuration");
  app.add_option("--input", args.overrides.input, "input state-space table");
  app.add_option("--output", args.overrides.output, "output directory");
  app.add_option("--seed", args.overrides.seed, "global random seed");
  app.add_option("--scaling", args.overrides.scaling, "none|auto|pareto|range|vast");
  app.add_option("--centered", args.overrides.centered, "center before scaling (true|false)");
  app.add_option("--q", args.overrides.q, "number of retained components");
  app.add_option("--k", args.overrides.k, "number of clusters");
  app.add_option("--set", args.overrides.sets, "override any key, e.g. tasks.0.init=kmeans")->take_all();
}

inline int exit_code(const Error& e) { return static_cast<int>(e.kind()); }

}  // namespace detail

/// Parses the command line, runs the pipeline, and returns the process exit code:
/// 0 success, 1 configuration or usage error, 2 data error, 3 numerical failure.
inline int run_cli(int argc, char** argv) {
  CLI::App app{"Low-dimensional manifold toolkit for reacting-flow state data", "eldm"};
  app.set_version_flag("--version", std::string(ELDM_VERSION));
  app.require_subcommand(1);
  CliArgs args;
  std::vector<std::string> names = task_types();
  names.push_back("run");
  for (const auto& name : names) {
    auto* sub = app.add_subcommand(name, name == "run" ? "run every task in the configuration"
                                                       : "run the " + name + " tasks of the configuration");
    detail::add_common_options(*sub, args);
    sub->callback([&args, name] { args.overrides.subcommand = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    const PipelineConfig cfg =
        args.config.empty() ? parse_config("", args.overrides) : parse_config_file(args.config, args.overrides);
    const auto result = run_pipeline(cfg);
    for (const auto& t : result.tasks) logger()->info("task {} ({}): {}", t.name, t.type, t.status);
    std::cout << result.manifest.string() << '\n';
    return 0;
  } catch (const Error& e) {
    std::cerr << "eldm: error: " << e.what() << '\n';
    return detail::exit_code(e);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "eldm: error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "eldm: error: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace eldm::cli
