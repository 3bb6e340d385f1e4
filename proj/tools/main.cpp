#include "pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  using namespace lbill;
  CLI::App app{"Limaçon billiard localization pipeline"};
  std::string config_path, stage, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  app.add_option("--config", config_path, "key = value configuration file")->required();
  app.add_option("--stage", stage, "run only this stage");
  app.add_option("--out", out_dir, "output directory (overrides output_dir)");
  app.add_option("--seed", seed, "base seed (overrides seed)");
  app.add_option("--threads", threads, "worker threads (overrides threads)");
  app.set_version_flag("--version", LBILL_VERSION);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    pipeline::RunConfig config = pipeline::load_config(config_path);
    if (!out_dir.empty()) config.output_dir = out_dir;
    if (seed) config.seed = *seed;
    if (threads) config.threads = *threads;
    const auto manifest = pipeline::run(config, stage.empty() ? std::nullopt : std::optional<std::string>(stage));
    std::cout << pipeline::run_directory(config).string() << "\n";
    for (const auto& [name, rec] : manifest.stages) {
      std::cout << "  " << name << ": " << rec.artifacts.size() << " artifacts, " << rec.seconds << " s\n";
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const MissingArtifact& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return 2;
  } catch (const StageFailed& e) {
    std::cerr << e.what() << "\n";
    return e.numerical() ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
