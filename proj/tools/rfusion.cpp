// Command line front end: simulate | train | evaluate | calibrate | toyshapes.
// Exit codes: 0 success, 2 configuration error, 3 data or shape error,
// 4 numeric failure, 1 anything else.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "rfusion/config.hpp"
#include "rfusion/error.hpp"
#include "rfusion/experiment.hpp"

namespace fs = std::filesystem;
using namespace rfusion;

namespace {

struct Options {
  std::string config, out = "out", checkpoint, dataset;
  std::optional<std::uint64_t> seed;
};

RunConfig resolve(const Options& o, bool config_required) {
  RunConfig cfg;
  if (!o.config.empty()) {
    cfg = load_config(o.config);
  } else if (config_required) {
    throw ConfigError("--config is required for this command");
  } else {
    cfg = parse_config("[scenario]\nmodalities = 3\nclasses = 3\n", "defaults");
  }
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.scenario.seed = *o.seed;
  }
  cfg.validate();
  return cfg;
}

fs::path need(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string(flag) + " is required for this command");
  return value;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust multi-modal sensor fusion experiments"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Run configuration file");
    sub->add_option("--seed", o.seed, "Override run.seed");
    sub->add_option("--out", o.out, "Output directory")->capture_default_str();
  };
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic dataset");
  auto* train = app.add_subcommand("train", "Train a model on a dataset");
  auto* evaluate = app.add_subcommand("evaluate", "Robustness sweep of a trained model");
  auto* calibrate = app.add_subcommand("calibrate", "Damage-detection thresholds per SNR");
  auto* toyshapes = app.add_subcommand("toyshapes", "Generator dimensionality study on 2-D shapes");
  for (auto* sub : {simulate, train, evaluate, calibrate, toyshapes}) common(sub);
  train->add_option("--dataset", o.dataset, "Dataset written by simulate");
  train->add_option("--checkpoint", o.checkpoint, "Resume from this checkpoint");
  for (auto* sub : {evaluate, calibrate}) {
    sub->add_option("--dataset", o.dataset, "Dataset written by simulate");
    sub->add_option("--checkpoint", o.checkpoint, "Checkpoint written by train");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (simulate->parsed()) {
      cmd_simulate(resolve(o, true), o.out);
    } else if (train->parsed()) {
      const auto cfg = resolve(o, true);
      std::optional<fs::path> resume;
      if (!o.checkpoint.empty()) resume = o.checkpoint;
      cmd_train(cfg, need(o.dataset, "--dataset"), o.out, resume);
    } else if (evaluate->parsed()) {
      cmd_evaluate(resolve(o, true), need(o.checkpoint, "--checkpoint"), need(o.dataset, "--dataset"), o.out);
    } else if (calibrate->parsed()) {
      cmd_calibrate(resolve(o, true), need(o.checkpoint, "--checkpoint"), need(o.dataset, "--dataset"), o.out);
    } else if (toyshapes->parsed()) {
      cmd_toyshapes(resolve(o, false), o.out);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const DimensionError& e) {
    std::cerr << "dimension error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
