#include "app.hpp"

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <spdlog/cfg/helpers.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "commands.hpp"
#include "spdcstat/errors.hpp"

namespace spdc::cli {

namespace {

void init_logging() {
  static const bool done = [] {
    auto logger = spdlog::stderr_logger_mt("spdcstat");
    logger->set_pattern("%l: %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    if (const char* level = std::getenv("SPDCSTAT_LOG")) spdlog::cfg::helpers::load_levels(level);
    return true;
  }();
  (void)done;
}

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::uint64_t> windows;
  std::string output;
  std::optional<double> eta;
  bool loss_inversion = false;
  std::optional<unsigned> threads;
  std::vector<std::string> inputs;
};

RunManifest build_manifest(const Flags& f) {
  RunManifest m = f.config.empty() ? default_manifest() : load_manifest(f.config);
  if (f.seed) m.seed = *f.seed;
  if (!f.windows.empty()) m.windows = f.windows;
  if (!f.output.empty()) m.output_dir = f.output;
  if (f.eta) {
    m.detectors.eta_setup = *f.eta;
    m.efficiency.eta_setup = *f.eta;
  }
  if (f.loss_inversion) m.scaling = ScalingMode::LossInversion;
  if (f.threads) m.threads = *f.threads;
  if (!f.inputs.empty()) {
    m.inputs.clear();
    for (const auto& p : f.inputs) m.inputs.emplace_back(p);
  }
  m.validate();
  return m;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  init_logging();

  CLI::App app{"SPDC photon-statistics simulator and analysis toolkit", "spdcstat"};
  app.require_subcommand(1);
  Flags flags;
  app.add_option("--config", flags.config, "JSON run configuration");
  app.add_option("--seed", flags.seed, "master seed for simulation");
  app.add_option("--windows", flags.windows, "coincidence windows in ticks, e.g. 1,2,3")
      ->delimiter(',');
  app.add_option("--output", flags.output, "output directory");
  app.add_option("--eta", flags.eta, "overall detection efficiency");
  app.add_flag("--loss-inversion", flags.loss_inversion,
               "invert binomial photon loss instead of per-event scaling");
  app.add_option("--threads", flags.threads, "worker threads for simulation");

  auto* simulate = app.add_subcommand("simulate", "write synthetic PTG1 streams");
  auto* analyze = app.add_subcommand("analyze", "histogram, correct and fit PTG1 streams");
  analyze->add_option("inputs", flags.inputs, "PTG1 files or directories");
  auto* fit = app.add_subcommand("fit", "fit probability CSVs");
  fit->add_option("inputs", flags.inputs, "probability CSV files or directories");
  auto* report = app.add_subcommand("report", "plot tables from analysis directories");
  report->add_option("inputs", flags.inputs, "analysis directories (default: --output)");
  for (auto* sub : {simulate, analyze, fit, report}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    const RunManifest manifest = build_manifest(flags);
    if (simulate->parsed()) {
      cmd_simulate(manifest, out);
    } else if (analyze->parsed()) {
      cmd_analyze(manifest, out);
    } else if (fit->parsed()) {
      cmd_fit(manifest, out);
    } else {
      cmd_report(manifest, out);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const AnalysisError& e) {
    err << "analysis error: " << e.what() << '\n';
    return kExitAnalysis;
  } catch (const DomainError& e) {
    err << "parameter error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::ios_base::failure& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  out.flush();
  return kExitOk;
}

}  // namespace spdc::cli
