// tsops: simulate, tune and sweep mixed-autonomy platoons.
//
//   tsops run   --scenario scenario1 --set scenario.mpr=0 --out out/
//   tsops tune  --scenario configs/scenario2.ini --out out/
//   tsops sweep --scenario scenario1 --mprs 0,0.5,1 --controller ts-trc
//   tsops grid  --scenario scenario1 --beta-range 0:0.0642:5 --gamma-range 0.5:1.5:5

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "tsops/cli.hpp"

namespace {

void add_common(CLI::App* sub, tsops::cli::RunConfig& rc) {
  sub->add_option("--scenario", rc.scenario,
                  "Preset name (scenario1, scenario2) or config file path")
      ->capture_default_str();
  sub->add_option("--out", rc.out_dir, "Output directory")->capture_default_str();
  sub->add_option("--set", rc.overrides, "Override a key: section.key=value")
      ->take_all();
  sub->add_option_function<std::string>(
      "--controller", [&rc](const std::string& v) { rc.controller = v; },
      "ts-ops | ts-trc | none");
  sub->add_option_function<double>(
      "--dt", [&rc](double v) { rc.dt = v; }, "Integration step [s]");
  sub->add_option_function<std::string>(
      "--integrator", [&rc](const std::string& v) { rc.integrator = v; },
      "rk4 | euler");
  sub->add_flag("--dump-config", rc.dump_config,
                "Print the resolved configuration and exit");
  sub->add_flag("--gnuplot", rc.gnuplot, "Also write gnuplot script stubs");
  sub->add_option("--threads", rc.threads, "Worker threads (0 = all cores)");
}

}  // namespace

int main(int argc, char** argv) {
  tsops::cli::RunConfig rc;
  CLI::App app{"Simulate, tune and sweep mixed-autonomy platoons"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Simulate one scenario");
  add_common(run, rc);
  run->add_flag("--strict-safety", rc.strict_safety,
                "Exit with status 3 on any spacing below the safe minimum");

  auto* tune = app.add_subcommand("tune", "Optimise beta and gamma");
  add_common(tune, rc);

  auto* sweep = app.add_subcommand("sweep", "Metrics over a range of MPRs");
  add_common(sweep, rc);
  sweep->add_option_function<std::string>(
      "--mprs",
      [&rc](const std::string& v) { rc.mprs = tsops::cli::parse_mpr_list(v); },
      "Comma-separated MPR list (default 0,0.1,...,1)");
  sweep->add_flag("--tune-first", rc.tune_first, "Tune theta at every MPR");
  sweep->add_flag("--strict-safety", rc.strict_safety,
                  "Exit with status 3 on any spacing below the safe minimum");

  auto* grid = app.add_subcommand("grid", "Metrics over a (beta, gamma) grid");
  add_common(grid, rc);
  grid->add_option_function<std::string>(
      "--beta-range",
      [&rc](const std::string& v) {
        rc.beta_range = tsops::cli::parse_range(v, "--beta-range");
      },
      "lo:hi:n (default 0:beta_max:11)");
  grid->add_option_function<std::string>(
      "--gamma-range",
      [&rc](const std::string& v) {
        rc.gamma_range = tsops::cli::parse_range(v, "--gamma-range");
      },
      "lo:hi:n (default 0.5:1.5:11)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : tsops::cli::kConfigFailure;
  } catch (const tsops::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return tsops::cli::kConfigFailure;
  }
  rc.command = app.get_subcommands().front()->get_name();
  return tsops::cli::dispatch(rc, std::cout, std::cerr);
}
