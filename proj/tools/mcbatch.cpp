#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mcbatch/batch.hpp"
#include "mcbatch/job_io.hpp"

int main(int argc, char** argv) {
  CLI::App app{"mcbatch - batched Monte Carlo integration of many integrands"};
  app.require_subcommand(1);

  // run
  std::string run_job, run_out = "results.csv";
  std::optional<std::uint64_t> run_seed;
  std::optional<std::uint32_t> run_trials;
  std::optional<std::uint32_t> run_workers;
  auto* run = app.add_subcommand("run", "run a job file and write a results table");
  run->add_option("job", run_job, "job file (JSON)")->required();
  run->add_option("--out", run_out, "results CSV path");
  run->add_option("--seed", run_seed, "override the job seed");
  run->add_option("--trials", run_trials, "override the trial count");
  run->add_option("--workers", run_workers, "override the worker count (0 = auto)")
      ->envname("MCBATCH_WORKERS");

  // gen-fig1
  std::uint32_t gen_n = 100;
  std::uint64_t gen_samples = 1000000;
  std::string gen_out;
  auto* gen = app.add_subcommand(
      "gen-fig1", "generate the harmonic benchmark job (100 oscillatory "
                  "4-d integrals with analytic reference)");
  gen->add_option("--n", gen_n, "number of harmonic modes");
  gen->add_option("--samples", gen_samples, "samples per trial per integral");
  gen->add_option("--out", gen_out, "job file to write")->required();

  // check-fig1
  std::string check_results;
  std::string check_plot;
  auto* check = app.add_subcommand(
      "check-fig1", "check harmonic benchmark results against the closed form");
  check->add_option("results", check_results, "results CSV from 'run'")->required();
  check->add_option("--plot-out", check_plot, "write plot data (n, mean, stddev, analytic)");

  // validate
  std::string validate_job;
  auto* val = app.add_subcommand("validate", "validate a job file without running it");
  val->add_option("job", validate_job, "job file (JSON)")->required();

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    mcbatch::RunOverrides ov{run_seed, run_trials, run_workers};
    return mcbatch::run_command(run_job, run_out, ov);
  }
  if (gen->parsed()) {
    try {
      return mcbatch::gen_fig1(gen_n, gen_samples, gen_out);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 3;
    }
  }
  if (check->parsed()) {
    std::optional<std::filesystem::path> plot;
    if (!check_plot.empty()) plot = check_plot;
    return mcbatch::check_fig1_command(check_results, plot);
  }
  if (val->parsed()) {
    try {
      mcbatch::JobSpec job = mcbatch::read_job(validate_job);
      auto violations = mcbatch::validate(job);
      if (violations.empty()) {
        std::cout << "ok: " << job.integrands.size() << " integrand(s)\n";
        return 0;
      }
      for (const auto& v : violations) {
        std::cerr << (v.integrand.empty() ? std::string("job") : v.integrand)
                  << ": " << v.message << "\n";
      }
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    }
  }
  return 0;
}
