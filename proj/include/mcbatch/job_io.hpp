#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mcbatch/batch.hpp"

namespace mcbatch {

struct JobFileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MalformedResults : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Job files are strict JSON: unknown fields are rejected.
JobSpec read_job(const std::filesystem::path& path);
JobSpec job_from_json_text(const std::string& text);
void write_job(const JobSpec& job, const std::filesystem::path& path);
std::string job_to_json_text(const JobSpec& job);

struct ResultsRow {
  std::string name;
  std::uint32_t index = 0;  // 1-based position in the job
  std::size_t dim = 0;
  std::string method;
  std::uint64_t samples = 0;
  std::uint32_t trials = 0;
  bool ok = false;
  double mean = 0.0;
  double trial_stddev = 0.0;
  double mean_std_error = 0.0;
  std::optional<double> analytic;
  std::optional<double> abs_error;
  std::string warnings;
};

std::vector<ResultsRow> make_results(const JobSpec& job, const BatchResult& br);
// CSV, header row, '.' decimal point, 17 significant digits.
void write_results(const std::vector<ResultsRow>& rows,
                   const std::filesystem::path& path);
std::vector<ResultsRow> read_results(const std::filesystem::path& path);

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::uint32_t> trials;
  std::optional<std::uint32_t> workers;
};

// Exit status 0 = success, 2 = validation failure, 3 = total runtime
// failure.  Diagnostics go to stderr, one completion line per integrand
// to stdout.
int run_command(const std::filesystem::path& job_path,
                const std::filesystem::path& out_path,
                const RunOverrides& overrides);

// Harmonic benchmark family: f_n = cos(k_n * sum(x)) + sin(k_n * sum(x))
// on [0,1]^4 with k_n = (n + 50) / (2 pi).
JobSpec make_harmonic_job(std::uint32_t n_count, std::uint64_t samples);
int gen_fig1(std::uint32_t n_count, std::uint64_t samples,
             const std::filesystem::path& out_path);

// Closed form of the harmonic integral via phi = (e^{ik} - 1) / (ik):
// integral = Re(phi^4) + Im(phi^4).
double harmonic_closed_form(double k);
double analytic_harmonic(std::uint32_t n);
double harmonic_k(std::uint32_t n);

struct Fig1Row {
  std::uint32_t n = 0;
  double mean = 0.0;
  double trial_stddev = 0.0;
  double mean_std_error = 0.0;
  double analytic = 0.0;
  bool pass = false;
};
struct Fig1Check {
  std::vector<Fig1Row> rows;
  std::uint32_t passed = 0;
};

// Per n: pass iff |mean - analytic(n)| <= 4 * max(trial_stddev,
// mean_std_error).  n is taken from the analytic-free results rows by the
// trailing digits of the integrand name.
Fig1Check check_fig1(const std::vector<ResultsRow>& rows);
int check_fig1_command(const std::filesystem::path& results_path,
                       const std::optional<std::filesystem::path>& plot_out);

}  // namespace mcbatch
