#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcbatch/estimator.hpp"
#include "mcbatch/expr.hpp"
#include "mcbatch/sampling.hpp"

namespace mcbatch {

enum class Method { Direct, Stratified, Tree };

const char* method_name(Method m);
std::optional<Method> method_from_name(std::string_view name);

// One integral job.  Parameter slots follow the map's (sorted) key order.
struct IntegrandSpec {
  std::string name;
  std::string source;
  std::size_t dim = 1;
  HyperRect domain;
  std::map<std::string, double> params;
  std::uint64_t n_samples = 10000;
  Method method = Method::Direct;
  std::optional<RefineConfig> method_config;
};

struct JobSpec {
  std::uint64_t seed = 0;
  std::uint32_t trials = 1;
  std::uint32_t workers = 0;  // 0 = number of hardware threads
  std::vector<IntegrandSpec> integrands;
};

struct Violation {
  std::string integrand;  // empty for job-level problems
  std::string message;
};

// Reports every violation, not just the first.
std::vector<Violation> validate(const JobSpec& job);

struct ValidationError : std::runtime_error {
  std::vector<Violation> violations;
  explicit ValidationError(std::vector<Violation> v);
};

struct IntegrandResult {
  std::string name;
  bool ok = false;
  std::string error;
  TrialSummary summary;
  double seconds = 0.0;
  bool nonfinite_warning = false;
  bool budget_exhausted = false;
};

struct BatchResult {
  std::vector<IntegrandResult> per_integrand;  // job order
  double total_seconds = 0.0;
};

// Runs every integrand for job.trials independent trials on a shared
// worker pool.  Numeric results are deterministic in the job alone;
// worker count affects timing only.  Per-integrand failures are recorded
// in the result, they never abort the batch.
BatchResult run_batch(const JobSpec& job);

// Expands the template once per value of the named parameter and runs
// the expansion as a batch (integrand_index = position in the list).
std::vector<TrialSummary> parameter_scan(const IntegrandSpec& tmpl,
                                         const std::string& param_name,
                                         std::span<const double> values,
                                         std::uint32_t trials,
                                         std::uint64_t seed,
                                         std::uint32_t workers = 0);

// How a stratified-method integrand maps its sample budget onto cells.
struct StratifiedPlan {
  std::uint32_t cells_per_dim = 1;
  std::uint32_t samples_per_cell = 2;
  std::uint64_t n_cells = 1;
};
StratifiedPlan stratified_plan(const IntegrandSpec& spec);

std::uint32_t resolve_workers(std::uint32_t requested);

}  // namespace mcbatch
