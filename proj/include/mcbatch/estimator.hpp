#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mcbatch/expr.hpp"
#include "mcbatch/sampling.hpp"

namespace mcbatch {

// Fraction of non-finite samples above which an estimate carries a warning.
inline constexpr double kNonFiniteWarnFraction = 0.01;

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;      // volume * s / sqrt(n), s with (n-1) divisor
  std::uint64_t n_samples = 0;
  std::uint64_t n_nonfinite = 0;
  bool nonfinite_warning = false;
  bool budget_exhausted = false;  // tree_refine stopped on sample budget
};

struct TrialSummary {
  std::vector<McEstimate> per_trial;
  double mean = 0.0;          // arithmetic mean of per-trial values
  double trial_stddev = 0.0;  // (R-1) divisor
};

struct StratumNode {
  HyperRect cell;
  McEstimate estimate;
  std::uint32_t depth = 0;
  std::vector<StratumNode> children;
};

struct RefineConfig {
  std::uint32_t init_cells_per_dim = 0;  // 0 = auto (k^d <= 4096, cheap first pass)
  std::uint32_t samples_per_cell = 2048;
  std::uint32_t max_depth = 6;
  double sigma_multiplier = 1.0;
  std::uint64_t total_budget = 100000;
  std::uint64_t cell_cap = 1000000;
};

struct AllSamplesNonFinite : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CellBudgetExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InsufficientTrials : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Single-pass Welford accumulator for one chunk of samples.
struct ChunkAccum {
  std::uint64_t n = 0;
  std::uint64_t n_nonfinite = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x);
  void merge(const ChunkAccum& other);
};

// Evaluates the program over one keyed chunk of uniform samples.
// Pure; safe to call from any worker on a shared program.
ChunkAccum accumulate_chunk(const CompiledProgram& program,
                            std::span<const double> params,
                            const HyperRect& rect, const StreamKey& key,
                            std::size_t count);

// Merges chunk accumulators in ascending index order and forms the
// estimate.  Throws AllSamplesNonFinite when no finite sample survived.
McEstimate reduce_chunks(double volume, std::span<const ChunkAccum> chunks);

// Sums per-cell estimates in ascending lexicographic cell order:
// value = sum of cell values, std_error = sqrt(sum of squared errors).
McEstimate combine_cells(std::span<const McEstimate> cells);

std::uint64_t chunk_count(std::uint64_t n_samples);

McEstimate direct_mc(const CompiledProgram& program,
                     std::span<const double> params, const HyperRect& rect,
                     std::uint64_t n_samples, const StreamKey& key_base);

// Partitions rect into k^d congruent cells (lexicographic order, axis 0
// most significant) and runs direct_mc per cell; chunk keys are derived
// from the cell index so results do not depend on evaluation order.
std::pair<McEstimate, std::vector<StratumNode>> stratified_mc(
    const CompiledProgram& program, std::span<const double> params,
    const HyperRect& rect, std::uint32_t cells_per_dim,
    std::uint32_t samples_per_cell, const StreamKey& key_base,
    std::uint64_t cell_cap = 1000000);

// Stratified first pass, then repeated splitting of leaves whose
// std_error exceeds mean + sigma_multiplier * stddev of leaf errors.
// Splits bisect the longest cell edge.  Optionally reports final leaves.
McEstimate tree_refine(const CompiledProgram& program,
                       std::span<const double> params, const HyperRect& rect,
                       const RefineConfig& config, const StreamKey& key_base,
                       std::vector<StratumNode>* leaves_out = nullptr);

// Summarize already-computed per-trial estimates (ascending trial order).
TrialSummary summarize_trials(std::vector<McEstimate> per_trial);

// Runs the recipe with trial_index = 0..trials-1.  Trials that throw
// AllSamplesNonFinite are skipped; at least two must succeed.
TrialSummary repeated_trials(
    const std::function<McEstimate(std::uint32_t)>& run, std::uint32_t trials);

// Number of cells k^d, guarding against overflow of the cell cap.
std::uint64_t cell_grid_size(std::uint32_t cells_per_dim, std::size_t dim,
                             std::uint64_t cap);

// Largest k with k^d <= cell_limit (and at least 1).
std::uint32_t auto_cells_per_dim(std::size_t dim, std::uint64_t cell_limit);

// Subcell `index` (lexicographic) of rect split k ways per axis.
HyperRect grid_cell(const HyperRect& rect, std::uint32_t cells_per_dim,
                    std::uint64_t index);

}  // namespace mcbatch
