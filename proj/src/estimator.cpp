#include "mcbatch/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mcbatch {

void ChunkAccum::add(double x) {
  if (!std::isfinite(x)) {
    ++n_nonfinite;
    return;
  }
  ++n;
  double delta = x - mean;
  mean += delta / double(n);
  m2 += delta * (x - mean);
}

void ChunkAccum::merge(const ChunkAccum& other) {
  n_nonfinite += other.n_nonfinite;
  if (other.n == 0) return;
  if (n == 0) {
    n = other.n;
    mean = other.mean;
    m2 = other.m2;
    return;
  }
  double delta = other.mean - mean;
  std::uint64_t total = n + other.n;
  mean += delta * (double(other.n) / double(total));
  m2 += other.m2 + delta * delta * (double(n) * double(other.n) / double(total));
  n = total;
}

ChunkAccum accumulate_chunk(const CompiledProgram& program,
                            std::span<const double> params,
                            const HyperRect& rect, const StreamKey& key,
                            std::size_t count) {
  thread_local std::vector<double> points;
  thread_local std::vector<double> stack;
  sample_uniform(rect, key, count, points);
  const std::size_t d = rect.dim();
  ChunkAccum acc;
  const double* p = points.data();
  for (std::size_t i = 0; i < count; ++i, p += d)
    acc.add(program.evaluate({p, d}, params, stack));
  return acc;
}

std::uint64_t chunk_count(std::uint64_t n_samples) {
  return (n_samples + kChunkSize - 1) / kChunkSize;
}

McEstimate reduce_chunks(double volume, std::span<const ChunkAccum> chunks) {
  ChunkAccum total;
  for (const ChunkAccum& c : chunks) total.merge(c);
  if (total.n == 0)
    throw AllSamplesNonFinite("every sample evaluated to NaN or infinity");
  McEstimate est;
  est.n_samples = total.n + total.n_nonfinite;
  est.n_nonfinite = total.n_nonfinite;
  est.value = volume * total.mean;
  if (total.n >= 2) {
    double var = total.m2 / double(total.n - 1);
    est.std_error = volume * std::sqrt(var / double(total.n));
  } else {
    est.std_error = std::numeric_limits<double>::infinity();
  }
  est.nonfinite_warning =
      double(total.n_nonfinite) > kNonFiniteWarnFraction * double(est.n_samples);
  return est;
}

McEstimate direct_mc(const CompiledProgram& program,
                     std::span<const double> params, const HyperRect& rect,
                     std::uint64_t n_samples, const StreamKey& key_base) {
  if (n_samples < 2) throw std::invalid_argument("n_samples must be >= 2");
  if (program.dim() != rect.dim())
    throw std::invalid_argument("program/domain dimension mismatch");
  const std::uint64_t n_chunks = chunk_count(n_samples);
  std::vector<ChunkAccum> accums(n_chunks);
  std::uint64_t remaining = n_samples;
  for (std::uint64_t c = 0; c < n_chunks; ++c) {
    std::size_t count = std::size_t(std::min<std::uint64_t>(kChunkSize, remaining));
    accums[c] = accumulate_chunk(program, params, rect,
                                 key_base.with_chunk(key_base.chunk_index + c),
                                 count);
    remaining -= count;
  }
  return reduce_chunks(rect.volume(), accums);
}

std::uint64_t cell_grid_size(std::uint32_t cells_per_dim, std::size_t dim,
                             std::uint64_t cap) {
  if (cells_per_dim == 0) throw std::invalid_argument("cells_per_dim must be >= 1");
  std::uint64_t cells = 1;
  for (std::size_t i = 0; i < dim; ++i) {
    if (cells > cap / cells_per_dim + 1)
      throw CellBudgetExceeded("cell grid exceeds configured cap");
    cells *= cells_per_dim;
  }
  if (cells > cap) throw CellBudgetExceeded("cell grid exceeds configured cap");
  return cells;
}

std::uint32_t auto_cells_per_dim(std::size_t dim, std::uint64_t cell_limit) {
  std::uint32_t k = 1;
  while (true) {
    std::uint64_t cells = 1;
    bool fits = true;
    for (std::size_t i = 0; i < dim; ++i) {
      cells *= (k + 1);
      if (cells > cell_limit) {
        fits = false;
        break;
      }
    }
    if (!fits) return k;
    ++k;
  }
}

HyperRect grid_cell(const HyperRect& rect, std::uint32_t cells_per_dim,
                    std::uint64_t index) {
  const std::size_t d = rect.dim();
  HyperRect cell;
  cell.low.resize(d);
  cell.high.resize(d);
  // axis 0 is the most significant digit of the lexicographic index
  std::uint64_t rem = index;
  for (std::size_t j = d; j-- > 0;) {
    std::uint32_t digit = std::uint32_t(rem % cells_per_dim);
    rem /= cells_per_dim;
    double width = rect.high[j] - rect.low[j];
    cell.low[j] = digit == 0 ? rect.low[j]
                             : rect.low[j] + width * (double(digit) / cells_per_dim);
    cell.high[j] = digit + 1 == cells_per_dim
                       ? rect.high[j]
                       : rect.low[j] + width * (double(digit + 1) / cells_per_dim);
  }
  return cell;
}

McEstimate combine_cells(std::span<const McEstimate> cells) {
  McEstimate total;
  double var = 0.0;
  for (const McEstimate& c : cells) {
    total.value += c.value;
    var += c.std_error * c.std_error;
    total.n_samples += c.n_samples;
    total.n_nonfinite += c.n_nonfinite;
    total.budget_exhausted |= c.budget_exhausted;
  }
  total.std_error = std::sqrt(var);
  total.nonfinite_warning = double(total.n_nonfinite) >
                            kNonFiniteWarnFraction * double(total.n_samples);
  return total;
}

std::pair<McEstimate, std::vector<StratumNode>> stratified_mc(
    const CompiledProgram& program, std::span<const double> params,
    const HyperRect& rect, std::uint32_t cells_per_dim,
    std::uint32_t samples_per_cell, const StreamKey& key_base,
    std::uint64_t cell_cap) {
  const std::uint64_t n_cells = cell_grid_size(cells_per_dim, rect.dim(), cell_cap);
  const std::uint64_t chunks_per_cell = chunk_count(samples_per_cell);
  std::vector<StratumNode> leaves;
  leaves.reserve(n_cells);
  std::vector<McEstimate> cell_estimates;
  cell_estimates.reserve(n_cells);
  for (std::uint64_t c = 0; c < n_cells; ++c) {
    StratumNode node;
    node.cell = grid_cell(rect, cells_per_dim, c);
    node.estimate = direct_mc(
        program, params, node.cell, samples_per_cell,
        key_base.with_chunk(key_base.chunk_index + c * chunks_per_cell));
    cell_estimates.push_back(node.estimate);
    leaves.push_back(std::move(node));
  }
  return {combine_cells(cell_estimates), std::move(leaves)};
}

namespace {

struct Leaf {
  HyperRect cell;
  McEstimate est;
  std::uint32_t depth = 0;
};

void split_longest_edge(const HyperRect& cell, HyperRect& lo_half,
                        HyperRect& hi_half) {
  std::size_t axis = 0;
  double best = -1.0;
  for (std::size_t j = 0; j < cell.dim(); ++j) {
    double w = cell.high[j] - cell.low[j];
    if (w > best) {
      best = w;
      axis = j;
    }
  }
  double mid = cell.low[axis] + 0.5 * (cell.high[axis] - cell.low[axis]);
  lo_half = cell;
  hi_half = cell;
  lo_half.high[axis] = mid;
  hi_half.low[axis] = mid;
}

}  // namespace

McEstimate tree_refine(const CompiledProgram& program,
                       std::span<const double> params, const HyperRect& rect,
                       const RefineConfig& config, const StreamKey& key_base,
                       std::vector<StratumNode>* leaves_out) {
  const std::size_t d = rect.dim();
  const std::uint32_t spc = std::max<std::uint32_t>(config.samples_per_cell, 2);

  std::uint32_t k = config.init_cells_per_dim;
  if (k == 0) {
    k = auto_cells_per_dim(d, 4096);
    // keep the first pass cheap relative to the refinement budget
    while (k > 1) {
      std::uint64_t cells = cell_grid_size(k, d, config.cell_cap);
      if (cells * spc <= config.total_budget / 2) break;
      --k;
    }
  }

  const std::uint64_t n_cells = cell_grid_size(k, d, config.cell_cap);
  const std::uint64_t chunks_per_cell = chunk_count(spc);
  std::uint64_t next_chunk = key_base.chunk_index;
  std::uint64_t used = 0;
  bool exhausted = false;

  auto estimate_cell = [&](const HyperRect& cell) -> McEstimate {
    StreamKey key = key_base.with_chunk(next_chunk);
    next_chunk += chunks_per_cell;
    used += spc;
    try {
      return direct_mc(program, params, cell, spc, key);
    } catch (const AllSamplesNonFinite&) {
      McEstimate dead;
      dead.n_samples = spc;
      dead.n_nonfinite = spc;
      dead.nonfinite_warning = true;
      return dead;
    }
  };

  std::vector<Leaf> leaves;
  leaves.reserve(n_cells);
  for (std::uint64_t c = 0; c < n_cells; ++c) {
    Leaf leaf;
    leaf.cell = grid_cell(rect, k, c);
    leaf.est = estimate_cell(leaf.cell);
    leaves.push_back(std::move(leaf));
  }

  while (!exhausted) {
    double mean_err = 0.0;
    for (const Leaf& l : leaves) mean_err += l.est.std_error;
    mean_err /= double(leaves.size());
    double ss = 0.0;
    for (const Leaf& l : leaves) {
      double dlt = l.est.std_error - mean_err;
      ss += dlt * dlt;
    }
    double sd = leaves.size() > 1 ? std::sqrt(ss / double(leaves.size() - 1)) : 0.0;
    double threshold = mean_err + config.sigma_multiplier * sd;

    std::vector<std::size_t> selected;
    for (std::size_t i = 0; i < leaves.size(); ++i)
      if (leaves[i].depth < config.max_depth && leaves[i].est.std_error > 0 &&
          leaves[i].est.std_error > threshold)
        selected.push_back(i);
    if (selected.empty()) break;

    for (std::size_t idx : selected) {
      if (used + 2ull * spc > config.total_budget) {
        exhausted = true;
        break;
      }
      HyperRect lo_half, hi_half;
      split_longest_edge(leaves[idx].cell, lo_half, hi_half);
      std::uint32_t child_depth = leaves[idx].depth + 1;
      McEstimate lo_est = estimate_cell(lo_half);
      McEstimate hi_est = estimate_cell(hi_half);
      leaves[idx] = Leaf{std::move(lo_half), lo_est, child_depth};
      leaves.push_back(Leaf{std::move(hi_half), hi_est, child_depth});
    }
  }

  std::vector<McEstimate> cell_estimates;
  cell_estimates.reserve(leaves.size());
  std::uint64_t total_finite = 0;
  for (const Leaf& l : leaves) {
    cell_estimates.push_back(l.est);
    total_finite += l.est.n_samples - l.est.n_nonfinite;
  }
  if (total_finite == 0)
    throw AllSamplesNonFinite("every sample evaluated to NaN or infinity");
  McEstimate total = combine_cells(cell_estimates);
  total.budget_exhausted = exhausted;

  if (leaves_out) {
    leaves_out->clear();
    leaves_out->reserve(leaves.size());
    for (Leaf& l : leaves) {
      StratumNode node;
      node.cell = std::move(l.cell);
      node.estimate = l.est;
      node.depth = l.depth;
      leaves_out->push_back(std::move(node));
    }
  }
  return total;
}

TrialSummary summarize_trials(std::vector<McEstimate> per_trial) {
  TrialSummary s;
  s.per_trial = std::move(per_trial);
  const std::size_t r = s.per_trial.size();
  if (r == 0) throw InsufficientTrials("no successful trials");
  double sum = 0.0;
  for (const McEstimate& e : s.per_trial) sum += e.value;
  s.mean = sum / double(r);
  if (r >= 2) {
    double ss = 0.0;
    for (const McEstimate& e : s.per_trial) {
      double d = e.value - s.mean;
      ss += d * d;
    }
    s.trial_stddev = std::sqrt(ss / double(r - 1));
  }
  return s;
}

TrialSummary repeated_trials(
    const std::function<McEstimate(std::uint32_t)>& run,
    std::uint32_t trials) {
  if (trials < 2) throw std::invalid_argument("repeated_trials requires R >= 2");
  std::vector<McEstimate> ok;
  ok.reserve(trials);
  for (std::uint32_t t = 0; t < trials; ++t) {
    try {
      ok.push_back(run(t));
    } catch (const AllSamplesNonFinite&) {
      // skipped; summary requires at least two surviving trials
    }
  }
  if (ok.size() < 2)
    throw InsufficientTrials("fewer than 2 trials produced a finite estimate");
  return summarize_trials(std::move(ok));
}

}  // namespace mcbatch
