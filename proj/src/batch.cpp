#include "mcbatch/batch.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>
#include <thread>

namespace mcbatch {

const char* method_name(Method m) {
  switch (m) {
    case Method::Direct: return "direct";
    case Method::Stratified: return "stratified";
    case Method::Tree: return "tree";
  }
  return "?";
}

std::optional<Method> method_from_name(std::string_view name) {
  if (name == "direct") return Method::Direct;
  if (name == "stratified") return Method::Stratified;
  if (name == "tree") return Method::Tree;
  return std::nullopt;
}

ValidationError::ValidationError(std::vector<Violation> v)
    : std::runtime_error([&v] {
        std::ostringstream os;
        os << "job validation failed (" << v.size() << " problem(s)):";
        for (const Violation& viol : v) {
          os << "\n  ";
          if (!viol.integrand.empty()) os << viol.integrand << ": ";
          os << viol.message;
        }
        return os.str();
      }()),
      violations(std::move(v)) {}

StratifiedPlan stratified_plan(const IntegrandSpec& spec) {
  RefineConfig rc = spec.method_config.value_or(RefineConfig{});
  StratifiedPlan plan;
  if (rc.init_cells_per_dim > 0) {
    plan.cells_per_dim = rc.init_cells_per_dim;
  } else {
    std::uint64_t cell_limit = std::min<std::uint64_t>(4096, spec.n_samples / 2);
    plan.cells_per_dim = auto_cells_per_dim(spec.dim, std::max<std::uint64_t>(cell_limit, 1));
  }
  plan.n_cells = cell_grid_size(plan.cells_per_dim, spec.dim, rc.cell_cap);
  plan.samples_per_cell = std::uint32_t(
      std::max<std::uint64_t>(2, spec.n_samples / plan.n_cells));
  return plan;
}

std::uint32_t resolve_workers(std::uint32_t requested) {
  if (requested > 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

std::vector<Violation> validate(const JobSpec& job) {
  std::vector<Violation> out;
  if (job.trials < 1) out.push_back({"", "trials must be >= 1"});
  if (job.integrands.empty()) out.push_back({"", "integrand list is empty"});

  std::map<std::string, int> name_count;
  for (const IntegrandSpec& s : job.integrands) ++name_count[s.name];

  for (const IntegrandSpec& s : job.integrands) {
    auto bad = [&](const std::string& msg) { out.push_back({s.name, msg}); };
    if (s.name.empty()) bad("integrand name is empty");
    if (s.dim < 1) bad("dim must be >= 1");
    if (!s.domain.valid())
      bad("domain is invalid (need low[i] < high[i], finite, dim >= 1)");
    else if (s.domain.dim() != s.dim)
      bad("domain dimension " + std::to_string(s.domain.dim()) +
          " does not match dim=" + std::to_string(s.dim));
    if (s.n_samples < 2) bad("samples must be >= 2");

    Expr expr;
    bool parsed = false;
    try {
      expr = parse(s.source);
      parsed = true;
    } catch (const ParseError& e) {
      bad(std::string("expression does not parse: ") + e.what());
    }
    if (parsed) {
      for (std::size_t v : free_variables(expr))
        if (v >= s.dim)
          bad("x" + std::to_string(v + 1) +
              " exceeds dim=" + std::to_string(s.dim));
      for (const std::string& p : free_parameters(expr))
        if (!s.params.count(p)) bad("unbound parameter '" + p + "'");
    }
    if (s.method == Method::Stratified || s.method == Method::Tree) {
      try {
        if (s.method == Method::Stratified) {
          (void)stratified_plan(s);
        } else {
          RefineConfig rc = s.method_config.value_or(RefineConfig{});
          if (rc.init_cells_per_dim > 0)
            (void)cell_grid_size(rc.init_cells_per_dim, s.dim, rc.cell_cap);
          if (!(rc.sigma_multiplier == rc.sigma_multiplier))
            bad("sigma_multiplier is NaN");
        }
      } catch (const CellBudgetExceeded& e) {
        bad(e.what());
      }
    }
  }

  // duplicate names, reported once per offending name
  for (const auto& [name, count] : name_count)
    if (count > 1)
      out.push_back({name, "duplicate integrand name (" +
                               std::to_string(count) + " occurrences)"});
  return out;
}

namespace {

struct CompiledIntegrand {
  CompiledProgram program;
  std::vector<double> param_values;
};

CompiledIntegrand compile_integrand(const IntegrandSpec& spec) {
  Expr expr = parse(spec.source);
  std::vector<std::string> names;
  std::vector<double> values;
  names.reserve(spec.params.size());
  for (const auto& [n, v] : spec.params) {
    names.push_back(n);
    values.push_back(v);
  }
  CompiledIntegrand ci{compile(expr, spec.dim, names), std::move(values)};
  return ci;
}

struct TrialState {
  std::vector<ChunkAccum> accums;   // direct
  std::vector<McEstimate> cells;    // stratified
  std::vector<std::uint8_t> cell_dead;
  McEstimate tree_est;              // tree
  std::exception_ptr error;
};

void run_tasks(std::vector<std::function<void()>>& tasks, std::uint32_t workers) {
  std::atomic<std::size_t> next{0};
  auto drain = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= tasks.size()) break;
      tasks[i]();
    }
  };
  if (workers <= 1) {
    drain();
    return;
  }
  {
    std::vector<std::jthread> pool;
    for (std::uint32_t w = 1; w < workers; ++w) pool.emplace_back(drain);
    drain();
  }
}

McEstimate assemble_trial(const IntegrandSpec& spec, TrialState& st) {
  if (st.error) std::rethrow_exception(st.error);
  switch (spec.method) {
    case Method::Direct:
      return reduce_chunks(spec.domain.volume(), st.accums);
    case Method::Stratified: {
      std::uint64_t finite = 0;
      for (std::size_t c = 0; c < st.cells.size(); ++c) {
        if (st.cell_dead[c])
          throw AllSamplesNonFinite("cell " + std::to_string(c) +
                                    " produced no finite sample");
        finite += st.cells[c].n_samples - st.cells[c].n_nonfinite;
      }
      if (finite == 0)
        throw AllSamplesNonFinite("every sample evaluated to NaN or infinity");
      return combine_cells(st.cells);
    }
    case Method::Tree:
      return st.tree_est;
  }
  throw std::logic_error("unknown method");
}

}  // namespace

BatchResult run_batch(const JobSpec& job) {
  {
    std::vector<Violation> violations = validate(job);
    if (!violations.empty()) throw ValidationError(std::move(violations));
  }

  const std::size_t n_integrands = job.integrands.size();
  const std::uint32_t trials = job.trials;

  std::vector<CompiledIntegrand> compiled;
  compiled.reserve(n_integrands);
  for (const IntegrandSpec& s : job.integrands)
    compiled.push_back(compile_integrand(s));

  std::vector<std::vector<TrialState>> states(n_integrands);
  for (auto& v : states) v.resize(trials);
  std::vector<std::atomic<std::uint64_t>> nanos(n_integrands);

  // Work unit is (integrand, trial, chunk/cell); adaptive tree runs are a
  // single unit since each step depends on the previous one.
  std::vector<std::function<void()>> tasks;
  for (std::size_t i = 0; i < n_integrands; ++i) {
    const IntegrandSpec& spec = job.integrands[i];
    const CompiledIntegrand& ci = compiled[i];
    for (std::uint32_t t = 0; t < trials; ++t) {
      TrialState& st = states[i][t];
      StreamKey base{job.seed, std::uint32_t(i), t, 0};
      auto timed = [&nanos, i](auto&& body) {
        return [&nanos, i, body = std::forward<decltype(body)>(body)] {
          auto t0 = std::chrono::steady_clock::now();
          body();
          auto t1 = std::chrono::steady_clock::now();
          nanos[i].fetch_add(
              std::uint64_t(std::chrono::duration_cast<std::chrono::nanoseconds>(
                                t1 - t0)
                                .count()),
              std::memory_order_relaxed);
        };
      };
      switch (spec.method) {
        case Method::Direct: {
          const std::uint64_t n_chunks = chunk_count(spec.n_samples);
          st.accums.resize(n_chunks);
          std::uint64_t remaining = spec.n_samples;
          for (std::uint64_t c = 0; c < n_chunks; ++c) {
            std::size_t count =
                std::size_t(std::min<std::uint64_t>(kChunkSize, remaining));
            remaining -= count;
            tasks.push_back(timed([&st, &ci, &spec, base, c, count] {
              try {
                st.accums[c] = accumulate_chunk(ci.program, ci.param_values,
                                                spec.domain, base.with_chunk(c),
                                                count);
              } catch (...) {
                st.error = std::current_exception();
              }
            }));
          }
          break;
        }
        case Method::Stratified: {
          StratifiedPlan plan = stratified_plan(spec);
          const std::uint64_t cpc = chunk_count(plan.samples_per_cell);
          st.cells.resize(plan.n_cells);
          st.cell_dead.assign(plan.n_cells, 0);
          for (std::uint64_t c = 0; c < plan.n_cells; ++c) {
            tasks.push_back(timed([&st, &ci, &spec, base, plan, cpc, c] {
              try {
                HyperRect cell = grid_cell(spec.domain, plan.cells_per_dim, c);
                st.cells[c] =
                    direct_mc(ci.program, ci.param_values, cell,
                              plan.samples_per_cell, base.with_chunk(c * cpc));
              } catch (const AllSamplesNonFinite&) {
                st.cell_dead[c] = 1;
              } catch (...) {
                st.error = std::current_exception();
              }
            }));
          }
          break;
        }
        case Method::Tree: {
          RefineConfig rc = spec.method_config.value_or(RefineConfig{});
          rc.total_budget = spec.n_samples;
          tasks.push_back(timed([&st, &ci, &spec, base, rc] {
            try {
              st.tree_est = tree_refine(ci.program, ci.param_values,
                                        spec.domain, rc, base);
            } catch (...) {
              st.error = std::current_exception();
            }
          }));
          break;
        }
      }
    }
  }

  auto wall0 = std::chrono::steady_clock::now();
  run_tasks(tasks, resolve_workers(job.workers));
  auto wall1 = std::chrono::steady_clock::now();

  BatchResult result;
  result.total_seconds =
      std::chrono::duration<double>(wall1 - wall0).count();
  result.per_integrand.reserve(n_integrands);

  for (std::size_t i = 0; i < n_integrands; ++i) {
    const IntegrandSpec& spec = job.integrands[i];
    IntegrandResult r;
    r.name = spec.name;
    r.seconds = double(nanos[i].load()) * 1e-9;
    std::vector<McEstimate> ok;
    std::string first_error;
    for (std::uint32_t t = 0; t < trials; ++t) {
      try {
        McEstimate est = assemble_trial(spec, states[i][t]);
        r.nonfinite_warning |= est.nonfinite_warning;
        r.budget_exhausted |= est.budget_exhausted;
        ok.push_back(est);
      } catch (const std::exception& e) {
        if (first_error.empty())
          first_error = "trial " + std::to_string(t) + ": " + e.what();
      }
    }
    const std::size_t need = trials >= 2 ? 2 : 1;
    if (ok.size() >= need) {
      r.ok = true;
      r.summary = summarize_trials(std::move(ok));
      if (!first_error.empty())
        r.error = "partial: " + first_error;
    } else {
      r.ok = false;
      r.error = first_error.empty() ? "no successful trials" : first_error;
    }
    result.per_integrand.push_back(std::move(r));
  }
  return result;
}

std::vector<TrialSummary> parameter_scan(const IntegrandSpec& tmpl,
                                         const std::string& param_name,
                                         std::span<const double> values,
                                         std::uint32_t trials,
                                         std::uint64_t seed,
                                         std::uint32_t workers) {
  if (!tmpl.params.count(param_name))
    throw std::invalid_argument("parameter '" + param_name +
                                "' is not bound in the template");
  if (values.empty())
    throw std::invalid_argument("parameter_scan needs at least one value");
  JobSpec job;
  job.seed = seed;
  job.trials = trials;
  job.workers = workers;
  job.integrands.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    IntegrandSpec s = tmpl;
    s.name = tmpl.name + "#" + std::to_string(i);
    s.params[param_name] = values[i];
    job.integrands.push_back(std::move(s));
  }
  BatchResult br = run_batch(job);
  std::vector<TrialSummary> out;
  out.reserve(br.per_integrand.size());
  for (IntegrandResult& r : br.per_integrand) {
    if (!r.ok)
      throw std::runtime_error("parameter_scan: " + r.name + " failed: " +
                               r.error);
    out.push_back(std::move(r.summary));
  }
  return out;
}

}  // namespace mcbatch
