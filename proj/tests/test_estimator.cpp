#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>

#include "mcbatch/estimator.hpp"

using namespace mcbatch;

namespace {

struct Fn {
  CompiledProgram prog;
  std::vector<double> vals;
};

Fn make(const std::string& src, std::size_t dim,
        const std::map<std::string, double>& params = {}) {
  std::vector<std::string> names;
  std::vector<double> vals;
  for (const auto& [n, v] : params) {
    names.push_back(n);
    vals.push_back(v);
  }
  return Fn{compile(parse(src), dim, names), std::move(vals)};
}

// closed form for the harmonic family on the unit 4-cube, written with
// complex arithmetic independent of the estimator under test
double harmonic_oracle(double k) {
  std::complex<double> ik(0.0, k);
  std::complex<double> phi = (std::exp(ik) - 1.0) / ik;
  auto phi4 = phi * phi * phi * phi;
  return phi4.real() + phi4.imag();
}

constexpr double kGaussPeakTruth = 0.03141592653580133;  // (pi/100)*erf(5)^2

}  // namespace

TEST_CASE("direct_mc: constant integrand is exact") {
  Fn f = make("7", 2);
  HyperRect rect = HyperRect::box({0, 0}, {2, 2});
  McEstimate est = direct_mc(f.prog, f.vals, rect, 1000, StreamKey{1, 0, 0, 0});
  CHECK(est.value == 28.0);
  CHECK(est.std_error == 0.0);
  CHECK(est.n_samples == 1000);
  CHECK(est.n_nonfinite == 0);
}

TEST_CASE("direct_mc: harmonic integrand n=1 matches the closed form") {
  double k = 51.0 / (2.0 * std::numbers::pi);
  Fn f = make("cos(k*(x1+x2+x3+x4)) + sin(k*(x1+x2+x3+x4))", 4, {{"k", k}});
  McEstimate est = direct_mc(f.prog, f.vals, HyperRect::unit(4), 1000000,
                             StreamKey{77, 0, 0, 0});
  double truth = harmonic_oracle(k);
  CHECK(truth == doctest::Approx(-0.001999358381010922).epsilon(1e-12));
  CHECK(std::fabs(est.value - truth) <= 3.0 * est.std_error);
}

TEST_CASE("direct_mc: |x1+x2| over the unit square") {
  Fn f = make("abs(x1+x2)", 2);
  McEstimate est = direct_mc(f.prog, f.vals, HyperRect::unit(2), 1000000,
                             StreamKey{3, 0, 0, 0});
  CHECK(std::fabs(est.value - 1.0) <= 3.0 * est.std_error);
}

TEST_CASE("direct_mc: non-finite samples are discarded and flagged") {
  // log is NaN on half the domain
  Fn f = make("log(x1)", 1);
  McEstimate est = direct_mc(f.prog, f.vals, HyperRect::box({-1}, {1}), 20000,
                             StreamKey{9, 0, 0, 0});
  CHECK(est.n_nonfinite > 5000);
  CHECK(est.n_nonfinite < 15000);
  CHECK(est.nonfinite_warning);
  CHECK(std::isfinite(est.value));

  Fn dead = make("sqrt(-1-x1)", 1);
  CHECK_THROWS_AS(direct_mc(dead.prog, dead.vals, HyperRect::unit(1), 100,
                            StreamKey{9, 0, 0, 0}),
                  AllSamplesNonFinite);
}

TEST_CASE("stratified_mc: single cell degenerates to direct_mc") {
  Fn f = make("sin(x1)*x2", 2);
  HyperRect rect = HyperRect::box({0.25, -1}, {0.75, 3});
  StreamKey key{11, 2, 3, 0};
  auto [est, leaves] = stratified_mc(f.prog, f.vals, rect, 1, 5000, key);
  McEstimate ref = direct_mc(f.prog, f.vals, rect, 5000, key);
  CHECK(est.value == ref.value);
  CHECK(est.std_error == ref.std_error);
  CHECK(leaves.size() == 1);
}

TEST_CASE("stratified_mc: constant integrand exact for any k") {
  Fn f = make("3", 2);
  HyperRect rect = HyperRect::box({0, 0}, {1, 2});
  for (std::uint32_t k : {1u, 2u, 5u}) {
    auto [est, leaves] = stratified_mc(f.prog, f.vals, rect, k, 100,
                                       StreamKey{4, 0, 0, 0});
    CHECK(est.value == doctest::Approx(6.0).epsilon(1e-12));
    CHECK(est.std_error == 0.0);
    CHECK(leaves.size() == std::size_t(k) * k);
  }
}

TEST_CASE("stratified_mc: cell cap") {
  Fn f = make("x1", 1);
  CHECK_THROWS_AS(stratified_mc(f.prog, f.vals, HyperRect::unit(1), 2000, 10,
                                StreamKey{}, 1000),
                  CellBudgetExceeded);
}

TEST_CASE("stratification reduces variance for a monotone integrand") {
  Fn f = make("x1", 1);
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    McEstimate direct =
        direct_mc(f.prog, f.vals, HyperRect::unit(1), 10000, StreamKey{seed, 0, 0, 0});
    auto [strat, leaves] = stratified_mc(f.prog, f.vals, HyperRect::unit(1), 4,
                                         2500, StreamKey{seed, 0, 0, 0});
    if (strat.std_error < direct.std_error) ++wins;
  }
  CHECK(wins >= 18);
}

TEST_CASE("stratified partition conserves volume") {
  Fn f = make("x1+x2", 2);
  HyperRect rect = HyperRect::box({-0.3, 1.7}, {2.9, 5.1});
  auto [est, leaves] = stratified_mc(f.prog, f.vals, rect, 3, 64,
                                     StreamKey{8, 0, 0, 0});
  double sum = 0.0;
  for (const StratumNode& n : leaves) sum += n.cell.volume();
  CHECK(sum == doctest::Approx(rect.volume()).epsilon(1e-12));
}

TEST_CASE("tree_refine: constant integrand needs no refinement") {
  Fn f = make("5", 2);
  RefineConfig cfg;
  cfg.total_budget = 100000;
  std::vector<StratumNode> leaves;
  McEstimate est = tree_refine(f.prog, f.vals, HyperRect::unit(2), cfg,
                               StreamKey{1, 0, 0, 0}, &leaves);
  CHECK(est.value == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(est.std_error == 0.0);
  CHECK(!est.budget_exhausted);
  CHECK(std::uint64_t(est.n_samples) <= cfg.total_budget);
}

TEST_CASE("tree_refine: gaussian peak covers the closed form") {
  Fn f = make("exp(-100*((x1-0.5)^2+(x2-0.5)^2))", 2);
  RefineConfig cfg;
  cfg.total_budget = 100000;
  std::vector<StratumNode> leaves;
  McEstimate est = tree_refine(f.prog, f.vals, HyperRect::unit(2), cfg,
                               StreamKey{21, 0, 0, 0}, &leaves);
  CHECK(std::fabs(est.value - kGaussPeakTruth) <= 3.0 * est.std_error);
  // leaves still tile the domain exactly
  double vol = 0.0;
  for (const StratumNode& n : leaves) vol += n.cell.volume();
  CHECK(vol == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::uint64_t(est.n_samples) <= cfg.total_budget);
}

TEST_CASE("tree_refine: budget exhaustion is flagged, not an error") {
  Fn f = make("exp(-100*((x1-0.3)^2+(x2-0.3)^2))", 2);
  RefineConfig cfg;
  cfg.init_cells_per_dim = 2;
  cfg.samples_per_cell = 256;
  cfg.total_budget = 1200;  // room for the first pass, not for a split
  McEstimate est = tree_refine(f.prog, f.vals, HyperRect::unit(2), cfg,
                               StreamKey{31, 0, 0, 0});
  CHECK(est.budget_exhausted);
  CHECK(std::isfinite(est.value));
}

TEST_CASE("tree_refine agrees with direct_mc on the oscillatory integrand") {
  double k = 150.0 / (2.0 * std::numbers::pi);
  Fn f = make("cos(k*(x1+x2+x3+x4)) + sin(k*(x1+x2+x3+x4))", 4, {{"k", k}});
  RefineConfig cfg;
  cfg.total_budget = 200000;
  McEstimate tree = tree_refine(f.prog, f.vals, HyperRect::unit(4), cfg,
                                StreamKey{5, 0, 0, 0});
  McEstimate direct = direct_mc(f.prog, f.vals, HyperRect::unit(4), 200000,
                                StreamKey{5, 0, 1, 0});
  double band = 3.0 * std::sqrt(tree.std_error * tree.std_error +
                                direct.std_error * direct.std_error);
  CHECK(std::fabs(tree.value - direct.value) <= band);
}

TEST_CASE("repeated_trials") {
  Fn f = make("2", 1);
  auto run_const = [&](std::uint32_t t) {
    return direct_mc(f.prog, f.vals, HyperRect::unit(1), 100,
                     StreamKey{7, 0, t, 0});
  };
  TrialSummary s = repeated_trials(run_const, 10);
  CHECK(s.per_trial.size() == 10);
  CHECK(s.mean == 2.0);
  CHECK(s.trial_stddev == 0.0);

  Fn g = make("sin(x1)", 1);
  auto run_sin = [&](std::uint32_t t) {
    return direct_mc(g.prog, g.vals, HyperRect::unit(1), 1000,
                     StreamKey{7, 0, t, 0});
  };
  TrialSummary s2 = repeated_trials(run_sin, 2);
  CHECK(s2.per_trial[0].value != s2.per_trial[1].value);
  double m = 0.5 * (s2.per_trial[0].value + s2.per_trial[1].value);
  CHECK(std::fabs(s2.mean - m) <= 1e-12 * std::fabs(m));

  CHECK_THROWS_AS(repeated_trials(run_sin, 1), std::invalid_argument);
  Fn dead = make("sqrt(-1-x1)", 1);
  auto run_dead = [&](std::uint32_t t) {
    return direct_mc(dead.prog, dead.vals, HyperRect::unit(1), 100,
                     StreamKey{7, 0, t, 0});
  };
  CHECK_THROWS_AS(repeated_trials(run_dead, 3), InsufficientTrials);
}

TEST_CASE("seeded linearity") {
  StreamKey key{13, 1, 0, 0};
  Fn f = make("sin(x1)+2", 1);
  Fn f3 = make("3*(sin(x1)+2)", 1);
  Fn g = make("cos(x1)*x1", 1);
  Fn fg = make("sin(x1)+2 + cos(x1)*x1", 1);
  HyperRect rect = HyperRect::unit(1);
  McEstimate ef = direct_mc(f.prog, f.vals, rect, 10000, key);
  McEstimate ef3 = direct_mc(f3.prog, f3.vals, rect, 10000, key);
  McEstimate eg = direct_mc(g.prog, g.vals, rect, 10000, key);
  McEstimate efg = direct_mc(fg.prog, fg.vals, rect, 10000, key);
  CHECK(std::fabs(ef3.value - 3.0 * ef.value) <= 1e-12 * std::fabs(ef3.value));
  CHECK(std::fabs(efg.value - (ef.value + eg.value)) <=
        1e-12 * std::fabs(efg.value));
}

TEST_CASE("estimator consistency: coverage at 4 sigma") {
  Fn f = make("x1", 1);
  int covered = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    McEstimate est = direct_mc(f.prog, f.vals, HyperRect::unit(1), 10000,
                               StreamKey{seed, 0, 0, 0});
    if (std::fabs(est.value - 0.5) <= 4.0 * est.std_error) ++covered;
  }
  CHECK(covered >= 99);
}

TEST_CASE("std_error shrinks as 1/sqrt(n)") {
  Fn f = make("x1", 1);
  std::vector<double> ratios;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    McEstimate small = direct_mc(f.prog, f.vals, HyperRect::unit(1), 10000,
                                 StreamKey{seed, 0, 0, 0});
    McEstimate big = direct_mc(f.prog, f.vals, HyperRect::unit(1), 160000,
                               StreamKey{seed, 0, 1, 0});
    ratios.push_back(small.std_error / big.std_error);
  }
  std::sort(ratios.begin(), ratios.end());
  double median = 0.5 * (ratios[9] + ratios[10]);
  CHECK(median >= 3.2);
  CHECK(median <= 5.0);
}

TEST_CASE("determinism: identical inputs give byte-identical estimates") {
  Fn f = make("exp(x1)*sin(3*x2)", 2);
  HyperRect rect = HyperRect::box({0, 0}, {1, 2});
  StreamKey key{1234, 5, 6, 0};
  McEstimate a = direct_mc(f.prog, f.vals, rect, 70000, key);
  McEstimate b = direct_mc(f.prog, f.vals, rect, 70000, key);
  CHECK(a.value == b.value);
  CHECK(a.std_error == b.std_error);
  RefineConfig cfg;
  cfg.total_budget = 50000;
  McEstimate t1 = tree_refine(f.prog, f.vals, rect, cfg, key);
  McEstimate t2 = tree_refine(f.prog, f.vals, rect, cfg, key);
  CHECK(t1.value == t2.value);
  CHECK(t1.std_error == t2.std_error);
}
