#include "mcbatch/job_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <numbers>
#include <sstream>

#include "json.hpp"

namespace mcbatch {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, std::initializer_list<const char*> known,
                    const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool found = false;
    for (const char* k : known)
      if (it.key() == k) {
        found = true;
        break;
      }
    if (!found)
      throw JobFileError("unknown field '" + it.key() + "' in " + where);
  }
}

RefineConfig refine_config_from_json(const json& j, const std::string& where) {
  reject_unknown(j,
                 {"cells_per_dim", "samples_per_cell", "max_depth",
                  "sigma_multiplier", "cell_cap"},
                 where);
  RefineConfig rc;
  if (j.contains("cells_per_dim"))
    rc.init_cells_per_dim = j.at("cells_per_dim").get<std::uint32_t>();
  if (j.contains("samples_per_cell"))
    rc.samples_per_cell = j.at("samples_per_cell").get<std::uint32_t>();
  if (j.contains("max_depth")) rc.max_depth = j.at("max_depth").get<std::uint32_t>();
  if (j.contains("sigma_multiplier"))
    rc.sigma_multiplier = j.at("sigma_multiplier").get<double>();
  if (j.contains("cell_cap")) rc.cell_cap = j.at("cell_cap").get<std::uint64_t>();
  return rc;
}

json refine_config_to_json(const RefineConfig& rc) {
  json j = json::object();
  if (rc.init_cells_per_dim) j["cells_per_dim"] = rc.init_cells_per_dim;
  j["samples_per_cell"] = rc.samples_per_cell;
  j["max_depth"] = rc.max_depth;
  j["sigma_multiplier"] = rc.sigma_multiplier;
  j["cell_cap"] = rc.cell_cap;
  return j;
}

}  // namespace

JobSpec job_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw JobFileError(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw JobFileError("job file must be a JSON object");
  reject_unknown(j, {"seed", "trials", "workers", "integrands"}, "job");
  JobSpec job;
  try {
    job.seed = j.at("seed").get<std::uint64_t>();
    job.trials = j.at("trials").get<std::uint32_t>();
    if (j.contains("workers")) job.workers = j.at("workers").get<std::uint32_t>();
    const json& list = j.at("integrands");
    if (!list.is_array()) throw JobFileError("'integrands' must be an array");
    for (const json& ji : list) {
      reject_unknown(ji,
                     {"name", "expr", "dim", "low", "high", "params", "samples",
                      "method", "method_config"},
                     "integrand");
      IntegrandSpec s;
      s.name = ji.at("name").get<std::string>();
      s.source = ji.at("expr").get<std::string>();
      s.dim = ji.at("dim").get<std::size_t>();
      s.domain.low = ji.at("low").get<std::vector<double>>();
      s.domain.high = ji.at("high").get<std::vector<double>>();
      if (ji.contains("params"))
        s.params = ji.at("params").get<std::map<std::string, double>>();
      s.n_samples = ji.at("samples").get<std::uint64_t>();
      if (ji.contains("method")) {
        auto m = method_from_name(ji.at("method").get<std::string>());
        if (!m)
          throw JobFileError("integrand '" + s.name + "': unknown method '" +
                             ji.at("method").get<std::string>() + "'");
        s.method = *m;
      }
      if (ji.contains("method_config"))
        s.method_config = refine_config_from_json(
            ji.at("method_config"), "integrand '" + s.name + "' method_config");
      job.integrands.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw JobFileError(std::string("malformed job file: ") + e.what());
  }
  return job;
}

JobSpec read_job(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw JobFileError("cannot open job file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return job_from_json_text(buf.str());
}

std::string job_to_json_text(const JobSpec& job) {
  json j;
  j["seed"] = job.seed;
  j["trials"] = job.trials;
  j["workers"] = job.workers;
  j["integrands"] = json::array();
  for (const IntegrandSpec& s : job.integrands) {
    json ji;
    ji["name"] = s.name;
    ji["expr"] = s.source;
    ji["dim"] = s.dim;
    ji["low"] = s.domain.low;
    ji["high"] = s.domain.high;
    ji["params"] = s.params;
    ji["samples"] = s.n_samples;
    ji["method"] = method_name(s.method);
    if (s.method_config) ji["method_config"] = refine_config_to_json(*s.method_config);
    j["integrands"].push_back(std::move(ji));
  }
  return j.dump(2) + "\n";
}

void write_job(const JobSpec& job, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw JobFileError("cannot write job file: " + path.string());
  out << job_to_json_text(job);
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// warnings must stay a single CSV field
std::string sanitize_field(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

const char* kResultsHeader =
    "name,index,dim,method,samples,trials,mean,trial_stddev,mean_std_error,"
    "analytic,abs_error,warnings";

}  // namespace

std::vector<ResultsRow> make_results(const JobSpec& job, const BatchResult& br) {
  std::vector<ResultsRow> rows;
  rows.reserve(br.per_integrand.size());
  for (std::size_t i = 0; i < br.per_integrand.size(); ++i) {
    const IntegrandResult& r = br.per_integrand[i];
    const IntegrandSpec& s = job.integrands[i];
    ResultsRow row;
    row.name = r.name;
    row.index = std::uint32_t(i + 1);
    row.dim = s.dim;
    row.method = method_name(s.method);
    row.samples = s.n_samples;
    row.trials = job.trials;
    row.ok = r.ok;
    if (r.ok) {
      row.mean = r.summary.mean;
      row.trial_stddev = r.summary.trial_stddev;
      double se = 0.0;
      for (const McEstimate& e : r.summary.per_trial) se += e.std_error;
      row.mean_std_error = se / double(r.summary.per_trial.size());
      std::string w;
      if (r.nonfinite_warning) w += "nonfinite;";
      if (r.budget_exhausted) w += "budget_exhausted;";
      if (!r.error.empty()) w += sanitize_field(r.error) + ";";
      if (!w.empty()) w.pop_back();
      row.warnings = w;
    } else {
      row.mean = row.trial_stddev = row.mean_std_error =
          std::numeric_limits<double>::quiet_NaN();
      row.warnings = "FAILED;" + sanitize_field(r.error);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_results(const std::vector<ResultsRow>& rows,
                   const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write results: " + path.string());
  out << kResultsHeader << "\n";
  for (const ResultsRow& r : rows) {
    out << sanitize_field(r.name) << ',' << r.index << ',' << r.dim << ','
        << r.method << ',' << r.samples << ',' << r.trials << ','
        << fmt17(r.mean) << ',' << fmt17(r.trial_stddev) << ','
        << fmt17(r.mean_std_error) << ','
        << (r.analytic ? fmt17(*r.analytic) : std::string()) << ','
        << (r.abs_error ? fmt17(*r.abs_error) : std::string()) << ','
        << sanitize_field(r.warnings) << "\n";
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& s, const char* what) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str())
    throw MalformedResults(std::string("bad numeric field '") + s + "' for " +
                           what);
  return v;
}

}  // namespace

std::vector<ResultsRow> read_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MalformedResults("cannot open results file: " + path.string());
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != split_csv_line(kResultsHeader))
    throw MalformedResults("missing or wrong header row");
  std::vector<ResultsRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 12)
      throw MalformedResults("line " + std::to_string(lineno) + ": expected 12 fields, got " +
                             std::to_string(f.size()));
    ResultsRow r;
    r.name = f[0];
    r.index = std::uint32_t(std::strtoul(f[1].c_str(), nullptr, 10));
    r.dim = std::strtoul(f[2].c_str(), nullptr, 10);
    r.method = f[3];
    r.samples = std::strtoull(f[4].c_str(), nullptr, 10);
    r.trials = std::uint32_t(std::strtoul(f[5].c_str(), nullptr, 10));
    r.mean = parse_double(f[6], "mean");
    r.trial_stddev = parse_double(f[7], "trial_stddev");
    r.mean_std_error = parse_double(f[8], "mean_std_error");
    if (!f[9].empty()) r.analytic = parse_double(f[9], "analytic");
    if (!f[10].empty()) r.abs_error = parse_double(f[10], "abs_error");
    r.warnings = f[11];
    r.ok = r.warnings.rfind("FAILED", 0) != 0;
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw MalformedResults("results file has no data rows");
  return rows;
}

int run_command(const std::filesystem::path& job_path,
                const std::filesystem::path& out_path,
                const RunOverrides& overrides) {
  JobSpec job;
  try {
    job = read_job(job_path);
  } catch (const JobFileError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  if (overrides.seed) job.seed = *overrides.seed;
  if (overrides.trials) job.trials = *overrides.trials;
  if (overrides.workers) job.workers = *overrides.workers;

  std::vector<Violation> violations = validate(job);
  if (!violations.empty()) {
    std::cerr << "error: job does not validate:\n";
    for (const Violation& v : violations) {
      std::cerr << "  ";
      if (!v.integrand.empty()) std::cerr << v.integrand << ": ";
      std::cerr << v.message << "\n";
    }
    return 2;
  }

  BatchResult br;
  try {
    br = run_batch(job);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }

  bool any_ok = false;
  for (const IntegrandResult& r : br.per_integrand) {
    if (r.ok) {
      any_ok = true;
      std::cout << r.name << ": " << fmt17(r.summary.mean) << " +- "
                << fmt17(r.summary.trial_stddev) << " (" << r.seconds
                << " s)\n";
    } else {
      std::cout << r.name << ": FAILED (" << r.error << ")\n";
    }
  }
  write_results(make_results(job, br), out_path);
  std::cerr << "wrote " << br.per_integrand.size() << " rows to " << out_path
            << " in " << br.total_seconds << " s\n";
  return any_ok ? 0 : 3;
}

double harmonic_k(std::uint32_t n) {
  return (double(n) + 50.0) / (2.0 * std::numbers::pi);
}

double harmonic_closed_form(double k) {
  if (k == 0.0) return 1.0;
  // phi = (e^{ik} - 1) / (ik); integral over [0,1]^4 of cos(k*sum) +
  // sin(k*sum) is Re(phi^4) + Im(phi^4)
  std::complex<double> ik(0.0, k);
  std::complex<double> phi = (std::exp(ik) - 1.0) / ik;
  std::complex<double> phi4 = phi * phi * phi * phi;
  return phi4.real() + phi4.imag();
}

double analytic_harmonic(std::uint32_t n) {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  return harmonic_closed_form(harmonic_k(n));
}

JobSpec make_harmonic_job(std::uint32_t n_count, std::uint64_t samples) {
  if (n_count < 1) throw std::invalid_argument("n_count must be >= 1");
  JobSpec job;
  job.seed = 20200814;
  job.trials = 10;
  job.workers = 0;
  int width = int(std::to_string(n_count).size());
  for (std::uint32_t n = 1; n <= n_count; ++n) {
    IntegrandSpec s;
    char name[32];
    std::snprintf(name, sizeof name, "f%0*u", width, n);
    s.name = name;
    s.source = "cos(k*(x1+x2+x3+x4)) + sin(k*(x1+x2+x3+x4))";
    s.dim = 4;
    s.domain = HyperRect::unit(4);
    s.params["k"] = harmonic_k(n);
    s.n_samples = samples;
    s.method = Method::Direct;
    job.integrands.push_back(std::move(s));
  }
  return job;
}

int gen_fig1(std::uint32_t n_count, std::uint64_t samples,
             const std::filesystem::path& out_path) {
  write_job(make_harmonic_job(n_count, samples), out_path);
  return 0;
}

namespace {

std::optional<std::uint32_t> trailing_number(const std::string& name) {
  std::size_t end = name.size();
  std::size_t begin = end;
  while (begin > 0 && std::isdigit(static_cast<unsigned char>(name[begin - 1])))
    --begin;
  if (begin == end) return std::nullopt;
  return std::uint32_t(std::strtoul(name.c_str() + begin, nullptr, 10));
}

}  // namespace

Fig1Check check_fig1(const std::vector<ResultsRow>& rows) {
  if (rows.empty()) throw MalformedResults("no result rows");
  Fig1Check out;
  for (const ResultsRow& r : rows) {
    Fig1Row f;
    auto n = trailing_number(r.name);
    if (r.analytic) {
      f.analytic = *r.analytic;
      f.n = n.value_or(r.index);
    } else {
      if (!n)
        throw MalformedResults("row '" + r.name +
                               "': no analytic column and no trailing index "
                               "in the name");
      f.n = *n;
      f.analytic = analytic_harmonic(f.n);
    }
    f.mean = r.mean;
    f.trial_stddev = r.trial_stddev;
    f.mean_std_error = r.mean_std_error;
    double band = 4.0 * std::max(f.trial_stddev, f.mean_std_error);
    f.pass = r.ok && std::isfinite(f.mean) && std::fabs(f.mean - f.analytic) <= band;
    if (f.pass) ++out.passed;
    out.rows.push_back(f);
  }
  return out;
}

int check_fig1_command(const std::filesystem::path& results_path,
                       const std::optional<std::filesystem::path>& plot_out) {
  Fig1Check check;
  try {
    check = check_fig1(read_results(results_path));
  } catch (const MalformedResults& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  for (const Fig1Row& r : check.rows)
    std::cout << "n=" << r.n << " mean=" << fmt17(r.mean)
              << " analytic=" << fmt17(r.analytic) << " band=+-"
              << fmt17(4.0 * std::max(r.trial_stddev, r.mean_std_error))
              << (r.pass ? " PASS" : " FAIL") << "\n";
  std::cout << "passed " << check.passed << "/" << check.rows.size() << "\n";
  if (plot_out) {
    std::ofstream out(*plot_out);
    if (!out) {
      std::cerr << "error: cannot write " << *plot_out << "\n";
      return 2;
    }
    out << "n,mean,trial_stddev,analytic\n";
    for (const Fig1Row& r : check.rows)
      out << r.n << ',' << fmt17(r.mean) << ',' << fmt17(r.trial_stddev) << ','
          << fmt17(r.analytic) << "\n";
  }
  double frac = double(check.passed) / double(check.rows.size());
  return frac >= 0.95 ? 0 : 1;
}

}  // namespace mcbatch
