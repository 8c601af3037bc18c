#include "fwer/io.hpp"

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "fwer/bootstrap.hpp"
#include "fwer/confidence.hpp"
#include "fwer/errors.hpp"

namespace fwer {

namespace {

namespace pt = boost::property_tree;

std::string trim(std::string_view s) { return boost::algorithm::trim_copy(std::string(s)); }

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> parts;
  boost::algorithm::split(parts, text, [sep](char c) { return c == sep; });
  for (auto& p : parts) p = trim(p);
  if (parts.size() == 1 && parts[0].empty()) parts.clear();
  return parts;
}

template <class T>
bool parse_number(std::string_view text, T& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  const char* end = t.data() + t.size();
  const auto [ptr, ec] = std::from_chars(t.data(), end, out);
  return ec == std::errc() && ptr == end;
}

template <class T>
T config_number(const std::string& key, const std::string& text) {
  T v{};
  if (!parse_number(text, v)) throw ConfigError("invalid value for " + key + ": '" + text + "'");
  return v;
}

template <class T>
std::vector<T> config_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  for (const auto& p : split_list(text, ',')) out.push_back(config_number<T>(key, p));
  if (out.empty()) throw ConfigError(key + " must not be empty");
  return out;
}

bool config_bool(const std::string& key, const std::string& text) {
  const std::string t = boost::algorithm::to_lower_copy(trim(text));
  if (t == "true" || t == "yes" || t == "1") return true;
  if (t == "false" || t == "no" || t == "0") return false;
  throw ConfigError("invalid boolean for " + key + ": '" + text + "'");
}

pt::ptree read_ini(std::istream& in) {
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(e.what());
  }
  return tree;
}

std::string join_numbers(const auto& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += format_number(static_cast<double>(xs[i]));
  }
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  boost::algorithm::split(fields, line, [](char c) { return c == ','; });
  return fields;
}

void write_metadata(std::ostream& out, const std::vector<std::string>& lines) {
  out << "# fwerseh " << kVersion << "\n";
  for (const auto& l : lines) out << "# " << l << "\n";
}

std::string format_exact(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

GridSpec parse_grid_config(std::istream& in) {
  const pt::ptree tree = read_ini(in);
  GridSpec g;
  bool have_methods = false;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError("key '" + section + "' outside a section");
    for (const auto& [key, node] : body) {
      const std::string v = node.data();
      const std::string name = section + "." + key;
      try {
        if (section == "scenario") {
          if (key == "structure") g.structure = parse_structure(trim(v));
          else if (key == "ehf") g.ehf = config_list<double>(name, v);
          else if (key == "chf") g.chf = config_list<double>(name, v);
          else if (key == "n") g.n = config_list<int>(name, v);
          else if (key == "allocation") {
            g.allocations.clear();
            for (const auto& a : split_list(v, ',')) g.allocations.push_back(parse_allocation(a));
            if (g.allocations.empty()) throw ConfigError(name + " must not be empty");
          } else if (key == "split") g.split = parse_split(trim(v));
          else if (key == "alpha") g.alpha = config_number<double>(name, v);
          else if (key == "sigma2") g.sigma2 = config_number<double>(name, v);
          else if (key == "methods") {
            g.methods.clear();
            for (const auto& m : split_list(v, ',')) g.methods.push_back(MethodSpec::parse(m));
            have_methods = true;
          } else throw ConfigError("unknown key " + name);
        } else if (section == "replication") {
          if (key == "n_studies") g.n_studies = config_number<int>(name, v);
          else if (key == "n_runs") g.n_runs = config_number<int>(name, v);
          else if (key == "n_boot") g.n_boot = config_number<int>(name, v);
          else if (key == "tol") g.tol = config_number<double>(name, v);
          else if (key == "seed") g.seed = config_number<std::uint64_t>(name, v);
          else throw ConfigError("unknown key " + name);
        } else if (section == "output") {
          if (key == "fwer") g.fwer = config_bool(name, v);
          else if (key == "power") g.power = config_bool(name, v);
          else throw ConfigError("unknown key " + name);
        } else {
          throw ConfigError("unknown section [" + section + "]");
        }
      } catch (const std::invalid_argument& e) {
        throw ConfigError(name + ": " + e.what());
      }
    }
  }
  if (!have_methods)
    for (const char* m : {"anova+t", "anova+boot", "marg+t", "marg+boot", "marg+shr+boot", "strat+boot"})
      g.methods.push_back(MethodSpec::parse(m));
  try {
    g.cells();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return g;
}

GridSpec load_grid_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_grid_config(in);
}

std::vector<std::string> canonical_config(const GridSpec& g) {
  std::string allocs, methods;
  for (std::size_t i = 0; i < g.allocations.size(); ++i) allocs += (i ? "," : "") + to_string(g.allocations[i]);
  for (std::size_t i = 0; i < g.methods.size(); ++i) methods += (i ? "," : "") + g.methods[i].name();
  return {
      "structure = " + to_string(g.structure),
      "ehf = " + join_numbers(g.ehf),
      "chf = " + join_numbers(g.chf),
      "n = " + join_numbers(g.n),
      "allocation = " + allocs,
      std::string("split = ") + (g.split == AllocationSplit::proportional ? "proportional" : "rounded"),
      "alpha = " + format_number(g.alpha),
      "sigma2 = " + format_number(g.sigma2),
      "methods = " + methods,
      "n_studies = " + std::to_string(g.n_studies),
      "n_runs = " + std::to_string(g.n_runs),
      "n_boot = " + std::to_string(g.n_boot),
      "tol = " + format_number(g.tol),
      "seed = " + std::to_string(g.seed),
      std::string("fwer = ") + (g.fwer ? "true" : "false"),
      std::string("power = ") + (g.power ? "true" : "false"),
  };
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const GridSpec& grid) {
  std::string text;
  for (const auto& l : canonical_config(grid)) text += l + "\n";
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
  return buf;
}

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

void write_report_csv(std::ostream& out, const std::vector<CellResult>& cells, const GridSpec& grid) {
  std::vector<std::string> meta = {"seed = " + std::to_string(grid.seed), "config_hash = " + config_hash(grid)};
  for (const auto& l : canonical_config(grid)) meta.push_back("config: " + l);
  write_metadata(out, meta);
  out << "N,alloc,EHF,CHF,method,estimate,mc_se,n_studies,n_runs\n";
  std::vector<const CellResult*> order;
  for (const auto& c : cells) order.push_back(&c);
  std::stable_sort(order.begin(), order.end(), [](const CellResult* a, const CellResult* b) {
    return std::make_tuple(a->n, to_string(a->allocation), a->ehf, a->chf, a->method) <
           std::make_tuple(b->n, to_string(b->allocation), b->ehf, b->chf, b->method);
  });
  for (const CellResult* c : order) {
    out << c->n << ',' << to_string(c->allocation) << ',' << format_number(c->ehf) << ',' << format_number(c->chf)
        << ',' << c->method << ',' << format_number(c->estimate) << ',' << format_number(c->mc_se) << ','
        << c->n_studies << ',' << c->n_runs << '\n';
  }
}

void write_report(const SimulationReport& report, const GridSpec& grid, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, cells] : {std::pair{"fwer.csv", &report.fwer}, std::pair{"power.csv", &report.power}}) {
    std::ofstream out(dir / name);
    if (!out) throw ConfigError("cannot write " + (dir / name).string());
    write_report_csv(out, *cells, grid);
  }
}

TrialDesign parse_design(std::istream& in) {
  const pt::ptree tree = read_ini(in);
  const auto sec = tree.get_child_optional("design");
  if (!sec) throw ConfigError("design file needs a [design] section");
  for (const auto& [section, body] : tree)
    if (section != "design") throw ConfigError("unknown section [" + section + "]");
  int n_sub = 0;
  std::vector<std::vector<int>> pops;
  std::vector<std::string> treatments;
  std::string control = "C";
  for (const auto& [key, node] : *sec) {
    const std::string v = node.data();
    if (key == "subgroups") {
      n_sub = config_number<int>("design.subgroups", v);
    } else if (key == "populations") {
      for (const auto& p : split_list(v, ';')) {
        std::vector<int> members;
        for (int s : config_list<int>("design.populations", p)) members.push_back(s - 1);
        pops.push_back(std::move(members));
      }
    } else if (key == "treatments") {
      treatments = split_list(v, ';');
    } else if (key == "control") {
      control = trim(v);
    } else {
      throw ConfigError("unknown key design." + key);
    }
  }
  if (treatments.empty()) treatments.assign(pops.size(), "E");
  try {
    return TrialDesign(n_sub, pops, treatments, control);
  } catch (const DesignError& e) {
    throw ConfigError(std::string("invalid design: ") + e.what());
  }
}

TrialDesign load_design(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open design file " + path.string());
  return parse_design(in);
}

std::vector<DatasetRow> read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty dataset", 0);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "subject,subgroup,treatment,response")
    throw DataError("header must be subject,subgroup,treatment,response", 1);
  std::vector<DatasetRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 4) throw DataError("expected 4 fields, found " + std::to_string(f.size()), lineno);
    DatasetRow r;
    r.subject = trim(f[0]);
    if (!parse_number(f[1], r.subgroup)) throw DataError("subgroup is not an integer: '" + f[1] + "'", lineno);
    r.treatment = trim(f[2]);
    if (!parse_number(f[3], r.response) || !std::isfinite(r.response))
      throw DataError("response is not a finite number: '" + f[3] + "'", lineno);
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw DataError("dataset has no rows", 0);
  return rows;
}

void write_dataset(std::ostream& out, const std::vector<DatasetRow>& rows) {
  out << "subject,subgroup,treatment,response\n";
  for (const auto& r : rows) out << r.subject << ',' << r.subgroup << ',' << r.treatment << ',' << format_exact(r.response) << '\n';
}

IngestedData summarize_dataset(const std::vector<DatasetRow>& rows, const TrialDesign& design) {
  if (rows.empty()) throw DataError("dataset has no rows", 0);
  const int nc = design.n_cells();
  std::vector<long> count(nc, 0);
  std::vector<double> sum(nc, 0.0);
  std::vector<int> cell_of(rows.size());
  IngestedData out;
  std::set<std::string> seen;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const DatasetRow& r = rows[k];
    const std::size_t lineno = k + 2;
    if (r.subgroup < 1 || r.subgroup > design.n_subgroups())
      throw DataError("subgroup " + std::to_string(r.subgroup) + " is outside 1.." +
                          std::to_string(design.n_subgroups()),
                      lineno);
    const int t = design.treatment_index(r.treatment);
    if (t < 0) throw DataError("unknown treatment '" + r.treatment + "'", lineno);
    if (!design.cell_used(r.subgroup - 1, t))
      throw DataError("treatment '" + r.treatment + "' is not given in subgroup " + std::to_string(r.subgroup), lineno);
    if (!std::isfinite(r.response)) throw DataError("response is not finite", lineno);
    if (!seen.insert(r.subject).second) out.warnings.push_back("line " + std::to_string(lineno) + ": duplicate subject id '" + r.subject + "'");
    const int c = design.cell(r.subgroup - 1, t);
    cell_of[k] = c;
    ++count[c];
    sum[c] += r.response;
  }
  std::vector<double> mean(nc, 0.0), ss(nc, 0.0), sizes(nc, 0.0);
  for (int c = 0; c < nc; ++c) {
    sizes[c] = static_cast<double>(count[c]);
    if (count[c] > 0) mean[c] = sum[c] / static_cast<double>(count[c]);
  }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const double d = rows[k].response - mean[cell_of[k]];
    ss[cell_of[k]] += d * d;
  }
  out.summary.layout = SampleLayout(design.n_subgroups(), design.n_treatments(), sizes);
  out.summary.means = std::move(mean);
  out.summary.ss = std::move(ss);
  out.rows = rows.size();
  out.cell_counts = std::move(count);
  return out;
}

IngestedData ingest_dataset(const std::filesystem::path& path, const TrialDesign& design) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string(), 0);
  return summarize_dataset(read_dataset(in), design);
}

std::vector<AnalysisRow> analyze(const TrialSummary& summary, const TrialDesign& design,
                                 const AnalysisSettings& settings) {
  std::vector<AnalysisRow> out;
  const int np = design.n_populations();
  for (std::size_t k = 0; k < settings.methods.size(); ++k) {
    const MethodSpec& m = settings.methods[k];
    RngStream rng(settings.seed, {static_cast<std::uint64_t>(k)});
    try {
      const StatVector st = compute_statistics(summary, design, m);
      TestResult res;
      if (m.calibration == Calibration::analytic) {
        res = analytic_test(st, m, settings.alpha, settings.tol, rng);
      } else if (m.calibration == Calibration::unadjusted) {
        res = unadjusted_test(st, m, settings.alpha);
      } else {
        BootstrapConfig cfg;
        cfg.n_boot = settings.n_boot;
        const BootstrapSample b = bootstrap_distribution(summary, design, m, cfg, rng);
        res = bootstrap_test(st, b.max_for(m.family), m, settings.alpha, cfg.p_rule);
      }
      if (m.calibration != Calibration::unadjusted) attach_lower_bounds(res);
      for (int p = 0; p < np; ++p) out.push_back({m.name(), p + 1, res.hypotheses[p], {}});
    } catch (const Error& e) {
      for (int p = 0; p < np; ++p) out.push_back({m.name(), p + 1, std::nullopt, e.what()});
    }
  }
  return out;
}

void write_analysis_csv(std::ostream& out, const std::vector<AnalysisRow>& rows, const AnalysisSettings& settings) {
  std::string methods;
  for (std::size_t i = 0; i < settings.methods.size(); ++i) methods += (i ? "," : "") + settings.methods[i].name();
  write_metadata(out, {"seed = " + std::to_string(settings.seed), "alpha = " + format_number(settings.alpha),
                       "n_boot = " + std::to_string(settings.n_boot), "methods = " + methods});
  out << "method,population,estimate,se,statistic,critical_value,adjusted_p,reject,ci_lower,error\n";
  auto opt = [](const std::optional<double>& x) { return x ? format_number(*x) : std::string(); };
  for (const auto& r : rows) {
    out << r.method << ',' << r.population << ',';
    if (r.result) {
      const HypothesisResult& h = *r.result;
      out << format_number(h.estimate) << ',' << format_number(h.se) << ',' << format_number(h.statistic) << ','
          << opt(h.critical_value) << ',' << opt(h.adjusted_p) << ',' << (h.reject ? 1 : 0) << ','
          << opt(h.ci_lower) << ",\n";
    } else {
      std::string msg = r.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      out << ",,,,,,," << msg << '\n';
    }
  }
}

void write_example1(std::ostream& out, const Example1Settings& s) {
  write_metadata(out, {"seed = " + std::to_string(s.seed), "n_iter = " + std::to_string(s.n_iter),
                       "tol = " + format_number(s.tol)});
  out << "quantity,N,alpha,iterations,value,mc_se,target\n";
  const RngStream root(s.seed);
  for (std::size_t k = 0; k < s.n.size(); ++k) {
    RngStream rng = root.child({1, static_cast<std::uint64_t>(k)});
    const Example1Result r = example1_analytic(s.n[k], s.n_iter, rng, s.tol);
    out << "mean_true_fwer," << r.n << ",0.025," << r.n_iter << ',' << format_number(r.mean_fwer) << ','
        << format_number(r.mc_se) << ",\n";
  }
  {
    RngStream rng = root.child({2});
    const int n = s.n.size() > 1 ? s.n[1] : s.n.front();
    const Example1Result r = example1_analytic(n, s.n_iter, rng, s.tol, true);
    out << "homogeneous_null_fwer," << r.n << ",0.025," << r.n_iter << ',' << format_number(r.mean_fwer) << ','
        << format_number(r.mc_se) << ",0.025\n";
  }
  RngStream rng = root.child({3});
  const NuVariances v = example1_nu_variances(s.variance_n, s.variance_draws, rng);
  out << "var_nu1," << s.variance_n << ",," << s.variance_draws << ',' << format_number(v.var_nu1) << ",,"
      << format_number(10.0 / 3.0) << '\n';
  out << "var_nu2," << s.variance_n << ",," << s.variance_draws << ',' << format_number(v.var_nu2) << ",,"
      << format_number(4.0) << '\n';
}

}  // namespace fwer
