// hlglm -- lattice-partitioned GLM toolkit. Subcommands cover bin planning,
// fitting, evaluation, order selection, local stacking, synthetic studies,
// and prediction. Every run echoes its fully resolved config and a config
// hash so reports are reproducible on their own.
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hlglm/artifact.hpp"
#include "hlglm/conjugate.hpp"
#include "hlglm/data.hpp"
#include "hlglm/decomposition.hpp"
#include "hlglm/errors.hpp"
#include "hlglm/evaluation.hpp"
#include "hlglm/fit.hpp"
#include "hlglm/glm.hpp"
#include "hlglm/lattice.hpp"
#include "hlglm/regularization.hpp"
#include "hlglm/rng.hpp"
#include "hlglm/simulate.hpp"
#include "hlglm/stacking.hpp"

namespace {

using hlglm::ErrorCode;
using hlglm::fail;
using nlohmann::json;

constexpr const char* kToolTag = "hlglm/0.1.0";

// ---- formatting -----------------------------------------------------------

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

void print_table(std::ostream& os, const std::vector<std::string>& head,
                 const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> w(head.size());
  for (std::size_t c = 0; c < head.size(); ++c) w[c] = head[c].size();
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size() && c < w.size(); ++c)
      w[c] = std::max(w[c], r[c].size());
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      os << (c == 0 ? "  " : "  ");
      os << r[c] << std::string(w[c] - r[c].size(), ' ');
    }
    os << "\n";
  };
  line(head);
  std::size_t total = 0;
  for (std::size_t c = 0; c < w.size(); ++c) total += w[c] + 2;
  os << "  " << std::string(total > 2 ? total - 2 : 0, '-') << "\n";
  for (const auto& r : rows) line(r);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

void write_csv(const std::string& path, const std::vector<std::string>& head,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::ingest_error, "cannot write '" + path + "'");
  for (std::size_t c = 0; c < head.size(); ++c)
    out << (c ? "," : "") << csv_field(head[c]);
  out << "\n";
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c)
      out << (c ? "," : "") << csv_field(r[c]);
    out << "\n";
  }
  if (!out) fail(ErrorCode::ingest_error, "short write to '" + path + "'");
}

// ---- config resolution ----------------------------------------------------

json default_config() {
  json c;
  c["family"] = "gaussian";
  c["response"] = "";
  c["features"] = json::array();
  c["lattice"] = json::array();
  c["fit"] = {{"truncation", 1},
              {"truncation_intercept", -1},
              {"truncation_coeff", -1},
              {"max_steps", 3000},
              {"lr", {{"start", 1e-3},
                      {"peak", 2e-2},
                      {"end", 1e-3},
                      {"warmup_fraction", 0.1}}},
              {"adam_beta1", 0.9},
              {"adam_beta2", 0.999},
              {"adam_eps", 1e-8},
              {"tol", 1e-7},
              {"patience", 5},
              {"seed", 0}};
  c["regularization"] = {{"scheme", "adaptive"},
                         {"mode", "per-component"},
                         {"tau", 1.0},
                         {"base", 5.0},
                         {"rate", 0.9},
                         {"sigma", 0.0},
                         {"exempt_order0", true},
                         {"reference_tau_scale", 100.0},
                         {"max_outer", 10},
                         {"weight_tol", 1e-4}};
  c["eval"] = {{"waic_draws", 1000}, {"seed", 0}};
  c["select"] = {{"kmax", 2}};
  c["stack"] = {{"truncation", 1}, {"leverage_cap", 0.9}, {"ridge", 1e-6}};
  c["bin"] = {{"safety", 0.5}};
  c["simulate"] = {{"harness", "generate"},
                   {"generator", "hierarchical"},
                   {"d", 3},
                   {"levels", 4},
                   {"n", 1000},
                   {"n_train", 10000},
                   {"n_test", 10000},
                   {"rho", 0.3},
                   {"sigma", 1.0},
                   {"p", 1},
                   {"kmax", 2},
                   {"replications", 20},
                   {"waic_draws", 1000},
                   {"prevalence", 0.5},
                   {"effect_sd", 0.5},
                   {"design_rows", 1000},
                   {"design_cols", 50},
                   {"lambda2", 1.0},
                   {"sigma2", 1.0},
                   {"draws", 200},
                   {"seed", 0}};
  return c;
}

void merge_into(json& base, const json& user, const std::string& prefix,
                std::vector<std::string>& problems) {
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string where = prefix + it.key();
    if (!base.contains(it.key())) {
      problems.push_back("unknown config key '" + where + "'");
      continue;
    }
    json& slot = base[it.key()];
    if (slot.is_object() && it.value().is_object())
      merge_into(slot, it.value(), where + ".", problems);
    else
      slot = it.value();
  }
}

json load_config(const std::string& path, std::vector<std::string>& problems) {
  json resolved = default_config();
  if (path.empty()) return resolved;
  std::ifstream in(path);
  if (!in) {
    problems.push_back("config file '" + path + "' cannot be opened");
    return resolved;
  }
  json user;
  try {
    user = json::parse(in);
  } catch (const json::exception& e) {
    problems.push_back("config file '" + path + "' is not valid JSON: " +
                       e.what());
    return resolved;
  }
  if (!user.is_object()) {
    problems.push_back("config file '" + path + "' must hold a JSON object");
    return resolved;
  }
  merge_into(resolved, user, "", problems);
  return resolved;
}

// "gaussian" or {"name": ..., "dispersion": ...}
hlglm::FamilySpec family_from_config(const json& c,
                                     std::vector<std::string>& problems) {
  hlglm::FamilySpec fam;
  std::string name = "gaussian";
  double dispersion = 1.0;
  const json& f = c.at("family");
  if (f.is_string()) {
    name = f.get<std::string>();
  } else if (f.is_object()) {
    name = f.value("name", "gaussian");
    dispersion = f.value("dispersion", 1.0);
  } else {
    problems.push_back("'family' must be a string or object");
    return fam;
  }
  try {
    fam.family = hlglm::family_from_name(name);
  } catch (const hlglm::Error& e) {
    problems.push_back(e.what());
  }
  if (dispersion <= 0.0)
    problems.push_back("'family.dispersion' must be positive");
  fam.dispersion = dispersion;
  return fam;
}

template <typename T>
T checked(const json& section, const char* key, T lo, T hi,
          const std::string& where, std::vector<std::string>& problems) {
  T v{};
  try {
    v = section.at(key).get<T>();
  } catch (const json::exception&) {
    problems.push_back("'" + where + "." + key + "' has the wrong type");
    return lo;
  }
  if (v < lo || v > hi)
    problems.push_back("'" + where + "." + key + "' out of range [" +
                       fmt(static_cast<double>(lo)) + ", " +
                       fmt(static_cast<double>(hi)) + "]");
  return v;
}

hlglm::FitConfig fit_from_config(const json& c,
                                 std::vector<std::string>& problems) {
  const json& f = c.at("fit");
  hlglm::FitConfig fc;
  fc.truncation = checked<int>(f, "truncation", 0, 64, "fit", problems);
  fc.truncation_intercept =
      checked<int>(f, "truncation_intercept", -1, 64, "fit", problems);
  fc.truncation_coeff =
      checked<int>(f, "truncation_coeff", -1, 64, "fit", problems);
  fc.max_steps = checked<int>(f, "max_steps", 1, 1000000, "fit", problems);
  fc.lr.start = checked<double>(f.at("lr"), "start", 1e-12, 10.0, "fit.lr",
                                problems);
  fc.lr.peak =
      checked<double>(f.at("lr"), "peak", 1e-12, 10.0, "fit.lr", problems);
  fc.lr.end =
      checked<double>(f.at("lr"), "end", 1e-12, 10.0, "fit.lr", problems);
  fc.lr.warmup_fraction = checked<double>(f.at("lr"), "warmup_fraction", 0.0,
                                          1.0, "fit.lr", problems);
  fc.adam_beta1 = checked<double>(f, "adam_beta1", 0.0, 1.0, "fit", problems);
  fc.adam_beta2 = checked<double>(f, "adam_beta2", 0.0, 1.0, "fit", problems);
  fc.adam_eps = checked<double>(f, "adam_eps", 0.0, 1.0, "fit", problems);
  fc.tol = checked<double>(f, "tol", 0.0, 1.0, "fit", problems);
  fc.patience = checked<int>(f, "patience", 1, 100000, "fit", problems);
  fc.seed = f.value("seed", 0ull);
  return fc;
}

struct RegChoice {
  std::string scheme = "adaptive";
  hlglm::PlanOptions plan;
  double tau = 1.0;
  double base = 5.0;
  double rate = 0.9;
  double sigma = 0.0;  // 0 = estimate from the data
  int max_outer = 10;
  double weight_tol = 1e-4;
};

RegChoice reg_from_config(const json& c, std::vector<std::string>& problems) {
  const json& r = c.at("regularization");
  RegChoice out;
  out.scheme = r.value("scheme", "adaptive");
  const std::set<std::string> known{"adaptive", "scaled", "fixed",
                                    "decay", "free"};
  if (!known.count(out.scheme))
    problems.push_back("'regularization.scheme' must be one of adaptive, "
                       "scaled, fixed, decay, free");
  const std::string mode = r.value("mode", "per-component");
  if (mode == "per-component")
    out.plan.mode = hlglm::PenaltyMode::per_component;
  else if (mode == "per-parameter")
    out.plan.mode = hlglm::PenaltyMode::per_parameter;
  else
    problems.push_back(
        "'regularization.mode' must be per-component or per-parameter");
  out.plan.exempt_order0 = r.value("exempt_order0", true);
  out.plan.reference_tau_scale = checked<double>(
      r, "reference_tau_scale", 1e-6, 1e9, "regularization", problems);
  out.tau = checked<double>(r, "tau", 1e-12, 1e12, "regularization", problems);
  out.base =
      checked<double>(r, "base", 1e-12, 1e12, "regularization", problems);
  out.rate =
      checked<double>(r, "rate", 1e-12, 1e3, "regularization", problems);
  out.sigma = checked<double>(r, "sigma", 0.0, 1e12, "regularization",
                              problems);
  out.max_outer =
      checked<int>(r, "max_outer", 1, 1000, "regularization", problems);
  out.weight_tol =
      checked<double>(r, "weight_tol", 0.0, 1.0, "regularization", problems);
  return out;
}

void abort_on(const std::vector<std::string>& problems) {
  if (problems.empty()) return;
  for (const auto& p : problems) std::cerr << "config error: " << p << "\n";
  fail(ErrorCode::config_error,
       std::to_string(problems.size()) + " configuration error(s)");
}

void echo_config(const json& resolved, const std::string& cmd) {
  const std::string dump = resolved.dump();
  std::cout << "hlglm " << cmd << "\n";
  std::cout << "config-hash: " << hlglm::fnv1a_hex(dump) << "\n";
  std::cout << "config: " << dump << "\n";
}

void write_report(const std::string& path, const std::string& cmd,
                  const json& resolved, const json& results) {
  if (path.empty()) return;
  json r;
  r["command"] = cmd;
  r["config_hash"] = hlglm::fnv1a_hex(resolved.dump());
  r["config"] = resolved;
  r["results"] = results;
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::ingest_error, "cannot write '" + path + "'");
  out << r.dump(2) << "\n";
}

// ---- lattice construction from config + data ------------------------------

struct LatticePlanEntry {
  std::string name;
  std::string kind;  // categorical | binned
  int levels = 0;    // requested (binned, quantile)
  std::vector<double> edges;
};

std::vector<LatticePlanEntry> lattice_plan(const json& c,
                                           std::vector<std::string>& problems) {
  std::vector<LatticePlanEntry> out;
  const json& arr = c.at("lattice");
  if (!arr.is_array()) {
    problems.push_back("'lattice' must be an array of dim objects");
    return out;
  }
  std::set<std::string> seen;
  for (const json& j : arr) {
    LatticePlanEntry e;
    if (!j.is_object() || !j.contains("name")) {
      problems.push_back("every lattice dim needs a 'name'");
      continue;
    }
    e.name = j.at("name").get<std::string>();
    if (!seen.insert(e.name).second)
      problems.push_back("lattice dim '" + e.name + "' appears twice");
    e.kind = j.value("kind", "categorical");
    if (e.kind != "categorical" && e.kind != "binned") {
      problems.push_back("lattice dim '" + e.name +
                         "': kind must be categorical or binned");
      continue;
    }
    if (e.kind == "binned") {
      e.levels = j.value("levels", 0);
      if (j.contains("edges"))
        e.edges = j.at("edges").get<std::vector<double>>();
      if (e.edges.empty() && e.levels < 2)
        problems.push_back("lattice dim '" + e.name +
                           "': binned dims need 'levels' >= 2 or 'edges'");
    }
    out.push_back(std::move(e));
  }
  if (out.empty()) problems.push_back("'lattice' lists no dims");
  return out;
}

hlglm::LatticeSpec build_lattice(const std::vector<LatticePlanEntry>& plan,
                                 const hlglm::CsvTable& table) {
  std::vector<hlglm::LatticeDim> dims;
  for (const LatticePlanEntry& e : plan) {
    if (e.kind == "categorical") {
      const int col = table.column(e.name);
      if (col < 0)
        fail(ErrorCode::missing_lattice_feature,
             "lattice column '" + e.name + "' not in the data");
      std::set<std::string> labels;
      for (const auto& row : table.rows) {
        const std::string& v = row[static_cast<std::size_t>(col)];
        if (!v.empty()) labels.insert(v);
      }
      dims.push_back(hlglm::build_categorical_dim(
          e.name, std::vector<std::string>(labels.begin(), labels.end())));
    } else if (!e.edges.empty()) {
      dims.push_back(hlglm::build_explicit_bins(e.name, e.edges));
    } else {
      const std::vector<double> col = hlglm::numeric_column(table, e.name);
      dims.push_back(hlglm::build_quantile_bins(e.name, col, e.levels));
    }
  }
  return hlglm::LatticeSpec(dims);
}

// ---- shared fit pipeline ---------------------------------------------------

struct Pipeline {
  hlglm::FamilySpec family;
  hlglm::ColumnSchema schema;
  hlglm::LatticeSpec lattice;
  hlglm::IngestResult ingest;
};

Pipeline ingest_with_config(const json& cfg, const std::string& data_path,
                            std::vector<std::string>& problems,
                            bool require_response = true) {
  Pipeline pl;
  pl.family = family_from_config(cfg, problems);
  pl.schema.response = cfg.at("response").get<std::string>();
  pl.schema.features =
      cfg.at("features").get<std::vector<std::string>>();
  if (require_response && pl.schema.response.empty())
    problems.push_back("'response' is required");
  const std::vector<LatticePlanEntry> plan = lattice_plan(cfg, problems);
  abort_on(problems);
  const hlglm::CsvTable table = hlglm::read_csv(data_path);
  pl.lattice = build_lattice(plan, table);
  pl.ingest = hlglm::ingest_csv(data_path, pl.schema, pl.lattice, pl.family,
                                nullptr, require_response);
  return pl;
}

hlglm::FittedModel fit_with_scheme(const Pipeline& pl, const RegChoice& reg,
                                   const hlglm::FitConfig& fc) {
  const hlglm::Dataset& data = pl.ingest.data;
  if (reg.scheme == "adaptive") {
    hlglm::AdaptiveOptions opt;
    opt.plan = reg.plan;
    opt.max_outer = reg.max_outer;
    opt.tol = reg.weight_tol;
    return hlglm::fit_adaptive(data, pl.lattice, pl.family, fc, opt);
  }
  auto [int_shape, coef_shape] =
      hlglm::make_shapes(pl.lattice, data.feature_count(), fc);
  hlglm::FamilySpec fam = pl.family;
  hlglm::RegularizationPlan rp;
  if (reg.scheme == "scaled") {
    const double sigma =
        reg.sigma > 0.0 ? reg.sigma : hlglm::estimate_sigma(data, fam);
    if (fam.family == hlglm::Family::gaussian) fam.dispersion = sigma * sigma;
    rp = hlglm::build_scaled_plan(int_shape, coef_shape, data.cells,
                                  pl.lattice, sigma, reg.plan);
  } else if (reg.scheme == "fixed") {
    rp = hlglm::build_fixed_plan(int_shape, coef_shape, reg.tau);
  } else if (reg.scheme == "decay") {
    rp = hlglm::build_decay_plan(int_shape, coef_shape, reg.base, reg.rate);
  } else {
    rp = hlglm::build_free_plan(int_shape, coef_shape);
  }
  return hlglm::map_fit(data, pl.lattice, fam, rp, fc, int_shape, coef_shape);
}

json fit_results_json(const hlglm::FittedModel& m,
                      const hlglm::IngestReport& report) {
  json r;
  r["rows_read"] = report.rows_read;
  r["rows_kept"] = report.rows_kept;
  r["rows_dropped_missing_lattice"] = report.rows_dropped_missing_lattice;
  r["final_loss"] = m.diag.final_loss;
  r["train_nll"] = m.diag.train_nll;
  r["penalty"] = m.diag.penalty;
  r["steps"] = m.diag.steps;
  r["converged"] = m.diag.converged;
  r["df_total"] = m.diag.df_total;
  r["df_intercept"] = m.diag.df_intercept;
  r["df_coeff"] = m.diag.df_coeff;
  r["fisher_iterations"] = m.fisher.iterations;
  r["fisher_converged"] = m.fisher.converged;
  r["global_wbar"] = m.fisher.global_wbar;
  r["plan_sigma"] = m.plan.sigma;
  return r;
}

void print_fit_summary(const hlglm::FittedModel& m) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"final loss", fmt(m.diag.final_loss)});
  rows.push_back({"train nll", fmt(m.diag.train_nll)});
  rows.push_back({"penalty", fmt(m.diag.penalty)});
  rows.push_back({"steps", std::to_string(m.diag.steps)});
  rows.push_back({"converged", m.diag.converged ? "yes" : "no"});
  rows.push_back({"df total", fmt(m.diag.df_total)});
  rows.push_back({"plan sigma", fmt(m.plan.sigma)});
  if (m.fisher.iterations > 0) {
    rows.push_back({"weight iterations", std::to_string(m.fisher.iterations)});
    rows.push_back({"mean fisher weight", fmt(m.fisher.global_wbar)});
  }
  print_table(std::cout, {"metric", "value"}, rows);
  std::vector<std::vector<std::string>> comps;
  const auto& ids = m.intercept.components();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::string dims = "{";
    for (std::size_t k = 0; k < ids[i].dims.size(); ++k)
      dims += (k ? "," : "") + std::to_string(ids[i].dims[k]);
    dims += "}";
    comps.push_back({dims, std::to_string(ids[i].order()),
                     fmt(m.diag.df_intercept[i]),
                     i < m.diag.df_coeff.size() ? fmt(m.diag.df_coeff[i])
                                                : std::string("-")});
  }
  std::cout << "\n";
  print_table(std::cout, {"component", "order", "df(intercept)", "df(slopes)"},
              comps);
}

// ---- subcommand options ----------------------------------------------------

struct CommonOpts {
  std::string config;
  std::string data;
  std::string out;
  std::string report;
  std::string model;
  std::string test;
  std::vector<std::string> models;
  bool force = false;
};

// ---- bin -------------------------------------------------------------------

void run_bin(const CommonOpts& o) {
  std::vector<std::string> problems;
  json cfg = load_config(o.config, problems);
  const std::vector<LatticePlanEntry> plan = lattice_plan(cfg, problems);
  const json& features = cfg.at("features");
  const double safety =
      checked<double>(cfg.at("bin"), "safety", 1e-6, 1.0, "bin", problems);
  abort_on(problems);
  echo_config(cfg, "bin");

  const hlglm::CsvTable table = hlglm::read_csv(o.data);
  const auto n = static_cast<std::int64_t>(table.rows.size());
  if (n == 0) fail(ErrorCode::empty_data, "'" + o.data + "' has no rows");
  const std::int64_t p = 1 + static_cast<std::int64_t>(features.size());
  int d_cont = 0;
  for (const auto& e : plan)
    if (e.kind == "binned") ++d_cont;

  int allowed = 0;
  if (d_cont > 0) {
    allowed = hlglm::max_bins(n, p, d_cont, safety);
    for (const auto& e : plan) {
      if (e.kind != "binned" || !e.edges.empty()) continue;
      if (e.levels > allowed && !o.force)
        fail(ErrorCode::infeasible_lattice,
             "dim '" + e.name + "' requests " + std::to_string(e.levels) +
                 " bins but the budget allows " + std::to_string(allowed) +
                 " (n=" + std::to_string(n) + ", p=" + std::to_string(p) +
                 ", continuous dims=" + std::to_string(d_cont) +
                 ", safety=" + fmt(safety) + "); rerun with --force to keep");
    }
  }

  const hlglm::LatticeSpec lattice = build_lattice(plan, table);
  std::vector<std::vector<std::string>> rows;
  int worst_levels = 0;
  for (int i = 0; i < lattice.dim_count(); ++i) {
    const hlglm::LatticeDim& d = lattice.dim(i);
    worst_levels = std::max(worst_levels, d.levels);
    std::string detail;
    if (d.kind == hlglm::DimKind::binned_continuous) {
      detail = "edges:";
      for (double e : d.edges) detail += " " + fmt(e);
    } else {
      detail = std::to_string(d.labels.size()) + " labels";
    }
    rows.push_back({d.name,
                    d.kind == hlglm::DimKind::categorical ? "categorical"
                                                          : "binned",
                    std::to_string(d.levels), detail});
  }
  print_table(std::cout, {"dim", "kind", "levels", "detail"}, rows);
  const double gamma =
      d_cont > 0 ? hlglm::bin_budget_ratio(n, p, d_cont, worst_levels) : 0.0;
  std::cout << "\n  rows: " << n << "   cells: " << lattice.cell_count()
            << "   bin budget (allowed per continuous dim): "
            << (d_cont > 0 ? std::to_string(allowed) : std::string("n/a"))
            << "   occupancy ratio: " << fmt(gamma) << "\n";

  json results;
  results["rows"] = n;
  results["cells"] = lattice.cell_count();
  results["allowed_bins"] = allowed;
  results["occupancy_ratio"] = gamma;
  results["lattice"] = hlglm::lattice_to_json(lattice);
  if (!o.out.empty()) {
    std::ofstream out(o.out, std::ios::trunc);
    if (!out) fail(ErrorCode::ingest_error, "cannot write '" + o.out + "'");
    out << hlglm::lattice_to_json(lattice).dump(2) << "\n";
  }
  write_report(o.report, "bin", cfg, results);
}

// ---- fit -------------------------------------------------------------------

void run_fit(const CommonOpts& o) {
  std::vector<std::string> problems;
  json cfg = load_config(o.config, problems);
  const hlglm::FitConfig fc = fit_from_config(cfg, problems);
  const RegChoice reg = reg_from_config(cfg, problems);
  const std::vector<LatticePlanEntry> plan = lattice_plan(cfg, problems);
  abort_on(problems);
  // Truncation feasibility depends only on the configured lattice; refuse
  // impossible orders before reading any data.
  const int d = static_cast<int>(plan.size());
  if (fc.k_intercept() > d || fc.k_coeff() > d)
    fail(ErrorCode::invalid_truncation,
         "truncation " +
             std::to_string(std::max(fc.k_intercept(), fc.k_coeff())) +
             " exceeds the " + std::to_string(d) + " lattice dims");
  echo_config(cfg, "fit");

  Pipeline pl = ingest_with_config(cfg, o.data, problems);
  hlglm::FittedModel m = fit_with_scheme(pl, reg, fc);
  print_fit_summary(m);

  hlglm::ModelArtifact art;
  art.model = std::move(m);
  art.zscore = pl.ingest.stats;
  art.schema = pl.schema;
  art.config_hash = hlglm::fnv1a_hex(cfg.dump());
  art.tool = kToolTag;
  if (!o.out.empty()) {
    hlglm::save_model(art, o.out);
    std::cout << "\n  model written to " << o.out << "\n";
  }
  write_report(o.report, "fit", cfg,
               fit_results_json(art.model, pl.ingest.report));
}

// ---- eval ------------------------------------------------------------------

void run_eval(const CommonOpts& o) {
  std::vector<std::string> problems;
  json cfg = load_config(o.config, problems);
  const int draws = checked<int>(cfg.at("eval"), "waic_draws", 0, 1000000,
                                 "eval", problems);
  const std::uint64_t seed = cfg.at("eval").value("seed", 0ull);
  abort_on(problems);
  echo_config(cfg, "eval");

  const hlglm::ModelArtifact art = hlglm::load_model(o.model);
  hlglm::IngestResult ing =
      hlglm::ingest_csv(o.data, art.schema, art.model.lattice,
                        art.model.family, &art.zscore, true);
  const double nll = hlglm::mean_nll(art.model, ing.data);

  json results;
  results["n"] = ing.data.n();
  results["mean_nll"] = nll;
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"rows scored", std::to_string(ing.data.n())});
  rows.push_back({"mean nll", fmt(nll)});
  if (draws > 0) {
    const hlglm::WaicReport w = hlglm::waic(art.model, ing.data, draws, seed);
    results["waic_total"] = w.total;
    results["waic_lppd_term"] = w.lppd_term;
    results["waic_penalty_term"] = w.penalty_term;
    results["waic_draws"] = w.draws;
    rows.push_back({"waic total", fmt(w.total)});
    rows.push_back({"waic lppd term", fmt(w.lppd_term)});
    rows.push_back({"waic penalty term", fmt(w.penalty_term)});
    rows.push_back({"waic per-obs", fmt(w.total / ing.data.n())});
  }
  print_table(std::cout, {"metric", "value"}, rows);
  if (!o.out.empty()) {
    std::vector<std::vector<std::string>> csv;
    for (auto it = results.begin(); it != results.end(); ++it)
      csv.push_back({it.key(), it.value().dump()});
    write_csv(o.out, {"metric", "value"}, csv);
  }
  write_report(o.report, "eval", cfg, results);
}

// ---- select-order ----------------------------------------------------------

void run_select_order(const CommonOpts& o) {
  std::vector<std::string> problems;
  json cfg = load_config(o.config, problems);
  hlglm::FitConfig fc = fit_from_config(cfg, problems);
  const RegChoice reg = reg_from_config(cfg, problems);
  const std::vector<LatticePlanEntry> plan = lattice_plan(cfg, problems);
  const int kmax =
      checked<int>(cfg.at("select"), "kmax", 1, 64, "select", problems);
  const int draws = checked<int>(cfg.at("eval"), "waic_draws", 100, 1000000,
                                 "eval", problems);
  const std::uint64_t eval_seed = cfg.at("eval").value("seed", 0ull);
  abort_on(problems);
  const int d = static_cast<int>(plan.size());
  if (kmax > d)
    fail(ErrorCode::invalid_truncation,
         "select.kmax " + std::to_string(kmax) + " exceeds the " +
             std::to_string(d) + " lattice dims");
  echo_config(cfg, "select-order");

  Pipeline pl = ingest_with_config(cfg, o.data, problems);
  std::optional<hlglm::IngestResult> test;
  if (!o.test.empty())
    test = hlglm::ingest_csv(o.test, pl.schema, pl.lattice, pl.family,
                             &pl.ingest.stats, true);

  std::vector<hlglm::FittedModel> fits;
  std::vector<double> waic_totals, test_loss;
  for (int k = 0; k <= kmax; ++k) {
    hlglm::FitConfig fck = fc;
    fck.truncation = k;
    fck.truncation_intercept = -1;
    fck.truncation_coeff = -1;
    fits.push_back(fit_with_scheme(pl, reg, fck));
    waic_totals.push_back(
        hlglm::waic(fits.back(), pl.ingest.data, draws,
                    hlglm::derive_seed(eval_seed, static_cast<std::uint64_t>(k)))
            .total);
    if (test)
      test_loss.push_back(hlglm::mean_nll(fits.back(), test->data));
  }
  const std::vector<double> delta = hlglm::generalization_gap(waic_totals);

  // Keep adding orders while each one lowers the functional score.
  int selected = 0;
  for (int k = 1; k <= kmax; ++k) {
    if (delta[static_cast<std::size_t>(k - 1)] < 0.0)
      selected = k;
    else
      break;
  }

  json results;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::vector<std::string>> csv;
  for (int k = 0; k <= kmax; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    std::vector<std::string> row{
        std::to_string(k), fmt(waic_totals[ku]),
        k > 0 ? fmt(delta[ku - 1]) : std::string("-"),
        test ? fmt(test_loss[ku]) : std::string("-")};
    rows.push_back(row);
    csv.push_back({std::to_string(k), fmt(waic_totals[ku]),
                   k > 0 ? fmt(delta[ku - 1]) : "",
                   test ? fmt(test_loss[ku]) : ""});
  }
  print_table(std::cout, {"order", "score", "delta", "test nll"}, rows);
  std::cout << "\n  selected order: " << selected << "\n";
  results["orders"] = json::array();
  for (int k = 0; k <= kmax; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    json row;
    row["order"] = k;
    row["waic_total"] = waic_totals[ku];
    if (k > 0) row["delta"] = delta[ku - 1];
    if (test) row["test_nll"] = test_loss[ku];
    results["orders"].push_back(row);
  }
  results["selected_order"] = selected;

  try {
    const double rho = hlglm::estimate_rho(fits);
    const double sigma = fits[0].plan.sigma;
    const double kstar = hlglm::critical_order(
        static_cast<double>(pl.ingest.data.n()), sigma * sigma,
        static_cast<double>(pl.lattice.dim(0).levels), rho);
    const int k_round = std::clamp(static_cast<int>(std::llround(kstar)), 0,
                                   pl.lattice.dim_count());
    const double xi =
        hlglm::correlation_length(pl.lattice.dim_count(), k_round,
                                  pl.lattice.dim(0).levels, rho);
    std::cout << "  decay estimate rho: " << fmt(rho)
              << "   crossover order: " << fmt(kstar) << " (bracket ["
              << std::max(0, static_cast<int>(std::floor(kstar))) << ", "
              << static_cast<int>(std::ceil(kstar))
              << "])   transition width: " << fmt(xi) << "\n";
    results["rho_hat"] = rho;
    results["kstar"] = kstar;
    results["xi"] = xi;
  } catch (const hlglm::Error& e) {
    std::cout << "  flow diagnostics unavailable: " << e.what() << "\n";
    results["flow_error"] = e.what();
  }
  if (!o.out.empty())
    write_csv(o.out, {"order", "score", "delta", "test_nll"}, csv);
  write_report(o.report, "select-order", cfg, results);
}

// ---- stack -----------------------------------------------------------------

void run_stack(const CommonOpts& o) {
  std::vector<std::string> problems;
  json cfg = load_config(o.config, problems);
  hlglm::StackingConfig sc;
  sc.truncation =
      checked<int>(cfg.at("stack"), "truncation", 0, 64, "stack", problems);
  sc.leverage_cap = checked<double>(cfg.at("stack"), "leverage_cap", 1e-6,
                                    0.999999, "stack", problems);
  sc.ridge =
      checked<double>(cfg.at("stack"), "ridge", 0.0, 1e6, "stack", problems);
  sc.opt = fit_from_config(cfg, problems);
  if (o.models.size() < 2)
    problems.push_back("stacking needs at least two --models");
  abort_on(problems);
  echo_config(cfg, "stack");

  std::vector<hlglm::ModelArtifact> arts;
  for (const std::string& path : o.models)
    arts.push_back(hlglm::load_model(path));
  const std::string fam0 = hlglm::family_name(arts[0].model.family.family);
  for (const auto& a : arts) {
    if (hlglm::family_name(a.model.family.family) != fam0)
      fail(ErrorCode::config_error,
           "base models disagree on the family; cannot stack");
    if (a.schema.response != arts[0].schema.response)
      fail(ErrorCode::config_error,
           "base models disagree on the response column; cannot stack");
  }

  Eigen::MatrixXd base_logits;
  Eigen::VectorXd y;
  std::int64_t n = -1;
  for (std::size_t mi = 0; mi < arts.size(); ++mi) {
    hlglm::IngestResult ing =
        hlglm::ingest_csv(o.data, arts[mi].schema, arts[mi].model.lattice,
                          arts[mi].model.family, &arts[mi].zscore, true);
    if (ing.report.rows_dropped_missing_lattice > 0)
      fail(ErrorCode::config_error,
           "base model " + o.models[mi] +
               " drops rows on this data; stacking needs aligned rows");
    if (n < 0) {
      n = ing.data.n();
      base_logits.resize(n, static_cast<Eigen::Index>(arts.size()));
      y = ing.data.y;
    } else if (ing.data.n() != n) {
      fail(ErrorCode::config_error,
           "base models disagree on usable rows; stacking needs aligned rows");
    }
    base_logits.col(static_cast<Eigen::Index>(mi)) =
        hlglm::predict_eta(arts[mi].model, ing.data.X, ing.data.cells);
  }

  // Stacking weights live on their own (possibly coarser) lattice: the
  // config's lattice when given, the first base model's otherwise.
  hlglm::LatticeSpec stack_lattice;
  std::vector<hlglm::CellIndex> stack_cells;
  if (!cfg.at("lattice").empty()) {
    const std::vector<LatticePlanEntry> plan = lattice_plan(cfg, problems);
    abort_on(problems);
    const hlglm::CsvTable table = hlglm::read_csv(o.data);
    stack_lattice = build_lattice(plan, table);
    hlglm::ColumnSchema schema = arts[0].schema;
    hlglm::IngestResult ing =
        hlglm::ingest_csv(o.data, schema, stack_lattice,
                          arts[0].model.family, &arts[0].zscore, true);
    if (ing.data.n() != n)
      fail(ErrorCode::config_error,
           "stacking lattice drops rows; stacking needs aligned rows");
    stack_cells = ing.data.cells;
  } else {
    stack_lattice = arts[0].model.lattice;
    hlglm::IngestResult ing =
        hlglm::ingest_csv(o.data, arts[0].schema, stack_lattice,
                          arts[0].model.family, &arts[0].zscore, true);
    stack_cells = ing.data.cells;
  }

  const hlglm::StackingFit sf =
      hlglm::fit_stacking(base_logits, y, stack_cells, stack_lattice,
                          arts[0].model.family, sc);

  json results;
  results["loo_loss"] = sf.loo_loss;
  results["steps"] = sf.steps;
  results["converged"] = sf.converged;
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"loo loss", fmt(sf.loo_loss)});
  rows.push_back({"steps", std::to_string(sf.steps)});
  rows.push_back({"converged", sf.converged ? "yes" : "no"});
  print_table(std::cout, {"metric", "value"}, rows);

  const std::int64_t cells_to_show =
      std::min<std::int64_t>(stack_lattice.cell_count(), 32);
  std::vector<std::string> head{"cell"};
  for (const auto& path : o.models) head.push_back(path);
  std::vector<std::vector<std::string>> wrows;
  json wcells = json::array();
  for (std::int64_t flat = 0; flat < stack_lattice.cell_count(); ++flat) {
    const hlglm::CellIndex cell = stack_lattice.from_flat(flat);
    const Eigen::VectorXd w = hlglm::stack_weights(sf.model, cell);
    json jc;
    jc["cell"] = flat;
    jc["weights"] = std::vector<double>(w.data(), w.data() + w.size());
    wcells.push_back(jc);
    if (flat < cells_to_show) {
      std::vector<std::string> row{std::to_string(flat)};
      for (Eigen::Index k = 0; k < w.size(); ++k) row.push_back(fmt(w[k]));
      wrows.push_back(row);
    }
  }
  std::cout << "\n";
  print_table(std::cout, head, wrows);
  if (stack_lattice.cell_count() > cells_to_show)
    std::cout << "  ... " << (stack_lattice.cell_count() - cells_to_show)
              << " more cells in the report/output\n";
  results["cell_weights"] = wcells;

  if (!o.out.empty()) {
    json out;
    out["models"] = o.models;
    out["family"] = fam0;
    out["lattice"] = hlglm::lattice_to_json(stack_lattice);
    out["truncation"] = sf.model.weights.truncation();
    json tensors = json::array();
    for (std::size_t i = 0; i < sf.model.weights.components().size(); ++i) {
      const Eigen::MatrixXd& t =
          sf.model.weights.tensor(static_cast<int>(i));
      json jt = json::array();
      for (Eigen::Index r = 0; r < t.rows(); ++r) {
        json jr = json::array();
        for (Eigen::Index c = 0; c < t.cols(); ++c) jr.push_back(t(r, c));
        jt.push_back(jr);
      }
      tensors.push_back(jt);
    }
    out["weight_tensors"] = tensors;
    out["loo_loss"] = sf.loo_loss;
    std::ofstream f(o.out, std::ios::trunc);
    if (!f) fail(ErrorCode::ingest_error, "cannot write '" + o.out + "'");
    f << out.dump(2) << "\n";
  }
  write_report(o.report, "stack", cfg, results);
}

// ---- simulate ---------------------------------------------------------------

void run_simulate(const CommonOpts& o) {
  std::vector<std::string> problems;
  json cfg = load_config(o.config, problems);
  const json& s = cfg.at("simulate");
  const std::string harness = s.value("harness", "generate");
  const std::set<std::string> known{"generate", "reg-compare", "rg-flow",
                                    "replica"};
  if (!known.count(harness))
    problems.push_back("'simulate.harness' must be one of generate, "
                       "reg-compare, rg-flow, replica");
  hlglm::FitConfig fc = fit_from_config(cfg, problems);
  abort_on(problems);
  echo_config(cfg, "simulate");
  json results;

  if (harness == "generate") {
    if (o.out.empty())
      fail(ErrorCode::config_error, "simulate generate needs --out for the CSV");
    const std::string generator = s.value("generator", "hierarchical");
    hlglm::SyntheticData gen;
    if (generator == "hierarchical") {
      hlglm::FamilySpec fam = family_from_config(cfg, problems);
      abort_on(problems);
      gen = hlglm::gen_hierarchical(
          s.at("d").get<int>(), s.at("levels").get<int>(),
          s.at("n").get<std::int64_t>(), s.at("rho").get<double>(),
          s.at("sigma").get<double>(), s.at("p").get<int>(), fam,
          s.at("seed").get<std::uint64_t>());
    } else if (generator == "prevalence") {
      gen = hlglm::gen_logistic_prevalence(
          s.at("d").get<int>(), s.at("levels").get<int>(),
          s.at("n").get<std::int64_t>(), s.at("prevalence").get<double>(),
          s.at("effect_sd").get<double>(), s.at("seed").get<std::uint64_t>());
    } else {
      fail(ErrorCode::config_error,
           "'simulate.generator' must be hierarchical or prevalence");
    }
    const hlglm::LatticeSpec& lat = gen.truth.lattice;
    std::vector<std::string> head;
    for (int j = 0; j < lat.dim_count(); ++j) head.push_back(lat.dim(j).name);
    for (int c = 1; c < gen.data.p(); ++c)
      head.push_back("x" + std::to_string(c));
    head.push_back("y");
    std::vector<std::vector<std::string>> rows;
    rows.reserve(static_cast<std::size_t>(gen.data.n()));
    for (std::int64_t i = 0; i < gen.data.n(); ++i) {
      std::vector<std::string> row;
      const hlglm::CellIndex& cell = gen.data.cells[static_cast<std::size_t>(i)];
      for (int j = 0; j < lat.dim_count(); ++j)
        row.push_back(
            lat.dim(j).labels[static_cast<std::size_t>(cell.kappa[j])]);
      for (int c = 1; c < gen.data.p(); ++c) {
        std::ostringstream v;
        v.precision(17);
        v << gen.data.X(i, c);
        row.push_back(v.str());
      }
      std::ostringstream v;
      v.precision(17);
      v << gen.data.y[i];
      row.push_back(v.str());
      rows.push_back(std::move(row));
    }
    write_csv(o.out, head, rows);
    std::cout << "  wrote " << gen.data.n() << " rows to " << o.out << "\n";
    results["rows"] = gen.data.n();
    results["cells"] = lat.cell_count();
  } else if (harness == "reg-compare") {
    hlglm::RegCompareConfig rc;
    rc.d = s.at("d").get<int>();
    rc.levels = s.at("levels").get<int>();
    rc.n_train = s.at("n_train").get<std::int64_t>();
    rc.n_test = s.at("n_test").get<std::int64_t>();
    rc.rho = s.at("rho").get<double>();
    rc.sigma = s.at("sigma").get<double>();
    rc.p = s.at("p").get<int>();
    rc.kmax = s.at("kmax").get<int>();
    rc.replications = s.at("replications").get<int>();
    rc.seed = s.at("seed").get<std::uint64_t>();
    rc.fit = fc;
    const hlglm::RegComparisonResult r =
        hlglm::run_regularization_comparison(rc);
    std::vector<std::vector<std::string>> rows, csv;
    for (std::size_t si = 0; si < r.schemes.size(); ++si)
      for (std::size_t k = 0; k < r.improvement[si].size(); ++k) {
        const hlglm::MetricCell& cell = r.improvement[si][k];
        rows.push_back({r.schemes[si], std::to_string(k),
                        fmt(cell.mean), fmt(cell.se)});
        csv.push_back({r.schemes[si], std::to_string(k), fmt(cell.mean),
                       fmt(cell.se)});
      }
    print_table(std::cout,
                {"scheme", "order", "mean ll improvement", "stderr"}, rows);
    if (!o.out.empty())
      write_csv(o.out, {"scheme", "order", "mean_improvement", "stderr"},
                csv);
    results["schemes"] = r.schemes;
    json imp = json::array();
    for (std::size_t si = 0; si < r.schemes.size(); ++si)
      for (std::size_t k = 0; k < r.improvement[si].size(); ++k)
        imp.push_back({{"scheme", r.schemes[si]},
                       {"order", k},
                       {"mean", r.improvement[si][k].mean},
                       {"se", r.improvement[si][k].se}});
    results["improvement"] = imp;
  } else if (harness == "rg-flow") {
    hlglm::RgFlowConfig rc;
    rc.d = s.at("d").get<int>();
    rc.levels = s.at("levels").get<int>();
    rc.n_train = s.at("n_train").get<std::int64_t>();
    rc.n_test = s.at("n_test").get<std::int64_t>();
    rc.rho = s.at("rho").get<double>();
    rc.sigma = s.at("sigma").get<double>();
    rc.p = s.at("p").get<int>();
    rc.kmax = s.at("kmax").get<int>();
    rc.replications = s.at("replications").get<int>();
    rc.waic_draws = s.at("waic_draws").get<int>();
    rc.seed = s.at("seed").get<std::uint64_t>();
    rc.fit = fc;
    const hlglm::RgFlowResult r = hlglm::run_rg_flow(rc);
    std::vector<std::vector<std::string>> rows, csv;
    for (const hlglm::RgOrderRow& row : r.aggregate.orders) {
      const std::string frac =
          row.order > 0
              ? fmt(r.frac_delta_neg[static_cast<std::size_t>(row.order - 1)])
              : std::string("-");
      rows.push_back({std::to_string(row.order), fmt(row.waic_total),
                      row.order > 0 ? fmt(row.delta_s) : std::string("-"),
                      frac, fmt(row.test_loss)});
      csv.push_back({std::to_string(row.order), fmt(row.waic_total),
                     row.order > 0 ? fmt(row.delta_s) : "", frac,
                     fmt(row.test_loss)});
    }
    print_table(std::cout,
                {"order", "mean score", "delta", "frac delta<0", "test nll"},
                rows);
    if (r.aggregate.flow_defined)
      std::cout << "\n  rho: " << fmt(r.aggregate.rho_hat)
                << "   crossover order: " << fmt(r.aggregate.kstar)
                << " (bracket [" << r.aggregate.kstar_lo << ", "
                << r.aggregate.kstar_hi << "])   transition width: "
                << fmt(r.aggregate.xi) << "\n";
    else
      std::cout << "\n  flow estimates undefined for this run\n";
    std::cout << "  test-loss strictly ordered in "
              << fmt(100.0 * r.frac_ordered) << "% of replications\n";
    if (!o.out.empty())
      write_csv(o.out,
                {"order", "mean_score", "delta", "frac_delta_neg",
                 "test_nll"},
                csv);
    results["rho_hat"] = r.aggregate.rho_hat;
    results["flow_defined"] = r.aggregate.flow_defined;
    results["kstar"] = r.aggregate.kstar;
    results["kstar_lo"] = r.aggregate.kstar_lo;
    results["kstar_hi"] = r.aggregate.kstar_hi;
    results["xi"] = r.aggregate.xi;
    results["frac_ordered"] = r.frac_ordered;
    results["frac_delta_neg"] = r.frac_delta_neg;
    json orders = json::array();
    for (const hlglm::RgOrderRow& row : r.aggregate.orders)
      orders.push_back({{"order", row.order},
                        {"waic_total", row.waic_total},
                        {"delta", row.delta_s},
                        {"test_nll", row.test_loss}});
    results["orders"] = orders;
  } else {  // replica
    const hlglm::ReplicaCheck r = hlglm::run_replica_check(
        s.at("design_cols").get<int>(), s.at("design_rows").get<std::int64_t>(),
        s.at("lambda2").get<double>(), s.at("sigma2").get<double>(),
        s.at("draws").get<int>(), s.at("seed").get<std::uint64_t>());
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"predicted df", fmt(r.predicted)});
    rows.push_back({"monte carlo df", fmt(r.mc_mean)});
    rows.push_back({"mc stderr", fmt(r.mc_stderr)});
    rows.push_back({"draws", std::to_string(r.draws)});
    rows.push_back({"p/n", fmt(r.gamma)});
    print_table(std::cout, {"metric", "value"}, rows);
    if (r.gamma_warning)
      std::cout << "\n  warning: p/n = " << fmt(r.gamma)
                << " approaches 1; the closed-form df is unreliable here\n";
    if (!o.out.empty())
      write_csv(o.out, {"metric", "value"},
                {{"predicted_df", fmt(r.predicted)},
                 {"mc_df", fmt(r.mc_mean)},
                 {"mc_stderr", fmt(r.mc_stderr)},
                 {"draws", std::to_string(r.draws)},
                 {"gamma", fmt(r.gamma)}});
    results["predicted_df"] = r.predicted;
    results["mc_df"] = r.mc_mean;
    results["mc_stderr"] = r.mc_stderr;
    results["gamma"] = r.gamma;
    results["gamma_warning"] = r.gamma_warning;
  }
  write_report(o.report, "simulate", cfg, results);
}

// ---- predict ----------------------------------------------------------------

void run_predict(const CommonOpts& o) {
  std::vector<std::string> problems;
  json cfg = load_config(o.config, problems);
  abort_on(problems);
  echo_config(cfg, "predict");

  const hlglm::ModelArtifact art = hlglm::load_model(o.model);
  const hlglm::CsvTable table = hlglm::read_csv(o.data);
  const bool has_response = !art.schema.response.empty() &&
                            table.column(art.schema.response) >= 0;
  hlglm::IngestResult ing =
      hlglm::ingest_csv(o.data, art.schema, art.model.lattice,
                        art.model.family, &art.zscore, has_response);
  const hlglm::Predictions pred = hlglm::predict(art.model, ing.data);

  std::vector<std::vector<std::string>> rows;
  rows.reserve(static_cast<std::size_t>(ing.data.n()));
  for (std::int64_t i = 0; i < ing.data.n(); ++i) {
    std::ostringstream e, m;
    e.precision(17);
    m.precision(17);
    e << pred.eta[i];
    m << pred.mu[i];
    rows.push_back({std::to_string(i), e.str(), m.str()});
  }
  if (o.out.empty())
    fail(ErrorCode::config_error, "predict needs --out for the CSV");
  write_csv(o.out, {"row", "eta", "mu"}, rows);
  std::cout << "  wrote " << ing.data.n() << " predictions to " << o.out
            << "\n";

  json results;
  results["rows"] = ing.data.n();
  if (has_response) {
    const double nll = hlglm::mean_nll(art.model, ing.data);
    std::cout << "  mean nll against '" << art.schema.response
              << "': " << fmt(nll) << "\n";
    results["mean_nll"] = nll;
  }
  write_report(o.report, "predict", cfg, results);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical lattice-partitioned GLMs"};
  app.require_subcommand(1);
  CommonOpts o;

  auto add_common = [&](CLI::App* sub, bool needs_data) {
    sub->add_option("--config", o.config, "JSON config file");
    auto* d = sub->add_option("--data", o.data, "input CSV");
    if (needs_data) d->required();
    sub->add_option("--out", o.out, "primary output path");
    sub->add_option("--report", o.report, "write the full JSON report here");
  };

  CLI::App* bin = app.add_subcommand(
      "bin", "plan lattice bins and check the occupancy budget");
  add_common(bin, true);
  bin->add_flag("--force", o.force, "keep bin counts past the budget");

  CLI::App* fit =
      app.add_subcommand("fit", "fit a lattice GLM and save the model");
  add_common(fit, true);

  CLI::App* eval = app.add_subcommand(
      "eval", "score a saved model on a dataset (mean nll, optional WAIC)");
  add_common(eval, true);
  eval->add_option("--model", o.model, "model artifact")->required();

  CLI::App* sel = app.add_subcommand(
      "select-order",
      "sweep interaction orders and pick the largest that still lowers the "
      "score");
  add_common(sel, true);
  sel->add_option("--test", o.test, "held-out CSV for test loss");

  CLI::App* stack = app.add_subcommand(
      "stack", "fit per-cell stacking weights over saved base models");
  add_common(stack, true);
  stack->add_option("--models", o.models, "base model artifacts")
      ->required()
      ->expected(-2);

  CLI::App* sim = app.add_subcommand(
      "simulate", "synthetic data generation and study harnesses");
  add_common(sim, false);

  CLI::App* pred = app.add_subcommand(
      "predict", "apply a saved model to new rows");
  add_common(pred, true);
  pred->add_option("--model", o.model, "model artifact")->required();

  try {
    app.parse(argc, argv);
    if (bin->parsed()) run_bin(o);
    if (fit->parsed()) run_fit(o);
    if (eval->parsed()) run_eval(o);
    if (sel->parsed()) run_select_order(o);
    if (stack->parsed()) run_stack(o);
    if (sim->parsed()) run_simulate(o);
    if (pred->parsed()) run_predict(o);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const hlglm::Error& e) {
    std::cerr << "error [" << hlglm::error_code_name(e.code())
              << "]: " << e.what() << "\n";
    return e.exit_code();
  }
  return 0;
}
