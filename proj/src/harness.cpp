#include "copreg/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "copreg/detail/csv.hpp"
#include "copreg/errors.hpp"
#include "copreg/rng.hpp"
#include "copreg/specfun.hpp"

#ifndef COPREG_BUILD_ID
#define COPREG_BUILD_ID "unknown"
#endif

namespace copreg {

using detail::csv_escape;
using detail::fmt;

std::string_view version_string() { return "0.1.0"; }
std::string_view build_id() { return COPREG_BUILD_ID; }

ModelSpec parse_model_spec(std::string_view tag) {
  ModelSpec m;
  m.tag = std::string(tag);
  if (tag == "glm") {
    m.model = ModelKind::glm;
  } else if (tag == "gee") {
    m.model = ModelKind::gee;
  } else if (tag == "glmm") {
    m.model = ModelKind::glmm;
  } else if (tag.starts_with("gjrm-")) {
    m.model = ModelKind::gjrm;
    m.copula = parse_copula_family(tag.substr(5));
  } else {
    throw ParseError("unknown model '" + std::string(tag) + "' (glm, gee, glmm, gjrm-<copula>)");
  }
  return m;
}

std::vector<ModelSpec> default_models() {
  return {parse_model_spec("glm"), parse_model_spec("gee"), parse_model_spec("glmm"),
          parse_model_spec("gjrm-clayton"), parse_model_spec("gjrm-gaussian")};
}

FitResult fit_model(const ModelSpec& m, const LongitudinalSample& d, ResponseFamily f, LinkFunction link) {
  const Parameterization p{ParamKind::marginal};
  switch (m.model) {
    case ModelKind::glm: return fit_glm(d, f, link, p);
    case ModelKind::gee: return fit_gee(d, f, link, p);
    case ModelKind::glmm: return fit_glmm(d, f, link, p);
    case ModelKind::gjrm: return fit_gjrm(d, f, f, link, *m.copula, p);
  }
  throw DomainError("unknown model");
}

namespace {

std::uint64_t generator_key(Generator g) { return static_cast<std::uint64_t>(g); }

double linspace(double lo, double hi, std::size_t k, std::size_t i) {
  return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(k - 1);
}

}  // namespace

std::vector<GridCell> full_grid(Generator g) {
  std::vector<GridCell> cells;
  switch (g) {
    case Generator::biv_normal:
      // 5 x 5 x 9 over (sigma1, sigma2, rho)
      for (std::size_t a = 0; a < 5; ++a) {
        for (std::size_t b = 0; b < 5; ++b) {
          for (std::size_t c = 0; c < 9; ++c) {
            cells.push_back({cells.size(), TrueScenario::biv_normal(1.0, 2.0, linspace(0.25, 2.5, 5, a),
                                                                    linspace(0.25, 2.5, 5, b), linspace(0.1, 0.9, 9, c))});
          }
        }
      }
      break;
    case Generator::biv_negbin:
      // theta and k on a full 20 x 20 lattice; t1, t2 on coprime strides through the same levels
      for (std::size_t i = 0; i < 400; ++i) {
        auto level = [](std::size_t j) { return linspace(0.2, 5.0, 20, j % 20); };
        cells.push_back({i, TrueScenario::biv_negbin(level(7 * i + 3), level(11 * i + 5), level(i % 20), level(i / 20))});
      }
      break;
    case Generator::biv_gamma:
      for (std::size_t a = 0; a < 20; ++a) {
        for (std::size_t b = 0; b < 20; ++b) {
          const double mu1 = 2.0 + static_cast<double>((a + b) % 20);
          const double sigma = std::sqrt(0.2 + 0.1 * static_cast<double>(a));
          cells.push_back({cells.size(), TrueScenario::biv_gamma(mu1, 1.2 * mu1, sigma, 0.2 + 0.1 * static_cast<double>(b))});
        }
      }
      break;
  }
  return cells;
}

std::vector<GridCell> desk_grid(Generator g) {
  std::vector<GridCell> out;
  for (const GridCell& c : full_grid(g)) {
    if (c.index % 4 == 3) out.push_back(c);
  }
  return out;
}

void ExperimentGrid::validate() const {
  if (cells.empty()) throw DomainError("grid has no cells");
  if (replicates < 1) throw DomainError("replicates must be >= 1");
  if (n_per_timepoint < 10) throw DomainError("n per time point must be >= 10");
  if (models.empty()) throw DomainError("no models requested");
  for (const GridCell& c : cells) {
    if (c.scenario.generator != generator) throw DomainError("cell generator does not match grid");
    c.scenario.validate();
  }
}

ExperimentGrid ExperimentGrid::desk(Generator g) {
  ExperimentGrid e;
  e.generator = g;
  e.cells = desk_grid(g);
  e.models = default_models();
  return e;
}

ExperimentGrid ExperimentGrid::full(Generator g) {
  ExperimentGrid e = desk(g);
  e.cells = full_grid(g);
  return e;
}

double relative_bias_beta_t(double estimate, double truth, LinkKind link) {
  if (link == LinkKind::log) return std::exp(estimate - truth) - 1.0;
  return (estimate - truth) / truth;
}

namespace {

std::string nuisance_string(const FitResult& r) {
  std::string s;
  for (const auto& [k, v] : r.nuisance) {
    if (!s.empty()) s += ';';
    s += k + "=" + fmt(v);
  }
  return s;
}

void fill_from_fit(FitRecord& rec, const FitResult& r, const TrueScenario& s) {
  const std::string second = rec.param == ParamKind::marginal ? "beta2" : "beta_t";
  rec.ok = true;
  rec.mu1_hat = r.mu_hat(1);
  rec.mu2_hat = r.mu_hat(2);
  rec.beta1 = r.estimate("beta1");
  rec.se_beta1 = r.se("beta1");
  rec.beta2 = r.estimate(second);
  rec.se_beta2 = r.se(second);
  rec.rel_bias_mu1 = rec.mu1_hat / s.mean1() - 1.0;
  rec.rel_bias_mu2 = rec.mu2_hat / s.mean2() - 1.0;
  const double bt = rec.param == ParamKind::marginal ? extract_time_effect(r).beta_t : rec.beta2;
  rec.rel_bias_beta_t = relative_bias_beta_t(bt, s.beta_t(), s.link().kind);
  rec.selection = criteria(r);
  rec.nuisance = nuisance_string(r);
  rec.converged = r.converged;
  rec.clipped_points = r.diagnostics.clipped_points;
  rec.clamped_densities = r.diagnostics.clamped_densities;
  rec.hessian_repaired = r.diagnostics.hessian_repaired;
  rec.boundary = r.diagnostics.boundary;
  rec.wall_ms = r.wall_ms;
}

std::vector<FitRecord> run_task(const ExperimentGrid& g, const GridCell& cell, std::size_t rep) {
  const TrueScenario& s = cell.scenario;
  Rng rng = Rng::stream(g.seed, {generator_key(g.generator), cell.index, rep});
  const LongitudinalSample d = sample_scenario(s, g.n_per_timepoint, rng);
  FitRecord base;
  base.generator = g.generator;
  base.cell = cell.index;
  base.replicate = rep;
  base.mu1_true = s.mean1();
  base.mu2_true = s.mean2();
  base.beta_t_true = s.beta_t();
  base.tau_hat = kendall_tau(d.y1, d.y2);
  base.skew1_hat = sample_skewness(d.y1);
  base.skew2_hat = sample_skewness(d.y2);
  if (!std::isfinite(base.tau_hat)) base.tau_hat = 0.0;
  if (!std::isfinite(base.skew1_hat)) base.skew1_hat = 0.0;
  if (!std::isfinite(base.skew2_hat)) base.skew2_hat = 0.0;

  std::vector<FitRecord> out;
  for (const ModelSpec& m : g.models) {
    FitRecord marg = base;
    marg.model_tag = m.tag;
    marg.param = ParamKind::marginal;
    FitRecord te = marg;
    te.param = ParamKind::time_effect;
    try {
      const FitResult r = fit_model(m, d, s.family(), s.link());
      fill_from_fit(marg, r, s);
      fill_from_fit(te, reparameterize(r, ParamKind::time_effect), s);
    } catch (const std::exception& e) {
      marg.ok = te.ok = false;
      marg.reason = te.reason = e.what();
    }
    out.push_back(std::move(marg));
    out.push_back(std::move(te));
  }
  return out;
}

}  // namespace

ScenarioReport run_grid(const ExperimentGrid& g, std::size_t workers, const ProgressFn& progress) {
  g.validate();
  if (workers < 1) throw DomainError("workers must be >= 1");
  const std::size_t n_tasks = g.cells.size() * g.replicates;
  std::vector<std::vector<FitRecord>> results(n_tasks);
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex progress_mu;
  auto worker = [&]() {
    for (std::size_t t = next++; t < n_tasks; t = next++) {
      results[t] = run_task(g, g.cells[t / g.replicates], t % g.replicates);
      const std::size_t k = ++done;
      if (progress) {
        std::lock_guard lock(progress_mu);
        progress(k, n_tasks);
      }
    }
  };
  const std::size_t n_threads = std::min(workers, n_tasks);
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < n_threads; ++i) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();

  ScenarioReport rep;
  rep.expected_records = n_tasks * g.models.size() * 2;
  for (auto& v : results) {
    for (FitRecord& r : v) {
      if (!r.ok) ++rep.failures;
      rep.records.push_back(std::move(r));
    }
  }
  if (rep.records.size() != rep.expected_records) throw DomainError("run_grid: record count mismatch");
  return rep;
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

namespace {

void write_meta(std::ostream& os, std::string_view what, const CsvMeta& meta) {
  os << "# copreg " << version_string() << " build " << build_id() << " seed " << meta.seed << " | " << what << '\n';
  if (!meta.note.empty()) os << "# " << meta.note << '\n';
}

constexpr const char* kRecordHeader =
    "generator,cell,replicate,model,param,status,reason,mu1_true,mu2_true,beta_t_true,tau_hat,skew1_hat,"
    "skew2_hat,mu1_hat,mu2_hat,beta1,se_beta1,beta2,se_beta2,rel_bias_mu1,rel_bias_mu2,rel_bias_beta_t,"
    "loglik,edf,aic,gaic4,bic,n_obs,nuisance,converged,clipped_points,clamped_densities,hessian_repaired,boundary";

}  // namespace

void write_records_csv(std::ostream& os, const std::vector<FitRecord>& records, const CsvMeta& meta) {
  write_meta(os, "records: one row per (cell, replicate, model, parameterization); bias is relative (estimate/truth - 1)",
             meta);
  os << kRecordHeader << '\n';
  for (const FitRecord& r : records) {
    os << to_string(r.generator) << ',' << r.cell << ',' << r.replicate << ',' << r.model_tag << ','
       << to_string(r.param) << ',' << (r.ok ? "ok" : "failed") << ',' << csv_escape(r.reason) << ','
       << fmt(r.mu1_true) << ',' << fmt(r.mu2_true) << ',' << fmt(r.beta_t_true) << ',' << fmt(r.tau_hat) << ','
       << fmt(r.skew1_hat) << ',' << fmt(r.skew2_hat);
    if (r.ok) {
      const SelectionRow& s = r.selection;
      os << ',' << fmt(r.mu1_hat) << ',' << fmt(r.mu2_hat) << ',' << fmt(r.beta1) << ',' << fmt(r.se_beta1) << ','
         << fmt(r.beta2) << ',' << fmt(r.se_beta2) << ',' << fmt(r.rel_bias_mu1) << ',' << fmt(r.rel_bias_mu2) << ','
         << fmt(r.rel_bias_beta_t) << ',' << fmt(s.loglik) << ',' << fmt(s.edf) << ',' << fmt(s.aic) << ','
         << fmt(s.gaic_k) << ',' << fmt(s.bic) << ',' << s.n_obs << ',' << csv_escape(r.nuisance) << ','
         << int(r.converged) << ',' << r.clipped_points << ',' << r.clamped_densities << ',' << int(r.hessian_repaired)
         << ',' << int(r.boundary);
    } else {
      os << std::string(21, ',');
    }
    os << '\n';
  }
}

std::vector<FitRecord> read_records_csv(std::istream& is) {
  using detail::parse_double;
  using detail::parse_opt_double;
  std::vector<FitRecord> out;
  std::string line;
  bool header = false;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != kRecordHeader) throw ParseError("records: unexpected header at line " + std::to_string(line_no));
      header = true;
      continue;
    }
    const auto f = detail::csv_split(line);
    if (f.size() != 34) throw ParseError("records: line " + std::to_string(line_no) + " has " + std::to_string(f.size()) + " fields, expected 34");
    try {
      FitRecord r;
      r.generator = parse_generator(f[0]);
      r.cell = std::stoul(f[1]);
      r.replicate = std::stoul(f[2]);
      r.model_tag = f[3];
      r.param = parse_param_kind(f[4]);
      r.ok = f[5] == "ok";
      r.reason = f[6];
      r.mu1_true = parse_double(f[7]);
      r.mu2_true = parse_double(f[8]);
      r.beta_t_true = parse_double(f[9]);
      r.tau_hat = parse_double(f[10]);
      r.skew1_hat = parse_double(f[11]);
      r.skew2_hat = parse_double(f[12]);
      if (r.ok) {
        r.mu1_hat = parse_double(f[13]);
        r.mu2_hat = parse_double(f[14]);
        r.beta1 = parse_double(f[15]);
        r.se_beta1 = parse_double(f[16]);
        r.beta2 = parse_double(f[17]);
        r.se_beta2 = parse_double(f[18]);
        r.rel_bias_mu1 = parse_double(f[19]);
        r.rel_bias_mu2 = parse_double(f[20]);
        r.rel_bias_beta_t = parse_double(f[21]);
        r.selection.model_tag = r.model_tag;
        r.selection.loglik = parse_opt_double(f[22]);
        r.selection.edf = parse_double(f[23]);
        r.selection.aic = parse_opt_double(f[24]);
        r.selection.gaic_k = parse_opt_double(f[25]);
        r.selection.bic = parse_opt_double(f[26]);
        r.selection.n_obs = std::stoul(f[27]);
        r.nuisance = f[28];
        r.converged = f[29] == "1";
        r.clipped_points = std::stoul(f[30]);
        r.clamped_densities = std::stoul(f[31]);
        r.hessian_repaired = f[32] == "1";
        r.boundary = f[33] == "1";
      }
      out.push_back(std::move(r));
    } catch (const ParseError& e) {
      throw ParseError("records: line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::exception& e) {
      throw ParseError("records: line " + std::to_string(line_no) + ": malformed field (" + e.what() + ")");
    }
  }
  if (!header) throw ParseError("records: missing header");
  return out;
}

void write_timings_csv(std::ostream& os, const std::vector<FitRecord>& records, const CsvMeta& meta) {
  write_meta(os, "timings: wall time per fit (varies between runs)", meta);
  os << "generator,cell,replicate,model,wall_ms\n";
  for (const FitRecord& r : records) {
    if (r.param != ParamKind::marginal) continue;
    os << to_string(r.generator) << ',' << r.cell << ',' << r.replicate << ',' << r.model_tag << ','
       << (r.ok ? fmt(r.wall_ms) : std::string()) << '\n';
  }
}

std::vector<CellTruth> cell_truths(const ExperimentGrid& g, std::size_t mc_n, std::size_t workers) {
  std::vector<CellTruth> out(g.cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < out.size(); i = next++) {
      TruthOptions o;
      o.mc_n = mc_n;
      o.compute_se = false;
      o.n_obs = g.n_per_timepoint;
      o.seed = g.seed;
      out[i] = {g.generator, g.cells[i].index, g.cells[i].scenario, scenario_truth(g.cells[i].scenario, o)};
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < std::max<std::size_t>(workers, 1); ++i) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  return out;
}

void write_cells_csv(std::ostream& os, const std::vector<CellTruth>& cells, const CsvMeta& meta) {
  write_meta(os, "cells: per-cell truth; tau by closed form (normal) or Monte Carlo", meta);
  os << "generator,cell,scenario,mu1,mu2,beta1,beta2,beta_t,tau,tau_from_mc,skew1,skew2,pearson_rho\n";
  for (const CellTruth& c : cells) {
    const TrueScenario& s = c.scenario;
    os << to_string(c.generator) << ',' << c.cell << ',' << csv_escape(s.describe()) << ',' << fmt(s.mean1()) << ','
       << fmt(s.mean2()) << ',' << fmt(s.beta1()) << ',' << fmt(s.beta2()) << ',' << fmt(s.beta_t()) << ','
       << fmt(c.truth.tau) << ',' << int(c.truth.tau_from_mc) << ',' << fmt(c.truth.skew1) << ','
       << fmt(c.truth.skew2) << ',' << fmt(c.truth.pearson_rho) << '\n';
  }
}

}  // namespace copreg
