#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#include "copreg/detail/csv.hpp"
#include "copreg/errors.hpp"
#include "copreg/harness.hpp"
#include "copreg/rng.hpp"

namespace copreg {

using detail::csv_escape;
using detail::fmt;

TrueScenario benchmark_scenario() {
  // top corner of the gamma grid: sigma^2 = 2.1, theta = 2.1
  const double mu1 = 2.0 + static_cast<double>((19 + 19) % 20);
  return TrueScenario::biv_gamma(mu1, 1.2 * mu1, std::sqrt(2.1), 2.1);
}

std::vector<BenchRow> benchmark_runtimes(const std::vector<std::size_t>& sizes, std::size_t repeats,
                                         const std::vector<ModelSpec>& models, std::uint64_t seed) {
  if (repeats < 1) throw DomainError("bench: repeats must be >= 1");
  const TrueScenario s = benchmark_scenario();
  std::vector<BenchRow> rows;
  for (std::size_t n : sizes) {
    std::vector<BenchRow> block(models.size());
    for (std::size_t m = 0; m < models.size(); ++m) {
      block[m].model_tag = models[m].tag;
      block[m].n = n;
      block[m].repeats = repeats;
    }
    for (std::size_t r = 0; r < repeats; ++r) {
      Rng rng = Rng::stream(seed, {n, r});
      const LongitudinalSample d = sample_scenario(s, n, rng);
      for (std::size_t m = 0; m < models.size(); ++m) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
          (void)fit_model(models[m], d, s.family(), s.link());
        } catch (const std::exception&) {
          // timed regardless: a failed fit still costs its run time
        }
        const std::chrono::duration<double, std::milli> dt = std::chrono::steady_clock::now() - t0;
        block[m].samples_ms.push_back(dt.count());
      }
    }
    for (BenchRow& b : block) {
      double sum = 0.0;
      for (double v : b.samples_ms) sum += v;
      b.mean_ms = sum / static_cast<double>(b.samples_ms.size());
      double ss = 0.0;
      for (double v : b.samples_ms) ss += (v - b.mean_ms) * (v - b.mean_ms);
      b.sd_ms = b.samples_ms.size() > 1 ? std::sqrt(ss / static_cast<double>(b.samples_ms.size() - 1)) : 0.0;
      rows.push_back(std::move(b));
    }
  }
  return rows;
}

std::string hardware_description() {
  std::string cpu = "unknown cpu";
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.starts_with("model name")) {
      const auto pos = line.find(':');
      if (pos != std::string::npos) cpu = line.substr(pos + 2);
      break;
    }
  }
  return cpu + ", " + std::to_string(std::thread::hardware_concurrency()) + " hardware threads";
}

void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows, const CsvMeta& meta) {
  os << "# copreg " << version_string() << " build " << build_id() << " seed " << meta.seed
     << " | runtimes on the extreme gamma scenario; hardware: " << hardware_description() << '\n';
  if (!meta.note.empty()) os << "# " << meta.note << '\n';
  os << "model,n,repeats,mean_ms,sd_ms,samples_ms\n";
  for (const BenchRow& r : rows) {
    std::string samples;
    for (double v : r.samples_ms) {
      if (!samples.empty()) samples += ';';
      samples += fmt(v);
    }
    os << r.model_tag << ',' << r.n << ',' << r.repeats << ',' << fmt(r.mean_ms) << ',' << fmt(r.sd_ms) << ','
       << samples << '\n';
  }
}

// ---------------------------------------------------------------------------

IngestResult ingest_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return ingest_csv(in, path);
}

IngestResult ingest_csv(std::istream& is, const std::string& source) {
  auto fail = [&](std::size_t line_no, const std::string& msg) {
    return ParseError(source + ":" + std::to_string(line_no) + ": " + msg);
  };
  std::string line;
  std::size_t line_no = 0;
  int col_id = -1;
  int col_time = -1;
  int col_y = -1;
  std::size_t n_cols = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto f = detail::csv_split(line);
    n_cols = f.size();
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (f[i] == "subject_id") col_id = static_cast<int>(i);
      if (f[i] == "time") col_time = static_cast<int>(i);
      if (f[i] == "y") col_y = static_cast<int>(i);
    }
    if (col_id < 0 || col_time < 0 || col_y < 0) throw fail(line_no, "header must contain subject_id, time, y");
    break;
  }
  if (n_cols == 0) throw ParseError(source + ": empty file");

  struct Obs {
    double y{0.0};
    std::size_t line{0};
    bool present{false};
  };
  std::vector<std::string> order;
  std::map<std::string, std::array<Obs, 2>> subjects;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r" || line[0] == '#') continue;
    const auto f = detail::csv_split(line);
    if (f.size() != n_cols) {
      throw fail(line_no, "expected " + std::to_string(n_cols) + " fields, found " + std::to_string(f.size()));
    }
    const std::string& id = f[static_cast<std::size_t>(col_id)];
    if (id.empty()) throw fail(line_no, "empty subject_id");
    const std::string& ts = f[static_cast<std::size_t>(col_time)];
    if (ts != "1" && ts != "2") throw fail(line_no, "time must be 1 or 2, found '" + ts + "'");
    double y = 0.0;
    try {
      const auto v = detail::parse_opt_double(f[static_cast<std::size_t>(col_y)]);
      if (!v || !std::isfinite(*v)) throw ParseError("missing");
      y = *v;
    } catch (const ParseError&) {
      throw fail(line_no, "y is not a finite number: '" + f[static_cast<std::size_t>(col_y)] + "'");
    }
    auto [it, inserted] = subjects.try_emplace(id);
    if (inserted) order.push_back(id);
    Obs& o = it->second[ts == "1" ? 0 : 1];
    if (o.present) {
      throw fail(line_no, "duplicate row for subject '" + id + "' time " + ts + " (first at line " +
                              std::to_string(o.line) + ")");
    }
    o = {y, line_no, true};
  }

  IngestResult r;
  for (const std::string& id : order) {
    const auto& obs = subjects[id];
    if (!obs[0].present || !obs[1].present) {
      ++r.dropped_subjects;
      continue;
    }
    r.subject_ids.push_back(id);
    r.sample.y1.push_back(obs[0].y);
    r.sample.y2.push_back(obs[1].y);
    r.sample.line1.push_back(obs[0].line);
    r.sample.line2.push_back(obs[1].line);
  }
  if (r.sample.size() == 0) throw ParseError(source + ": no subject has both time points");
  r.sample.validate();
  return r;
}

// ---------------------------------------------------------------------------

namespace {

// Marks best (1) and second best (2) among rows with a value.
template <typename Get, typename Set>
void rank_rows(std::vector<ApplicationRow>& rows, Get get, Set set, bool higher_is_better) {
  std::vector<std::pair<double, std::size_t>> vals;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::optional<double> v = get(rows[i]);
    if (rows[i].ok && v && std::isfinite(*v)) vals.emplace_back(higher_is_better ? -*v : *v, i);
  }
  std::stable_sort(vals.begin(), vals.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t k = 0; k < std::min<std::size_t>(2, vals.size()); ++k) set(rows[vals[k].second], static_cast<int>(k + 1));
}

}  // namespace

std::vector<ApplicationRow> fit_application(const LongitudinalSample& d, ResponseFamily family,
                                            const std::vector<CopulaFamily>& copulas, ParamKind param) {
  validate_for_family(d, family);
  const LinkFunction link = canonical_link(family);
  std::vector<ModelSpec> models = {parse_model_spec("glm"), parse_model_spec("gee"), parse_model_spec("glmm")};
  for (CopulaFamily c : copulas) models.push_back(parse_model_spec("gjrm-" + std::string(to_string(c))));

  std::vector<ApplicationRow> rows;
  for (const ModelSpec& m : models) {
    ApplicationRow row;
    row.model_tag = m.tag;
    row.param = std::string(to_string(param));
    try {
      const FitResult marg = fit_model(m, d, family, link);
      const FitResult te = reparameterize(marg, ParamKind::time_effect);
      row.mu1 = marg.mu_hat(1);
      row.mu2 = marg.mu_hat(2);
      row.beta1 = marg.estimate("beta1");
      row.beta2 = marg.estimate("beta2");
      row.beta_t = te.estimate("beta_t");
      row.se_beta1 = marg.se("beta1");
      row.se_beta2 = marg.se("beta2");
      row.se_beta_t = te.se("beta_t");
      const FitResult& primary = param == ParamKind::marginal ? marg : te;
      row.selection = criteria(primary);
      std::string nuis;
      for (const auto& [k, v] : primary.nuisance) nuis += (nuis.empty() ? "" : ";") + k + "=" + fmt(v);
      if (!primary.converged) nuis += (nuis.empty() ? "" : ";") + std::string("not_converged=1");
      row.nuisance = nuis;
      row.ok = true;
    } catch (const std::exception& e) {
      row.reason = e.what();
    }
    rows.push_back(std::move(row));
  }
  rank_rows(rows, [](const ApplicationRow& r) { return r.selection.loglik; }, [](ApplicationRow& r, int k) { r.rank_loglik = k; }, true);
  rank_rows(rows, [](const ApplicationRow& r) { return r.selection.aic; }, [](ApplicationRow& r, int k) { r.rank_aic = k; }, false);
  rank_rows(rows, [](const ApplicationRow& r) { return r.selection.gaic_k; }, [](ApplicationRow& r, int k) { r.rank_gaic = k; }, false);
  rank_rows(rows, [](const ApplicationRow& r) { return r.selection.bic; }, [](ApplicationRow& r, int k) { r.rank_bic = k; }, false);
  return rows;
}

void write_application_csv(std::ostream& os, const std::vector<ApplicationRow>& rows, const CsvMeta& meta) {
  os << "# copreg " << version_string() << " build " << build_id()
     << " | application fits; rank columns: 1 best, 2 second best; GAIC penalty k=4\n";
  if (!meta.note.empty()) os << "# " << meta.note << '\n';
  os << "model,param,status,reason,mu1,mu2,beta1,beta2,beta_t,se_beta1,se_beta2,se_beta_t,loglik,aic,gaic4,bic,edf,"
        "rank_loglik,rank_aic,rank_gaic4,rank_bic,nuisance\n";
  for (const ApplicationRow& r : rows) {
    os << r.model_tag << ',' << r.param << ',' << (r.ok ? "ok" : "failed") << ',' << csv_escape(r.reason);
    if (r.ok) {
      const SelectionRow& s = r.selection;
      os << ',' << fmt(r.mu1) << ',' << fmt(r.mu2) << ',' << fmt(r.beta1) << ',' << fmt(r.beta2) << ','
         << fmt(r.beta_t) << ',' << fmt(r.se_beta1) << ',' << fmt(r.se_beta2) << ',' << fmt(r.se_beta_t) << ','
         << fmt(s.loglik) << ',' << fmt(s.aic) << ',' << fmt(s.gaic_k) << ',' << fmt(s.bic) << ',' << fmt(s.edf)
         << ',' << r.rank_loglik << ',' << r.rank_aic << ',' << r.rank_gaic << ',' << r.rank_bic << ','
         << csv_escape(r.nuisance);
    } else {
      os << std::string(18, ',');
    }
    os << '\n';
  }
}

}  // namespace copreg
