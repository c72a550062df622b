#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <tuple>

#include "copreg/detail/csv.hpp"
#include "copreg/errors.hpp"
#include "copreg/harness.hpp"

namespace copreg {

using detail::fmt;

BinAxis parse_bin_axis(std::string_view name) {
  if (name == "tau") return BinAxis::tau;
  if (name == "skew" || name == "skewness") return BinAxis::skew;
  throw ParseError("unknown axis '" + std::string(name) + "' (tau, skew)");
}

const std::vector<std::string>& tau_bin_labels() {
  static const std::vector<std::string> labels = {"<0", "0.0-0.2", "0.2-0.4", "0.4-0.6", "0.6-0.8", "0.8-1.0"};
  return labels;
}

const std::vector<std::string>& skew_bin_labels() {
  static const std::vector<std::string> labels = {"<0", "0-1", "1-2", "2-3", "3-4", "4-5", "5-6", "6+"};
  return labels;
}

std::string tau_bin_label(double tau) {
  const auto& l = tau_bin_labels();
  if (tau < 0.0) return l[0];
  // right-closed intervals as in (0, 0.2], (0.2, 0.4], ...
  const auto k = static_cast<std::size_t>(std::clamp(std::ceil(tau / 0.2), 1.0, 5.0));
  return l[k];
}

std::string skew_bin_label(double skew) {
  const auto& l = skew_bin_labels();
  if (skew < 0.0) return l[0];
  const auto k = static_cast<std::size_t>(std::clamp(std::ceil(skew), 1.0, 7.0));
  return l[k];
}

namespace {

struct Acc {
  std::size_t n{0};
  double b1{0.0};
  double b2{0.0};
  double bt{0.0};
  double se{0.0};
  double s{0.0};
  double ss{0.0};

  void add(const FitRecord& r) {
    ++n;
    b1 += r.rel_bias_mu1;
    b2 += r.rel_bias_mu2;
    bt += r.rel_bias_beta_t;
    se += r.se_beta1;
    s += r.beta1;
    ss += r.beta1 * r.beta1;
  }
  double mean(double v) const { return n ? v / static_cast<double>(n) : std::nan(""); }
  double sd() const {
    if (n < 2) return std::nan("");
    const double m = s / static_cast<double>(n);
    return std::sqrt(std::max(0.0, (ss - static_cast<double>(n) * m * m) / static_cast<double>(n - 1)));
  }
};

using GroupKey = std::tuple<std::string, std::string, std::string>;  // generator, model, param

// Models in first-appearance order, which is the run's model order.
std::vector<GroupKey> group_order(const std::vector<FitRecord>& records) {
  std::vector<GroupKey> keys;
  for (const FitRecord& r : records) {
    GroupKey k{std::string(to_string(r.generator)), r.model_tag, std::string(to_string(r.param))};
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(std::move(k));
  }
  return keys;
}

}  // namespace

std::vector<BinRow> aggregate_report(const std::vector<FitRecord>& records, BinAxis axis) {
  if (records.empty()) throw DomainError("aggregate_report: no records");
  std::map<std::tuple<GroupKey, std::string, std::string>, Acc> acc;
  for (const FitRecord& r : records) {
    if (!r.ok) continue;
    const GroupKey k{std::string(to_string(r.generator)), r.model_tag, std::string(to_string(r.param))};
    const std::string tb = tau_bin_label(r.tau_hat);
    const std::string sb = skew_bin_label(r.skew1_hat);
    acc[{k, tb, sb}].add(r);
    if (axis == BinAxis::tau) {
      acc[{k, tb, "all"}].add(r);
    } else {
      acc[{k, "all", sb}].add(r);
    }
  }
  std::vector<std::string> taus = tau_bin_labels();
  std::vector<std::string> skews = skew_bin_labels();
  if (axis == BinAxis::tau) {
    skews.emplace_back("all");
  } else {
    taus.emplace_back("all");
  }
  std::vector<BinRow> out;
  for (const GroupKey& k : group_order(records)) {
    auto emit = [&](const std::string& tb, const std::string& sb) {
      BinRow row;
      std::tie(row.generator, row.model_tag, row.param) = k;
      row.tau_bin = tb;
      row.skew_bin = sb;
      const auto it = acc.find({k, tb, sb});
      const Acc a = it == acc.end() ? Acc{} : it->second;
      row.n = a.n;
      row.mean_rel_bias_mu1 = a.mean(a.b1);
      row.mean_rel_bias_mu2 = a.mean(a.b2);
      row.mean_rel_bias_beta_t = a.mean(a.bt);
      row.mean_se_beta1 = a.mean(a.se);
      row.sd_beta1 = a.sd();
      out.push_back(row);
    };
    if (axis == BinAxis::tau) {
      for (const auto& tb : taus) {
        for (const auto& sb : skews) emit(tb, sb);
      }
    } else {
      for (const auto& sb : skews) {
        for (const auto& tb : taus) emit(tb, sb);
      }
    }
  }
  return out;
}

void write_summary_csv(std::ostream& os, const std::vector<BinRow>& rows, BinAxis axis, const CsvMeta& meta) {
  os << "# copreg " << version_string() << " build " << build_id() << " seed " << meta.seed << " | summary by "
     << (axis == BinAxis::tau ? "tau" : "skew")
     << " bin; bias is relative (estimate/truth - 1); bins use sample tau-b and sample skewness of y1; empty bins blank\n";
  if (!meta.note.empty()) os << "# " << meta.note << '\n';
  os << "generator,model,param,tau_bin,skew_bin,n,mean_rel_bias_mu1,mean_rel_bias_mu2,mean_rel_bias_beta_t,"
        "mean_se_beta1,sd_beta1\n";
  for (const BinRow& r : rows) {
    os << r.generator << ',' << r.model_tag << ',' << r.param << ',' << r.tau_bin << ',' << r.skew_bin << ',' << r.n
       << ',' << fmt(r.mean_rel_bias_mu1) << ',' << fmt(r.mean_rel_bias_mu2) << ',' << fmt(r.mean_rel_bias_beta_t)
       << ',' << fmt(r.mean_se_beta1) << ',' << fmt(r.sd_beta1) << '\n';
  }
}

std::vector<CellPoint> cell_points(const std::vector<FitRecord>& records) {
  // lowest BIC per (generator, cell, replicate, param) for win counts
  std::map<std::tuple<std::string, std::size_t, std::size_t, ParamKind>, std::pair<double, std::string>> best;
  for (const FitRecord& r : records) {
    if (!r.ok || !r.selection.bic) continue;
    auto& b = best.try_emplace({std::string(to_string(r.generator)), r.cell, r.replicate, r.param},
                               std::numeric_limits<double>::infinity(), "")
                  .first->second;
    if (*r.selection.bic < b.first) b = {*r.selection.bic, r.model_tag};
  }

  std::map<std::tuple<std::string, std::size_t, std::size_t, std::string>, std::size_t> index;
  std::vector<CellPoint> pts;
  std::vector<Acc> accs;
  std::vector<std::array<double, 6>> extra;  // tau, skew, mu1_hat, loglik, edf, rows with a loglik
  std::vector<std::array<double, 3>> crit;   // aic, gaic, bic
  for (const FitRecord& r : records) {
    const std::string gen(to_string(r.generator));
    const auto key = std::make_tuple(gen, r.cell, std::size_t(r.param == ParamKind::time_effect), r.model_tag);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, pts.size()).first;
      CellPoint p;
      p.generator = gen;
      p.cell = r.cell;
      p.model_tag = r.model_tag;
      p.param = std::string(to_string(r.param));
      p.mu1_true = r.mu1_true;
      pts.push_back(p);
      accs.emplace_back();
      extra.push_back({0, 0, 0, 0, 0, 0});
      crit.push_back({0, 0, 0});
    }
    const std::size_t i = it->second;
    if (!r.ok) {
      ++pts[i].n_failed;
      continue;
    }
    ++pts[i].n_ok;
    accs[i].add(r);
    extra[i][0] += r.tau_hat;
    extra[i][1] += r.skew1_hat;
    extra[i][2] += r.mu1_hat;
    extra[i][4] += r.selection.edf;
    if (r.selection.loglik) {
      extra[i][3] += *r.selection.loglik;
      extra[i][5] += 1.0;
      crit[i][0] += r.selection.aic.value_or(0.0);
      crit[i][1] += r.selection.gaic_k.value_or(0.0);
      crit[i][2] += r.selection.bic.value_or(0.0);
    }
    const auto b = best.find({gen, r.cell, r.replicate, r.param});
    if (b != best.end() && b->second.second == r.model_tag) ++pts[i].bic_wins;
  }
  for (std::size_t i = 0; i < pts.size(); ++i) {
    CellPoint& p = pts[i];
    const Acc& a = accs[i];
    const double n = static_cast<double>(p.n_ok);
    const double nan = std::nan("");
    p.mean_tau_hat = p.n_ok ? extra[i][0] / n : nan;
    p.mean_skew1_hat = p.n_ok ? extra[i][1] / n : nan;
    p.mean_mu1_hat = p.n_ok ? extra[i][2] / n : nan;
    p.mean_edf = p.n_ok ? extra[i][4] / n : nan;
    p.mean_rel_bias_mu1 = a.mean(a.b1);
    p.mean_rel_bias_mu2 = a.mean(a.b2);
    p.mean_rel_bias_beta_t = a.mean(a.bt);
    p.mean_se_beta1 = a.mean(a.se);
    p.sd_beta1 = a.sd();
    const double nc = extra[i][5];
    p.mean_loglik = nc > 0 ? extra[i][3] / nc : nan;
    p.mean_aic = nc > 0 ? crit[i][0] / nc : nan;
    p.mean_gaic = nc > 0 ? crit[i][1] / nc : nan;
    p.mean_bic = nc > 0 ? crit[i][2] / nc : nan;
  }
  return pts;
}

void write_points_csv(std::ostream& os, const std::vector<CellPoint>& points, const CsvMeta& meta) {
  os << "# copreg " << version_string() << " build " << build_id() << " seed " << meta.seed
     << " | per-cell points; bias is relative (estimate/truth - 1)\n";
  if (!meta.note.empty()) os << "# " << meta.note << '\n';
  os << "generator,cell,model,param,n_ok,n_failed,mean_tau_hat,mean_skew1_hat,mu1_true,mean_mu1_hat,"
        "mean_rel_bias_mu1,mean_rel_bias_mu2,mean_rel_bias_beta_t,mean_se_beta1,sd_beta1\n";
  for (const CellPoint& p : points) {
    os << p.generator << ',' << p.cell << ',' << p.model_tag << ',' << p.param << ',' << p.n_ok << ',' << p.n_failed
       << ',' << fmt(p.mean_tau_hat) << ',' << fmt(p.mean_skew1_hat) << ',' << fmt(p.mu1_true) << ','
       << fmt(p.mean_mu1_hat) << ',' << fmt(p.mean_rel_bias_mu1) << ',' << fmt(p.mean_rel_bias_mu2) << ','
       << fmt(p.mean_rel_bias_beta_t) << ',' << fmt(p.mean_se_beta1) << ',' << fmt(p.sd_beta1) << '\n';
  }
}

void write_selection_csv(std::ostream& os, const std::vector<CellPoint>& points, const CsvMeta& meta) {
  os << "# copreg " << version_string() << " build " << build_id() << " seed " << meta.seed
     << " | per-cell mean criteria (GAIC penalty k=4); GLMM uses the conditional likelihood and ridge-trace EDF\n";
  if (!meta.note.empty()) os << "# " << meta.note << '\n';
  os << "generator,cell,model,param,n_ok,mean_loglik,mean_edf,mean_aic,mean_gaic4,mean_bic,bic_wins\n";
  for (const CellPoint& p : points) {
    if (p.param != "marginal") continue;
    os << p.generator << ',' << p.cell << ',' << p.model_tag << ',' << p.param << ',' << p.n_ok << ','
       << fmt(p.mean_loglik) << ',' << fmt(p.mean_edf) << ',' << fmt(p.mean_aic) << ',' << fmt(p.mean_gaic) << ','
       << fmt(p.mean_bic) << ',' << p.bic_wins << '\n';
  }
}

}  // namespace copreg
