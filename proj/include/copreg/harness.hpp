#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "copreg/estimators.hpp"
#include "copreg/selection.hpp"

namespace copreg {

std::string_view version_string();
/// Short git hash of the source tree at build time.
std::string_view build_id();

/// One fitter requested per replicate. Every fit is reported under both
/// parameterizations (the time-effect form is an exact reparameterization).
struct ModelSpec {
  std::string tag;
  ModelKind model{ModelKind::glm};
  std::optional<CopulaFamily> copula;
};

/// "glm", "gee", "glmm", "gjrm-<copula>".
ModelSpec parse_model_spec(std::string_view tag);
std::vector<ModelSpec> default_models();

/// Runs one model with both margins in family f (marginal parameterization).
FitResult fit_model(const ModelSpec& m, const LongitudinalSample& d, ResponseFamily f, LinkFunction link);

struct GridCell {
  std::size_t index{0};  // position in the full grid
  TrueScenario scenario;
};

/// Full 225 (normal) or 400 (negbin, gamma) cell design.
std::vector<GridCell> full_grid(Generator g);
/// Every 4th cell of the full grid (indices 3, 7, 11, ...).
std::vector<GridCell> desk_grid(Generator g);

struct ExperimentGrid {
  Generator generator{Generator::biv_normal};
  std::vector<GridCell> cells;
  std::size_t n_per_timepoint{1000};
  std::size_t replicates{25};
  std::vector<ModelSpec> models;
  std::uint64_t seed{42};

  void validate() const;
  static ExperimentGrid desk(Generator g);
  static ExperimentGrid full(Generator g);
};

/// Result of one (cell, replicate, model, parameterization) fit.
struct FitRecord {
  Generator generator{Generator::biv_normal};
  std::size_t cell{0};
  std::size_t replicate{0};
  std::string model_tag;
  ParamKind param{ParamKind::marginal};
  bool ok{false};
  std::string reason;

  double mu1_true{0.0};
  double mu2_true{0.0};
  double beta_t_true{0.0};
  double tau_hat{0.0};    // sample Kendall tau-b of the replicate
  double skew1_hat{0.0};  // sample skewness of y1
  double skew2_hat{0.0};

  double mu1_hat{0.0};
  double mu2_hat{0.0};
  double beta1{0.0};
  double se_beta1{0.0};
  double beta2{0.0};  // beta_t under the time-effect parameterization
  double se_beta2{0.0};
  double rel_bias_mu1{0.0};
  double rel_bias_mu2{0.0};
  double rel_bias_beta_t{0.0};

  SelectionRow selection;
  std::string nuisance;  // "name=value;..." natural-scale summaries
  bool converged{false};
  std::size_t clipped_points{0};
  std::size_t clamped_densities{0};
  bool hessian_repaired{false};
  bool boundary{false};

  double wall_ms{0.0};  // not written to records.csv
};

struct ScenarioReport {
  std::vector<FitRecord> records;
  std::size_t expected_records{0};
  std::size_t failures{0};
};

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

/// Fits every model on every (cell, replicate). Tasks are (cell, replicate)
/// pairs with independent streams Rng::stream(seed, {generator, cell, rep});
/// records come back in canonical order whatever the worker count.
ScenarioReport run_grid(const ExperimentGrid& g, std::size_t workers, const ProgressFn& progress = {});

/// Relative bias of the beta_t estimate: ratio-scale under the log link.
double relative_bias_beta_t(double estimate, double truth, LinkKind link);

struct CsvMeta {
  std::uint64_t seed{0};
  std::string note;
};

void write_records_csv(std::ostream& os, const std::vector<FitRecord>& records, const CsvMeta& meta);
std::vector<FitRecord> read_records_csv(std::istream& is);
void write_timings_csv(std::ostream& os, const std::vector<FitRecord>& records, const CsvMeta& meta);

/// Per-cell truth: generator parameters, tau, skewness, correlation.
struct CellTruth {
  Generator generator{Generator::biv_normal};
  std::size_t cell{0};
  TrueScenario scenario;
  ScenarioTruth truth;
};
std::vector<CellTruth> cell_truths(const ExperimentGrid& g, std::size_t mc_n = 200'000, std::size_t workers = 1);
void write_cells_csv(std::ostream& os, const std::vector<CellTruth>& cells, const CsvMeta& meta);

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

enum class BinAxis { tau, skew };
BinAxis parse_bin_axis(std::string_view name);

/// Width-0.2 tau bins and unit skewness bins; the last label collects
/// everything above the top edge, "<0" everything below zero.
std::string tau_bin_label(double tau);
std::string skew_bin_label(double skew);
const std::vector<std::string>& tau_bin_labels();
const std::vector<std::string>& skew_bin_labels();

struct BinRow {
  std::string generator;
  std::string model_tag;
  std::string param;
  std::string tau_bin;
  std::string skew_bin;
  std::size_t n{0};
  double mean_rel_bias_mu1{0.0};
  double mean_rel_bias_mu2{0.0};
  double mean_rel_bias_beta_t{0.0};
  double mean_se_beta1{0.0};
  double sd_beta1{0.0};
};

/// Mean relative bias and SE per (model, tau bin, skew bin); the secondary
/// axis also gets an "all" bin. Every bin combination is listed, empty bins
/// with n = 0 and blank statistics. Pure function of the records.
std::vector<BinRow> aggregate_report(const std::vector<FitRecord>& records, BinAxis axis);
void write_summary_csv(std::ostream& os, const std::vector<BinRow>& rows, BinAxis axis, const CsvMeta& meta);

/// Per (cell, model, parameterization) means: the plot-ready points.
struct CellPoint {
  std::string generator;
  std::size_t cell{0};
  std::string model_tag;
  std::string param;
  std::size_t n_ok{0};
  std::size_t n_failed{0};
  double mean_tau_hat{0.0};
  double mean_skew1_hat{0.0};
  double mu1_true{0.0};
  double mean_mu1_hat{0.0};
  double mean_rel_bias_mu1{0.0};
  double mean_rel_bias_mu2{0.0};
  double mean_rel_bias_beta_t{0.0};
  double mean_se_beta1{0.0};
  double sd_beta1{0.0};
  double mean_loglik{0.0};
  double mean_edf{0.0};
  double mean_aic{0.0};
  double mean_gaic{0.0};
  double mean_bic{0.0};
  std::size_t bic_wins{0};  // replicates where this model had the lowest BIC
};
std::vector<CellPoint> cell_points(const std::vector<FitRecord>& records);
void write_points_csv(std::ostream& os, const std::vector<CellPoint>& points, const CsvMeta& meta);
void write_selection_csv(std::ostream& os, const std::vector<CellPoint>& points, const CsvMeta& meta);

// ---------------------------------------------------------------------------
// Benchmarks and application data
// ---------------------------------------------------------------------------

struct BenchRow {
  std::string model_tag;
  std::size_t n{0};
  std::size_t repeats{0};
  double mean_ms{0.0};
  double sd_ms{0.0};
  std::vector<double> samples_ms;
};

/// The extreme gamma scenario of the grid (largest sigma and theta).
TrueScenario benchmark_scenario();
std::vector<BenchRow> benchmark_runtimes(const std::vector<std::size_t>& sizes, std::size_t repeats,
                                         const std::vector<ModelSpec>& models, std::uint64_t seed = 7);
std::string hardware_description();
void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows, const CsvMeta& meta);

struct IngestResult {
  LongitudinalSample sample;
  std::size_t dropped_subjects{0};
  std::vector<std::string> subject_ids;
};

/// Long-format CSV with columns subject_id, time (1 or 2), y.
IngestResult ingest_csv(const std::string& path);
IngestResult ingest_csv(std::istream& is, const std::string& source = "<stream>");

struct ApplicationRow {
  std::string model_tag;
  /// Parameterization that was fitted; the other one follows exactly.
  std::string param;
  bool ok{false};
  std::string reason;
  double mu1{0.0};
  double mu2{0.0};
  double beta1{0.0};
  double beta2{0.0};
  double beta_t{0.0};
  double se_beta1{0.0};
  double se_beta2{0.0};
  double se_beta_t{0.0};
  SelectionRow selection;
  std::string nuisance;
  /// 1 best, 2 second best, 0 otherwise.
  int rank_loglik{0};
  int rank_aic{0};
  int rank_gaic{0};
  int rank_bic{0};
};

/// GLM, GEE, GLMM and one GJRM per copula with the comparison-table columns;
/// per-model failures are recorded in the row.
std::vector<ApplicationRow> fit_application(const LongitudinalSample& d, ResponseFamily family,
                                            const std::vector<CopulaFamily>& copulas,
                                            ParamKind param = ParamKind::marginal);
void write_application_csv(std::ostream& os, const std::vector<ApplicationRow>& rows, const CsvMeta& meta);

}  // namespace copreg
