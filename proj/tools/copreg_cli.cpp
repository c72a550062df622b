// copreg: simulation grids, binned reports, runtime benchmarks and
// application fits for two-time-point longitudinal regression models.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "copreg/errors.hpp"
#include "copreg/harness.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace copreg;

namespace {

struct SimulateArgs {
  std::string config;
  std::string grid{"all"};
  bool full{false};
  std::size_t replicates{25};
  std::size_t n{1000};
  std::uint64_t seed{42};
  std::size_t workers{1};
  std::string out{"out"};
  std::vector<std::string> models;
  std::vector<std::size_t> cells;
  std::size_t truth_mc{200'000};
  bool quiet{false};
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Config values apply unless the same setting was given on the command line.
void apply_config(SimulateArgs& a, const CLI::App& app) {
  std::ifstream in(a.config);
  if (!in) throw ParseError("cannot open config '" + a.config + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config '" + a.config + "': " + e.what());
  }
  auto given = [&](const char* flag) { return app.count(flag) > 0; };
  try {
    if (j.contains("grid") && !given("--grid")) a.grid = j["grid"].get<std::string>();
    if (j.contains("mode") && !given("--full") && !given("--desk")) {
      const auto mode = j["mode"].get<std::string>();
      if (mode != "desk" && mode != "full") throw ParseError("config mode must be desk or full");
      a.full = mode == "full";
    }
    if (j.contains("replicates") && !given("--replicates")) a.replicates = j["replicates"].get<std::size_t>();
    if (j.contains("n_per_timepoint") && !given("--n")) a.n = j["n_per_timepoint"].get<std::size_t>();
    if (j.contains("seed") && !given("--seed")) a.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("workers") && !given("--workers")) a.workers = j["workers"].get<std::size_t>();
    if (j.contains("out") && !given("--out")) a.out = j["out"].get<std::string>();
    if (j.contains("models") && !given("--models")) a.models = j["models"].get<std::vector<std::string>>();
    if (j.contains("cells") && !given("--cells")) a.cells = j["cells"].get<std::vector<std::size_t>>();
    if (j.contains("truth_mc") && !given("--truth-mc")) a.truth_mc = j["truth_mc"].get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config '" + a.config + "': " + e.what());
  }
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw ParseError("cannot write '" + p.string() + "'");
  return os;
}

int run_simulate(SimulateArgs a, const CLI::App& app) {
  if (!a.config.empty()) apply_config(a, app);
  std::vector<Generator> gens;
  if (a.grid == "all") {
    gens = {Generator::biv_normal, Generator::biv_negbin, Generator::biv_gamma};
  } else {
    gens = {parse_generator(a.grid)};
  }
  std::vector<ModelSpec> models;
  for (const auto& m : a.models) models.push_back(parse_model_spec(m));
  if (models.empty()) models = default_models();

  fs::create_directories(a.out);
  std::vector<FitRecord> records;
  std::vector<CellTruth> truths;
  std::size_t failures = 0;
  for (Generator g : gens) {
    ExperimentGrid grid = a.full ? ExperimentGrid::full(g) : ExperimentGrid::desk(g);
    if (!a.cells.empty()) {
      const auto all = full_grid(g);
      grid.cells.clear();
      for (std::size_t c : a.cells) {
        if (c >= all.size()) throw ParseError("cell " + std::to_string(c) + " outside the " + std::string(to_string(g)) + " grid");
        grid.cells.push_back(all[c]);
      }
    }
    grid.replicates = a.replicates;
    grid.n_per_timepoint = a.n;
    grid.seed = a.seed;
    grid.models = models;
    grid.validate();
    if (!a.quiet) {
      std::cerr << to_string(g) << ": " << grid.cells.size() << " cells x " << grid.replicates << " replicates x "
                << grid.models.size() << " models\n";
    }
    ProgressFn progress;
    if (!a.quiet) {
      progress = [](std::size_t done, std::size_t total) {
        if (done == total || done % 50 == 0) std::cerr << "  " << done << "/" << total << " tasks\r" << std::flush;
      };
    }
    ScenarioReport rep = run_grid(grid, a.workers, progress);
    if (!a.quiet) std::cerr << "\n";
    if (rep.records.size() != rep.expected_records) throw DomainError("record count mismatch");
    failures += rep.failures;
    records.insert(records.end(), std::make_move_iterator(rep.records.begin()),
                   std::make_move_iterator(rep.records.end()));
    if (a.truth_mc > 0) {
      auto t = cell_truths(grid, a.truth_mc, a.workers);
      truths.insert(truths.end(), t.begin(), t.end());
    }
  }

  const CsvMeta meta{a.seed, ""};
  {
    auto os = open_out(fs::path(a.out) / "records.csv");
    write_records_csv(os, records, meta);
  }
  {
    auto os = open_out(fs::path(a.out) / "timings.csv");
    write_timings_csv(os, records, meta);
  }
  for (BinAxis axis : {BinAxis::tau, BinAxis::skew}) {
    auto os = open_out(fs::path(a.out) / (axis == BinAxis::tau ? "summary_tau.csv" : "summary_skew.csv"));
    write_summary_csv(os, aggregate_report(records, axis), axis, meta);
  }
  const auto points = cell_points(records);
  {
    auto os = open_out(fs::path(a.out) / "points.csv");
    write_points_csv(os, points, meta);
  }
  {
    auto os = open_out(fs::path(a.out) / "selection.csv");
    write_selection_csv(os, points, meta);
  }
  if (!truths.empty()) {
    auto os = open_out(fs::path(a.out) / "cells.csv");
    write_cells_csv(os, truths, meta);
  }
  if (!a.quiet) {
    std::cerr << records.size() << " records (" << failures << " failed fits) written to " << a.out << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Marginal and joint regression models for two-time-point longitudinal data"};
  app.set_version_flag("--version", std::string(version_string()) + " (" + std::string(build_id()) + ")");
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Run a simulation grid and write records and summaries");
  simulate->add_option("--config", sim.config, "JSON config mirroring the grid fields; flags override it");
  simulate->add_option("--grid", sim.grid, "normal, negbin, gamma or all")
      ->check(CLI::IsMember({"normal", "negbin", "gamma", "all"}));
  auto* desk_flag = simulate->add_flag("--desk", "Every 4th cell of each grid (default)");
  auto* full_flag = simulate->add_flag("--full", sim.full, "All grid cells");
  desk_flag->excludes(full_flag);
  simulate->add_option("--replicates", sim.replicates, "Replicates per cell")->check(CLI::PositiveNumber);
  simulate->add_option("--n", sim.n, "Subjects per replicate")->check(CLI::Range(10, 10'000'000));
  simulate->add_option("--seed", sim.seed, "Master seed");
  simulate->add_option("--workers", sim.workers, "Worker threads")->check(CLI::PositiveNumber);
  simulate->add_option("--out", sim.out, "Output directory");
  simulate->add_option("--models", sim.models, "Comma-separated: glm,gee,glmm,gjrm-<copula>")->delimiter(',');
  simulate->add_option("--cells", sim.cells, "Comma-separated full-grid cell indices")->delimiter(',');
  simulate->add_option("--truth-mc", sim.truth_mc, "Monte Carlo draws per cell for cells.csv (0 skips it)");
  simulate->add_flag("--quiet", sim.quiet, "No progress output");

  std::string records_path;
  std::string axis_name{"tau"};
  std::string report_out;
  auto* report = app.add_subcommand("report", "Recompute a binned summary from records.csv");
  report->add_option("--records", records_path, "records.csv from simulate")->required();
  report->add_option("--axis", axis_name, "tau or skew")->check(CLI::IsMember({"tau", "skew"}));
  report->add_option("--out", report_out, "Output file (default stdout)");

  std::string sizes_arg{"100,500,1000,5000,10000"};
  std::size_t repeats = 10;
  std::string bench_models{"glm,gee,glmm,gjrm-clayton,gjrm-gaussian"};
  std::string bench_out;
  std::uint64_t bench_seed = 7;
  auto* bench = app.add_subcommand("bench", "Time every model across sample sizes");
  bench->add_option("--sizes", sizes_arg, "Comma-separated sample sizes");
  bench->add_option("--repeats", repeats, "Repeats per size")->check(CLI::PositiveNumber);
  bench->add_option("--models", bench_models, "Comma-separated model tags");
  bench->add_option("--seed", bench_seed, "Seed for the benchmark samples");
  bench->add_option("--out", bench_out, "Output file (default stdout)");

  std::string data_path;
  std::string family_name{"negbin"};
  std::string copula_list{"all"};
  std::string param_name{"marginal"};
  std::string fit_out;
  auto* fit = app.add_subcommand("fit", "Fit every model to a long-format data file");
  fit->add_option("--data", data_path, "CSV with subject_id,time,y")->required();
  fit->add_option("--family", family_name, "normal, gamma or negbin");
  fit->add_option("--copulas", copula_list, "Comma-separated copula families or 'all'");
  fit->add_option("--param", param_name, "marginal or time-effect");
  fit->add_option("--out", fit_out, "Output file (default stdout)");

  CLI11_PARSE(app, argc, argv);

  auto emit = [](const std::string& path, const auto& writer) {
    if (path.empty()) {
      writer(std::cout);
    } else {
      auto os = open_out(path);
      writer(os);
    }
  };

  try {
    if (*simulate) return run_simulate(sim, *simulate);
    if (*report) {
      std::ifstream in(records_path);
      if (!in) throw ParseError("cannot open '" + records_path + "'");
      const auto records = read_records_csv(in);
      const BinAxis axis = parse_bin_axis(axis_name);
      // the seed is carried in the records header comment
      std::uint64_t seed = 0;
      {
        std::ifstream again(records_path);
        std::string first;
        std::getline(again, first);
        const auto pos = first.find(" seed ");
        if (pos != std::string::npos) seed = std::stoull(first.substr(pos + 6));
      }
      emit(report_out, [&](std::ostream& os) { write_summary_csv(os, aggregate_report(records, axis), axis, {seed, ""}); });
      return 0;
    }
    if (*bench) {
      std::vector<std::size_t> sizes;
      for (const auto& s : split_list(sizes_arg)) sizes.push_back(std::stoul(s));
      std::vector<ModelSpec> models;
      for (const auto& m : split_list(bench_models)) models.push_back(parse_model_spec(m));
      const auto rows = benchmark_runtimes(sizes, repeats, models, bench_seed);
      emit(bench_out, [&](std::ostream& os) { write_bench_csv(os, rows, {bench_seed, ""}); });
      return 0;
    }
    if (*fit) {
      const IngestResult in = ingest_csv(data_path);
      std::cerr << in.sample.size() << " subjects with both time points; " << in.dropped_subjects
                << " subjects dropped (missing a time point)\n";
      const auto rows = fit_application(in.sample, parse_family(family_name), parse_copula_list(copula_list),
                                        parse_param_kind(param_name));
      const std::string note = "subjects " + std::to_string(in.sample.size()) + ", dropped " +
                               std::to_string(in.dropped_subjects) + ", family " + family_name;
      emit(fit_out, [&](std::ostream& os) { write_application_csv(os, rows, {0, note}); });
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
