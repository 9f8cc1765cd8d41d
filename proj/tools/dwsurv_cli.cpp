// Command-line front end: simulate | fit | site-summarize | combine |
// screen | report. All randomness flows from an explicit --seed; there is
// no wall-clock seeding anywhere.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dwsurv/csv.hpp"
#include "dwsurv/errors.hpp"
#include "dwsurv/evaluator.hpp"
#include "dwsurv/federation.hpp"
#include "dwsurv/pipeline.hpp"
#include "dwsurv/selection.hpp"

namespace {

using namespace dwsurv;

int exit_code_for(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::usage: return 2;
    case ErrorCategory::schema: return 3;
    case ErrorCategory::io: return 4;
    case ErrorCategory::singular: return 5;
    case ErrorCategory::positivity: return 6;
    case ErrorCategory::no_information: return 7;
    case ErrorCategory::degenerate_predictor: return 8;
    case ErrorCategory::protocol: return 9;
  }
  return 1;
}

WeightSpec make_weight_spec(const std::string& family, double truncation) {
  WeightSpec w;
  if (family == "overlap") {
    w.treatment_kind = WeightSpec::Family::kOverlap;
  } else if (family == "ipt") {
    w.treatment_kind = WeightSpec::Family::kIpt;
  } else {
    fail(ErrorCategory::usage, "unknown weight family '" + family + "'");
  }
  if (truncation > 0.0) w.truncation = truncation;
  return w;
}

VarianceMode variance_mode_from(const std::string& s) {
  if (s == "as_written") return VarianceMode::kAsWritten;
  if (s == "variance_consistent") return VarianceMode::kVarianceConsistent;
  fail(ErrorCategory::usage, "unknown variance mode '" + s + "'");
}

struct SimulateArgs {
  int scenario = 1;
  std::int64_t n_total = 2500;
  int reps = 1000;
  std::string effect = "small";
  std::string tf = "correct";
  std::string strategy = "global_all";
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out = "out";
  int threads = 1;
  std::int64_t cohort = 100000;
  std::string weights = "overlap";
  double truncation = 0.0;
  double alpha = 0.05;
  std::string dump_data;
};

int cmd_simulate(const SimulateArgs& args) {
  if (!args.seed_given) fail(ErrorCategory::usage, "--seed is required for simulate");
  SimulationRequest req;
  req.config.scenario_id = args.scenario;
  req.config.n_total = args.n_total;
  req.config.seed = args.seed;
  req.config.effect = args.effect == "large" ? EffectSize::kLarge : EffectSize::kSmall;
  req.reps = args.reps;
  req.treatment_free_correct = args.tf == "correct";
  req.strategy = strategy_from_string(args.strategy);
  if ((req.strategy == Strategy::kLocalKnown || req.strategy == Strategy::kLocalSelected) &&
      args.scenario < 5) {
    fail(ErrorCategory::usage,
         "site-specific confounder subsets only exist in scenarios 5-7; use local_all");
  }
  req.weight_spec = make_weight_spec(args.weights, args.truncation);
  req.cohort_size = args.cohort;
  req.screening_alpha = args.alpha;
  req.threads = args.threads;
  req.dump_data_dir = args.dump_data;
  if (!args.dump_data.empty()) std::filesystem::create_directories(args.dump_data);

  const SimulationResult result = run_simulate_command(req, args.out);
  const auto& p0 = result.summary.params[0];
  std::printf("scenario %d strategy %s reps %d: mean psi0 %.6f [%.6f;%.6f] rb%% %.3f mse %.6f "
              "dvf %.6f\n",
              args.scenario, args.strategy.c_str(), args.reps, p0.mean, p0.lo, p0.hi, p0.rb_pct,
              p0.mse, result.summary.dvf_mean);
  return 0;
}

Supplied read_nuisance_file(const std::string& path, Eigen::Index n) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::io, "cannot open nuisance file '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || detail::split_csv_line(line) != std::vector<std::string>{"pi", "phi"}) {
    fail(ErrorCategory::schema, "nuisance file must have header 'pi,phi'");
  }
  std::vector<double> pi, phi;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 2) fail(ErrorCategory::schema, "nuisance file line " + std::to_string(line_no));
    pi.push_back(detail::parse_csv_real(fields[0], "nuisance pi"));
    phi.push_back(detail::parse_csv_real(fields[1], "nuisance phi"));
  }
  if (static_cast<Eigen::Index>(pi.size()) != n) {
    fail(ErrorCategory::schema, "nuisance file row count does not match the dataset");
  }
  Supplied s;
  s.pi = Eigen::Map<const Vector>(pi.data(), static_cast<Eigen::Index>(pi.size()));
  s.phi = Eigen::Map<const Vector>(phi.data(), static_cast<Eigen::Index>(phi.size()));
  return s;
}

void write_rule_file(const StrategyFit& fit, VarianceMode mode, const std::string& path) {
  std::ofstream os(path);
  if (!os) fail(ErrorCategory::io, "cannot open '" + path + "' for writing");
  const Matrix& cov = mode == VarianceMode::kAsWritten ? fit.covariance_as_written
                                                       : fit.covariance_variance_consistent;
  os << "n_events " << fit.rule.n_events << "\n";
  os << "variance_mode " << to_string(mode) << "\n";
  const auto names = design_column_names(fit.rule.spec);
  const Vector theta = fit.rule.theta();
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    os << "coefficient " << names[static_cast<std::size_t>(k)] << ' '
       << detail::format_real(theta(k)) << ' '
       << detail::format_real(std::sqrt(std::max(0.0, cov(k, k)))) << "\n";
  }
  for (Eigen::Index j = 0; j < fit.per_site_sigma.size(); ++j) {
    os << "site_sigma " << j << ' ' << detail::format_real(fit.per_site_sigma(j)) << "\n";
  }
  for (const auto& w : fit.warnings) os << "warning " << w << "\n";
}

int cmd_fit(const std::string& data_path, const std::string& spec_path,
            const std::string& strategy_name, const std::string& weights, double truncation,
            const std::string& vmode_name, double alpha, const std::string& out_prefix) {
  const Dataset ds = read_dataset_csv(data_path);
  const ModelSpec spec = read_model_spec(spec_path);
  const Strategy strategy = strategy_from_string(strategy_name);
  if (strategy == Strategy::kLocalKnown) {
    fail(ErrorCategory::usage, "local_known applies to simulated scenarios only");
  }
  const WeightSpec wspec = make_weight_spec(weights, truncation);
  const VarianceMode mode = variance_mode_from(vmode_name);
  const StrategyFit fit = fit_with_strategy(ds, spec, wspec, strategy, 0, alpha);

  write_rule_file(fit, mode, out_prefix + "_rule.txt");
  std::ofstream dec(out_prefix + "_decisions.csv");
  if (!dec) fail(ErrorCategory::io, "cannot open decisions CSV for writing");
  dec << "id,recommended_a,blip\n";
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    const Vector x = ds.x.row(i).transpose();
    dec << ds.id[static_cast<std::size_t>(i)] << ',' << decide(fit.rule, x) << ','
        << detail::format_real(blip_value(fit.rule, x, 1)) << '\n';
  }
  std::printf("fitted %lld events, psi0 %.8f psi1 %.8f\n",
              static_cast<long long>(fit.rule.n_events), fit.rule.psi(0), fit.rule.psi(1));
  return 0;
}

int cmd_site_summarize(const std::string& data_path, const std::string& spec_path,
                       const std::string& strategy_name, const std::string& weights,
                       double truncation, double alpha, const std::string& nuisance_path,
                       const std::string& out_path) {
  const Dataset ds = read_dataset_csv(data_path);
  const ModelSpec spec = read_model_spec(spec_path);
  const WeightSpec wspec = make_weight_spec(weights, truncation);
  NuisanceStrategy ns = LocalAll{};
  if (!nuisance_path.empty()) {
    ns = read_nuisance_file(nuisance_path, ds.n());
  } else if (strategy_name == "local_all") {
    ns = LocalAll{};
  } else if (strategy_name == "intercept_only") {
    ns = LocalSelected{{}, {}};
  } else if (strategy_name == "local_selected") {
    const SelectionReport report = screen_site(ds, ds.covariate_names, alpha);
    ns = LocalSelected{report.treatment_variables(), report.censoring_variables()};
  } else {
    fail(ErrorCategory::usage, "site-summarize strategy must be local_all, local_selected or "
                               "intercept_only (or pass --nuisance-file)");
  }
  const SitePayload payload = site_summarize(ds, spec, wspec, ns);
  write_payload(payload, out_path);
  std::printf("site %d: %lld events, p=%d, payload written to %s\n", payload.site_id,
              static_cast<long long>(payload.n_events), payload.p, out_path.c_str());
  return 0;
}

int cmd_combine(const std::vector<std::string>& payload_paths, const std::string& vmode_name,
                const std::string& out_path) {
  std::vector<SitePayload> payloads;
  for (const auto& path : payload_paths) payloads.push_back(read_payload(path));
  const VarianceMode mode = variance_mode_from(vmode_name);
  const CombinedFit fit = combine(payloads, mode);

  std::printf("theta (%d parameters), variance mode %s\n", static_cast<int>(fit.theta.size()),
              to_string(mode));
  for (Eigen::Index k = 0; k < fit.theta.size(); ++k) {
    std::printf("  theta[%d] = %.10g  (se %.10g)\n", static_cast<int>(k), fit.theta(k),
                std::sqrt(std::max(0.0, fit.covariance(k, k))));
  }
  for (std::size_t j = 0; j < fit.sites_used.size(); ++j) {
    std::printf("  site %d sigma = %.10g\n", fit.sites_used[j],
                fit.per_site_sigma(static_cast<Eigen::Index>(j)));
  }
  for (const auto& w : fit.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());

  if (!out_path.empty()) {
    std::ofstream os(out_path);
    if (!os) fail(ErrorCategory::io, "cannot open '" + out_path + "' for writing");
    os << "variance_mode " << to_string(mode) << "\n";
    os << "theta";
    for (Eigen::Index k = 0; k < fit.theta.size(); ++k) os << ' ' << detail::format_real(fit.theta(k));
    os << "\ncovariance";
    detail::write_matrix_row_major(os, fit.covariance);
    os << "\nper_site_sigma";
    for (Eigen::Index j = 0; j < fit.per_site_sigma.size(); ++j) {
      os << ' ' << detail::format_real(fit.per_site_sigma(j));
    }
    os << "\n";
  }
  return 0;
}

int cmd_screen(const std::string& data_path, double alpha, const std::string& out_path) {
  const Dataset ds = read_dataset_csv(data_path);
  std::vector<SelectionReport> reports;
  for (const Dataset& site_ds : ds.split_by_site()) {
    reports.push_back(screen_site(site_ds, ds.covariate_names, alpha));
  }
  std::ofstream os(out_path);
  if (!os) fail(ErrorCategory::io, "cannot open '" + out_path + "' for writing");
  write_selection_csv(reports, os);
  std::printf("screened %zu sites, report written to %s\n", reports.size(), out_path.c_str());
  return 0;
}

int cmd_report(const std::string& estimates_path, double truth0, double truth1,
               const std::string& method, int scenario, const std::string& out_path) {
  std::ifstream in(estimates_path);
  if (!in) fail(ErrorCategory::io, "cannot open estimates CSV '" + estimates_path + "'");
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCategory::schema, "empty estimates CSV");
  const auto header = detail::split_csv_line(line);
  auto column = [&](const std::string& name) {
    for (std::size_t k = 0; k < header.size(); ++k)
      if (header[k] == name) return k;
    fail(ErrorCategory::schema, "estimates CSV missing column '" + name + "'");
  };
  const std::size_t c0 = column("psi0"), c1 = column("psi1"), cd = column("dvf");
  std::vector<std::array<double, 3>> rows;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = detail::split_csv_line(line);
    rows.push_back({detail::parse_csv_real(fields[c0], "psi0"),
                    detail::parse_csv_real(fields[c1], "psi1"),
                    detail::parse_csv_real(fields[cd], "dvf")});
  }
  Matrix estimates(static_cast<Eigen::Index>(rows.size()), 2);
  Vector dvfs(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    estimates(static_cast<Eigen::Index>(r), 0) = rows[r][0];
    estimates(static_cast<Eigen::Index>(r), 1) = rows[r][1];
    dvfs(static_cast<Eigen::Index>(r)) = rows[r][2];
  }
  Vector truth(2);
  truth << truth0, truth1;
  const MetricSummary summary = summarize(estimates, truth, dvfs);
  std::ofstream os(out_path);
  if (!os) fail(ErrorCategory::io, "cannot open '" + out_path + "' for writing");
  write_metrics_csv(method, scenario, summary, os);
  std::printf("metrics written to %s\n", out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Doubly robust ITR estimation for censored outcomes, pooled or via "
               "aggregate-only distributed regression"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo scenario runs");
  simulate->add_option("--scenario", sim.scenario)->check(CLI::Range(1, 7))->required();
  simulate->add_option("--n", sim.n_total, "total sample size");
  simulate->add_option("--reps", sim.reps);
  simulate->add_option("--effect", sim.effect)->check(CLI::IsMember({"small", "large"}));
  simulate->add_option("--tf", sim.tf)->check(CLI::IsMember({"correct", "misspecified"}));
  simulate->add_option("--strategy", sim.strategy);
  simulate->add_option("--seed", sim.seed)->each([&sim](const std::string&) { sim.seed_given = true; });
  simulate->add_option("--out", sim.out, "output directory");
  simulate->add_option("--threads", sim.threads);
  simulate->add_option("--cohort-size", sim.cohort, "fresh cohort size for the value function");
  simulate->add_option("--weights", sim.weights)->check(CLI::IsMember({"overlap", "ipt"}));
  simulate->add_option("--truncation", sim.truncation, "probability floor (0 disables)");
  simulate->add_option("--alpha", sim.alpha, "screening level for local_selected");
  simulate->add_option("--dump-data", sim.dump_data, "directory for per-replication data CSVs");

  std::string fit_data, fit_spec, fit_strategy = "global_all", fit_weights = "overlap";
  std::string fit_vmode = "as_written", fit_prefix = "fit";
  double fit_trunc = 0.0, fit_alpha = 0.05;
  auto* fit = app.add_subcommand("fit", "fit a rule from a dataset CSV");
  fit->add_option("--data", fit_data)->required();
  fit->add_option("--spec", fit_spec)->required();
  fit->add_option("--strategy", fit_strategy);
  fit->add_option("--weights", fit_weights)->check(CLI::IsMember({"overlap", "ipt"}));
  fit->add_option("--truncation", fit_trunc);
  fit->add_option("--variance-mode", fit_vmode)
      ->check(CLI::IsMember({"as_written", "variance_consistent"}));
  fit->add_option("--alpha", fit_alpha);
  fit->add_option("--out-prefix", fit_prefix);

  std::string ss_data, ss_spec, ss_strategy = "local_all", ss_weights = "overlap";
  std::string ss_nuisance, ss_out = "payload.txt";
  double ss_trunc = 0.0, ss_alpha = 0.05;
  auto* site = app.add_subcommand("site-summarize", "export one site's aggregate payload");
  site->add_option("--data", ss_data)->required();
  site->add_option("--spec", ss_spec)->required();
  site->add_option("--strategy", ss_strategy);
  site->add_option("--weights", ss_weights)->check(CLI::IsMember({"overlap", "ipt"}));
  site->add_option("--truncation", ss_trunc);
  site->add_option("--alpha", ss_alpha);
  site->add_option("--nuisance-file", ss_nuisance, "CSV pi,phi of supplied probabilities");
  site->add_option("--out", ss_out);

  std::vector<std::string> combine_paths;
  std::string combine_vmode = "as_written", combine_out;
  auto* comb = app.add_subcommand("combine", "combine site payloads into a fit");
  comb->add_option("--variance-mode", combine_vmode)
      ->check(CLI::IsMember({"as_written", "variance_consistent"}));
  comb->add_option("--out", combine_out);
  comb->add_option("payloads", combine_paths)->required()->expected(-1);

  std::string screen_data, screen_out = "selection.csv";
  double screen_alpha = 0.05;
  auto* screen = app.add_subcommand("screen", "per-site univariate variable screening");
  screen->add_option("--data", screen_data)->required();
  screen->add_option("--alpha", screen_alpha);
  screen->add_option("--out", screen_out);

  std::string report_estimates, report_method = "unknown", report_out = "metrics.csv";
  double report_truth0 = 0.15, report_truth1 = -0.015;
  int report_scenario = 0;
  auto* report = app.add_subcommand("report", "summarize a per-replication estimates CSV");
  report->add_option("--estimates", report_estimates)->required();
  report->add_option("--truth-psi0", report_truth0);
  report->add_option("--truth-psi1", report_truth1);
  report->add_option("--method", report_method);
  report->add_option("--scenario", report_scenario);
  report->add_option("--out", report_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return cmd_simulate(sim);
    if (fit->parsed()) {
      return cmd_fit(fit_data, fit_spec, fit_strategy, fit_weights, fit_trunc, fit_vmode,
                     fit_alpha, fit_prefix);
    }
    if (site->parsed()) {
      return cmd_site_summarize(ss_data, ss_spec, ss_strategy, ss_weights, ss_trunc, ss_alpha,
                                ss_nuisance, ss_out);
    }
    if (comb->parsed()) return cmd_combine(combine_paths, combine_vmode, combine_out);
    if (screen->parsed()) return cmd_screen(screen_data, screen_alpha, screen_out);
    if (report->parsed()) {
      return cmd_report(report_estimates, report_truth0, report_truth1, report_method,
                        report_scenario, report_out);
    }
  } catch (const dwsurv::Error& e) {
    std::fprintf(stderr, "error:%s: %s\n", dwsurv::to_string(e.category()), e.what());
    return exit_code_for(e.category());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error:internal: %s\n", e.what());
    return 1;
  }
  return 0;
}
