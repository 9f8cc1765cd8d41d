#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "dwsurv/core.hpp"
#include "dwsurv/csv.hpp"
#include "dwsurv/errors.hpp"
#include "dwsurv/evaluator.hpp"
#include "dwsurv/federation.hpp"
#include "dwsurv/fit.hpp"
#include "dwsurv/glm.hpp"
#include "dwsurv/linalg.hpp"
#include "dwsurv/selection.hpp"
#include "dwsurv/simgen.hpp"
#include "dwsurv/types.hpp"
#include "dwsurv/weights.hpp"

namespace dwsurv {

// Analysis strategies. Global strategies fit one nuisance model on pooled
// individual-level data and solve the estimating equation directly; local
// strategies fit nuisances per site and estimate through the aggregate-only
// distributed route. local_known uses the scenario's structural confounder
// sets (simulation only); local_selected screens per site.
enum class Strategy {
  kGlobalAll,
  kLocalAll,
  kLocalSelected,
  kLocalKnown,
  kInterceptOnly,
};

inline const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::kGlobalAll: return "global_all";
    case Strategy::kLocalAll: return "local_all";
    case Strategy::kLocalSelected: return "local_selected";
    case Strategy::kLocalKnown: return "local_known";
    case Strategy::kInterceptOnly: return "intercept_only";
  }
  return "unknown";
}

inline Strategy strategy_from_string(const std::string& s) {
  if (s == "global_all") return Strategy::kGlobalAll;
  if (s == "local_all") return Strategy::kLocalAll;
  if (s == "local_selected") return Strategy::kLocalSelected;
  if (s == "local_known") return Strategy::kLocalKnown;
  if (s == "intercept_only") return Strategy::kInterceptOnly;
  fail(ErrorCategory::usage, "unknown strategy '" + s + "'");
}

inline bool is_distributed(Strategy s) { return s != Strategy::kGlobalAll; }

// Pooled nuisance fits over the full dataset, used by the global strategy.
inline WeightVector global_nuisance_weights(const Dataset& ds, const ModelSpec& spec,
                                            const WeightSpec& wspec) {
  const Vector a_real = ds.a.cast<double>();
  const Matrix trt_design = expand_features(ds, spec.treatment_model);
  const Vector pi = fit_logistic<double>(trt_design, a_real).fitted_probabilities;
  Vector phi;
  if (ds.delta.minCoeff() == 1) {
    phi = Vector::Ones(ds.n());
  } else {
    const Matrix cens_design = expand_features_with_treatment(ds, spec.censoring_model);
    phi = fit_logistic<double>(cens_design, ds.delta.cast<double>()).fitted_probabilities;
  }
  return compute_weights(pi, phi, ds.a, wspec);
}

inline SitePayload payload_from_equations(int site_id, const WeightedNormalEquations& eq,
                                          const std::string& spec_hash) {
  SitePayload payload;
  payload.site_id = site_id;
  payload.n_events = eq.n_events;
  payload.p = static_cast<int>(eq.p);
  payload.spec_hash = spec_hash;
  payload.gram = eq.gram;
  payload.moment = eq.moment;
  payload.yy = eq.yy;
  payload.meat_basis = eq.meat_w32;
  payload.alt_meat_basis = eq.gram;
  return payload;
}

// Builds the per-site nuisance strategy for a given analysis strategy.
inline NuisanceStrategy site_strategy(Strategy strategy, const Dataset& site_ds, int scenario_id,
                                      double screening_alpha) {
  switch (strategy) {
    case Strategy::kLocalAll:
      return LocalAll{};
    case Strategy::kInterceptOnly:
      return LocalSelected{{}, {}};
    case Strategy::kLocalKnown: {
      if (scenario_id < 1) {
        fail(ErrorCategory::usage, "local_known requires a simulated scenario");
      }
      return LocalSelected{known_site_confounders(scenario_id, site_ds.site(0)),
                           known_site_censoring_vars(scenario_id, site_ds.site(0))};
    }
    case Strategy::kLocalSelected: {
      const SelectionReport report =
          screen_site(site_ds, site_ds.covariate_names, screening_alpha);
      return LocalSelected{report.treatment_variables(), report.censoring_variables()};
    }
    case Strategy::kGlobalAll:
      break;
  }
  fail(ErrorCategory::usage, "global strategy has no per-site nuisance form");
}

struct StrategyFit {
  FittedRule rule;
  Matrix covariance_as_written;
  Matrix covariance_variance_consistent;
  Vector per_site_sigma;
  std::vector<std::string> warnings;
};

// Runs one full analysis of a dataset under the chosen strategy: nuisances,
// weights, estimating equation (pooled or via per-site payloads), and both
// sandwich covariances. scenario_id < 1 means "not a simulated scenario"
// (local_known is then unavailable).
inline StrategyFit fit_with_strategy(const Dataset& ds, const ModelSpec& spec,
                                     const WeightSpec& wspec, Strategy strategy,
                                     int scenario_id = 0, double screening_alpha = 0.05) {
  spec.validate();
  StrategyFit out;
  if (strategy == Strategy::kGlobalAll) {
    const WeightVector wv = global_nuisance_weights(ds, spec, wspec);
    out.rule = fit_pooled(ds, spec, wv);
    const DesignMatrices design = build_design(ds, spec);
    const WeightedNormalEquations eq = accumulate_normal_equations(ds, design, wv.w);
    const SitePayload pooled = payload_from_equations(1, eq, spec.design_hash());
    const CombinedFit aw = combine({pooled}, VarianceMode::kAsWritten);
    const CombinedFit vc = combine({pooled}, VarianceMode::kVarianceConsistent);
    out.covariance_as_written = aw.covariance;
    out.covariance_variance_consistent = vc.covariance;
    out.per_site_sigma = aw.per_site_sigma;
    out.rule.covariance = aw.covariance;
    return out;
  }

  std::vector<SitePayload> payloads;
  for (const Dataset& site_ds : ds.split_by_site()) {
    const NuisanceStrategy ns = site_strategy(strategy, site_ds, scenario_id, screening_alpha);
    payloads.push_back(site_summarize(site_ds, spec, wspec, ns));
  }
  const CombinedFit aw = combine(payloads, VarianceMode::kAsWritten);
  const CombinedFit vc = combine(payloads, VarianceMode::kVarianceConsistent);

  const Eigen::Index pf = static_cast<Eigen::Index>(spec.treatment_free.size());
  const Eigen::Index pg = static_cast<Eigen::Index>(spec.blip.size());
  out.rule.beta = aw.theta.head(pf);
  out.rule.psi = aw.theta.tail(pg);
  out.rule.spec = spec;
  out.rule.covariate_names = ds.covariate_names;
  for (const auto& pl : payloads) out.rule.n_events += pl.n_events;
  out.rule.covariance = aw.covariance;
  out.covariance_as_written = aw.covariance;
  out.covariance_variance_consistent = vc.covariance;
  out.per_site_sigma = aw.per_site_sigma;
  out.warnings = aw.warnings;
  return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo driver
// ---------------------------------------------------------------------------

struct SimulationRequest {
  ScenarioConfig config;
  int reps = 1000;
  bool treatment_free_correct = true;
  Strategy strategy = Strategy::kGlobalAll;
  WeightSpec weight_spec;
  Eigen::Index cohort_size = 100000;
  double screening_alpha = 0.05;
  int threads = 1;
  std::string dump_data_dir;  // when nonempty, write each replication's dataset
};

struct ReplicationResult {
  double psi0 = 0.0;
  double psi1 = 0.0;
  double se_psi0_aw = 0.0;
  double se_psi1_aw = 0.0;
  double se_psi0_vc = 0.0;
  double se_psi1_vc = 0.0;
  bool psd_aw = false;
  bool psd_vc = false;
  double dvf = 0.0;
  std::int64_t n_events = 0;
};

struct SimulationResult {
  std::vector<ReplicationResult> reps;
  MetricSummary summary;
  Eigen::Vector2d truth;

  Matrix estimates() const {
    Matrix m(static_cast<Eigen::Index>(reps.size()), 2);
    for (std::size_t r = 0; r < reps.size(); ++r) {
      m(static_cast<Eigen::Index>(r), 0) = reps[r].psi0;
      m(static_cast<Eigen::Index>(r), 1) = reps[r].psi1;
    }
    return m;
  }

  Vector dvfs() const {
    Vector v(static_cast<Eigen::Index>(reps.size()));
    for (std::size_t r = 0; r < reps.size(); ++r) v(static_cast<Eigen::Index>(r)) = reps[r].dvf;
    return v;
  }
};

inline ReplicationResult run_replication(const SimulationRequest& req, std::uint64_t rep) {
  const auto [ds, truth] = gen_dataset(req.config, rep);
  const ModelSpec spec = analysis_model_spec(req.treatment_free_correct);
  const StrategyFit fit = fit_with_strategy(ds, spec, req.weight_spec, req.strategy,
                                            req.config.scenario_id, req.screening_alpha);
  ReplicationResult out;
  out.psi0 = fit.rule.psi(0);
  out.psi1 = fit.rule.psi(1);
  const Eigen::Index p = fit.covariance_as_written.rows();
  out.se_psi0_aw = std::sqrt(std::max(0.0, fit.covariance_as_written(p - 2, p - 2)));
  out.se_psi1_aw = std::sqrt(std::max(0.0, fit.covariance_as_written(p - 1, p - 1)));
  out.se_psi0_vc = std::sqrt(std::max(0.0, fit.covariance_variance_consistent(p - 2, p - 2)));
  out.se_psi1_vc = std::sqrt(std::max(0.0, fit.covariance_variance_consistent(p - 1, p - 1)));
  out.psd_aw = is_positive_semidefinite(fit.covariance_as_written);
  out.psd_vc = is_positive_semidefinite(fit.covariance_variance_consistent);
  out.n_events = fit.rule.n_events;

  SplitRng cohort_rng = SplitRng::stream(req.config.seed, {rep, SplitRng::kCohort});
  out.dvf = value_function(fit.rule, truth, req.cohort_size, cohort_rng).dvf;

  if (!req.dump_data_dir.empty()) {
    char name[64];
    std::snprintf(name, sizeof(name), "data_rep%05llu.csv",
                  static_cast<unsigned long long>(rep));
    write_dataset_csv(ds, (std::filesystem::path(req.dump_data_dir) / name).string());
  }
  return out;
}

// Replications fan out to a worker pool; every worker derives its own RNG
// streams from (seed, rep), and results land in rep-indexed slots, so the
// output is identical for any thread count.
inline SimulationResult run_simulation(const SimulationRequest& req) {
  if (req.reps < 1) fail(ErrorCategory::usage, "reps must be >= 1");
  SimulationResult result;
  result.reps.resize(static_cast<std::size_t>(req.reps));
  result.truth = blip_parameters(req.config.effect);

  const int workers = std::max(1, req.threads);
  std::atomic<int> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  auto work = [&]() {
    while (true) {
      const int r = next.fetch_add(1);
      if (r >= req.reps) break;
      try {
        result.reps[static_cast<std::size_t>(r)] =
            run_replication(req, static_cast<std::uint64_t>(r));
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  Vector truth(2);
  truth << result.truth(0), result.truth(1);
  result.summary = summarize(result.estimates(), truth, result.dvfs());
  return result;
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

inline void write_estimates_csv(const SimulationResult& result, std::ostream& os) {
  os << "rep,psi0,psi1,se_psi0_as_written,se_psi1_as_written,"
        "se_psi0_variance_consistent,se_psi1_variance_consistent,"
        "psd_as_written,psd_variance_consistent,dvf,n_events\n";
  for (std::size_t r = 0; r < result.reps.size(); ++r) {
    const auto& row = result.reps[r];
    os << r << ',' << detail::format_real17(row.psi0) << ',' << detail::format_real17(row.psi1)
       << ',' << detail::format_real17(row.se_psi0_aw) << ','
       << detail::format_real17(row.se_psi1_aw) << ',' << detail::format_real17(row.se_psi0_vc)
       << ',' << detail::format_real17(row.se_psi1_vc) << ',' << (row.psd_aw ? 1 : 0) << ','
       << (row.psd_vc ? 1 : 0) << ',' << detail::format_real17(row.dvf) << ',' << row.n_events
       << '\n';
  }
}

inline void write_metrics_csv(const std::string& method, int scenario,
                              const MetricSummary& summary, std::ostream& os) {
  os << "method,scenario,param,mean,lo,hi,rb_pct,mse,rmse,dvf,dvf_sd\n";
  const char* names[] = {"psi0", "psi1"};
  for (std::size_t j = 0; j < summary.params.size() && j < 2; ++j) {
    const auto& p = summary.params[j];
    os << method << ',' << scenario << ',' << names[j] << ',' << detail::format_real17(p.mean)
       << ',' << detail::format_real17(p.lo) << ',' << detail::format_real17(p.hi) << ','
       << detail::format_real17(p.rb_pct) << ',' << detail::format_real17(p.mse) << ','
       << detail::format_real17(p.rmse) << ',' << detail::format_real17(summary.dvf_mean) << ','
       << detail::format_real17(summary.dvf_sd) << '\n';
  }
}

// Runs a simulation request and writes metrics.csv + estimates.csv into
// out_dir. This is the body of the CLI's `simulate` subcommand.
inline SimulationResult run_simulate_command(const SimulationRequest& req,
                                             const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const SimulationResult result = run_simulation(req);
  {
    std::ofstream os(std::filesystem::path(out_dir) / "estimates.csv");
    if (!os) fail(ErrorCategory::io, "cannot write estimates.csv in '" + out_dir + "'");
    write_estimates_csv(result, os);
  }
  {
    std::ofstream os(std::filesystem::path(out_dir) / "metrics.csv");
    if (!os) fail(ErrorCategory::io, "cannot write metrics.csv in '" + out_dir + "'");
    write_metrics_csv(to_string(req.strategy), req.config.scenario_id, result.summary, os);
  }
  return result;
}

}  // namespace dwsurv
