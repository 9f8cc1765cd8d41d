#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "dwsurv/core.hpp"
#include "dwsurv/errors.hpp"
#include "dwsurv/rng.hpp"
#include "dwsurv/types.hpp"

namespace dwsurv {

enum class EffectSize { kSmall, kLarge };

inline Eigen::Vector2d blip_parameters(EffectSize e) {
  return e == EffectSize::kSmall ? Eigen::Vector2d(0.15, -0.015) : Eigen::Vector2d(4.0, -0.55);
}

// Full description of one simulated scenario. Scenario 7 is scenario 5's
// treatment mechanism with censoring switched on.
struct ScenarioConfig {
  int scenario_id = 5;
  int n_sites = 10;
  std::int64_t n_total = 2500;
  Vector site_fractions = default_site_fractions();
  EffectSize effect = EffectSize::kSmall;
  std::array<double, 5> beta{4.0, 0.2, -0.1, 0.01, -0.005};
  std::uint64_t seed = 1;

  static Vector default_site_fractions() {
    Vector f(10);
    f << 0.06, 0.07, 0.08, 0.09, 0.10, 0.10, 0.11, 0.12, 0.13, 0.14;
    return f;
  }

  bool has_censoring() const { return scenario_id == 7; }

  void validate() const {
    if (scenario_id < 1 || scenario_id > 7) fail(ErrorCategory::schema, "scenario must be 1..7");
    if (site_fractions.size() != n_sites) {
      fail(ErrorCategory::schema, "site_fractions length must equal the number of sites");
    }
    if (std::abs(site_fractions.sum() - 1.0) > 1e-12) {
      fail(ErrorCategory::schema, "site fractions must sum to 1");
    }
    for (Eigen::Index j = 0; j < site_fractions.size(); ++j) {
      if (site_fractions(j) < 0.06 - 1e-12 || site_fractions(j) > 0.14 + 1e-12) {
        fail(ErrorCategory::schema, "site fractions must lie in [0.06, 0.14]");
      }
    }
  }
};

// What the generator knows and an analysis does not: the realized propensity
// parameters, the true blip, and the treatment-free surface. Value-function
// evaluation draws fresh cohorts against this.
struct GeneratedTruth {
  int scenario_id = 0;
  Matrix alphas;  // n_sites x 4, (alpha0..alpha3) per site
  Eigen::Vector2d psi;
  Vector site_fractions;
  std::function<double(double, double, double)> treatment_free;

  double blip(double x2) const { return psi(0) + psi(1) * x2; }
};

inline int true_optimal_action(double x2, EffectSize effect) {
  const Eigen::Vector2d psi = blip_parameters(effect);
  return psi(0) + psi(1) * x2 > 0.0 ? 1 : 0;
}

// Covariate laws alternate between odd and even sites (1-indexed).
inline Eigen::Vector3d draw_covariate_row(int site, SplitRng& rng) {
  Eigen::Vector3d x;
  if (site % 2 == 1) {
    x(0) = rng.bernoulli(0.55);
    x(1) = rng.normal(10.0, 1.0);
    x(2) = rng.uniform(6.0, 14.0);
  } else {
    x(0) = rng.bernoulli(0.4);
    x(1) = rng.normal(8.0, 1.5);
    x(2) = 7.0 + rng.lognormal(0.7, 0.5);
  }
  return x;
}

inline Matrix gen_covariates(int site, Eigen::Index m, SplitRng& rng) {
  if (site < 1) fail(ErrorCategory::schema, "site index must be >= 1");
  Matrix x(m, 3);
  for (Eigen::Index i = 0; i < m; ++i) x.row(i) = draw_covariate_row(site, rng).transpose();
  return x;
}

// Propensity parameters per site. Scenarios 1-2 share one global model,
// 3-4 draw site-specific coefficients for every covariate, and 5-7 activate
// each covariate only on a block of sites (x1 on sites 1-4, x2 on 4-7,
// x3 on 8-10), with scenario 7 reusing the scenario-5 ranges.
inline Matrix draw_alphas(int scenario, int n_sites, SplitRng& rng) {
  Matrix a = Matrix::Zero(n_sites, 4);
  const int base = scenario == 7 ? 5 : scenario;
  for (int j = 1; j <= n_sites; ++j) {
    const Eigen::Index r = j - 1;
    switch (base) {
      case 1: a.row(r).setConstant(0.01); break;
      case 2: a.row(r).setConstant(0.1); break;
      case 3:
        for (int k = 0; k < 4; ++k) a(r, k) = rng.uniform(0.002, 0.02);
        break;
      case 4:
        for (int k = 0; k < 4; ++k) a(r, k) = rng.uniform(0.04, 0.14);
        break;
      case 5:
        a(r, 0) = rng.uniform(0.01, 0.06);
        a(r, 1) = (j >= 1 && j <= 4) ? rng.uniform(0.01, 0.06) : 0.0;
        a(r, 2) = (j >= 4 && j <= 7) ? rng.uniform(0.002, 0.02) : 0.0;
        a(r, 3) = (j >= 8 && j <= 10) ? rng.uniform(0.002, 0.02) : 0.0;
        break;
      case 6:
        a(r, 0) = rng.uniform(0.6, 0.8);
        a(r, 1) = (j >= 1 && j <= 4) ? rng.uniform(0.6, 0.8) : 0.0;
        a(r, 2) = (j >= 4 && j <= 7) ? rng.uniform(0.14, 0.18) : 0.0;
        a(r, 3) = (j >= 8 && j <= 10) ? rng.uniform(0.14, 0.18) : 0.0;
        break;
      default: fail(ErrorCategory::schema, "scenario must be 1..7");
    }
  }
  return a;
}

// Which covariates each site's treatment mechanism actually uses; this is
// structural (from the scenario definition), not read off realized draws.
inline std::vector<std::string> known_site_confounders(int scenario, int site) {
  if (scenario >= 1 && scenario <= 4) return {"x1", "x2", "x3"};
  std::vector<std::string> vars;
  if (site >= 1 && site <= 4) vars.push_back("x1");
  if (site >= 4 && site <= 7) vars.push_back("x2");
  if (site >= 8 && site <= 10) vars.push_back("x3");
  return vars;
}

// Covariates the scenario-7 censoring mechanism uses at a given site:
// even sites censor as a function of x1, odd sites completely at random.
inline std::vector<std::string> known_site_censoring_vars(int scenario, int site) {
  if (scenario != 7) return {};
  return site % 2 == 0 ? std::vector<std::string>{"x1"} : std::vector<std::string>{};
}

// Per-site sizes by largest remainder, summing to n_total exactly.
inline std::vector<Eigen::Index> site_sizes(const ScenarioConfig& config) {
  std::vector<Eigen::Index> sizes(static_cast<std::size_t>(config.n_sites));
  std::vector<std::pair<double, int>> remainders;
  Eigen::Index assigned = 0;
  for (int j = 0; j < config.n_sites; ++j) {
    const double exact = static_cast<double>(config.n_total) * config.site_fractions(j);
    sizes[static_cast<std::size_t>(j)] = static_cast<Eigen::Index>(std::floor(exact));
    assigned += sizes[static_cast<std::size_t>(j)];
    remainders.emplace_back(exact - std::floor(exact), j);
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (Eigen::Index k = 0; k < config.n_total - assigned; ++k) {
    ++sizes[static_cast<std::size_t>(remainders[static_cast<std::size_t>(k)].second)];
  }
  return sizes;
}

// Generates one replication. Streams are split per (seed, replication,
// purpose, site) so any site's draws are identical whether the dataset is
// built pooled or site by site, serially or in parallel.
inline std::pair<Dataset, GeneratedTruth> gen_dataset(const ScenarioConfig& config,
                                                      std::uint64_t replication = 0) {
  config.validate();
  GeneratedTruth truth;
  truth.scenario_id = config.scenario_id;
  truth.psi = blip_parameters(config.effect);
  truth.site_fractions = config.site_fractions;
  {
    SplitRng alpha_rng = SplitRng::stream(config.seed, {replication, SplitRng::kAlphas});
    truth.alphas = draw_alphas(config.scenario_id, config.n_sites, alpha_rng);
  }
  const std::array<double, 5> b = config.beta;
  truth.treatment_free = [b](double x1, double x2, double x3) {
    return b[0] + b[1] * x1 + b[2] * std::sin(x2) + b[3] * x3 + b[4] * x1 * x3;
  };

  const auto sizes = site_sizes(config);
  Dataset ds;
  ds.covariate_names = {"x1", "x2", "x3"};
  ds.site.resize(config.n_total);
  ds.x.resize(config.n_total, 3);
  ds.a.resize(config.n_total);
  ds.time.resize(config.n_total);
  ds.delta.resize(config.n_total);
  ds.id.reserve(static_cast<std::size_t>(config.n_total));

  Eigen::Index row = 0;
  for (int j = 1; j <= config.n_sites; ++j) {
    const std::uint64_t sj = static_cast<std::uint64_t>(j);
    SplitRng cov_rng = SplitRng::stream(config.seed, {replication, SplitRng::kCovariates, sj});
    SplitRng trt_rng = SplitRng::stream(config.seed, {replication, SplitRng::kTreatment, sj});
    SplitRng out_rng = SplitRng::stream(config.seed, {replication, SplitRng::kOutcome, sj});
    SplitRng cen_rng = SplitRng::stream(config.seed, {replication, SplitRng::kCensoring, sj});
    const auto alpha = truth.alphas.row(j - 1);
    for (Eigen::Index i = 0; i < sizes[static_cast<std::size_t>(j - 1)]; ++i, ++row) {
      const Eigen::Vector3d x = draw_covariate_row(j, cov_rng);
      const double lp = alpha(0) + alpha(1) * x(0) + alpha(2) * x(1) + alpha(3) * x(2);
      const int a = trt_rng.bernoulli(expit(lp));
      const double eps = out_rng.normal();
      const double log_y = truth.treatment_free(x(0), x(1), x(2)) +
                           a * (truth.psi(0) + truth.psi(1) * x(1)) + eps;
      int delta = 1;
      if (config.has_censoring()) {
        const double p_censor = j % 2 == 1 ? 0.3 : expit(0.1 + 0.6 * x(0));
        if (cen_rng.bernoulli(p_censor) == 1) delta = 0;
      }
      ds.id.push_back(row + 1);
      ds.site(row) = j;
      ds.x.row(row) = x.transpose();
      ds.a(row) = a;
      // Censoring hides the event; the recorded time is the observation-time
      // surrogate, which never enters estimation when delta = 0.
      ds.time(row) = std::exp(log_y);
      ds.delta(row) = delta;
    }
  }
  return {std::move(ds), std::move(truth)};
}

// Analysis model definitions used throughout the simulation study. The
// misspecified treatment-free basis replaces sin(x2) by a linear term and
// drops the x1*x3 interaction.
inline ModelSpec analysis_model_spec(bool treatment_free_correct) {
  ModelSpec spec;
  if (treatment_free_correct) {
    spec.treatment_free = parse_feature_list("1, x1, sin(x2), x3, x1*x3");
  } else {
    spec.treatment_free = parse_feature_list("1, x1, x2, x3");
  }
  spec.blip = parse_feature_list("1, x2");
  spec.treatment_model = parse_feature_list("1, x1, x2, x3");
  spec.censoring_model = parse_feature_list("1, x1, x2, x3");
  spec.validate();
  return spec;
}

}  // namespace dwsurv
