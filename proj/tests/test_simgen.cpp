#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "dwsurv/simgen.hpp"

using namespace dwsurv;

TEST_CASE("covariate moments per site parity") {
  SplitRng odd_rng = SplitRng::stream(1, {0, SplitRng::kCovariates, 1});
  const Eigen::Index n = 1000000;
  const Matrix odd = gen_covariates(1, n, odd_rng);
  CHECK(odd.col(0).mean() == doctest::Approx(0.55).epsilon(0.004));
  CHECK(odd.col(1).mean() == doctest::Approx(10.0).epsilon(0.001));
  const double sd2 = std::sqrt((odd.col(1).array() - odd.col(1).mean()).square().mean());
  CHECK(sd2 == doctest::Approx(1.0).epsilon(0.01));
  CHECK(odd.col(2).minCoeff() >= 6.0);
  CHECK(odd.col(2).maxCoeff() <= 14.0);
  CHECK(odd.col(2).mean() == doctest::Approx(10.0).epsilon(0.002));

  SplitRng even_rng = SplitRng::stream(1, {0, SplitRng::kCovariates, 2});
  const Matrix even = gen_covariates(2, n, even_rng);
  CHECK(even.col(0).mean() == doctest::Approx(0.4).epsilon(0.005));
  CHECK(even.col(1).mean() == doctest::Approx(8.0).epsilon(0.002));
  // lognormal mean: 7 + exp(0.7 + 0.5^2 / 2)
  const double x3_mean = 7.0 + std::exp(0.7 + 0.125);
  CHECK(even.col(2).mean() == doctest::Approx(x3_mean).epsilon(0.0025));
  CHECK(even.col(2).minCoeff() > 7.0);
}

TEST_CASE("covariate draws are reproducible from the stream") {
  SplitRng a = SplitRng::stream(77, {3, SplitRng::kCovariates, 5});
  SplitRng b = SplitRng::stream(77, {3, SplitRng::kCovariates, 5});
  const Matrix ma = gen_covariates(5, 500, a);
  const Matrix mb = gen_covariates(5, 500, b);
  CHECK((ma - mb).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("propensity parameter laws per scenario") {
  SplitRng rng = SplitRng::stream(9, {0, SplitRng::kAlphas});

  const Matrix sc1 = draw_alphas(1, 10, rng);
  CHECK((sc1.array() == 0.01).all());
  const Matrix sc2 = draw_alphas(2, 10, rng);
  CHECK((sc2.array() == 0.1).all());

  const Matrix sc3 = draw_alphas(3, 10, rng);
  CHECK(sc3.minCoeff() >= 0.002);
  CHECK(sc3.maxCoeff() <= 0.02);

  for (int scenario : {5, 6, 7}) {
    const Matrix a = draw_alphas(scenario, 10, rng);
    const double lo0 = scenario == 6 ? 0.6 : 0.01;
    const double hi0 = scenario == 6 ? 0.8 : 0.06;
    const double lo23 = scenario == 6 ? 0.14 : 0.002;
    const double hi23 = scenario == 6 ? 0.18 : 0.02;
    for (int j = 1; j <= 10; ++j) {
      CHECK(a(j - 1, 0) >= lo0);
      CHECK(a(j - 1, 0) <= hi0);
      if (j <= 4) {
        CHECK(a(j - 1, 1) >= lo0);
        CHECK(a(j - 1, 1) <= hi0);
      } else {
        CHECK(a(j - 1, 1) == 0.0);
      }
      if (j >= 4 && j <= 7) {
        CHECK(a(j - 1, 2) >= lo23);
        CHECK(a(j - 1, 2) <= hi23);
      } else {
        CHECK(a(j - 1, 2) == 0.0);
      }
      if (j >= 8) {
        CHECK(a(j - 1, 3) >= lo23);
        CHECK(a(j - 1, 3) <= hi23);
      } else {
        CHECK(a(j - 1, 3) == 0.0);
      }
    }
  }
}

TEST_CASE("site sizes sum exactly to n_total") {
  ScenarioConfig config;
  config.n_total = 2503;  // does not divide evenly
  const auto sizes = site_sizes(config);
  Eigen::Index total = 0;
  for (const auto s : sizes) total += s;
  CHECK(total == 2503);

  config.site_fractions(0) = 0.05;  // out of the allowed band
  config.site_fractions(1) = 0.08;
  CHECK_THROWS_AS(config.validate(), Error);
}

TEST_CASE("generated datasets are reproducible and censoring-free unless scenario 7") {
  ScenarioConfig config;
  config.scenario_id = 3;
  config.n_total = 2500;
  config.seed = 99;
  const auto [ds1, truth1] = gen_dataset(config, 4);
  const auto [ds2, truth2] = gen_dataset(config, 4);
  CHECK((ds1.x - ds2.x).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ds1.time - ds2.time).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ds1.a - ds2.a).cwiseAbs().maxCoeff() == 0);
  CHECK((truth1.alphas - truth2.alphas).cwiseAbs().maxCoeff() == 0.0);
  CHECK(ds1.delta.minCoeff() == 1);

  const auto [ds3, truth3] = gen_dataset(config, 5);
  CHECK((ds1.time - ds3.time).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("scenario 7 censors about 45 percent overall") {
  ScenarioConfig config;
  config.scenario_id = 7;
  config.n_total = 250000;
  config.seed = 7;
  const auto [ds, truth] = gen_dataset(config, 0);
  const double censored =
      1.0 - static_cast<double>(ds.delta.sum()) / static_cast<double>(ds.n());
  CHECK(censored > 0.43);
  CHECK(censored < 0.47);
  // censored records keep their surrogate observation time positive
  CHECK(ds.time.minCoeff() > 0.0);
}

TEST_CASE("treatment prevalence matches an independent oracle of the laws") {
  // Scenarios 1 and 2 share one global propensity model (alpha constant at
  // 0.01 and 0.1). The oracle samples the covariate mixture with std::
  // distributions, which share no code with SplitRng, and averages the
  // analytic assignment probability.
  auto oracle_prevalence = [](double alpha) {
    std::mt19937_64 eng(12345);
    std::bernoulli_distribution b_odd(0.55), b_even(0.4);
    std::normal_distribution<double> n_odd(10.0, 1.0), n_even(8.0, 1.5);
    std::uniform_real_distribution<double> u_odd(6.0, 14.0), u_site(0.0, 1.0);
    std::lognormal_distribution<double> ln_even(0.7, 0.5);
    const Vector fractions = ScenarioConfig::default_site_fractions();
    double expected = 0.0;
    const int oracle_n = 400000;
    for (int i = 0; i < oracle_n; ++i) {
      double u = u_site(eng);
      int site = 10;
      double cdf = 0.0;
      for (int j = 0; j < 10; ++j) {
        cdf += fractions(j);
        if (u < cdf) {
          site = j + 1;
          break;
        }
      }
      double x1, x2, x3;
      if (site % 2 == 1) {
        x1 = b_odd(eng) ? 1.0 : 0.0;
        x2 = n_odd(eng);
        x3 = u_odd(eng);
      } else {
        x1 = b_even(eng) ? 1.0 : 0.0;
        x2 = n_even(eng);
        x3 = 7.0 + ln_even(eng);
      }
      expected += expit(alpha * (1.0 + x1 + x2 + x3));
    }
    return expected / oracle_n;
  };

  for (int scenario : {1, 2}) {
    ScenarioConfig config;
    config.scenario_id = scenario;
    config.n_total = 250000;
    config.seed = 21;
    const auto [ds, truth] = gen_dataset(config, 0);
    const double prevalence = ds.a.cast<double>().mean();
    const double expected = oracle_prevalence(scenario == 1 ? 0.01 : 0.1);
    // within ~3 combined Monte Carlo standard errors
    CHECK(prevalence == doctest::Approx(expected).epsilon(0.004));
  }
}

TEST_CASE("outcome noise is independent of the covariates") {
  ScenarioConfig config;
  config.scenario_id = 1;
  config.n_total = 100000;
  config.seed = 5;
  const auto [ds, truth] = gen_dataset(config, 0);
  Vector eps(ds.n());
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    eps(i) = std::log(ds.time(i)) - truth.treatment_free(ds.x(i, 0), ds.x(i, 1), ds.x(i, 2)) -
             ds.a(i) * truth.blip(ds.x(i, 1));
  }
  CHECK(eps.mean() == doctest::Approx(0.0).epsilon(0.02));
  CHECK(std::sqrt((eps.array() - eps.mean()).square().mean()) == doctest::Approx(1.0).epsilon(0.02));
  for (Eigen::Index k = 0; k < 3; ++k) {
    const Vector x = ds.x.col(k);
    const double num = ((x.array() - x.mean()) * (eps.array() - eps.mean())).mean();
    const double corr = num / (std::sqrt((x.array() - x.mean()).square().mean()) *
                               std::sqrt((eps.array() - eps.mean()).square().mean()));
    CHECK(std::abs(corr) < 3.5 / std::sqrt(static_cast<double>(ds.n())) + 0.005);
  }
}

TEST_CASE("true optimal action thresholds") {
  CHECK(true_optimal_action(9.99, EffectSize::kSmall) == 1);
  CHECK(true_optimal_action(10.0, EffectSize::kSmall) == 0);  // exact boundary -> control
  CHECK(true_optimal_action(10.01, EffectSize::kSmall) == 0);
  CHECK(true_optimal_action(7.5, EffectSize::kLarge) == 0);
  CHECK(true_optimal_action(7.2, EffectSize::kLarge) == 1);
}

TEST_CASE("known structural confounder sets") {
  CHECK(known_site_confounders(1, 3) == std::vector<std::string>{"x1", "x2", "x3"});
  CHECK(known_site_confounders(5, 2) == std::vector<std::string>{"x1"});
  CHECK(known_site_confounders(5, 4) == std::vector<std::string>{"x1", "x2"});
  CHECK(known_site_confounders(6, 6) == std::vector<std::string>{"x2"});
  CHECK(known_site_confounders(7, 9) == std::vector<std::string>{"x3"});
  CHECK(known_site_censoring_vars(7, 2) == std::vector<std::string>{"x1"});
  CHECK(known_site_censoring_vars(7, 3).empty());
  CHECK(known_site_censoring_vars(5, 2).empty());
}
