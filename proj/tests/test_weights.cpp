#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "dwsurv/rng.hpp"
#include "dwsurv/weights.hpp"

using namespace dwsurv;

TEST_CASE("weight formulas on hand values") {
  Vector pi(2), phi(2);
  IntVector a(2);
  pi << 0.5, 0.2;
  phi << 1.0, 0.5;
  a << 1, 0;

  WeightSpec overlap;
  const WeightVector wo = compute_weights(pi, phi, a, overlap);
  CHECK(wo.w(0) == doctest::Approx(0.5));           // |1 - 0.5| / 1
  CHECK(wo.w(1) == doctest::Approx(0.2 / 0.5));     // |0 - 0.2| / 0.5

  WeightSpec ipt;
  ipt.treatment_kind = WeightSpec::Family::kIpt;
  const WeightVector wi = compute_weights(pi, phi, a, ipt);
  CHECK(wi.w(0) == doctest::Approx(2.0));           // (1/0.5) / 1
  CHECK(wi.w(1) == doctest::Approx(2.5));           // (1/0.8) / 0.5
}

TEST_CASE("truncation floors the nuisance probabilities") {
  Vector pi(1), phi(1);
  IntVector a(1);
  pi << 0.001;
  phi << 0.002;
  a << 1;
  WeightSpec spec;
  spec.treatment_kind = WeightSpec::Family::kIpt;
  spec.truncation = 0.05;
  const WeightVector w = compute_weights(pi, phi, a, spec);
  CHECK(w.pi(0) == doctest::Approx(0.05));
  CHECK(w.phi(0) == doctest::Approx(0.05));
  CHECK(w.w(0) == doctest::Approx((1.0 / 0.05) / 0.05));

  spec.truncation = 0.7;
  CHECK_THROWS_AS(static_cast<void>(compute_weights(pi, phi, a, spec)), Error);
}

TEST_CASE("positivity violations are reported") {
  Vector pi(1), phi(1);
  IntVector a(1);
  pi << 0.5;
  phi << 0.0;
  a << 0;
  CHECK_THROWS_AS(static_cast<void>(compute_weights(pi, phi, a, WeightSpec{})), Error);
  pi << 1.0;
  phi << 0.5;
  CHECK_THROWS_AS(static_cast<void>(compute_weights(pi, phi, a, WeightSpec{})), Error);
}

TEST_CASE("balancing identity holds for both families over a random grid") {
  SplitRng rng = SplitRng::stream(2024, {1});
  double worst_overlap = 0.0;
  double worst_ipt = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const double pi = rng.uniform(0.01, 0.99);
    const double phi0 = rng.uniform(0.01, 0.99);
    const double phi1 = rng.uniform(0.01, 0.99);
    const auto overlap = check_balancing(pi, phi0, phi1, WeightSpec::Family::kOverlap);
    const auto ipt = check_balancing(pi, phi0, phi1, WeightSpec::Family::kIpt);
    worst_overlap = std::max(worst_overlap, overlap.max_relative_spread);
    worst_ipt = std::max(worst_ipt, ipt.max_relative_spread);
    // overlap cells all equal pi (1 - pi); ipt cells all equal 1
    CHECK(overlap.cells[0] == doctest::Approx(pi * (1.0 - pi)).epsilon(1e-12));
    CHECK(ipt.cells[3] == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(worst_overlap < 1e-12);
  CHECK(worst_ipt < 1e-12);
}

TEST_CASE("a wrong weight function breaks the identity") {
  const auto flat = check_balancing(0.3, 0.8, 0.8, [](int, int, double, double) { return 1.0; });
  CHECK(flat.max_relative_spread > 0.1);
}

TEST_CASE("overlap weights are bounded, IPT weights explode near the boundary") {
  Vector pi(2), phi(2);
  IntVector a(2);
  pi << 0.999, 0.001;
  phi << 0.5, 0.5;
  a << 0, 1;

  const WeightVector overlap = compute_weights(pi, phi, a, WeightSpec{});
  CHECK(overlap.w.maxCoeff() <= 1.0 / 0.5 + 1e-12);

  WeightSpec ipt;
  ipt.treatment_kind = WeightSpec::Family::kIpt;
  const WeightVector unbounded = compute_weights(pi, phi, a, ipt);
  CHECK(unbounded.w.maxCoeff() > 1000.0);

  ipt.truncation = 0.05;
  const WeightVector capped = compute_weights(pi, phi, a, ipt);
  CHECK(capped.w.maxCoeff() <= (1.0 / 0.05) / 0.5 + 1e-12);
}
