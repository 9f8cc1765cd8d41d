#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "dwsurv/core.hpp"
#include "dwsurv/errors.hpp"
#include "dwsurv/fit.hpp"
#include "dwsurv/glm.hpp"
#include "dwsurv/linalg.hpp"
#include "dwsurv/types.hpp"
#include "dwsurv/weights.hpp"

namespace dwsurv {

// Aggregate sufficient statistics one site exports. Everything downstream
// (point estimate, per-site residual variance, sandwich meat) is a function
// of these fields alone; no record-level value appears here and the payload
// size is O(p^2) regardless of the site's sample size. That containment is
// the privacy argument: with n_j > p the map from rows to these aggregates
// is many-to-one (any weight-preserving remixing of rows that fixes the
// cross-products produces the same payload), so individual rows cannot be
// reconstructed from what leaves the site.
struct SitePayload {
  int site_id = 0;
  std::int64_t n_events = 0;
  int p = 0;
  std::string spec_hash;
  Matrix gram;            // X^T W X over uncensored rows
  Vector moment;          // X^T W y~ over uncensored rows
  double yy = 0.0;        // y~^T W y~ over uncensored rows
  Matrix meat_basis;      // sum of delta * w^(3/2) x x^T  (as-written variance)
  Matrix alt_meat_basis;  // sum of delta * w x x^T        (variance-consistent)

  void validate() const {
    if (p <= 0 || gram.rows() != p || gram.cols() != p || moment.size() != p ||
        meat_basis.rows() != p || meat_basis.cols() != p || alt_meat_basis.rows() != p ||
        alt_meat_basis.cols() != p) {
      fail(ErrorCategory::protocol, "payload matrix shapes inconsistent with p");
    }
    const double scale = std::max(1.0, gram.cwiseAbs().maxCoeff());
    if ((gram - gram.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
      fail(ErrorCategory::protocol, "payload gram matrix is not symmetric");
    }
  }
};

// How a site obtains its nuisance probabilities before aggregating.
struct LocalAll {};                       // fit the ModelSpec nuisance bases locally
struct LocalSelected {                    // intercept + the listed raw variables
  std::vector<std::string> treatment_vars;
  std::vector<std::string> censoring_vars;
};
struct Supplied {                         // externally computed probabilities, row-aligned
  Vector pi;
  Vector phi;
};
using NuisanceStrategy = std::variant<LocalAll, LocalSelected, Supplied>;

namespace detail {

inline std::vector<FeatureExpr> intercept_plus(const std::vector<std::string>& vars) {
  std::vector<FeatureExpr> exprs{FeatureExpr::intercept()};
  for (const auto& v : vars) exprs.push_back(FeatureExpr::var(v));
  return exprs;
}

inline Vector fit_nuisance_probability(const Dataset& ds, const Matrix& design,
                                       const Vector& response, const char* what) {
  try {
    const LogisticFit fit = fit_logistic<double>(design, response);
    return fit.fitted_probabilities;
  } catch (const Error& e) {
    if (e.category() == ErrorCategory::singular) {
      fail(ErrorCategory::singular, std::string(what) + " model singular: " + e.what());
    }
    throw;
  }
}

}  // namespace detail

// Fits the site's treatment and censoring models per the chosen strategy and
// returns the record-aligned (pi, phi) pair. When the site has no censored
// records the censoring probability is identically one.
inline WeightVector site_nuisance_weights(const Dataset& ds, const ModelSpec& spec,
                                          const WeightSpec& wspec,
                                          const NuisanceStrategy& strategy) {
  Vector pi, phi;
  if (const auto* supplied = std::get_if<Supplied>(&strategy)) {
    if (supplied->pi.size() != ds.n() || supplied->phi.size() != ds.n()) {
      fail(ErrorCategory::schema, "supplied nuisance vectors are misaligned with the dataset");
    }
    pi = supplied->pi;
    phi = supplied->phi;
  } else {
    std::vector<FeatureExpr> trt_exprs, cens_exprs;
    if (std::holds_alternative<LocalAll>(strategy)) {
      trt_exprs = spec.treatment_model;
      cens_exprs = spec.censoring_model;
    } else {
      const auto& sel = std::get<LocalSelected>(strategy);
      trt_exprs = detail::intercept_plus(sel.treatment_vars);
      cens_exprs = detail::intercept_plus(sel.censoring_vars);
    }
    const Vector a_real = ds.a.cast<double>();
    pi = detail::fit_nuisance_probability(ds, expand_features(ds, trt_exprs), a_real, "treatment");
    if (ds.delta.minCoeff() == 1) {
      phi = Vector::Ones(ds.n());
    } else {
      const Vector uncensored = ds.delta.cast<double>();
      phi = detail::fit_nuisance_probability(ds, expand_features_with_treatment(ds, cens_exprs),
                                             uncensored, "censoring");
    }
  }
  return compute_weights(pi, phi, ds.a, wspec);
}

// One site's half of the protocol: nuisances, weights, then the aggregate
// sufficient statistics over the uncensored rows.
inline SitePayload site_summarize(const Dataset& ds, const ModelSpec& spec,
                                  const WeightSpec& wspec, const NuisanceStrategy& strategy) {
  for (Eigen::Index i = 1; i < ds.n(); ++i) {
    if (ds.site(i) != ds.site(0)) {
      fail(ErrorCategory::schema, "site_summarize expects records from a single site");
    }
  }
  const WeightVector wv = site_nuisance_weights(ds, spec, wspec, strategy);
  const DesignMatrices design = build_design(ds, spec);
  const WeightedNormalEquations eq = accumulate_normal_equations(ds, design, wv.w);

  SitePayload payload;
  payload.site_id = ds.site(0);
  payload.n_events = eq.n_events;
  payload.p = static_cast<int>(eq.p);
  payload.spec_hash = spec.design_hash();
  payload.gram = eq.gram;
  payload.moment = eq.moment;
  payload.yy = eq.yy;
  payload.meat_basis = eq.meat_w32;
  payload.alt_meat_basis = eq.gram;
  return payload;
}

enum class VarianceMode {
  kAsWritten,           // meat_j = sigma_j * sum delta w^(3/2) x x^T
  kVarianceConsistent,  // meat_j = sigma_j^2 * sum delta w x x^T
};

inline const char* to_string(VarianceMode m) {
  return m == VarianceMode::kAsWritten ? "as_written" : "variance_consistent";
}

struct CombinedFit {
  Vector theta;
  Matrix covariance;
  Vector per_site_sigma;  // sigma_j, NaN where a site had too few events
  std::vector<int> sites_used;
  std::vector<std::string> warnings;
};

// Coordinator side: sums the site aggregates (in ascending site id, so the
// fold is order-independent), solves for theta, recovers each site's
// residual scale from its sufficient statistics, and assembles the sandwich
// covariance in the requested variance mode. Sites with n_events <= p still
// contribute to the point estimate but are dropped from the meat.
inline CombinedFit combine(std::vector<SitePayload> payloads,
                           VarianceMode mode = VarianceMode::kAsWritten) {
  if (payloads.empty()) fail(ErrorCategory::protocol, "no payloads to combine");
  std::sort(payloads.begin(), payloads.end(),
            [](const SitePayload& a, const SitePayload& b) { return a.site_id < b.site_id; });
  const int p = payloads.front().p;
  const std::string& hash = payloads.front().spec_hash;
  for (const auto& pl : payloads) {
    pl.validate();
    if (pl.p != p) fail(ErrorCategory::protocol, "payloads disagree on design dimension p");
    if (pl.spec_hash != hash) {
      fail(ErrorCategory::protocol, "payload design digest mismatch: sites used different "
                                    "treatment-free/blip design matrices");
    }
  }

  Matrix bread = Matrix::Zero(p, p);
  Vector moment = Vector::Zero(p);
  CombinedFit out;
  for (const auto& pl : payloads) {
    bread += pl.gram;
    moment += pl.moment;
    out.sites_used.push_back(pl.site_id);
  }
  out.theta = solve_normal_checked<double>(bread, moment).solution;

  // sigma_j^2 = (n_j - p)^{-1} R_j^T W_j R_j, recovered without a second
  // round because the weighted residual sum expands in (yy, moment, gram).
  Matrix meat = Matrix::Zero(p, p);
  out.per_site_sigma.resize(static_cast<Eigen::Index>(payloads.size()));
  for (std::size_t j = 0; j < payloads.size(); ++j) {
    const auto& pl = payloads[j];
    if (pl.n_events <= pl.p) {
      out.per_site_sigma(static_cast<Eigen::Index>(j)) = std::numeric_limits<double>::quiet_NaN();
      out.warnings.push_back("site " + std::to_string(pl.site_id) +
                             " has n_events <= p; excluded from variance");
      continue;
    }
    const double rss = pl.yy - 2.0 * out.theta.dot(pl.moment) +
                       out.theta.dot(pl.gram * out.theta);
    const double sigma2 = std::max(0.0, rss / static_cast<double>(pl.n_events - pl.p));
    const double sigma = std::sqrt(sigma2);
    out.per_site_sigma(static_cast<Eigen::Index>(j)) = sigma;
    if (mode == VarianceMode::kAsWritten) {
      meat += sigma * pl.meat_basis;
    } else {
      meat += sigma2 * pl.alt_meat_basis;
    }
  }
  out.covariance = sandwich<double>(bread, meat);
  return out;
}

// ---------------------------------------------------------------------------
// Wire format. A payload is a line-oriented text document, one field per
// line: "<key> <values...>". Matrices are row-major; reals carry 17
// significant digits so the round trip is bit exact. This file IS the
// protocol: nothing else leaves a site.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_matrix_row_major(std::ostream& os, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      os << ' ' << format_real(m(i, j));
    }
  }
}

}  // namespace detail

inline void write_payload(const SitePayload& payload, std::ostream& os) {
  payload.validate();
  os << "version 1\n";
  os << "site_id " << payload.site_id << "\n";
  os << "n_events " << payload.n_events << "\n";
  os << "p " << payload.p << "\n";
  os << "spec_hash " << payload.spec_hash << "\n";
  os << "gram";
  detail::write_matrix_row_major(os, payload.gram);
  os << "\nmoment";
  for (Eigen::Index i = 0; i < payload.moment.size(); ++i) {
    os << ' ' << detail::format_real(payload.moment(i));
  }
  os << "\nyy " << detail::format_real(payload.yy) << "\n";
  os << "meat_basis";
  detail::write_matrix_row_major(os, payload.meat_basis);
  os << "\nalt_meat_basis";
  detail::write_matrix_row_major(os, payload.alt_meat_basis);
  os << "\n";
}

inline void write_payload(const SitePayload& payload, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCategory::io, "cannot open '" + path + "' for writing");
  write_payload(payload, out);
}

inline SitePayload read_payload(std::istream& is) {
  std::map<std::string, std::vector<std::string>> fields;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    std::vector<std::string> values;
    std::string v;
    while (ls >> v) values.push_back(v);
    if (fields.count(key)) fail(ErrorCategory::protocol, "duplicate payload field '" + key + "'");
    fields[key] = std::move(values);
  }
  static const char* kRequired[] = {"version", "site_id",   "n_events",   "p",
                                    "spec_hash", "gram",    "moment",     "yy",
                                    "meat_basis", "alt_meat_basis"};
  for (const char* key : kRequired) {
    if (!fields.count(key)) {
      fail(ErrorCategory::protocol, std::string("payload missing field '") + key + "'");
    }
  }
  for (const auto& [key, _] : fields) {
    bool known = false;
    for (const char* k : kRequired) known = known || key == k;
    if (!known) fail(ErrorCategory::protocol, "unknown payload field '" + key + "'");
  }
  auto scalar = [&](const char* key) -> const std::string& {
    if (fields[key].size() != 1) {
      fail(ErrorCategory::protocol, std::string("payload field '") + key + "' must be a scalar");
    }
    return fields[key][0];
  };
  auto parse_real = [](const std::string& s, const char* key) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') {
      fail(ErrorCategory::protocol, std::string("unparsable real in field '") + key + "'");
    }
    return v;
  };
  if (scalar("version") != "1") fail(ErrorCategory::protocol, "unsupported payload version");

  SitePayload pl;
  pl.site_id = std::stoi(scalar("site_id"));
  pl.n_events = std::stoll(scalar("n_events"));
  pl.p = std::stoi(scalar("p"));
  pl.spec_hash = scalar("spec_hash");
  pl.yy = parse_real(scalar("yy"), "yy");
  const std::size_t pp = static_cast<std::size_t>(pl.p) * static_cast<std::size_t>(pl.p);
  auto read_matrix = [&](const char* key) {
    const auto& vals = fields[key];
    if (vals.size() != pp) {
      fail(ErrorCategory::protocol,
           std::string("field '") + key + "' has " + std::to_string(vals.size()) +
               " entries, expected " + std::to_string(pp));
    }
    Matrix m(pl.p, pl.p);
    std::size_t k = 0;
    for (int i = 0; i < pl.p; ++i)
      for (int j = 0; j < pl.p; ++j) m(i, j) = parse_real(vals[k++], key);
    return m;
  };
  pl.gram = read_matrix("gram");
  pl.meat_basis = read_matrix("meat_basis");
  pl.alt_meat_basis = read_matrix("alt_meat_basis");
  const auto& mv = fields["moment"];
  if (mv.size() != static_cast<std::size_t>(pl.p)) {
    fail(ErrorCategory::protocol, "field 'moment' has wrong length");
  }
  pl.moment.resize(pl.p);
  for (int i = 0; i < pl.p; ++i) pl.moment(i) = parse_real(mv[static_cast<std::size_t>(i)], "moment");
  pl.validate();
  return pl;
}

inline SitePayload read_payload(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::io, "cannot open payload file '" + path + "'");
  return read_payload(in);
}

}  // namespace dwsurv
