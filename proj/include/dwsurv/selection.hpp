#pragma once

#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "dwsurv/core.hpp"
#include "dwsurv/errors.hpp"
#include "dwsurv/glm.hpp"
#include "dwsurv/types.hpp"

namespace dwsurv {

// Per-site univariate screening: a candidate joins the site's treatment
// model only when it is associated with both the treatment and the outcome
// (and analogously with censoring for the censoring model). The
// double-significance rule keeps instruments out of the weight models.
struct SelectionReport {
  struct Row {
    int site = 0;
    std::string variable;
    double p_treatment = std::numeric_limits<double>::quiet_NaN();
    double p_censoring = std::numeric_limits<double>::quiet_NaN();
    double p_outcome = std::numeric_limits<double>::quiet_NaN();
    bool chosen_treatment = false;
    bool chosen_censoring = false;
    bool degenerate = false;
  };

  std::vector<Row> rows;
  std::vector<std::string> warnings;

  std::vector<std::string> treatment_variables() const {
    std::vector<std::string> out;
    for (const auto& r : rows)
      if (r.chosen_treatment) out.push_back(r.variable);
    return out;
  }

  std::vector<std::string> censoring_variables() const {
    std::vector<std::string> out;
    for (const auto& r : rows)
      if (r.chosen_censoring) out.push_back(r.variable);
    return out;
  }
};

inline SelectionReport screen_site(const Dataset& ds, const std::vector<std::string>& candidates,
                                   double alpha = 0.05) {
  for (Eigen::Index i = 1; i < ds.n(); ++i) {
    if (ds.site(i) != ds.site(0)) {
      fail(ErrorCategory::schema, "screen_site expects records from a single site");
    }
  }
  if (ds.delta.sum() == 0) fail(ErrorCategory::no_information, "site has no events");
  const bool any_censored = ds.delta.minCoeff() == 0;
  const Vector a_real = ds.a.cast<double>();
  const Vector censored = (1 - ds.delta.array()).cast<double>();

  SelectionReport report;
  for (const auto& name : candidates) {
    SelectionReport::Row row;
    row.site = ds.site(0);
    row.variable = name;
    const Eigen::Index col = resolve_name(name, ds.covariate_names);
    const Vector x = ds.x.col(col);
    if (!(x.maxCoeff() - x.minCoeff() > 0.0)) {
      row.degenerate = true;
      report.warnings.push_back("site " + std::to_string(row.site) + ": '" + name +
                                "' is constant; skipped");
      report.rows.push_back(row);
      continue;
    }
    row.p_treatment = univariate_logistic_test(x, a_real).p_value;
    row.p_outcome = univariate_cox_score_test(x, ds.time, ds.delta).p_value;
    if (any_censored) {
      row.p_censoring = univariate_logistic_test(x, censored).p_value;
      row.chosen_censoring = row.p_censoring < alpha && row.p_outcome < alpha;
    }
    row.chosen_treatment = row.p_treatment < alpha && row.p_outcome < alpha;
    report.rows.push_back(row);
  }
  return report;
}

inline void write_selection_csv(const std::vector<SelectionReport>& reports, std::ostream& os) {
  os << "site,variable,p_trt,p_cens,p_out,chosen_trt,chosen_cens\n";
  for (const auto& rep : reports) {
    for (const auto& r : rep.rows) {
      os << r.site << ',' << r.variable << ',' << r.p_treatment << ',' << r.p_censoring << ','
         << r.p_outcome << ',' << (r.chosen_treatment ? 1 : 0) << ','
         << (r.chosen_censoring ? 1 : 0) << '\n';
    }
  }
}

}  // namespace dwsurv
