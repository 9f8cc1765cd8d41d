#pragma once

#include <Eigen/Dense>

#include <cctype>
#include <cstdint>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dwsurv/core.hpp"
#include "dwsurv/errors.hpp"

namespace dwsurv {

// One observation: raw covariates, binary treatment, observed time and the
// event indicator (1 = event observed, 0 = censored).
struct SubjectRecord {
  std::int64_t id = 0;
  int site = 1;
  Vector x;
  int a = 0;
  double time = 0.0;
  int delta = 1;
};

// Column-oriented container over SubjectRecords. Record order is the
// canonical iteration order: every downstream sum runs in this order so
// results are reproducible run to run.
struct Dataset {
  std::vector<std::int64_t> id;
  IntVector site;
  Matrix x;  // n x k raw covariates
  IntVector a;
  Vector time;
  IntVector delta;
  std::vector<std::string> covariate_names;

  Eigen::Index n() const { return x.rows(); }
  Eigen::Index n_covariates() const { return x.cols(); }

  SubjectRecord record(Eigen::Index i) const {
    return SubjectRecord{id[static_cast<std::size_t>(i)], site(i), x.row(i).transpose(),
                         a(i), time(i), delta(i)};
  }

  static Dataset from_records(const std::vector<SubjectRecord>& records,
                              std::vector<std::string> names) {
    if (records.empty()) fail(ErrorCategory::schema, "dataset must be nonempty");
    Dataset ds;
    const Eigen::Index n = static_cast<Eigen::Index>(records.size());
    const Eigen::Index k = records.front().x.size();
    ds.id.reserve(records.size());
    ds.site.resize(n);
    ds.x.resize(n, k);
    ds.a.resize(n);
    ds.time.resize(n);
    ds.delta.resize(n);
    ds.covariate_names = std::move(names);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& r = records[static_cast<std::size_t>(i)];
      if (r.x.size() != k) fail(ErrorCategory::schema, "covariate vector length differs across records");
      ds.id.push_back(r.id);
      ds.site(i) = r.site;
      ds.x.row(i) = r.x.transpose();
      ds.a(i) = r.a;
      ds.time(i) = r.time;
      ds.delta(i) = r.delta;
    }
    ds.validate();
    return ds;
  }

  void validate() const {
    if (n() == 0) fail(ErrorCategory::schema, "dataset must be nonempty");
    if (static_cast<Eigen::Index>(covariate_names.size()) != n_covariates()) {
      fail(ErrorCategory::schema, "covariate_names length does not match covariate count");
    }
    for (Eigen::Index i = 0; i < n(); ++i) {
      if (!(time(i) > 0.0)) fail(ErrorCategory::schema, "time must be > 0 at row " + std::to_string(i));
      if (a(i) != 0 && a(i) != 1) fail(ErrorCategory::schema, "treatment must be 0/1 at row " + std::to_string(i));
      if (delta(i) != 0 && delta(i) != 1) fail(ErrorCategory::schema, "event indicator must be 0/1 at row " + std::to_string(i));
      if (site(i) < 1) fail(ErrorCategory::schema, "site must be >= 1 at row " + std::to_string(i));
    }
  }

  // Subset preserving record order; sites appear in ascending site id.
  std::vector<Dataset> split_by_site() const {
    std::set<int> ids;
    for (Eigen::Index i = 0; i < n(); ++i) ids.insert(site(i));
    std::vector<Dataset> out;
    for (int s : ids) {
      Dataset part;
      part.covariate_names = covariate_names;
      std::vector<Eigen::Index> rows;
      for (Eigen::Index i = 0; i < n(); ++i)
        if (site(i) == s) rows.push_back(i);
      const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
      part.site.resize(m);
      part.x.resize(m, n_covariates());
      part.a.resize(m);
      part.time.resize(m);
      part.delta.resize(m);
      for (Eigen::Index r = 0; r < m; ++r) {
        const Eigen::Index i = rows[static_cast<std::size_t>(r)];
        part.id.push_back(id[static_cast<std::size_t>(i)]);
        part.site(r) = site(i);
        part.x.row(r) = x.row(i);
        part.a(r) = a(i);
        part.time(r) = time(i);
        part.delta(r) = delta(i);
      }
      out.push_back(std::move(part));
    }
    return out;
  }
};

// Symbolic feature over named covariates. The grammar is deliberately the
// closed set {1, var, sin(var), var*var}; those are the only forms the
// fitted models use.
struct FeatureExpr {
  enum class Kind { kIntercept, kVar, kSin, kProduct };

  Kind kind = Kind::kIntercept;
  std::string name1;
  std::string name2;

  static FeatureExpr intercept() { return FeatureExpr{Kind::kIntercept, "", ""}; }
  static FeatureExpr var(std::string n) { return FeatureExpr{Kind::kVar, std::move(n), ""}; }
  static FeatureExpr sin_of(std::string n) { return FeatureExpr{Kind::kSin, std::move(n), ""}; }
  static FeatureExpr product(std::string a, std::string b) {
    return FeatureExpr{Kind::kProduct, std::move(a), std::move(b)};
  }

  // Accepts "1", "x2", "sin(x2)", "x1*x3" (whitespace ignored).
  static FeatureExpr parse(const std::string& text) {
    std::string s;
    for (char c : text)
      if (!std::isspace(static_cast<unsigned char>(c))) s.push_back(c);
    if (s.empty()) fail(ErrorCategory::schema, "empty feature expression");
    if (s == "1") return intercept();
    if (s.size() > 5 && s.rfind("sin(", 0) == 0 && s.back() == ')') {
      return sin_of(s.substr(4, s.size() - 5));
    }
    const auto star = s.find('*');
    if (star != std::string::npos) {
      if (star == 0 || star + 1 >= s.size() || s.find('*', star + 1) != std::string::npos) {
        fail(ErrorCategory::schema, "malformed product expression '" + text + "'");
      }
      return product(s.substr(0, star), s.substr(star + 1));
    }
    if (s.find('(') != std::string::npos || s.find(')') != std::string::npos) {
      fail(ErrorCategory::schema, "malformed feature expression '" + text + "'");
    }
    return var(s);
  }

  std::string to_string() const {
    switch (kind) {
      case Kind::kIntercept: return "1";
      case Kind::kVar: return name1;
      case Kind::kSin: return "sin(" + name1 + ")";
      case Kind::kProduct: return name1 + "*" + name2;
    }
    return "";
  }

  std::vector<std::string> referenced_names() const {
    switch (kind) {
      case Kind::kIntercept: return {};
      case Kind::kVar:
      case Kind::kSin: return {name1};
      case Kind::kProduct: return {name1, name2};
    }
    return {};
  }

  bool operator==(const FeatureExpr& o) const {
    return kind == o.kind && name1 == o.name1 && name2 == o.name2;
  }
};

inline std::vector<FeatureExpr> parse_feature_list(const std::string& comma_separated) {
  std::vector<FeatureExpr> out;
  std::string token;
  std::istringstream in(comma_separated);
  while (std::getline(in, token, ',')) {
    if (token.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(FeatureExpr::parse(token));
  }
  if (out.empty()) fail(ErrorCategory::schema, "empty feature list");
  return out;
}

// Feature expression with covariate names resolved to column indices.
struct ResolvedExpr {
  FeatureExpr::Kind kind;
  Eigen::Index i = -1;
  Eigen::Index j = -1;
};

inline Eigen::Index resolve_name(const std::string& name, const std::vector<std::string>& names) {
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (names[k] == name) return static_cast<Eigen::Index>(k);
  }
  fail(ErrorCategory::schema, "unknown covariate name '" + name + "'");
}

inline std::vector<ResolvedExpr> resolve_features(const std::vector<FeatureExpr>& exprs,
                                                  const std::vector<std::string>& names) {
  std::vector<ResolvedExpr> out;
  out.reserve(exprs.size());
  for (const auto& e : exprs) {
    ResolvedExpr r{e.kind, -1, -1};
    if (e.kind != FeatureExpr::Kind::kIntercept) r.i = resolve_name(e.name1, names);
    if (e.kind == FeatureExpr::Kind::kProduct) r.j = resolve_name(e.name2, names);
    out.push_back(r);
  }
  return out;
}

inline double evaluate_feature(const ResolvedExpr& e, const Eigen::Ref<const Vector>& row) {
  switch (e.kind) {
    case FeatureExpr::Kind::kIntercept: return 1.0;
    case FeatureExpr::Kind::kVar: return row(e.i);
    case FeatureExpr::Kind::kSin: return std::sin(row(e.i));
    case FeatureExpr::Kind::kProduct: return row(e.i) * row(e.j);
  }
  return 0.0;
}

// Pure expansion: entry (i, k) is feature k evaluated on record i.
inline Matrix expand_features(const Matrix& x, const std::vector<std::string>& names,
                              const std::vector<FeatureExpr>& exprs) {
  const auto resolved = resolve_features(exprs, names);
  Matrix out(x.rows(), static_cast<Eigen::Index>(exprs.size()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Vector row = x.row(i).transpose();
    for (std::size_t k = 0; k < resolved.size(); ++k) {
      out(i, static_cast<Eigen::Index>(k)) = evaluate_feature(resolved[k], row);
    }
  }
  return out;
}

inline Matrix expand_features(const Dataset& ds, const std::vector<FeatureExpr>& exprs) {
  return expand_features(ds.x, ds.covariate_names, exprs);
}

// Expansion over covariates augmented with the treatment column, named "a".
// Used by censoring models, which may condition on treatment.
inline Matrix expand_features_with_treatment(const Dataset& ds,
                                             const std::vector<FeatureExpr>& exprs) {
  Matrix aug(ds.n(), ds.n_covariates() + 1);
  aug.leftCols(ds.n_covariates()) = ds.x;
  aug.col(ds.n_covariates()) = ds.a.cast<double>();
  std::vector<std::string> names = ds.covariate_names;
  names.push_back("a");
  return expand_features(aug, names, exprs);
}

// Symbolic model definition: treatment-free basis f, blip basis g, and the
// nuisance (treatment / censoring) model bases.
struct ModelSpec {
  std::vector<FeatureExpr> treatment_free;
  std::vector<FeatureExpr> blip;
  std::vector<FeatureExpr> treatment_model;
  std::vector<FeatureExpr> censoring_model;

  void validate() const {
    bool has_intercept = false;
    for (const auto& e : blip)
      if (e.kind == FeatureExpr::Kind::kIntercept) has_intercept = true;
    if (!has_intercept) fail(ErrorCategory::schema, "blip basis must include an intercept");

    std::set<std::string> tf_names;
    for (const auto& e : treatment_free)
      for (const auto& n : e.referenced_names()) tf_names.insert(n);
    for (const auto& e : blip) {
      for (const auto& n : e.referenced_names()) {
        if (tf_names.count(n) == 0) {
          fail(ErrorCategory::schema,
               "blip variable '" + n + "' is not referenced by the treatment-free basis");
        }
      }
    }
  }

  // Order-sensitive digest over the lists that define the stacked design
  // matrix; all sites in a distributed run must agree on it.
  std::string design_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    auto absorb = [&h](const std::string& s) {
      for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
      }
    };
    absorb("tf:");
    for (const auto& e : treatment_free) absorb(e.to_string() + ",");
    absorb(";blip:");
    for (const auto& e : blip) absorb(e.to_string() + ",");
    std::ostringstream out;
    out << std::hex << h;
    return out.str();
  }
};

// Stacked regressors for the weighted estimating equation: Xf block first,
// then the treatment-scaled blip block, fixing theta = (beta^T, psi^T)^T.
struct DesignMatrices {
  Matrix xf;
  Matrix xg;
  Matrix stacked;  // [Xf | a .* Xg]

  Eigen::Index pf() const { return xf.cols(); }
  Eigen::Index pg() const { return xg.cols(); }
  Eigen::Index p() const { return stacked.cols(); }
};

inline DesignMatrices build_design(const Dataset& ds, const ModelSpec& spec) {
  spec.validate();
  DesignMatrices d;
  d.xf = expand_features(ds, spec.treatment_free);
  d.xg = expand_features(ds, spec.blip);
  d.stacked.resize(ds.n(), d.xf.cols() + d.xg.cols());
  d.stacked.leftCols(d.xf.cols()) = d.xf;
  d.stacked.rightCols(d.xg.cols()) = ds.a.cast<double>().asDiagonal() * d.xg;
  return d;
}

inline std::vector<std::string> design_column_names(const ModelSpec& spec) {
  std::vector<std::string> names;
  for (const auto& e : spec.treatment_free) names.push_back("tf:" + e.to_string());
  for (const auto& e : spec.blip) names.push_back("blip:a*" + e.to_string());
  return names;
}

}  // namespace dwsurv
