#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dwsurv/core.hpp"
#include "dwsurv/errors.hpp"
#include "dwsurv/types.hpp"

namespace dwsurv {

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    // trim surrounding whitespace
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

inline double parse_csv_real(const std::string& s, const std::string& context) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') {
    fail(ErrorCategory::schema, "unparsable number '" + s + "' in " + context);
  }
  return v;
}

inline std::string format_real17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// Dataset CSV schema: header row "id,site,time,event,a" followed by the
// covariate names; event is 1 when the event was observed, 0 when censored.
inline Dataset read_dataset_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) fail(ErrorCategory::schema, "empty CSV input");
  const auto header = detail::split_csv_line(line);
  static const char* kFixed[] = {"id", "site", "time", "event", "a"};
  for (std::size_t k = 0; k < 5; ++k) {
    if (header.size() <= k || header[k] != kFixed[k]) {
      fail(ErrorCategory::schema,
           std::string("CSV missing required column '") + kFixed[k] + "' at position " +
               std::to_string(k + 1));
    }
  }
  if (header.size() == 5) fail(ErrorCategory::schema, "CSV has no covariate columns");
  std::vector<std::string> names(header.begin() + 5, header.end());

  std::vector<SubjectRecord> records;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size()) {
      fail(ErrorCategory::schema, "line " + std::to_string(line_no) + " has " +
                                      std::to_string(fields.size()) + " fields, expected " +
                                      std::to_string(header.size()));
    }
    const std::string ctx = "line " + std::to_string(line_no);
    SubjectRecord r;
    r.id = static_cast<std::int64_t>(detail::parse_csv_real(fields[0], ctx));
    r.site = static_cast<int>(detail::parse_csv_real(fields[1], ctx));
    r.time = detail::parse_csv_real(fields[2], ctx);
    r.delta = static_cast<int>(detail::parse_csv_real(fields[3], ctx));
    r.a = static_cast<int>(detail::parse_csv_real(fields[4], ctx));
    r.x.resize(static_cast<Eigen::Index>(names.size()));
    for (std::size_t k = 0; k < names.size(); ++k) {
      r.x(static_cast<Eigen::Index>(k)) = detail::parse_csv_real(fields[5 + k], ctx);
    }
    records.push_back(std::move(r));
  }
  return Dataset::from_records(records, std::move(names));
}

inline Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::io, "cannot open dataset CSV '" + path + "'");
  return read_dataset_csv(in);
}

inline void write_dataset_csv(const Dataset& ds, std::ostream& os) {
  os << "id,site,time,event,a";
  for (const auto& n : ds.covariate_names) os << ',' << n;
  os << '\n';
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    os << ds.id[static_cast<std::size_t>(i)] << ',' << ds.site(i) << ','
       << detail::format_real17(ds.time(i)) << ',' << ds.delta(i) << ',' << ds.a(i);
    for (Eigen::Index k = 0; k < ds.n_covariates(); ++k) {
      os << ',' << detail::format_real17(ds.x(i, k));
    }
    os << '\n';
  }
}

inline void write_dataset_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCategory::io, "cannot open '" + path + "' for writing");
  write_dataset_csv(ds, out);
}

// Model spec file: four "name = expr, expr, ..." lines with keys tf, blip,
// trt, cens. Blank lines and '#' comments are ignored.
inline ModelSpec read_model_spec(std::istream& is) {
  ModelSpec spec;
  bool have_tf = false, have_blip = false, have_trt = false, have_cens = false;
  std::string line;
  while (std::getline(is, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorCategory::schema, "spec line missing '=': " + line);
    std::string key = line.substr(0, eq);
    key.erase(0, key.find_first_not_of(" \t"));
    key.erase(key.find_last_not_of(" \t") + 1);
    const std::string value = line.substr(eq + 1);
    if (key == "tf") {
      spec.treatment_free = parse_feature_list(value);
      have_tf = true;
    } else if (key == "blip") {
      spec.blip = parse_feature_list(value);
      have_blip = true;
    } else if (key == "trt") {
      spec.treatment_model = parse_feature_list(value);
      have_trt = true;
    } else if (key == "cens") {
      spec.censoring_model = parse_feature_list(value);
      have_cens = true;
    } else {
      fail(ErrorCategory::schema, "unknown spec key '" + key + "'");
    }
  }
  if (!have_tf || !have_blip || !have_trt || !have_cens) {
    fail(ErrorCategory::schema, "spec file must define tf, blip, trt and cens");
  }
  spec.validate();
  return spec;
}

inline ModelSpec read_model_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::io, "cannot open spec file '" + path + "'");
  return read_model_spec(in);
}

inline void write_model_spec(const ModelSpec& spec, std::ostream& os) {
  auto join = [](const std::vector<FeatureExpr>& exprs) {
    std::string s;
    for (std::size_t i = 0; i < exprs.size(); ++i) {
      if (i) s += ", ";
      s += exprs[i].to_string();
    }
    return s;
  };
  os << "tf = " << join(spec.treatment_free) << '\n';
  os << "blip = " << join(spec.blip) << '\n';
  os << "trt = " << join(spec.treatment_model) << '\n';
  os << "cens = " << join(spec.censoring_model) << '\n';
}

}  // namespace dwsurv
