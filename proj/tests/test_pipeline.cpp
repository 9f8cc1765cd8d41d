#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dwsurv/csv.hpp"
#include "dwsurv/pipeline.hpp"

using namespace dwsurv;

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SimulationRequest small_request() {
  SimulationRequest req;
  req.config.scenario_id = 5;
  req.config.n_total = 2500;
  req.config.seed = 314;
  req.reps = 16;
  req.strategy = Strategy::kLocalAll;
  req.cohort_size = 5000;
  return req;
}

}  // namespace

TEST_CASE("serial and multithreaded runs write byte-identical outputs") {
  SimulationRequest req = small_request();
  const std::string dir1 = "/tmp/dwsurv_test_serial";
  const std::string dir2 = "/tmp/dwsurv_test_parallel";
  req.threads = 1;
  run_simulate_command(req, dir1);
  req.threads = 4;
  run_simulate_command(req, dir2);
  CHECK(slurp(dir1 + "/metrics.csv") == slurp(dir2 + "/metrics.csv"));
  CHECK(slurp(dir1 + "/estimates.csv") == slurp(dir2 + "/estimates.csv"));
}

TEST_CASE("fit on a dumped dataset reproduces the simulation estimate bit for bit") {
  SimulationRequest req = small_request();
  req.strategy = Strategy::kGlobalAll;
  req.reps = 1;
  req.threads = 1;
  req.dump_data_dir = "/tmp/dwsurv_test_dump";
  std::filesystem::create_directories(req.dump_data_dir);
  const SimulationResult sim = run_simulate_command(req, "/tmp/dwsurv_test_dump_out");

  const Dataset ds = read_dataset_csv("/tmp/dwsurv_test_dump/data_rep00000.csv");
  const ModelSpec spec = analysis_model_spec(true);
  const StrategyFit fit = fit_with_strategy(ds, spec, WeightSpec{}, Strategy::kGlobalAll);
  CHECK(fit.rule.psi(0) == sim.reps[0].psi0);
  CHECK(fit.rule.psi(1) == sim.reps[0].psi1);
}

TEST_CASE("dataset and spec files round-trip exactly") {
  const auto [ds, truth] = gen_dataset(small_request().config, 3);
  std::stringstream buffer;
  write_dataset_csv(ds, buffer);
  const Dataset back = read_dataset_csv(buffer);
  CHECK(back.covariate_names == ds.covariate_names);
  CHECK((back.x - ds.x).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.time - ds.time).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.a - ds.a).cwiseAbs().maxCoeff() == 0);
  CHECK((back.delta - ds.delta).cwiseAbs().maxCoeff() == 0);

  const ModelSpec spec = analysis_model_spec(true);
  std::stringstream spec_buffer;
  write_model_spec(spec, spec_buffer);
  const ModelSpec spec_back = read_model_spec(spec_buffer);
  CHECK(spec_back.design_hash() == spec.design_hash());
  CHECK(spec_back.treatment_model == spec.treatment_model);
}

TEST_CASE("CSV schema errors name the offending column") {
  std::stringstream bad("id,site,time,a,event,x1\n1,1,2.0,1,1,0.5\n");
  CHECK_THROWS_WITH_AS(static_cast<void>(read_dataset_csv(bad)), doctest::Contains("event"),
                       Error);
  std::stringstream short_row("id,site,time,event,a,x1\n1,1,2.0,1\n");
  CHECK_THROWS_AS(static_cast<void>(read_dataset_csv(short_row)), Error);
}

TEST_CASE("intercept-only strategy reduces to overlap weights at the site treated fraction") {
  // tiny single-site file, checked by hand
  std::vector<SubjectRecord> records;
  const double times[6] = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
  const int as[6] = {1, 0, 1, 0, 0, 0};
  for (int i = 0; i < 6; ++i) {
    SubjectRecord r;
    r.id = i + 1;
    r.site = 1;
    r.x = (Vector(1) << static_cast<double>(i) - 2.5).finished();
    r.a = as[i];
    r.time = times[i];
    r.delta = 1;
    records.push_back(r);
  }
  const Dataset ds = Dataset::from_records(records, {"x1"});
  ModelSpec spec;
  spec.treatment_free = parse_feature_list("1, x1");
  spec.blip = parse_feature_list("1");
  spec.treatment_model = parse_feature_list("1, x1");
  spec.censoring_model = parse_feature_list("1");

  const StrategyFit fit = fit_with_strategy(ds, spec, WeightSpec{}, Strategy::kInterceptOnly);

  const double pbar = 2.0 / 6.0;
  WeightVector wv;
  wv.pi = Vector::Constant(6, pbar);
  wv.phi = Vector::Ones(6);
  wv.w = Vector(6);
  for (int i = 0; i < 6; ++i) wv.w(i) = std::abs(as[i] - pbar);
  const FittedRule manual = fit_pooled(ds, spec, wv);
  CHECK(std::abs(fit.rule.psi(0) - manual.psi(0)) < 1e-8);
  CHECK(std::abs(fit.rule.beta(0) - manual.beta(0)) < 1e-8);
}

TEST_CASE("screened local strategy runs the censored scenario end to end") {
  SimulationRequest req;
  req.config.scenario_id = 7;
  req.config.n_total = 2500;
  req.config.seed = 2718;
  req.reps = 30;
  req.threads = 2;
  req.cohort_size = 2000;

  req.strategy = Strategy::kLocalSelected;
  const SimulationResult screened = run_simulation(req);
  req.strategy = Strategy::kLocalAll;
  const SimulationResult all_vars = run_simulation(req);

  // same generated data, so the two strategies must agree within a few
  // Monte Carlo standard errors of their difference
  const double se = std::sqrt(screened.summary.params[0].mc_se * screened.summary.params[0].mc_se +
                              all_vars.summary.params[0].mc_se * all_vars.summary.params[0].mc_se);
  CHECK(std::abs(screened.summary.params[0].mean - all_vars.summary.params[0].mean) < 4.0 * se);
  for (const auto& rep : screened.reps) CHECK(rep.dvf <= 0.0);
}

TEST_CASE("locally fitted nuisance weights stay finite on scenario 5") {
  const auto [ds, truth] = gen_dataset(small_request().config, 7);
  const ModelSpec spec = analysis_model_spec(true);
  double w_min = std::numeric_limits<double>::infinity();
  double w_max = 0.0;
  for (const Dataset& site_ds : ds.split_by_site()) {
    const WeightVector wv = site_nuisance_weights(site_ds, spec, WeightSpec{}, LocalAll{});
    for (Eigen::Index i = 0; i < wv.w.size(); ++i) {
      CHECK(std::isfinite(wv.w(i)));
      CHECK(wv.w(i) >= 0.0);
      w_min = std::min(w_min, wv.w(i));
      w_max = std::max(w_max, wv.w(i));
    }
  }
  // overlap weights with phi = 1 are bounded by 1; the spread stays sane
  CHECK(w_max <= 1.0);
  INFO("weight max/min ratio: ", w_max / w_min);
  CHECK(std::isfinite(w_max / w_min));
}

TEST_CASE("single-replication runs flag the degenerate spread") {
  SimulationRequest req = small_request();
  req.reps = 1;
  const SimulationResult result = run_simulation(req);
  CHECK(result.summary.degenerate_sd);
  CHECK(result.reps.size() == 1);
}

#ifdef DWSURV_CLI_PATH
TEST_CASE("CLI round trip: simulate, dump, site-summarize, combine") {
  namespace fs = std::filesystem;
  const std::string cli = DWSURV_CLI_PATH;
  const fs::path work = "/tmp/dwsurv_cli_test";
  fs::remove_all(work);
  fs::create_directories(work);

  auto run = [&](const std::string& args) {
    return std::system((cli + " " + args + " > " + (work / "stdout.txt").string() + " 2> " +
                        (work / "stderr.txt").string())
                           .c_str());
  };

  // simulate requires a seed
  CHECK(run("simulate --scenario 1 --reps 2 --out " + (work / "noseed").string()) != 0);

  CHECK(run("simulate --scenario 5 --n 1200 --reps 2 --seed 9 --strategy local_all --cohort-size "
            "500 --out " + (work / "sim").string() + " --dump-data " + (work / "data").string()) == 0);
  CHECK(fs::exists(work / "sim" / "metrics.csv"));

  // write the analysis spec and summarize two sites from the dumped data
  {
    std::ofstream spec(work / "spec.txt");
    write_model_spec(analysis_model_spec(true), spec);
  }
  const Dataset ds = read_dataset_csv((work / "data" / "data_rep00000.csv").string());
  const auto sites = ds.split_by_site();
  write_dataset_csv(sites[0], (work / "site1.csv").string());
  write_dataset_csv(sites[1], (work / "site2.csv").string());

  CHECK(run("site-summarize --data " + (work / "site1.csv").string() + " --spec " +
            (work / "spec.txt").string() + " --out " + (work / "p1.txt").string()) == 0);
  CHECK(run("site-summarize --data " + (work / "site2.csv").string() + " --spec " +
            (work / "spec.txt").string() + " --out " + (work / "p2.txt").string()) == 0);
  CHECK(run("combine --out " + (work / "combined.txt").string() + " " +
            (work / "p1.txt").string() + " " + (work / "p2.txt").string()) == 0);

  // a payload built from a different design digest is refused
  {
    std::ofstream spec(work / "spec_bad.txt");
    write_model_spec(analysis_model_spec(false), spec);
  }
  CHECK(run("site-summarize --data " + (work / "site2.csv").string() + " --spec " +
            (work / "spec_bad.txt").string() + " --out " + (work / "p2bad.txt").string()) == 0);
  const int rc = run("combine " + (work / "p1.txt").string() + " " + (work / "p2bad.txt").string());
  CHECK(rc != 0);
  const std::string err = slurp(work / "stderr.txt");
  CHECK(err.find("error:protocol") != std::string::npos);

  // fit and screen on the pooled dump
  CHECK(run("fit --data " + (work / "data" / "data_rep00000.csv").string() + " --spec " +
            (work / "spec.txt").string() + " --strategy local_all --out-prefix " +
            (work / "fitout").string()) == 0);
  CHECK(fs::exists(work / "fitout_rule.txt"));
  CHECK(fs::exists(work / "fitout_decisions.csv"));
  CHECK(run("screen --data " + (work / "data" / "data_rep00000.csv").string() + " --out " +
            (work / "selection.csv").string()) == 0);

  // report recomputes metrics from the estimates file
  CHECK(run("report --estimates " + (work / "sim" / "estimates.csv").string() +
            " --method local_all --scenario 5 --out " + (work / "metrics2.csv").string()) == 0);
  const std::string m1 = slurp(work / "sim" / "metrics.csv");
  const std::string m2 = slurp(work / "metrics2.csv");
  CHECK(m1 == m2);
}
#endif
