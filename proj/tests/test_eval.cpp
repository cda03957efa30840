#include <doctest.h>

#include <random>

#include "crt/eval.hpp"
#include "support.hpp"

using namespace crt;

namespace {

ExperimentConfig small_config(std::vector<DgpName> datasets, std::size_t repeats) {
  ExperimentConfig c;
  c.datasets = std::move(datasets);
  c.n = 200;
  c.n_repeats = repeats;
  c.crt.num_null_draws = 49;
  c.crt.master_seed = 4;
  return c;
}

}  // namespace

TEST_CASE("ecdf") {
  const std::vector<double> one = {0.5};
  CHECK(ecdf(one) == Curve{{0.5, 1.0}});
  const std::vector<double> tied = {0.2, 0.8, 0.2};
  const Curve c = ecdf(tied);
  REQUIRE(c.size() == 2);
  CHECK(c[0].first == 0.2);
  CHECK(c[0].second == doctest::Approx(2.0 / 3.0));
  CHECK(c[1] == std::pair<double, double>{0.8, 1.0});
  CHECK_THROWS_AS(ecdf(std::vector<double>{}), InvalidArgument);

  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u;
  std::vector<double> draws(10000);
  for (auto& d : draws) d = u(gen);
  double worst = 0.0;
  double previous = 0.0;
  for (const auto& [x, f] : ecdf(draws)) {
    worst = std::max({worst, std::abs(f - x), std::abs(previous - x)});
    previous = f;
  }
  CHECK(worst < 0.025);
}

TEST_CASE("qq_uniform") {
  CHECK(qq_uniform(std::vector<double>{0.5}) == Curve{{0.5, 0.5}});
  const Curve two = qq_uniform(std::vector<double>{0.75, 0.25});
  CHECK(two[0].first == doctest::Approx(1.0 / 3.0));
  CHECK(two[0].second == 0.25);
  CHECK(two[1].first == doctest::Approx(2.0 / 3.0));
  CHECK(two[1].second == 0.75);

  std::vector<double> diagonal;
  for (int k = 1; k <= 9; ++k) diagonal.push_back(k / 10.0);
  for (const auto& [x, y] : qq_uniform(diagonal)) CHECK(x == doctest::Approx(y));
  CHECK_THROWS_AS(qq_uniform(std::vector<double>{}), InvalidArgument);
}

TEST_CASE("recommended models") {
  CHECK(recommended_model(DgpName::LinearSparse).kind == ModelKind::LinearGaussian);
  CHECK(recommended_model(DgpName::Friedman1).kind == ModelKind::Quadratic);
  CHECK(recommended_model(DgpName::Xor).kind == ModelKind::Knn);
  CHECK(recommended_model(DgpName::ConditionalNull).kind == ModelKind::LinearGaussian);
}

TEST_CASE("run_experiment") {
  SUBCASE("empty irrelevant set is flagged") {
    const auto report = run_experiment(small_config({DgpName::LinearDense}, 2));
    REQUIRE(report.rows.size() == 1);
    const DatasetRow& row = report.rows[0];
    CHECK_FALSE(row.type1_defined());
    CHECK(row.irrelevant_cells == 0);
    CHECK(row.relevant_cells == 10);
    CHECK(row.power == 1.0);
    CHECK(report.irrelevant.empty());
    const auto table = table_report(report);
    CHECK(table[0].type1 == "—");
    CHECK(table[0].type1_vacuous);
    CHECK(table[0].power == "1.00");
    const std::string text = render_table(table);
    CHECK(text.find("—*") != std::string::npos);
    CHECK(text.find("* no irrelevant features") != std::string::npos);
    CHECK(table_csv(report).find("linear_dense,5,5,1,,10,0,0") != std::string::npos);
  }

  SUBCASE("strong linear signal") {
    ExperimentConfig c = small_config({DgpName::LinearSparse}, 5);
    c.n = 500;
    c.crt.num_null_draws = 199;
    c.model = {false, ModelChoice{ModelKind::LinearGaussian}};
    const auto report = run_experiment(c);
    CHECK(report.rows[0].power == 1.0);
    CHECK(report.rows[0].relevant_cells == 15);
    CHECK(report.rows[0].irrelevant_cells == 35);
    CHECK(report.relevant.size() == 15);
    for (const auto& t : report.irrelevant) CHECK(t.feature >= 3);
  }

  SUBCASE("rates follow the rejection rule") {
    const auto report = run_experiment(small_config({DgpName::WeakSignal, DgpName::ConditionalNull}, 4));
    for (std::size_t d = 0; d < 2; ++d) {
      const DatasetRow& row = report.rows[d];
      std::size_t hits = 0;
      std::size_t cells = 0;
      for (const auto& t : report.irrelevant) {
        if (t.dataset != row.name) continue;
        ++cells;
        hits += t.p_value <= 0.05 ? 1 : 0;
      }
      CHECK(cells == row.irrelevant_cells);
      CHECK(row.type1 == doctest::Approx(static_cast<double>(hits) / static_cast<double>(cells)));
    }
  }

  SUBCASE("deterministic and thread independent") {
    ExperimentConfig c = small_config({DgpName::Xor, DgpName::Threshold}, 3);
    const auto a = run_experiment(c);
    c.threads = 5;
    const auto b = run_experiment(c);
    CHECK(table_csv(a) == table_csv(b));
    CHECK(report_json(a) == report_json(b));
  }

  SUBCASE("failures are recorded and the run continues") {
    ExperimentConfig c = small_config({DgpName::ConditionalNull, DgpName::LinearSparse}, 2);
    c.n = 4;
    const auto report = run_experiment(c);
    CHECK(report.has_failures());
    CHECK_FALSE(report.rows[0].failures.empty());
  }

  SUBCASE("config validation") {
    CHECK_THROWS_AS(run_experiment(small_config({}, 1)), InvalidArgument);
    CHECK_THROWS_AS(run_experiment(small_config({DgpName::Xor}, 0)), InvalidArgument);
    ExperimentConfig ext = small_config({DgpName::Xor}, 1);
    ext.sampler = SamplerKind::External;
    CHECK_THROWS_AS(run_experiment(ext), InvalidArgument);
  }
}

TEST_CASE("table output") {
  ExperimentReport report;
  DatasetRow row{DgpName::LinearSparse, 10, 3};
  row.power = 1.0;
  row.type1 = 1.0 / 35.0;
  row.relevant_cells = 15;
  row.irrelevant_cells = 35;
  report.rows.push_back(row);
  const auto rows = table_report(report);
  CHECK(rows[0].dataset == "Linear (sparse)");
  CHECK(rows[0].power == "1.00");
  CHECK(rows[0].type1 == "0.03");
  CHECK_FALSE(rows[0].type1_vacuous);

  const std::string text = render_table(rows);
  CHECK(text.find("Power") != std::string::npos);
  CHECK(text.find("Type-I Error") != std::string::npos);
  CHECK(text.find("*") == std::string::npos);

  CHECK(table_csv(report) ==
        "dataset,p,relevant,power,type1,relevant_cells,irrelevant_cells,failures\n"
        "linear_sparse,10,3,1,0.02857142857142857,15,35,0\n");
  CHECK(curve_csv(Curve{{0.25, 0.5}}, "x", "y") == "x,y\n0.25,0.5\n");

  const auto json = report_json(report);
  CHECK(json["rows"][0]["dataset"] == "linear_sparse");
  CHECK(json["rows"][0]["type1_defined"] == true);
}

TEST_CASE("full table1 suite has eleven rows in order") {
  ExperimentConfig c = small_config(std::vector<DgpName>(table1_dgps().begin(), table1_dgps().end()), 1);
  c.crt.num_null_draws = 9;
  c.n = 100;
  const auto report = run_experiment(c);
  REQUIRE(report.rows.size() == 11);
  for (std::size_t i = 0; i < 11; ++i) CHECK(report.rows[i].name == table1_dgps()[i]);
  CHECK_FALSE(report.has_failures());
}
