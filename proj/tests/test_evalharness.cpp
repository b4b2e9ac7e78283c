#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "dialeval/evalharness.hpp"
#include "dialeval/model.hpp"
#include "support/synthetic.hpp"
#include "support/test_oracles.hpp"

using namespace dialeval;
using testsupport::oracle_spearman;

TEST_CASE("spearman basics") {
  CHECK(spearman(std::vector{1.0, 2.0, 3.0}, std::vector{10.0, 20.0, 30.0}) == 1.0);
  CHECK(spearman(std::vector{1.0, 2.0, 3.0}, std::vector{3.0, 2.0, 1.0}) == -1.0);

  SECTION("tied inputs agree with the brute-force rank oracle") {
    const std::vector<double> xs = {1, 2, 2, 4};
    const std::vector<double> ys = {1, 3, 2, 4};
    const double expected = oracle_spearman(xs, ys);
    CHECK(spearman(xs, ys) == Catch::Approx(expected).epsilon(1e-14));
    CHECK(expected == Catch::Approx(3.0 / std::sqrt(10.0)));
  }

  SECTION("errors") {
    CHECK_THROWS_AS(spearman(std::vector{1.0}, std::vector{1.0}), Error);
    CHECK_THROWS_AS(spearman(std::vector{1.0, 2.0}, std::vector{1.0, 2.0, 3.0}), Error);
    CHECK_THROWS_AS(spearman(std::vector{2.0, 2.0, 2.0}, std::vector{1.0, 2.0, 3.0}), Error);
  }
}

TEST_CASE("spearman properties") {
  Rng rng(21);
  auto random_vec = [&](std::size_t n, int distinct) {
    std::vector<double> v(n);
    for (double& x : v) x = static_cast<double>(rng.below(distinct));
    return v;
  };

  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t n = 5 + rng.below(40);
    std::vector<double> xs = random_vec(n, 6);
    std::vector<double> ys = random_vec(n, 6);
    if (!testsupport::oracle_spearman_defined(xs, ys)) continue;

    const double rho = spearman(xs, ys);

    SECTION("agrees with the oracle on random tied vectors") {
      CHECK(rho == Catch::Approx(oracle_spearman(xs, ys)).margin(1e-12));
    }

    // symmetry
    CHECK(spearman(ys, xs) == Catch::Approx(rho).margin(1e-12));
    // self correlation
    CHECK(spearman(xs, xs) == Catch::Approx(1.0).margin(1e-12));

    // invariance under strictly monotone transforms
    std::vector<double> tx = xs;
    for (double& v : tx) v = std::exp(0.5 * v) + 3.0;
    CHECK(spearman(tx, ys) == Catch::Approx(rho).margin(1e-12));
  }
}

TEST_CASE("p_value") {
  CHECK(p_value(0.0, 30) == Catch::Approx(1.0));
  CHECK(p_value(1.0, 10) == 0.0);
  CHECK(p_value(-1.0, 10) == 0.0);
  CHECK_THROWS_AS(p_value(0.5, 3), Error);

  SECTION("is two-sided and symmetric in the sign of rho") {
    CHECK(p_value(0.4, 25) == Catch::Approx(p_value(-0.4, 25)));
  }

  SECTION("t approximation tracks the permutation oracle at rho=0.5, n=30") {
    // a length-30 vector pair with sample Spearman close to 0.5
    Rng rng(77);
    std::vector<double> xs(30), ys(30);
    double rho = 0.0;
    for (int attempt = 0; attempt < 2000; ++attempt) {
      for (std::size_t i = 0; i < 30; ++i) xs[i] = static_cast<double>(i);
      for (std::size_t i = 0; i < 30; ++i)
        ys[i] = static_cast<double>(i) + 14.0 * (rng.unit() * 2.0 - 1.0) * 2.0;
      rho = spearman(xs, ys);
      if (std::abs(rho - 0.5) < 0.02) break;
    }
    REQUIRE(std::abs(rho - 0.5) < 0.02);
    const double p_t = p_value(rho, 30);
    const double p_perm = testsupport::oracle_permutation_p(xs, ys, 100000, 99);
    CHECK(std::abs(p_t - p_perm) < 0.01);
  }

  SECTION("library permutation tests agree with each other on small n") {
    const std::vector<double> xs = {3, 1, 4, 1, 5, 9, 2, 6};
    const std::vector<double> ys = {2, 7, 1, 8, 2, 8, 1, 9};
    const double exact = exact_permutation_p_value(xs, ys);
    const double sampled = sampled_permutation_p_value(xs, ys, 200000, 5);
    CHECK(std::abs(exact - sampled) < 0.01);
    CHECK_THROWS_AS(exact_permutation_p_value(std::vector<double>(11, 0.0),
                                              std::vector<double>(11, 0.0)),
                    Error);
  }
}

TEST_CASE("evaluate_metric") {
  const Benchmark bench = testsupport::make_selection_benchmark();

  SECTION("scores identical to the ratings give rho 1") {
    std::map<std::string, double> scores;
    for (const RatedDialogue& item : bench.items)
      scores[item.dialogue.id] = item.ratings.at("overall");
    const ReportEntry e = evaluate_metric(scores, bench, "overall");
    CHECK(e.rho == Catch::Approx(1.0));
    CHECK(e.n == bench.items.size());
    REQUIRE(e.p_value.has_value());
    CHECK(*e.p_value == 0.0);
  }

  SECTION("independent scores are insignificant on moderate n") {
    Rng rng(1001);
    std::map<std::string, double> scores;
    for (const RatedDialogue& item : bench.items) scores[item.dialogue.id] = rng.unit();
    const ReportEntry e = evaluate_metric(scores, bench, "overall");
    CHECK(std::abs(e.rho) < 0.35);
    REQUIRE(e.p_value.has_value());
    CHECK(*e.p_value > 0.05);
    CHECK(insignificant(e));
  }

  SECTION("missing scores list the offending ids") {
    std::map<std::string, double> scores;
    for (const RatedDialogue& item : bench.items) scores[item.dialogue.id] = 0.5;
    scores.erase("sel-3");
    scores.erase("sel-7");
    CHECK_THROWS_WITH(evaluate_metric(scores, bench, "overall"),
                      Catch::Matchers::ContainsSubstring("sel-3") &&
                          Catch::Matchers::ContainsSubstring("sel-7"));
  }

  SECTION("items without the requested dimension shrink n") {
    Benchmark partial = bench;
    partial.items[0].ratings.erase("coherence");
    partial.items[1].ratings.erase("coherence");
    std::map<std::string, double> scores;
    for (const RatedDialogue& item : partial.items)
      scores[item.dialogue.id] = item.ratings.at("overall");
    const ReportEntry e = evaluate_metric(scores, partial, "coherence");
    CHECK(e.n == partial.items.size() - 2);
  }
}

TEST_CASE("dimension_correlation_matrix") {
  SECTION("identical rating columns correlate at 1") {
    Benchmark bench;
    bench.name = "twin";
    bench.dimensions = {"a", "b"};
    for (int i = 0; i < 6; ++i) {
      RatedDialogue item;
      item.dialogue = testsupport::make_dialogue("t" + std::to_string(i), {"x", "y"});
      item.ratings["a"] = static_cast<double>(i % 4);
      item.ratings["b"] = static_cast<double>(i % 4);
      bench.items.push_back(std::move(item));
    }
    const CorrelationMatrix m = dimension_correlation_matrix(bench);
    CHECK(m.at(0, 1) == 1.0);
  }

  SECTION("symmetric with unit diagonal on rating data") {
    const Benchmark bench = testsupport::make_synthetic_benchmark(40);
    const CorrelationMatrix m = dimension_correlation_matrix(bench);
    const std::size_t n = m.dimensions.size();
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(m.at(i, i) == 1.0);
      for (std::size_t j = 0; j < n; ++j) CHECK(m.at(i, j) == m.at(j, i));
    }
  }

  SECTION("a constant column marks its pairs undefined") {
    Benchmark bench;
    bench.name = "flat";
    bench.dimensions = {"varies", "flat"};
    for (int i = 0; i < 5; ++i) {
      RatedDialogue item;
      item.dialogue = testsupport::make_dialogue("f" + std::to_string(i), {"x", "y"});
      item.ratings["varies"] = static_cast<double>(i);
      item.ratings["flat"] = 2.0;
      bench.items.push_back(std::move(item));
    }
    const CorrelationMatrix m = dimension_correlation_matrix(bench);
    CHECK(std::isnan(m.at(0, 1)));
    CHECK(m.at(0, 0) == 1.0);
  }
}

namespace {

std::set<std::set<std::string>> as_sets(const DimensionGroups& groups) {
  std::set<std::set<std::string>> out;
  for (const auto& g : groups.groups) out.insert(std::set<std::string>(g.begin(), g.end()));
  return out;
}

}  // namespace

TEST_CASE("group_dimensions") {
  SECTION("a single strong pair groups together, the rest stay singletons") {
    CorrelationMatrix m = testsupport::make_fed_like_matrix();
    // keep only the coherence-understanding edge
    for (const std::string dim : {"likability", "topic_depth"})
      for (const std::string& other : m.dimensions)
        if (dim != other) {
          m.at(m.index_of(dim), m.index_of(other)) = 0.5;
          m.at(m.index_of(other), m.index_of(dim)) = 0.5;
        }
    m.at(m.index_of("coherence"), m.index_of("understanding")) = 0.83;
    m.at(m.index_of("understanding"), m.index_of("coherence")) = 0.83;

    const DimensionGroups groups = group_dimensions(m, 0.75);
    CHECK(groups.groups.size() == 9);  // one pair plus eight singletons
    CHECK(as_sets(groups).count({"coherence", "understanding"}) == 1);
  }

  SECTION("no strong pairs yields all singletons") {
    CorrelationMatrix m = testsupport::make_fed_like_matrix();
    for (std::size_t i = 0; i < m.dimensions.size(); ++i)
      for (std::size_t j = 0; j < m.dimensions.size(); ++j)
        if (i != j) m.at(i, j) = 0.5;
    const DimensionGroups groups = group_dimensions(m, 0.75);
    CHECK(groups.groups.size() == m.dimensions.size());
  }

  SECTION("the published-statistics matrix reproduces the six groups") {
    const DimensionGroups groups = group_dimensions(testsupport::make_fed_like_matrix(), 0.75);
    const std::set<std::set<std::string>> expected = {
        {"coherence", "understanding"},
        {"likability", "flexibility", "informativeness"},
        {"topic_depth", "diversity", "informativeness"},
        {"consistency"},
        {"inquisitiveness"},
        {"error_recovery"}};
    CHECK(as_sets(groups) == expected);
    CHECK(groups.groups.size() == 6);
  }

  SECTION("groups always cover all dimensions") {
    Rng rng(55);
    for (int rep = 0; rep < 40; ++rep) {
      const std::size_t n = 3 + rng.below(8);
      CorrelationMatrix m;
      for (std::size_t i = 0; i < n; ++i) m.dimensions.push_back("d" + std::to_string(i));
      m.values.assign(n * n, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        m.at(i, i) = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
          const double v = rng.unit();
          m.at(i, j) = v;
          m.at(j, i) = v;
        }
      }
      const DimensionGroups groups = group_dimensions(m, 0.6);
      std::set<std::string> covered;
      for (const auto& g : groups.groups)
        for (const std::string& dim : g) covered.insert(dim);
      CHECK(covered.size() == n);
    }
  }

  SECTION("raising the threshold never merges connected components") {
    Rng rng(77);
    for (int rep = 0; rep < 25; ++rep) {
      const std::size_t n = 4 + rng.below(6);
      CorrelationMatrix m;
      for (std::size_t i = 0; i < n; ++i) m.dimensions.push_back("d" + std::to_string(i));
      m.values.assign(n * n, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        m.at(i, i) = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
          const double v = rng.unit();
          m.at(i, j) = v;
          m.at(j, i) = v;
        }
      }
      const double t_low = 0.5, t_high = 0.7;

      // components = transitive closure of group overlap
      auto component_id = [&](const DimensionGroups& groups) {
        std::map<std::string, int> comp;
        int next = 0;
        for (const auto& g : groups.groups) {
          int target = -1;
          for (const std::string& dim : g)
            if (comp.count(dim)) target = comp[dim];
          if (target < 0) target = next++;
          for (const std::string& dim : g) {
            if (comp.count(dim) && comp[dim] != target) {
              const int from = comp[dim];
              for (auto& [k, v] : comp)
                if (v == from) v = target;
            }
            comp[dim] = target;
          }
        }
        return comp;
      };

      const auto low = component_id(group_dimensions(m, t_low));
      const auto high = component_id(group_dimensions(m, t_high));
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
          const std::string a = "d" + std::to_string(i), b = "d" + std::to_string(j);
          if (high.at(a) == high.at(b)) {
            // together at the stricter threshold implies together at the looser one
            CHECK(low.at(a) == low.at(b));
          }
        }
    }
  }
}

TEST_CASE("select_dimensions") {
  const Benchmark bench = testsupport::make_selection_benchmark();
  DimensionGroups groups = group_dimensions(testsupport::make_fed_like_matrix(), 0.75);

  SECTION("published statistics select coherence, likability, topic_depth") {
    const std::vector<std::string> selected =
        select_dimensions(groups, bench, "overall", bench.agreement, 0.2);
    CHECK(selected == std::vector<std::string>{"coherence", "likability", "topic_depth"});
  }

  SECTION("low agreement excludes a group's only member") {
    // consistency's 0.562 agreement is below the 0.6 floor
    const std::vector<std::string> selected =
        select_dimensions(groups, bench, "overall", bench.agreement, 0.2);
    CHECK(std::find(selected.begin(), selected.end(), "consistency") == selected.end());
  }

  SECTION("frequent N/A marks exclude error recovery at the default threshold") {
    std::map<std::string, double> generous = bench.agreement;
    generous["error_recovery"] = 0.95;
    const std::vector<std::string> selected =
        select_dimensions(groups, bench, "overall", generous, 0.2);
    CHECK(std::find(selected.begin(), selected.end(), "error_recovery") == selected.end());

    // raising the N/A threshold lets it through
    const std::vector<std::string> lenient =
        select_dimensions(groups, bench, "overall", generous, 0.3);
    CHECK(std::find(lenient.begin(), lenient.end(), "error_recovery") != lenient.end());
  }

  SECTION("shared dimensions are never representatives") {
    const std::vector<std::string> selected =
        select_dimensions(groups, bench, "overall", bench.agreement, 0.2);
    CHECK(std::find(selected.begin(), selected.end(), "informativeness") == selected.end());
  }
}

TEST_CASE("report rendering") {
  std::vector<ReportEntry> entries;
  entries.push_back({"metric1", "coherence", 0.62, 0.001, 125});
  entries.push_back({"metric1", "likability", 0.30, 0.2, 125});

  SECTION("csv has one data row per entry plus an average row") {
    const std::string csv = render_report(entries, ReportFormat::csv);
    CHECK(csv.find("metric,dimension,rho,p_value,n,insignificant\n") == 0);
    CHECK(csv.find("metric1,coherence,0.62,0.001,125,0\n") != std::string::npos);
    CHECK(csv.find("metric1,likability,0.3,0.2,125,1\n") != std::string::npos);  // flagged
    // the average row carries the mean of the rho column
    const std::size_t avg_pos = csv.find("metric1,average,");
    REQUIRE(avg_pos != std::string::npos);
    CHECK(std::stod(csv.substr(avg_pos + 16)) == Catch::Approx(0.46));
  }

  SECTION("single entry renders a header and one row") {
    const std::string csv = render_report({entries[0]}, ReportFormat::csv);
    const std::size_t lines = std::count(csv.begin(), csv.end(), '\n');
    CHECK(lines == 3);  // header, entry, average
  }

  SECTION("text table marks insignificant entries") {
    const std::string text = render_report(entries, ReportFormat::text);
    CHECK(text.find("likability") != std::string::npos);
    CHECK(text.find("*") != std::string::npos);
    CHECK(text.find("average") != std::string::npos);
  }
}

TEST_CASE("scores csv round trip") {
  namespace fs = std::filesystem;
  ScoreTable table;
  table.columns = {"coherence", "mean"};
  table.rows = {{"d1", {0.25, 0.5}}, {"d2", {0.75, 1.0 / 3.0}}};

  const fs::path path = fs::temp_directory_path() / "dialeval_test_scores.csv";
  {
    std::ofstream out(path);
    write_scores_csv(out, table, "config_hash=abc seed=1");
  }
  const ScoreCsv csv = read_scores_csv(path);
  CHECK(csv.columns == table.columns);
  REQUIRE(csv.rows.size() == 2);
  CHECK(csv.rows[0].first == "d1");
  CHECK(csv.rows[1].second[1] == 1.0 / 3.0);  // exact round trip through shortest repr
  const auto map = csv.column_as_map("coherence");
  CHECK(map.at("d2") == 0.75);
  fs::remove(path);
}
