#include <cmath>
#include <fstream>

#include "climber/bench.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace climber;
using testing_support::TempDir;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("random walk generation") {
  TempDir tmp("gen");
  const auto one = gen_randomwalk(tmp / "one", 1, 1, 4);
  REQUIRE(one.size() == 1);
  const Dataset d = read_dataset(one[0]);
  REQUIRE(d.size() == 1);
  CHECK(d.length() == 1);
  CHECK(d[0].id == 0);
  CHECK(d[0].values[0] == static_cast<float>(random_walk(4, 0, 1)[0]));
  CHECK(d[0].values[0] != 0.0);

  const auto a = gen_randomwalk(tmp / "a", 500, 32, 9, 3);
  const auto b = gen_randomwalk(tmp / "b", 500, 32, 9, 3);
  const auto c = gen_randomwalk(tmp / "c", 500, 32, 10, 3);
  REQUIRE(a.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(slurp(a[i]) == slurp(b[i]));
    CHECK(slurp(a[i]) != slurp(c[i]));
  }
  CHECK(read_datasets(a).size() == 500);

  // Each walk depends only on (seed, index), whatever the file split.
  const auto split = gen_randomwalk(tmp / "split", 500, 32, 9, 7);
  CHECK(read_datasets(split)[321] == read_datasets(a)[321]);

  const Eigen::VectorXd u = random_walk(1, 2, 400, {StepKind::uniform, 0.5});
  CHECK(std::abs(u[0]) <= 0.5);
  for (Eigen::Index t = 1; t < u.size(); ++t) CHECK(std::abs(u[t] - u[t - 1]) <= 0.5 + 1e-12);

  CHECK_THROWS_AS(gen_randomwalk(tmp / "z", 0, 8, 1), InputError);
}

TEST_CASE("random walk increments look standard normal") {
  TempDir tmp("gen-normal");
  const auto files = gen_randomwalk(tmp.path(), 100000, 256, 42, 10);
  std::uint64_t records = 0;
  double n = 0.0, sum = 0.0, sumsq = 0.0;
  for (const auto& f : files) {
    DatasetReader r(f);
    DataSeries s;
    while (r.next(s)) {
      ++records;
      double prev = 0.0;
      for (Eigen::Index t = 0; t < s.length(); ++t) {
        const double step = s.values[t] - prev;
        prev = s.values[t];
        sum += step;
        sumsq += step * step;
        n += 1.0;
      }
    }
  }
  CHECK(records == 100000);
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  // Float storage adds rounding noise well below these bounds.
  CHECK(std::abs(mean) < 5.0 / std::sqrt(n));
  CHECK(std::abs(var - 1.0) < 5.0 * std::sqrt(2.0 / n) + 1e-4);
}

TEST_CASE("build and bench on a small index") {
  TempDir tmp("bench");
  const auto files = gen_randomwalk(tmp / "data", 5000, 64, 3, 10);
  BuildConfig cfg;
  cfg.segments = 8;
  cfg.pivots = 50;
  cfg.prefix = 5;
  cfg.capacity = 250;
  cfg.alpha = 0.3;
  const BuildStats stats = build_index(files, cfg, tmp / "idx");
  CHECK(stats.sample_files == 3);
  CHECK(stats.sample_records == 1500);
  CHECK(stats.redistribution.records == 5000);
  const double phases =
      stats.skeleton_seconds + stats.conversion_seconds + stats.redistribution_seconds;
  CHECK(phases <= stats.total_seconds + 1e-6);
  CHECK(phases >= 0.8 * stats.total_seconds - 0.01);
  CHECK(fs::exists(tmp / "idx" / "build_stats.json"));

  const Index index(tmp / "idx");
  CHECK(index.skeleton.config.alpha == doctest::Approx(0.3));

  BenchSpec spec;
  spec.data = tmp / "data";
  spec.index = tmp / "idx";
  spec.queries = 20;
  spec.ks = {10, 100};

  SUBCASE("scan is exact") {
    spec.modes = {"scan"};
    const BenchReport r = run_bench(spec, index);
    for (const auto& row : r.rows) CHECK(row.recall == 1.0);
    CHECK(r.find(100, "scan").mean_recall == 1.0);
  }

  SUBCASE("all modes, reproducible") {
    const BenchReport r = run_bench(spec, index);
    CHECK(r.chain_violations == 0);
    CHECK(r.rows.size() == 20 * 2 * 5);
    for (std::size_t k : spec.ks) {
      CHECK(r.find(k, "adaptive4x").mean_recall >= r.find(k, "knn").mean_recall);
      CHECK(r.find(k, "scan").mean_recall == 1.0);
    }
    for (const auto& row : r.rows) {
      CHECK(row.recall >= 0.0);
      CHECK(row.recall <= 1.0);
    }
    const BenchReport again = run_bench(spec, index);
    CHECK(again.to_json(false) == r.to_json(false));
    CHECK(r.to_json(true).find("\"timing\"") != std::string::npos);
    CHECK(r.to_json(false).find("seconds") == std::string::npos);
    CHECK(r.to_text().find("adaptive4x") != std::string::npos);
  }

  SUBCASE("bad specs") {
    spec.modes = {"fast"};
    CHECK_THROWS_AS(run_bench(spec, index), ConfigError);
    spec.modes = {"knn"};
    spec.queries = 6000;
    CHECK_THROWS_AS(run_bench(spec, index), ConfigError);
  }
}
