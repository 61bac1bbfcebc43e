#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dsparse/error.hpp"
#include "dsparse/sweep.hpp"

using namespace dsparse;

namespace {

SweepConfig small_config() {
  SweepConfig config;
  config.snr_db = {0.0, 10.0};
  config.velocities = {{0.0, 10.0}};
  config.realizations = 12;
  config.optimizer.iterations = 20;
  return config;
}

std::size_t count_lines(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

}  // namespace

TEST(PairwiseSum, MatchesNaiveOnExactValues) {
  std::vector<double> v(1000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  EXPECT_EQ(pairwise_sum(v), 499500.0);
  EXPECT_EQ(pairwise_sum({}), 0.0);
}

TEST(Methods, NameRoundTrip) {
  for (Method m : {Method::zf, Method::mmse, Method::opt}) EXPECT_EQ(method_from_string(to_string(m)), m);
  EXPECT_THROW((void)method_from_string("svd"), Error);
}

TEST(SweepConfigTest, Defaults) {
  const SweepConfig config;
  EXPECT_EQ(config.snr_db, (std::vector<double>{-10, -5, 0, 5, 10, 15, 20}));
  EXPECT_EQ(config.antennas, 8u);
  EXPECT_EQ(config.users, 2u);
  EXPECT_EQ(config.realizations, 500u);
  EXPECT_NO_THROW(config.validate());

  SweepConfig bad = config;
  bad.realizations = 0;
  EXPECT_THROW(bad.validate(), Error);
  bad = config;
  bad.velocities = {{10.0, 5.0}};
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Sweep, CsvShapeAndDeterminism) {
  const auto config = small_config();
  const auto a = run_sweep(config);
  ASSERT_EQ(a.points.size(), 2u * 3u);
  const std::string csv = sweep_to_csv(a);
  EXPECT_EQ(count_lines(csv), 1u + a.points.size());
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "method,snr_db,v_min,v_max,mean_sum_rate,stderr,realizations");
  EXPECT_EQ(sweep_to_csv(run_sweep(config)), csv);
  EXPECT_EQ(a.metadata.channel_draws, 2u * 12u + a.metadata.singular_resamples);

  auto reseeded = config;
  reseeded.seed = 2;
  EXPECT_NE(sweep_to_csv(run_sweep(reseeded)), csv);
}

TEST(Sweep, ThreadCountDoesNotChangeResults) {
  const auto config = small_config();
  ::setenv("DSPARSE_THREADS", "1", 1);
  const auto serial = sweep_to_csv(run_sweep(config));
  ::setenv("DSPARSE_THREADS", "4", 1);
  const auto threaded = sweep_to_csv(run_sweep(config));
  ::unsetenv("DSPARSE_THREADS");
  EXPECT_EQ(serial, threaded);
}

TEST(Sweep, EmptyResultIsHeaderOnly) {
  EXPECT_EQ(sweep_to_csv({}), "method,snr_db,v_min,v_max,mean_sum_rate,stderr,realizations\n");
}

TEST(Sweep, JsonRoundTrip) {
  auto result = run_sweep(small_config());
  const auto back = sweep_from_json(sweep_to_json(result));
  EXPECT_EQ(back, result);
  EXPECT_THROW((void)sweep_from_json("{\"points\": []}"), Error);
}

TEST(Sweep, TimestampHonoursSourceDateEpoch) {
  ::setenv("SOURCE_DATE_EPOCH", "86400", 1);
  auto config = small_config();
  config.realizations = 1;
  const auto result = run_sweep(config);
  ::unsetenv("SOURCE_DATE_EPOCH");
  EXPECT_EQ(result.metadata.timestamp, "1970-01-02T00:00:00Z");
  EXPECT_EQ(result.metadata.version, version_string());
}

TEST(Sweep, MethodOrderingPerRealization) {
  auto config = small_config();
  config.snr_db = {5.0};
  const auto samples = sample_point(config, 0, 5.0);
  ASSERT_EQ(samples.size(), config.realizations);
  for (const auto& s : samples) {
    ASSERT_EQ(s.sum_rate.size(), 3u);
    // Perfect CSI: MMSE maximizes each UE's SINR, opt starts from it.
    EXPECT_GE(s.sum_rate[1], s.sum_rate[0] - 1e-9);
    EXPECT_GE(s.sum_rate[2], s.sum_rate[1] - 1e-12);
  }
}

TEST(Sweep, VeryLowSnrRatesVanish) {
  auto config = small_config();
  config.snr_db = {-40.0};
  const auto result = run_sweep(config);
  for (const auto& p : result.points) EXPECT_LT(p.mean_sum_rate, 0.05) << to_string(p.method);
}

TEST(Sweep, EstimationErrorHurtsZeroForcing) {
  auto config = small_config();
  config.snr_db = {20.0};
  config.methods = {Method::zf};
  config.realizations = 40;
  const double perfect = run_sweep(config).points[0].mean_sum_rate;
  config.est_snr_db = 0.0;
  const double noisy = run_sweep(config).points[0].mean_sum_rate;
  EXPECT_LT(noisy, perfect);
}

TEST(Sweep, ExportWritesFiles) {
  const auto result = run_sweep(small_config());
  const auto dir = std::filesystem::temp_directory_path();
  const auto csv_path = (dir / "dsparse_sweep_test.csv").string();
  const auto json_path = (dir / "dsparse_sweep_test.json").string();
  export_report(result, ReportFormat::csv, csv_path);
  export_report(result, ReportFormat::json, json_path);
  std::ifstream csv(csv_path), json(json_path);
  std::stringstream a, b;
  a << csv.rdbuf();
  b << json.rdbuf();
  EXPECT_EQ(a.str(), sweep_to_csv(result));
  EXPECT_EQ(sweep_from_json(b.str()), result);
  std::remove(csv_path.c_str());
  std::remove(json_path.c_str());
  EXPECT_THROW(export_report(result, ReportFormat::csv, "/nonexistent/dir/out.csv"), Error);
}
