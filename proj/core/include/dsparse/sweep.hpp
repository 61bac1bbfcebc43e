#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dsparse/beamform.hpp"
#include "dsparse/channel.hpp"

namespace dsparse {

enum class Method { zf, mmse, opt };

std::string_view to_string(Method method) noexcept;
Method method_from_string(std::string_view name);

struct VelocityRange {
  double v_min = 0.0;
  double v_max = 0.0;
  friend bool operator==(const VelocityRange&, const VelocityRange&) = default;
};

struct SweepConfig {
  std::vector<double> snr_db{-10, -5, 0, 5, 10, 15, 20};
  std::vector<VelocityRange> velocities{{0, 10}, {30, 40}};
  std::size_t antennas = 8;  // M
  std::size_t users = 2;     // N
  std::size_t realizations = 500;
  double est_snr_db = std::numeric_limits<double>::infinity();
  std::vector<Method> methods{Method::zf, Method::mmse, Method::opt};
  std::uint64_t seed = 1;
  OfdmConfig ofdm;
  double carrier_hz = 2.6e9;
  OptimizerConfig optimizer{0.05, 100, 13, 0.5, GradientMode::numeric, false, 0.01};

  void validate() const;
};

struct SweepPoint {
  Method method = Method::zf;
  double snr_db = 0.0;
  VelocityRange velocity;
  double mean_sum_rate = 0.0;
  double stderr_sum_rate = 0.0;
  std::size_t realizations = 0;
  std::vector<double> mean_sinr_db;  // per UE, 10 log10 of the mean linear SINR

  friend bool operator==(const SweepPoint&, const SweepPoint&) = default;
};

struct SweepMetadata {
  std::uint64_t seed = 0;
  std::string version;
  std::string timestamp;  // UTC ISO-8601; SOURCE_DATE_EPOCH pins it
  std::size_t channel_draws = 0;
  std::size_t singular_resamples = 0;

  friend bool operator==(const SweepMetadata&, const SweepMetadata&) = default;
};

struct SweepResult {
  std::vector<SweepPoint> points;  // velocity-major, then SNR, then method
  SweepMetadata metadata;

  friend bool operator==(const SweepResult&, const SweepResult&) = default;
};

// Per-realization sum-rates of each method on shared channel draws, so method
// comparisons are paired.
struct RealizationSample {
  std::vector<double> sum_rate;                // one per method
  std::vector<std::vector<double>> sinr;       // method -> per-UE linear SINR
};

SweepResult run_sweep(const SweepConfig& config);

// Same draws as run_sweep for a single (velocity, snr) point, unaggregated.
std::vector<RealizationSample> sample_point(const SweepConfig& config, std::size_t velocity_index, double snr_db,
                                            std::size_t* singular_resamples = nullptr);

enum class ReportFormat { csv, json };

std::string sweep_to_csv(const SweepResult& result);
std::string sweep_to_json(const SweepResult& result);
SweepResult sweep_from_json(std::string_view text);
void export_report(const SweepResult& result, ReportFormat format, const std::string& path);

// Sum in a fixed pairwise order, independent of thread scheduling.
double pairwise_sum(std::span<const double> values);

std::string version_string();

}  // namespace dsparse
