#include "dsparse/sweep.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dsparse/error.hpp"
#include "dsparse/parallel.hpp"
#include "dsparse_version.hpp"

namespace dsparse {

std::string_view to_string(Method method) noexcept {
  switch (method) {
    case Method::zf: return "zf";
    case Method::mmse: return "mmse";
    case Method::opt: return "opt";
  }
  return "unknown";
}

Method method_from_string(std::string_view name) {
  if (name == "zf") return Method::zf;
  if (name == "mmse") return Method::mmse;
  if (name == "opt") return Method::opt;
  fail(Errc::invalid_argument, "unknown beamforming method '" + std::string(name) + "'");
}

std::string version_string() { return DSPARSE_VERSION_STRING; }

void SweepConfig::validate() const {
  if (snr_db.empty() || velocities.empty() || methods.empty()) {
    fail(Errc::invalid_argument, "sweep needs at least one SNR, velocity range and method");
  }
  if (realizations == 0) fail(Errc::invalid_argument, "realizations must be >= 1");
  if (antennas == 0 || users == 0) fail(Errc::invalid_argument, "antenna and UE counts must be >= 1");
  for (const auto& v : velocities) {
    if (!(v.v_min >= 0.0) || v.v_max < v.v_min) fail(Errc::invalid_argument, "velocity range must be 0 <= min <= max");
  }
  for (double s : snr_db) {
    if (!std::isfinite(s)) fail(Errc::invalid_argument, "SNR points must be finite");
  }
  ofdm.validate();
}

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double acc = 0.0;
    for (double v : values) acc += v;
    return acc;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

namespace {

constexpr std::size_t kMaxResampleAttempts = 64;

// Channel draw for one realization: resource element picked from the same
// stream so every method and SNR sees the same matrices.
struct Draw {
  Eigen::MatrixXcd h_true;
  Eigen::MatrixXcd h_est;
  std::size_t resamples = 0;
};

Draw draw_channel(const SweepConfig& config, std::size_t velocity_index, std::size_t realization) {
  const VelocityRange& vr = config.velocities[velocity_index];
  DopplerConfig doppler;
  doppler.carrier_hz = config.carrier_hz;
  doppler.v_min_mps = vr.v_min;
  doppler.v_max_mps = vr.v_max;

  const std::uint64_t base = derive_seed(derive_seed(config.seed, velocity_index), realization);
  for (std::size_t attempt = 0; attempt < kMaxResampleAttempts; ++attempt) {
    const std::uint64_t seed = derive_seed(base, attempt);
    const ChannelBatch h = generate_channel(config.ofdm, doppler, config.antennas, config.users, seed);
    const ChannelBatch h_hat = add_estimation_error(h, config.est_snr_db, derive_seed(seed, 0xE57));
    const std::uint64_t pick = derive_seed(seed, 0x5E1);
    const std::size_t l = pick % h.symbols();
    const std::size_t k = (pick / h.symbols()) % h.subcarriers();
    Draw draw{h.matrix(l, k), h_hat.matrix(l, k), attempt};
    try {
      (void)zf_combiner(draw.h_est);
      return draw;
    } catch (const Error& e) {
      if (e.code() != Errc::singular_channel) throw;
    }
  }
  fail(Errc::singular_channel, "channel draws stayed singular after repeated resampling");
}

RealizationSample evaluate(const SweepConfig& config, const Draw& draw, double sigma2) {
  const UeWeights alpha = UeWeights::uniform(config.users);
  RealizationSample sample;
  for (Method method : config.methods) {
    CombinerMatrix w;
    switch (method) {
      case Method::zf: w = power_project(zf_combiner(draw.h_est)); break;
      case Method::mmse: w = power_project(mmse_combiner(draw.h_est, sigma2)); break;
      case Method::opt: w = optimize_sum_rate(draw.h_est, draw.h_true, sigma2, config.optimizer, alpha).w; break;
    }
    const Eigen::VectorXd gamma = sinr(w, draw.h_true, sigma2);
    sample.sum_rate.push_back(sum_rate_from_sinr(gamma, alpha));
    sample.sinr.emplace_back(gamma.data(), gamma.data() + gamma.size());
  }
  return sample;
}

std::string utc_timestamp() {
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch != nullptr) {
    now = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  }
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

}  // namespace

std::vector<RealizationSample> sample_point(const SweepConfig& config, std::size_t velocity_index, double snr_db,
                                            std::size_t* singular_resamples) {
  config.validate();
  if (velocity_index >= config.velocities.size()) fail(Errc::invalid_argument, "velocity index out of range");
  const double sigma2 = snr_db_to_noise_power(snr_db);
  std::vector<RealizationSample> samples(config.realizations);
  std::vector<std::size_t> resamples(config.realizations, 0);
  parallel_for(config.realizations, [&](std::size_t r) {
    const Draw draw = draw_channel(config, velocity_index, r);
    resamples[r] = draw.resamples;
    samples[r] = evaluate(config, draw, sigma2);
  });
  if (singular_resamples != nullptr) {
    for (std::size_t n : resamples) *singular_resamples += n;
  }
  return samples;
}

SweepResult run_sweep(const SweepConfig& config) {
  config.validate();
  SweepResult result;
  result.metadata.seed = config.seed;
  result.metadata.version = version_string();
  result.metadata.timestamp = utc_timestamp();

  for (std::size_t vi = 0; vi < config.velocities.size(); ++vi) {
    for (double snr : config.snr_db) {
      std::size_t resamples = 0;
      const auto samples = sample_point(config, vi, snr, &resamples);
      result.metadata.singular_resamples += resamples;
      result.metadata.channel_draws += samples.size() + resamples;

      const double n = static_cast<double>(samples.size());
      for (std::size_t mi = 0; mi < config.methods.size(); ++mi) {
        std::vector<double> rates(samples.size());
        for (std::size_t r = 0; r < samples.size(); ++r) rates[r] = samples[r].sum_rate[mi];
        const double mean = pairwise_sum(rates) / n;
        std::vector<double> dev(samples.size());
        for (std::size_t r = 0; r < samples.size(); ++r) dev[r] = (rates[r] - mean) * (rates[r] - mean);
        const double var = samples.size() > 1 ? pairwise_sum(dev) / (n - 1.0) : 0.0;

        SweepPoint point;
        point.method = config.methods[mi];
        point.snr_db = snr;
        point.velocity = config.velocities[vi];
        point.mean_sum_rate = mean;
        point.stderr_sum_rate = std::sqrt(var / n);
        point.realizations = samples.size();
        for (std::size_t u = 0; u < config.users; ++u) {
          std::vector<double> g(samples.size());
          for (std::size_t r = 0; r < samples.size(); ++r) g[r] = samples[r].sinr[mi][u];
          point.mean_sinr_db.push_back(10.0 * std::log10(pairwise_sum(g) / n));
        }
        result.points.push_back(std::move(point));
      }
    }
  }
  return result;
}

std::string sweep_to_csv(const SweepResult& result) {
  std::ostringstream csv;
  csv << std::setprecision(12);
  csv << "method,snr_db,v_min,v_max,mean_sum_rate,stderr,realizations\n";
  for (const auto& p : result.points) {
    csv << to_string(p.method) << ',' << p.snr_db << ',' << p.velocity.v_min << ',' << p.velocity.v_max << ','
        << p.mean_sum_rate << ',' << p.stderr_sum_rate << ',' << p.realizations << '\n';
  }
  return csv.str();
}

std::string sweep_to_json(const SweepResult& result) {
  nlohmann::json doc;
  doc["metadata"] = {{"seed", result.metadata.seed},
                     {"version", result.metadata.version},
                     {"timestamp", result.metadata.timestamp},
                     {"channel_draws", result.metadata.channel_draws},
                     {"singular_resamples", result.metadata.singular_resamples},
                     {"note", "opt is direct projected-gradient sum-rate ascent against the true channel; "
                              "it stands in for a learned beamformer and is not one"}};
  auto points = nlohmann::json::array();
  for (const auto& p : result.points) {
    points.push_back({{"method", std::string(to_string(p.method))},
                      {"snr_db", p.snr_db},
                      {"v_min", p.velocity.v_min},
                      {"v_max", p.velocity.v_max},
                      {"mean_sum_rate", p.mean_sum_rate},
                      {"stderr", p.stderr_sum_rate},
                      {"realizations", p.realizations},
                      {"mean_sinr_db", p.mean_sinr_db}});
  }
  doc["points"] = std::move(points);
  return doc.dump(2);
}

SweepResult sweep_from_json(std::string_view text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    SweepResult result;
    const auto& meta = doc.at("metadata");
    result.metadata.seed = meta.at("seed").get<std::uint64_t>();
    result.metadata.version = meta.at("version").get<std::string>();
    result.metadata.timestamp = meta.at("timestamp").get<std::string>();
    result.metadata.channel_draws = meta.at("channel_draws").get<std::size_t>();
    result.metadata.singular_resamples = meta.at("singular_resamples").get<std::size_t>();
    for (const auto& p : doc.at("points")) {
      SweepPoint point;
      point.method = method_from_string(p.at("method").get<std::string>());
      point.snr_db = p.at("snr_db").get<double>();
      point.velocity = {p.at("v_min").get<double>(), p.at("v_max").get<double>()};
      point.mean_sum_rate = p.at("mean_sum_rate").get<double>();
      point.stderr_sum_rate = p.at("stderr").get<double>();
      point.realizations = p.at("realizations").get<std::size_t>();
      point.mean_sinr_db = p.at("mean_sinr_db").get<std::vector<double>>();
      result.points.push_back(std::move(point));
    }
    return result;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::invalid_argument, std::string("malformed sweep JSON: ") + e.what());
  }
}

void export_report(const SweepResult& result, ReportFormat format, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io_error, "cannot open '" + path + "' for writing");
  out << (format == ReportFormat::csv ? sweep_to_csv(result) : sweep_to_json(result));
  if (!out) fail(Errc::io_error, "failed writing '" + path + "'");
}

}  // namespace dsparse
