#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dsparse {

inline constexpr double kSpeedOfLight = 2.99792458e8;

// f_d = v * f_c / c
double max_doppler(double velocity_mps, double carrier_hz);

struct DopplerConfig {
  double carrier_hz = 2.6e9;
  double v_min_mps = 0.0;
  double v_max_mps = 10.0;  // per-UE velocity drawn uniformly in [v_min, v_max]
  std::size_t num_sinusoids = 32;
};

struct OfdmConfig {
  std::size_t symbols = 14;        // L
  std::size_t resource_blocks = 4; // K = 12 * RBs
  double subcarrier_spacing_hz = 30e3;
  double tti_s = 500e-6;
  std::size_t num_taps = 4;
  double delay_spread_s = 100e-9;

  [[nodiscard]] std::size_t subcarriers() const noexcept { return 12 * resource_blocks; }
  // Cyclic prefix folded into the sample grid.
  [[nodiscard]] double symbol_duration_s() const noexcept { return tti_s / static_cast<double>(symbols); }
  void validate() const;
};

// Unit-power sum-of-sinusoids Clarke/Jakes process sampled at `times`.
// Arrival angles and phases are drawn from the seed; the ensemble
// autocorrelation is J0(2 pi f_d tau).
std::vector<std::complex<double>> jakes_fading(double doppler_hz, std::span<const double> times, std::uint64_t seed,
                                               std::size_t num_sinusoids = 32);

// Tapped-delay-line power profile: tap n at delay n * delay_spread with power
// proportional to exp(-n), normalized to unit sum.
std::vector<double> tap_powers(std::size_t num_taps);
std::vector<double> tap_delays(std::size_t num_taps, double delay_spread_s);

// Complex channel over the L x K grid, stored [l][k][m][n] contiguous.
class ChannelBatch {
 public:
  ChannelBatch() = default;
  ChannelBatch(std::size_t symbols, std::size_t subcarriers, std::size_t antennas, std::size_t users);

  [[nodiscard]] std::size_t symbols() const noexcept { return L_; }
  [[nodiscard]] std::size_t subcarriers() const noexcept { return K_; }
  [[nodiscard]] std::size_t antennas() const noexcept { return M_; }
  [[nodiscard]] std::size_t users() const noexcept { return N_; }

  std::complex<double>& at(std::size_t l, std::size_t k, std::size_t m, std::size_t n);
  [[nodiscard]] const std::complex<double>& at(std::size_t l, std::size_t k, std::size_t m, std::size_t n) const;

  // M x N channel matrix of one resource element.
  [[nodiscard]] Eigen::MatrixXcd matrix(std::size_t l, std::size_t k) const;

  [[nodiscard]] std::span<const std::complex<double>> data() const noexcept { return data_; }
  [[nodiscard]] std::span<std::complex<double>> data() noexcept { return data_; }

  friend bool operator==(const ChannelBatch&, const ChannelBatch&) = default;

 private:
  std::size_t L_ = 0, K_ = 0, M_ = 0, N_ = 0;
  std::vector<std::complex<double>> data_;
};

// H_true only. Deterministic in (configs, antennas, users, seed).
ChannelBatch generate_channel(const OfdmConfig& ofdm, const DopplerConfig& doppler, std::size_t antennas,
                              std::size_t users, std::uint64_t seed, std::vector<double>* doppler_hz = nullptr);

// H + e with e ~ CN(0, 10^(-est_snr_db / 10)); +inf returns H unchanged.
ChannelBatch add_estimation_error(const ChannelBatch& h_true, double est_snr_db, std::uint64_t seed);

// Suggested time bias from the normalized Doppler f_d * T_sym:
// 1 below 0.005, 2 below 0.02, 4 otherwise. A heuristic; callers may override.
double time_bias_hint(double doppler_hz, double symbol_duration_s);

// Binary layout: eight little-endian uint64 header fields
// (magic, version, L, K, M, N, R, seed) followed by R realizations of
// L*K*M*N complex values as interleaved little-endian float64 (re, im),
// index order [r][l][k][m][n].
inline constexpr std::uint64_t kChannelFileMagic = 0x314E414843505344ULL;  // "DSPCHAN1"
inline constexpr std::uint64_t kChannelFileVersion = 1;

struct ChannelFile {
  std::uint64_t seed = 0;
  std::vector<ChannelBatch> realizations;
};

void write_channel_file(std::ostream& out, const ChannelFile& file);
ChannelFile read_channel_file(std::istream& in);

}  // namespace dsparse
