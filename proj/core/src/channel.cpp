#include "dsparse/channel.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>

#include "dsparse/error.hpp"
#include "dsparse/parallel.hpp"

namespace dsparse {

double max_doppler(double velocity_mps, double carrier_hz) {
  if (!(velocity_mps >= 0.0) || !(carrier_hz > 0.0)) {
    fail(Errc::invalid_argument, "velocity must be >= 0 and carrier frequency > 0");
  }
  return velocity_mps * carrier_hz / kSpeedOfLight;
}

void OfdmConfig::validate() const {
  if (symbols == 0 || resource_blocks == 0 || num_taps == 0) {
    fail(Errc::invalid_argument, "OFDM symbols, resource blocks and taps must be >= 1");
  }
  if (!(subcarrier_spacing_hz > 0.0) || !(tti_s > 0.0) || !(delay_spread_s > 0.0)) {
    fail(Errc::invalid_argument, "subcarrier spacing, TTI and delay spread must be positive");
  }
}

std::vector<std::complex<double>> jakes_fading(double doppler_hz, std::span<const double> times, std::uint64_t seed,
                                               std::size_t num_sinusoids) {
  if (!(doppler_hz >= 0.0)) fail(Errc::invalid_argument, "Doppler frequency must be >= 0");
  if (num_sinusoids < 8) fail(Errc::invalid_argument, "Jakes model needs at least 8 sinusoids");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::vector<double> shift(num_sinusoids), phase(num_sinusoids);
  for (std::size_t n = 0; n < num_sinusoids; ++n) {
    shift[n] = 2.0 * std::numbers::pi * doppler_hz * std::cos(angle(rng));
    phase[n] = angle(rng);
  }

  const double norm = 1.0 / std::sqrt(static_cast<double>(num_sinusoids));
  std::vector<std::complex<double>> out(times.size());
  for (std::size_t t = 0; t < times.size(); ++t) {
    std::complex<double> acc = 0.0;
    for (std::size_t n = 0; n < num_sinusoids; ++n) acc += std::polar(1.0, shift[n] * times[t] + phase[n]);
    out[t] = norm * acc;
  }
  return out;
}

std::vector<double> tap_powers(std::size_t num_taps) {
  std::vector<double> p(num_taps);
  double total = 0.0;
  for (std::size_t n = 0; n < num_taps; ++n) total += (p[n] = std::exp(-static_cast<double>(n)));
  for (auto& x : p) x /= total;
  return p;
}

std::vector<double> tap_delays(std::size_t num_taps, double delay_spread_s) {
  std::vector<double> d(num_taps);
  for (std::size_t n = 0; n < num_taps; ++n) d[n] = static_cast<double>(n) * delay_spread_s;
  return d;
}

ChannelBatch::ChannelBatch(std::size_t symbols, std::size_t subcarriers, std::size_t antennas, std::size_t users)
    : L_(symbols), K_(subcarriers), M_(antennas), N_(users), data_(symbols * subcarriers * antennas * users) {}

std::complex<double>& ChannelBatch::at(std::size_t l, std::size_t k, std::size_t m, std::size_t n) {
  return data_[((l * K_ + k) * M_ + m) * N_ + n];
}

const std::complex<double>& ChannelBatch::at(std::size_t l, std::size_t k, std::size_t m, std::size_t n) const {
  return data_[((l * K_ + k) * M_ + m) * N_ + n];
}

Eigen::MatrixXcd ChannelBatch::matrix(std::size_t l, std::size_t k) const {
  if (l >= L_ || k >= K_) fail(Errc::invalid_argument, "resource element outside the grid");
  Eigen::MatrixXcd h(static_cast<Eigen::Index>(M_), static_cast<Eigen::Index>(N_));
  for (std::size_t m = 0; m < M_; ++m) {
    for (std::size_t n = 0; n < N_; ++n) h(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n)) = at(l, k, m, n);
  }
  return h;
}

ChannelBatch generate_channel(const OfdmConfig& ofdm, const DopplerConfig& doppler, std::size_t antennas,
                              std::size_t users, std::uint64_t seed, std::vector<double>* doppler_hz) {
  ofdm.validate();
  if (antennas == 0 || users == 0) fail(Errc::invalid_argument, "need at least one antenna and one UE");
  if (!(doppler.v_min_mps >= 0.0) || doppler.v_max_mps < doppler.v_min_mps) {
    fail(Errc::invalid_argument, "velocity range must satisfy 0 <= v_min <= v_max");
  }

  const std::size_t L = ofdm.symbols;
  const std::size_t K = ofdm.subcarriers();
  const double t_sym = ofdm.symbol_duration_s();
  std::vector<double> times(L);
  for (std::size_t l = 0; l < L; ++l) times[l] = static_cast<double>(l) * t_sym;

  const auto powers = tap_powers(ofdm.num_taps);
  const auto delays = tap_delays(ofdm.num_taps, ofdm.delay_spread_s);
  // phasor[tap][k] = sqrt(p_tap) exp(-i 2 pi f_k tau_tap)
  std::vector<std::vector<std::complex<double>>> phasor(ofdm.num_taps, std::vector<std::complex<double>>(K));
  for (std::size_t tap = 0; tap < ofdm.num_taps; ++tap) {
    for (std::size_t k = 0; k < K; ++k) {
      const double fk = static_cast<double>(k) * ofdm.subcarrier_spacing_hz;
      phasor[tap][k] = std::polar(std::sqrt(powers[tap]), -2.0 * std::numbers::pi * fk * delays[tap]);
    }
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> speed(doppler.v_min_mps, doppler.v_max_mps);
  std::vector<double> fd(users);
  for (auto& f : fd) f = max_doppler(doppler.v_min_mps == doppler.v_max_mps ? doppler.v_min_mps : speed(rng),
                                     doppler.carrier_hz);
  if (doppler_hz != nullptr) *doppler_hz = fd;

  ChannelBatch batch(L, K, antennas, users);
  std::uint64_t stream = 0;
  for (std::size_t m = 0; m < antennas; ++m) {
    for (std::size_t n = 0; n < users; ++n) {
      for (std::size_t tap = 0; tap < ofdm.num_taps; ++tap) {
        const auto g = jakes_fading(fd[n], times, derive_seed(seed, stream++), doppler.num_sinusoids);
        for (std::size_t l = 0; l < L; ++l) {
          for (std::size_t k = 0; k < K; ++k) batch.at(l, k, m, n) += g[l] * phasor[tap][k];
        }
      }
    }
  }
  return batch;
}

ChannelBatch add_estimation_error(const ChannelBatch& h_true, double est_snr_db, std::uint64_t seed) {
  if (std::isnan(est_snr_db) || est_snr_db == -std::numeric_limits<double>::infinity()) {
    fail(Errc::invalid_argument, "estimation SNR must be finite or +inf");
  }
  ChannelBatch out = h_true;
  if (std::isinf(est_snr_db)) return out;
  const double sigma = std::sqrt(std::pow(10.0, -est_snr_db / 10.0) / 2.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, sigma);
  for (auto& x : out.data()) {
    const double re = gauss(rng);
    const double im = gauss(rng);
    x += std::complex<double>(re, im);
  }
  return out;
}

double time_bias_hint(double doppler_hz, double symbol_duration_s) {
  if (!(doppler_hz >= 0.0) || !(symbol_duration_s >= 0.0)) {
    fail(Errc::invalid_argument, "Doppler and symbol duration must be >= 0");
  }
  const double normalized = doppler_hz * symbol_duration_s;
  if (normalized < 0.005) return 1.0;
  if (normalized < 0.02) return 2.0;
  return 4.0;
}

namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> bytes{};
  for (std::size_t b = 0; b < 8; ++b) bytes[b] = static_cast<char>((v >> (8 * b)) & 0xFFU);
  out.write(bytes.data(), 8);
}

std::uint64_t get_u64(std::istream& in) {
  std::array<unsigned char, 8> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), 8);
  if (!in) fail(Errc::io_error, "truncated channel file");
  std::uint64_t v = 0;
  for (std::size_t b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
  return v;
}

}  // namespace

void write_channel_file(std::ostream& out, const ChannelFile& file) {
  std::size_t L = 0, K = 0, M = 0, N = 0;
  if (!file.realizations.empty()) {
    const auto& first = file.realizations.front();
    L = first.symbols();
    K = first.subcarriers();
    M = first.antennas();
    N = first.users();
  }
  for (const auto& r : file.realizations) {
    if (r.symbols() != L || r.subcarriers() != K || r.antennas() != M || r.users() != N) {
      fail(Errc::dimension_mismatch, "all realizations in a channel file must share one shape");
    }
  }
  for (std::uint64_t field : {kChannelFileMagic, kChannelFileVersion, std::uint64_t{L}, std::uint64_t{K},
                              std::uint64_t{M}, std::uint64_t{N}, std::uint64_t{file.realizations.size()}, file.seed}) {
    put_u64(out, field);
  }
  for (const auto& r : file.realizations) {
    for (const auto& x : r.data()) {
      put_u64(out, std::bit_cast<std::uint64_t>(x.real()));
      put_u64(out, std::bit_cast<std::uint64_t>(x.imag()));
    }
  }
  if (!out) fail(Errc::io_error, "failed writing channel file");
}

ChannelFile read_channel_file(std::istream& in) {
  if (get_u64(in) != kChannelFileMagic) fail(Errc::io_error, "not a channel file (bad magic)");
  if (get_u64(in) != kChannelFileVersion) fail(Errc::io_error, "unsupported channel file version");
  const std::uint64_t L = get_u64(in), K = get_u64(in), M = get_u64(in), N = get_u64(in), R = get_u64(in);
  ChannelFile file;
  file.seed = get_u64(in);
  file.realizations.reserve(R);
  for (std::uint64_t r = 0; r < R; ++r) {
    ChannelBatch batch(L, K, M, N);
    for (auto& x : batch.data()) {
      const double re = std::bit_cast<double>(get_u64(in));
      const double im = std::bit_cast<double>(get_u64(in));
      x = {re, im};
    }
    file.realizations.push_back(std::move(batch));
  }
  return file;
}

}  // namespace dsparse
