#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace dsparse {

using cdouble = std::complex<double>;

// M x N uplink channel; column k is UE k's channel to the M receive antennas.
using ChannelMatrix = Eigen::MatrixXcd;

// N x M receive combiner; row k is UE k's filter, applied as y_k = row_k * y
// (plain transpose pairing, no conjugation).
using CombinerMatrix = Eigen::MatrixXcd;

// Nonnegative UE weights summing to one.
class UeWeights {
 public:
  explicit UeWeights(Eigen::VectorXd alpha);
  static UeWeights uniform(std::size_t users);

  [[nodiscard]] const Eigen::VectorXd& values() const noexcept { return alpha_; }
  [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(alpha_.size()); }

 private:
  Eigen::VectorXd alpha_;
};

// Noise power per receive antenna under unit symbol power.
double snr_db_to_noise_power(double snr_db);

inline constexpr double kMaxGramCondition = 1e12;

// (H^H H)^{-1} H^H via Cholesky of the N x N Gram matrix. Not power projected.
CombinerMatrix zf_combiner(const ChannelMatrix& h_est);

// (H^H H + sigma2 I)^{-1} H^H. sigma2 == 0 takes the ZF path.
CombinerMatrix mmse_combiner(const ChannelMatrix& h_est, double sigma2);

// Per-UE SINR of combiner w against the true channel.
Eigen::VectorXd sinr(const CombinerMatrix& w, const ChannelMatrix& h_true, double sigma2);

double sum_rate_from_sinr(const Eigen::VectorXd& gamma, const UeWeights& alpha);

// sum_k alpha_k log2(1 + gamma_k) in bps/Hz.
double sum_rate(const CombinerMatrix& w, const ChannelMatrix& h_true, double sigma2, const UeWeights& alpha);

// Gradient of sum_rate w.r.t. W, packed as d/dRe + i d/dIm per entry.
CombinerMatrix sum_rate_gradient(const CombinerMatrix& w, const ChannelMatrix& h_true, double sigma2,
                                 const UeWeights& alpha);

// Same quantity by central differences over the 2NM real parameters.
CombinerMatrix sum_rate_gradient_numeric(const CombinerMatrix& w, const ChannelMatrix& h_true, double sigma2,
                                         const UeWeights& alpha, double step = 1e-6);

// Rescales rows with norm > 1 onto the unit sphere.
CombinerMatrix power_project(const CombinerMatrix& w);

// Euclidean projection onto the probability simplex.
Eigen::VectorXd project_simplex(const Eigen::VectorXd& x);

Eigen::MatrixXcd lookahead_update(const Eigen::MatrixXcd& slow, const Eigen::MatrixXcd& fast, double alpha_la);
Eigen::VectorXd lookahead_update(const Eigen::VectorXd& slow, const Eigen::VectorXd& fast, double alpha_la);

enum class GradientMode { numeric, analytic };

struct OptimizerConfig {
  double learning_rate = 0.05;
  std::size_t iterations = 500;
  std::size_t lookahead_steps = 13;  // k
  double lookahead_alpha = 0.5;      // alpha_la
  GradientMode gradient = GradientMode::numeric;
  bool optimize_weights = false;  // also ascend alpha on the simplex
  double weight_learning_rate = 0.01;
};

struct OptimizerResult {
  CombinerMatrix w;
  UeWeights alpha = UeWeights::uniform(1);
  double best_rate = 0.0;
  double initial_rate = 0.0;
  std::vector<double> trace;  // best-so-far after each iteration
};

// Projected gradient ascent on sum_rate(W, h_true) from the projected MMSE
// combiner of h_est, wrapped in Lookahead.
OptimizerResult optimize_sum_rate(const ChannelMatrix& h_est, const ChannelMatrix& h_true, double sigma2,
                                  const OptimizerConfig& config, const UeWeights& alpha);

// Same, starting from a caller-provided combiner.
OptimizerResult optimize_sum_rate_from(const CombinerMatrix& start, const ChannelMatrix& h_true, double sigma2,
                                       const OptimizerConfig& config, const UeWeights& alpha);

}  // namespace dsparse
