#include "dsparse/beamform.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "dsparse/error.hpp"

namespace dsparse {

UeWeights::UeWeights(Eigen::VectorXd alpha) : alpha_(std::move(alpha)) {
  if (alpha_.size() == 0) fail(Errc::invalid_argument, "UE weights must be non-empty");
  if ((alpha_.array() < 0.0).any() || !alpha_.allFinite()) {
    fail(Errc::invalid_argument, "UE weights must be finite and nonnegative");
  }
  if (std::abs(alpha_.sum() - 1.0) > 1e-12) fail(Errc::invalid_argument, "UE weights must sum to 1");
}

UeWeights UeWeights::uniform(std::size_t users) {
  if (users == 0) fail(Errc::invalid_argument, "need at least one UE");
  return UeWeights(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(users), 1.0 / static_cast<double>(users)));
}

double snr_db_to_noise_power(double snr_db) { return std::pow(10.0, -snr_db / 10.0); }

namespace {

void check_finite(const Eigen::MatrixXcd& m, const char* what) {
  if (!m.allFinite()) fail(Errc::non_finite, std::string(what) + " contains non-finite entries");
}

CombinerMatrix regularized_solve(const ChannelMatrix& h, double sigma2) {
  Eigen::MatrixXcd gram = h.adjoint() * h;
  gram.diagonal().array() += sigma2;
  Eigen::LLT<Eigen::MatrixXcd> llt(gram);
  if (llt.info() != Eigen::Success) fail(Errc::singular_channel, "Gram matrix is not positive definite");
  return llt.solve(h.adjoint());
}

// Contribution alpha_k log2(1 + gamma_k) of one combiner row.
double row_rate(const Eigen::Ref<const Eigen::RowVectorXcd>& r, const ChannelMatrix& h, std::size_t k,
                double sigma2, double alpha_k) {
  const Eigen::RowVectorXcd a = r * h;
  const double signal = std::norm(a(static_cast<Eigen::Index>(k)));
  const double total = a.squaredNorm() + sigma2 * r.squaredNorm();
  const double interference = total - signal;
  if (interference <= 0.0) {
    if (signal == 0.0) {
      if (sigma2 > 0.0) return 0.0;
      fail(Errc::degenerate, "SINR is 0/0 for UE " + std::to_string(k));
    }
    return alpha_k == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return alpha_k * std::log2(1.0 + signal / interference);
}

}  // namespace

CombinerMatrix zf_combiner(const ChannelMatrix& h_est) {
  check_finite(h_est, "channel estimate");
  if (h_est.cols() == 0 || h_est.rows() < h_est.cols()) {
    fail(Errc::singular_channel, "zero-forcing needs M >= N (full column rank)");
  }
  const Eigen::MatrixXcd gram = h_est.adjoint() * h_est;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(gram, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo >= kMaxGramCondition) {
    fail(Errc::singular_channel, "channel Gram matrix is singular or ill-conditioned");
  }
  return regularized_solve(h_est, 0.0);
}

CombinerMatrix mmse_combiner(const ChannelMatrix& h_est, double sigma2) {
  if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) fail(Errc::invalid_argument, "noise power must be finite and >= 0");
  if (sigma2 == 0.0) return zf_combiner(h_est);
  check_finite(h_est, "channel estimate");
  return regularized_solve(h_est, sigma2);
}

Eigen::VectorXd sinr(const CombinerMatrix& w, const ChannelMatrix& h_true, double sigma2) {
  if (w.rows() != h_true.cols() || w.cols() != h_true.rows()) {
    fail(Errc::dimension_mismatch, "combiner must be N x M for an M x N channel");
  }
  if (!(sigma2 >= 0.0)) fail(Errc::invalid_argument, "noise power must be >= 0");
  const Eigen::MatrixXcd effective = w * h_true;  // (k, i) = r_k h_i
  const auto n = effective.rows();
  Eigen::VectorXd gamma(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double signal = std::norm(effective(k, k));
    const double noise = sigma2 * w.row(k).squaredNorm();
    const double interference = effective.row(k).squaredNorm() - signal + noise;
    if (w.row(k).squaredNorm() == 0.0) {
      if (sigma2 == 0.0) fail(Errc::degenerate, "SINR is 0/0: zero filter with zero noise");
      gamma(k) = 0.0;
    } else if (interference <= 0.0) {
      gamma(k) = signal > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    } else {
      gamma(k) = signal / interference;
    }
  }
  return gamma;
}

double sum_rate_from_sinr(const Eigen::VectorXd& gamma, const UeWeights& alpha) {
  if (static_cast<std::size_t>(gamma.size()) != alpha.size()) fail(Errc::dimension_mismatch, "one weight per UE");
  double rate = 0.0;
  for (Eigen::Index k = 0; k < gamma.size(); ++k) {
    if (alpha.values()(k) != 0.0) rate += alpha.values()(k) * std::log2(1.0 + gamma(k));
  }
  return rate;
}

double sum_rate(const CombinerMatrix& w, const ChannelMatrix& h_true, double sigma2, const UeWeights& alpha) {
  return sum_rate_from_sinr(sinr(w, h_true, sigma2), alpha);
}

CombinerMatrix sum_rate_gradient(const CombinerMatrix& w, const ChannelMatrix& h_true, double sigma2,
                                 const UeWeights& alpha) {
  if (w.rows() != h_true.cols() || w.cols() != h_true.rows()) {
    fail(Errc::dimension_mismatch, "combiner must be N x M for an M x N channel");
  }
  if (static_cast<Eigen::Index>(alpha.size()) != w.rows()) fail(Errc::dimension_mismatch, "one weight per UE");

  // For f = |r h|^2 the packed gradient d/dRe + i d/dIm is 2 (r h) h^H.
  CombinerMatrix grad = CombinerMatrix::Zero(w.rows(), w.cols());
  for (Eigen::Index k = 0; k < w.rows(); ++k) {
    const Eigen::RowVectorXcd r = w.row(k);
    const Eigen::RowVectorXcd a = r * h_true;
    const double signal = std::norm(a(k));
    const double total = a.squaredNorm() + sigma2 * r.squaredNorm();
    const double interference = total - signal;
    if (!(interference > 0.0)) fail(Errc::degenerate, "rate gradient undefined without interference or noise");

    Eigen::RowVectorXcd grad_total = 2.0 * sigma2 * r;
    for (Eigen::Index i = 0; i < h_true.cols(); ++i) grad_total += 2.0 * a(i) * h_true.col(i).adjoint();
    const Eigen::RowVectorXcd grad_interference = grad_total - 2.0 * a(k) * h_true.col(k).adjoint();
    grad.row(k) = alpha.values()(k) / std::numbers::ln2 * (grad_total / total - grad_interference / interference);
  }
  return grad;
}

CombinerMatrix sum_rate_gradient_numeric(const CombinerMatrix& w, const ChannelMatrix& h_true, double sigma2,
                                         const UeWeights& alpha, double step) {
  if (w.rows() != h_true.cols() || w.cols() != h_true.rows()) {
    fail(Errc::dimension_mismatch, "combiner must be N x M for an M x N channel");
  }
  if (static_cast<Eigen::Index>(alpha.size()) != w.rows()) fail(Errc::dimension_mismatch, "one weight per UE");
  CombinerMatrix grad(w.rows(), w.cols());
  Eigen::RowVectorXcd r;
  for (Eigen::Index k = 0; k < w.rows(); ++k) {
    const double a_k = alpha.values()(k);
    r = w.row(k);
    for (Eigen::Index m = 0; m < w.cols(); ++m) {
      const cdouble saved = r(m);
      double parts[2];
      for (int part = 0; part < 2; ++part) {
        const cdouble delta = part == 0 ? cdouble(step, 0.0) : cdouble(0.0, step);
        r(m) = saved + delta;
        const double up = row_rate(r, h_true, static_cast<std::size_t>(k), sigma2, a_k);
        r(m) = saved - delta;
        const double down = row_rate(r, h_true, static_cast<std::size_t>(k), sigma2, a_k);
        parts[part] = (up - down) / (2.0 * step);
      }
      r(m) = saved;
      grad(k, m) = cdouble(parts[0], parts[1]);
    }
  }
  return grad;
}

CombinerMatrix power_project(const CombinerMatrix& w) {
  CombinerMatrix out = w;
  for (Eigen::Index k = 0; k < out.rows(); ++k) {
    const double norm = out.row(k).norm();
    if (norm > 1.0) {
      out.row(k) /= norm;
      // Rounding can leave the norm one ulp above 1; the result must be feasible.
      while (out.row(k).norm() > 1.0) out.row(k) *= std::nextafter(1.0, 0.0);
    }
  }
  return out;
}

Eigen::VectorXd project_simplex(const Eigen::VectorXd& x) {
  if (x.size() == 0) fail(Errc::invalid_argument, "cannot project an empty vector");
  std::vector<double> sorted(x.data(), x.data() + x.size());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double running = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < sorted.size(); ++j) {
    running += sorted[j];
    const double candidate = (running - 1.0) / static_cast<double>(j + 1);
    if (sorted[j] - candidate > 0.0) theta = candidate;
  }
  Eigen::VectorXd out = (x.array() - theta).max(0.0);
  out /= out.sum();
  return out;
}

Eigen::MatrixXcd lookahead_update(const Eigen::MatrixXcd& slow, const Eigen::MatrixXcd& fast, double alpha_la) {
  if (slow.rows() != fast.rows() || slow.cols() != fast.cols()) {
    fail(Errc::shape_mismatch, "slow and fast weights differ in shape");
  }
  if (!(alpha_la >= 0.0 && alpha_la <= 1.0)) fail(Errc::invalid_argument, "alpha_la must lie in [0, 1]");
  if (alpha_la == 1.0) return fast;
  return slow + alpha_la * (fast - slow);
}

Eigen::VectorXd lookahead_update(const Eigen::VectorXd& slow, const Eigen::VectorXd& fast, double alpha_la) {
  if (slow.size() != fast.size()) fail(Errc::shape_mismatch, "slow and fast weights differ in shape");
  if (!(alpha_la >= 0.0 && alpha_la <= 1.0)) fail(Errc::invalid_argument, "alpha_la must lie in [0, 1]");
  if (alpha_la == 1.0) return fast;
  return slow + alpha_la * (fast - slow);
}

OptimizerResult optimize_sum_rate(const ChannelMatrix& h_est, const ChannelMatrix& h_true, double sigma2,
                                  const OptimizerConfig& config, const UeWeights& alpha) {
  return optimize_sum_rate_from(mmse_combiner(h_est, sigma2), h_true, sigma2, config, alpha);
}

OptimizerResult optimize_sum_rate_from(const CombinerMatrix& start, const ChannelMatrix& h_true, double sigma2,
                                       const OptimizerConfig& config, const UeWeights& alpha) {
  if (!(sigma2 > 0.0)) fail(Errc::invalid_argument, "sum-rate optimization needs a positive noise power");
  if (config.lookahead_steps == 0) fail(Errc::invalid_argument, "lookahead step count must be >= 1");
  if (!(config.learning_rate > 0.0)) fail(Errc::invalid_argument, "learning rate must be positive");

  auto gradient = [&](const CombinerMatrix& w, const UeWeights& weights) {
    return config.gradient == GradientMode::analytic ? sum_rate_gradient(w, h_true, sigma2, weights)
                                                     : sum_rate_gradient_numeric(w, h_true, sigma2, weights);
  };

  OptimizerResult result;
  UeWeights weights = alpha;
  CombinerMatrix fast = power_project(start);
  CombinerMatrix slow = fast;
  result.w = fast;
  result.alpha = weights;
  result.initial_rate = sum_rate(fast, h_true, sigma2, weights);
  result.best_rate = result.initial_rate;
  result.trace.reserve(config.iterations);

  for (std::size_t t = 1; t <= config.iterations; ++t) {
    fast = power_project(fast + config.learning_rate * gradient(fast, weights));
    if (config.optimize_weights) {
      const Eigen::VectorXd gamma = sinr(fast, h_true, sigma2);
      const Eigen::VectorXd ascent = (1.0 + gamma.array()).log() / std::numbers::ln2;
      weights = UeWeights(project_simplex(weights.values() + config.weight_learning_rate * ascent));
    }
    if (t % config.lookahead_steps == 0) {
      slow = power_project(lookahead_update(slow, fast, config.lookahead_alpha));
      fast = slow;
    }
    const double rate = sum_rate(fast, h_true, sigma2, weights);
    if (rate > result.best_rate) {
      result.best_rate = rate;
      result.w = fast;
      result.alpha = weights;
    }
    result.trace.push_back(result.best_rate);
  }
  return result;
}

}  // namespace dsparse
