#include "dsparse/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "dsparse/error.hpp"
#include "dsparse/parallel.hpp"

namespace dsparse {

namespace {

template <class Real>
using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_compatible(const EmbeddingBlock& block, const SparseMaskSet& masks) {
  block.validate();
  if (masks.tokens() != block.tokens) {
    fail(Errc::dimension_mismatch, "mask set covers " + std::to_string(masks.tokens()) + " tokens, block has " +
                                       std::to_string(block.tokens));
  }
  if (masks.head_count() != block.heads) {
    fail(Errc::dimension_mismatch, "mask set has " + std::to_string(masks.head_count()) + " heads, block has " +
                                       std::to_string(block.heads));
  }
}

// Softmax-weighted value sum of one row. Returns false for an empty row (out
// left at zero).
template <class Real>
bool attend_row(const Mat<Real>& q, const Mat<Real>& k, const Mat<Real>& v, std::span<const TokenIndex> keys,
                std::size_t query, Real scale, std::vector<Real>& weights, Real* out) {
  const auto dh = q.cols();
  std::fill(out, out + dh, Real(0));
  if (keys.empty()) return false;

  weights.resize(keys.size());
  Real peak = -std::numeric_limits<Real>::infinity();
  for (std::size_t n = 0; n < keys.size(); ++n) {
    Real dot = 0;
    for (Eigen::Index c = 0; c < dh; ++c) dot += q(query, c) * k(keys[n], c);
    weights[n] = dot * scale;
    peak = std::max(peak, weights[n]);
  }
  Real total = 0;
  for (auto& w : weights) {
    w = std::exp(w - peak);
    total += w;
  }
  for (std::size_t n = 0; n < keys.size(); ++n) {
    weights[n] /= total;
    for (Eigen::Index c = 0; c < dh; ++c) out[c] += weights[n] * v(keys[n], c);
  }
  return true;
}

}  // namespace

void EmbeddingBlock::validate() const {
  if (heads == 0 || model_dim == 0 || model_dim % heads != 0) {
    fail(Errc::dimension_mismatch, "model_dim must be a positive multiple of the head count");
  }
  if (q.size() != heads || k.size() != heads || v.size() != heads) {
    fail(Errc::dimension_mismatch, "expected one Q/K/V matrix per head");
  }
  const auto dh = static_cast<Eigen::Index>(head_dim());
  const auto T = static_cast<Eigen::Index>(tokens);
  for (std::size_t h = 0; h < heads; ++h) {
    for (const auto* m : {&q[h], &k[h], &v[h]}) {
      if (m->rows() != T || m->cols() != dh) fail(Errc::dimension_mismatch, "Q/K/V must be tokens x head_dim");
      if (!m->allFinite()) fail(Errc::non_finite, "embedding block contains non-finite entries");
    }
  }
}

EmbeddingBlock EmbeddingBlock::random(std::size_t tokens, std::size_t model_dim, std::size_t heads,
                                      std::uint64_t seed) {
  EmbeddingBlock block{tokens, model_dim, heads, {}, {}, {}};
  if (heads == 0 || model_dim % heads != 0) {
    fail(Errc::dimension_mismatch, "model_dim must be a positive multiple of the head count");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto dh = static_cast<Eigen::Index>(block.head_dim());
  for (std::size_t h = 0; h < heads; ++h) {
    for (auto* list : {&block.q, &block.k, &block.v}) {
      Eigen::MatrixXd m(static_cast<Eigen::Index>(tokens), dh);
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = gauss(rng);
      }
      list->push_back(std::move(m));
    }
  }
  return block;
}

AttentionOutput sparse_attention_forward(const EmbeddingBlock& block, const SparseMaskSet& masks) {
  check_compatible(block, masks);
  const std::size_t T = block.tokens;
  const auto dh = static_cast<Eigen::Index>(block.head_dim());
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Mat<double> out = Mat<double>::Zero(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(block.model_dim));
  std::vector<unsigned char> empty(block.heads * T, 0);
  for (std::size_t h = 0; h < block.heads; ++h) {
    const Mat<double> q = block.q[h], k = block.k[h], v = block.v[h];
    parallel_for(T, [&](std::size_t i) {
      std::vector<double> weights;
      double* dst = out.data() + static_cast<Eigen::Index>(i) * out.cols() + static_cast<Eigen::Index>(h) * dh;
      if (!attend_row(q, k, v, masks.row(h, i), i, scale, weights, dst)) empty[h * T + i] = 1;
    });
  }

  AttentionOutput result;
  result.values = out;
  result.empty_rows = static_cast<std::size_t>(std::count(empty.begin(), empty.end(), 1));
  return result;
}

AttentionOutput dense_masked_oracle(const EmbeddingBlock& block, const SparseMaskSet& masks) {
  check_compatible(block, masks);
  const auto T = static_cast<Eigen::Index>(block.tokens);
  const auto dh = static_cast<Eigen::Index>(block.head_dim());
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const double neg_inf = -std::numeric_limits<double>::infinity();

  AttentionOutput result;
  result.values = Eigen::MatrixXd::Zero(T, static_cast<Eigen::Index>(block.model_dim));
  for (std::size_t h = 0; h < block.heads; ++h) {
    Eigen::MatrixXd allowed = Eigen::MatrixXd::Zero(T, T);
    for (Eigen::Index i = 0; i < T; ++i) {
      for (TokenIndex j : masks.row(h, static_cast<std::size_t>(i))) allowed(i, j) = 1.0;
    }
    Eigen::MatrixXd scores = (block.q[h] * block.k[h].transpose()) * scale;
    scores = (allowed.array() > 0.5).select(scores, neg_inf);

    Eigen::MatrixXd probs = Eigen::MatrixXd::Zero(T, T);
    for (Eigen::Index i = 0; i < T; ++i) {
      const double peak = scores.row(i).maxCoeff();
      if (peak == neg_inf) {
        ++result.empty_rows;
        continue;
      }
      probs.row(i) = (scores.row(i).array() - peak).exp().matrix();
      probs.row(i) /= probs.row(i).sum();
    }
    result.values.middleCols(static_cast<Eigen::Index>(h) * dh, dh) = probs * block.v[h];
  }
  return result;
}

std::vector<double> attention_weights(const EmbeddingBlock& block, const SparseMaskSet& masks, std::size_t head,
                                      std::size_t query) {
  check_compatible(block, masks);
  const Mat<double> q = block.q.at(head), k = block.k[head], v = block.v[head];
  std::vector<double> weights;
  std::vector<double> out(static_cast<std::size_t>(q.cols()));
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  if (!attend_row(q, k, v, masks.row(head, query), query, scale, weights, out.data())) weights.clear();
  return weights;
}

AttentionGradients sparse_attention_backward(const EmbeddingBlock& block, const SparseMaskSet& masks,
                                             const Eigen::MatrixXd& upstream) {
  check_compatible(block, masks);
  const auto T = static_cast<Eigen::Index>(block.tokens);
  const auto dh = static_cast<Eigen::Index>(block.head_dim());
  if (upstream.rows() != T || upstream.cols() != static_cast<Eigen::Index>(block.model_dim)) {
    fail(Errc::dimension_mismatch, "upstream gradient must be tokens x model_dim");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  AttentionGradients grads;
  for (std::size_t h = 0; h < block.heads; ++h) {
    const Mat<double> q = block.q[h], k = block.k[h], v = block.v[h];
    Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(T, dh);
    Eigen::MatrixXd dk = Eigen::MatrixXd::Zero(T, dh);
    Eigen::MatrixXd dv = Eigen::MatrixXd::Zero(T, dh);
    std::vector<double> weights, dweights;
    std::vector<double> out(static_cast<std::size_t>(dh));

    // Sequential over queries: dk/dv accumulate across rows.
    for (Eigen::Index i = 0; i < T; ++i) {
      const auto keys = masks.row(h, static_cast<std::size_t>(i));
      if (!attend_row(q, k, v, keys, static_cast<std::size_t>(i), scale, weights, out.data())) continue;
      const auto g = upstream.row(i).segment(static_cast<Eigen::Index>(h) * dh, dh);

      dweights.resize(keys.size());
      double mean = 0.0;
      for (std::size_t n = 0; n < keys.size(); ++n) {
        dweights[n] = g.dot(v.row(keys[n]));
        mean += weights[n] * dweights[n];
        dv.row(keys[n]) += weights[n] * g;
      }
      for (std::size_t n = 0; n < keys.size(); ++n) {
        const double dscore = weights[n] * (dweights[n] - mean) * scale;
        dq.row(i) += dscore * k.row(keys[n]);
        dk.row(keys[n]) += dscore * q.row(i);
      }
    }
    grads.dq.push_back(std::move(dq));
    grads.dk.push_back(std::move(dk));
    grads.dv.push_back(std::move(dv));
  }
  return grads;
}

GradientCheckResult gradient_check(const EmbeddingBlock& block, const SparseMaskSet& masks, double step) {
  check_compatible(block, masks);
  if (block.tokens > 64 || block.model_dim > 16) {
    fail(Errc::invalid_argument, "gradient check is limited to tokens <= 64 and model_dim <= 16");
  }
  using Real = long double;
  const std::size_t T = block.tokens;
  const auto dh = static_cast<Eigen::Index>(block.head_dim());
  const Real scale = 1.0L / std::sqrt(static_cast<Real>(dh));

  const AttentionOutput forward = sparse_attention_forward(block, masks);
  const AttentionGradients analytic = sparse_attention_backward(block, masks, 2.0 * forward.values);

  GradientCheckResult result;
  std::vector<Real> weights;
  std::vector<Real> out(static_cast<std::size_t>(dh));

  for (std::size_t h = 0; h < block.heads; ++h) {
    Mat<Real> q = block.q[h].cast<Real>();
    Mat<Real> k = block.k[h].cast<Real>();
    Mat<Real> v = block.v[h].cast<Real>();

    // Queries whose row contains key j; perturbing K/V row j only moves these.
    std::vector<std::vector<std::size_t>> readers(T);
    for (std::size_t i = 0; i < T; ++i) {
      for (TokenIndex j : masks.row(h, i)) readers[j].push_back(i);
    }

    auto local_loss = [&](std::span<const std::size_t> queries) {
      Real loss = 0;
      for (std::size_t i : queries) {
        attend_row(q, k, v, masks.row(h, i), i, scale, weights, out.data());
        for (Real x : out) loss += x * x;
      }
      return loss;
    };

    const std::pair<Mat<Real>*, const Eigen::MatrixXd*> targets[] = {
        {&q, &analytic.dq[h]}, {&k, &analytic.dk[h]}, {&v, &analytic.dv[h]}};
    const char* names[] = {"Q", "K", "V"};
    for (int which = 0; which < 3; ++which) {
      Mat<Real>& param = *targets[which].first;
      const Eigen::MatrixXd& grad = *targets[which].second;
      for (std::size_t r = 0; r < T; ++r) {
        std::size_t self[] = {r};
        const std::span<const std::size_t> affected =
            which == 0 ? std::span<const std::size_t>(self) : std::span<const std::size_t>(readers[r]);
        for (Eigen::Index c = 0; c < dh; ++c) {
          const Real saved = param(static_cast<Eigen::Index>(r), c);
          param(static_cast<Eigen::Index>(r), c) = saved + step;
          const Real up = local_loss(affected);
          param(static_cast<Eigen::Index>(r), c) = saved - step;
          const Real down = local_loss(affected);
          param(static_cast<Eigen::Index>(r), c) = saved;

          const double numeric = static_cast<double>((up - down) / (2.0L * step));
          const double exact = grad(static_cast<Eigen::Index>(r), c);
          const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-8});
          const double rel = std::abs(exact - numeric) / denom;
          ++result.entries_checked;
          if (rel > result.max_relative_error) {
            result.max_relative_error = rel;
            std::ostringstream label;
            label << names[which] << "[h=" << h << "](" << r << "," << c << ")";
            result.worst_entry = label.str();
          }
        }
      }
    }
  }
  return result;
}

HistogramReport attended_keys_histogram(const SparseMaskSet& masks, std::size_t samples) {
  HistogramReport report;
  report.samples = samples;
  report.total_queries = masks.tokens() * samples;
  report.per_head.resize(masks.head_count());
  for (std::size_t h = 0; h < masks.head_count(); ++h) {
    for (std::size_t i = 0; i < masks.tokens(); ++i) report.per_head[h][masks.row_size(h, i)] += samples;
  }
  return report;
}

std::string histogram_to_csv(const HistogramReport& report) {
  std::ostringstream csv;
  csv << "head,row_length,query_count\n";
  for (std::size_t h = 0; h < report.per_head.size(); ++h) {
    for (const auto& [length, count] : report.per_head[h]) csv << h << ',' << length << ',' << count << '\n';
  }
  return csv.str();
}

}  // namespace dsparse
