#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dsparse/masks.hpp"

namespace dsparse {

// Per-head query/key/value activations, each tokens x head_dim.
struct EmbeddingBlock {
  std::size_t tokens = 0;
  std::size_t model_dim = 0;
  std::size_t heads = 1;
  std::vector<Eigen::MatrixXd> q, k, v;

  [[nodiscard]] std::size_t head_dim() const noexcept { return heads == 0 ? 0 : model_dim / heads; }

  // Throws dimension_mismatch on bad shapes, non_finite on NaN/Inf entries.
  void validate() const;

  // Seeded standard-normal entries.
  static EmbeddingBlock random(std::size_t tokens, std::size_t model_dim, std::size_t heads, std::uint64_t seed);
};

struct AttentionOutput {
  Eigen::MatrixXd values;       // tokens x model_dim, heads concatenated
  std::size_t empty_rows = 0;   // (head, query) pairs with no keys; output zero
};

// Scaled dot-product attention restricted to each mask row.
AttentionOutput sparse_attention_forward(const EmbeddingBlock& block, const SparseMaskSet& masks);

// Reference path: full T x T scores, disallowed entries set to -inf.
AttentionOutput dense_masked_oracle(const EmbeddingBlock& block, const SparseMaskSet& masks);

// Softmax weights of one (head, query) row, aligned with masks.row(head, query).
std::vector<double> attention_weights(const EmbeddingBlock& block, const SparseMaskSet& masks, std::size_t head,
                                      std::size_t query);

struct AttentionGradients {
  std::vector<Eigen::MatrixXd> dq, dk, dv;
};

// Backpropagates an upstream gradient (tokens x model_dim) through the sparse
// forward pass.
AttentionGradients sparse_attention_backward(const EmbeddingBlock& block, const SparseMaskSet& masks,
                                             const Eigen::MatrixXd& upstream);

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t entries_checked = 0;
  std::string worst_entry;  // e.g. "K[h=1](3,2)"
};

// Central finite differences (step 1e-5) of the sum-of-squares loss over every
// Q/K/V entry against sparse_attention_backward. Requires tokens <= 64 and
// model_dim <= 16.
GradientCheckResult gradient_check(const EmbeddingBlock& block, const SparseMaskSet& masks, double step = 1e-5);

struct HistogramReport {
  std::vector<std::map<std::size_t, std::size_t>> per_head;  // row length -> query count
  std::size_t samples = 1;
  std::size_t total_queries = 0;  // tokens * samples
};

HistogramReport attended_keys_histogram(const SparseMaskSet& masks, std::size_t samples);

// CSV with columns head,row_length,query_count.
std::string histogram_to_csv(const HistogramReport& report);

}  // namespace dsparse
