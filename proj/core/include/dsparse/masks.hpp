#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dsparse {

using TokenIndex = std::uint32_t;

// OFDM resource grid seen as a token sequence. Tokens are flattened
// row-major over (symbol, subcarrier): i = l * K + k.
struct GridSpec {
  std::size_t L = 14;   // OFDM symbols (time)
  std::size_t K = 48;   // subcarriers (frequency)
  std::size_t heads = 2;
  double lambda = 2.0;  // time bias, real >= 1

  [[nodiscard]] std::size_t tokens() const noexcept { return L * K; }

  // Throws Errc::invalid_argument on L, K, heads == 0 or lambda < 1 / NaN.
  void validate() const;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

enum class PatternKind { doppler_aware, fixed_strided };

std::string_view to_string(PatternKind kind) noexcept;
PatternKind pattern_from_string(std::string_view name);

struct HeadStrides {
  std::size_t time = 1;       // stride along symbols
  std::size_t frequency = 1;  // stride along subcarriers

  friend bool operator==(const HeadStrides&, const HeadStrides&) = default;
};

struct HeadOffsets {
  std::size_t time = 0;
  std::size_t frequency = 0;

  friend bool operator==(const HeadOffsets&, const HeadOffsets&) = default;
};

struct HeadGeometry {
  std::size_t head = 0;
  HeadStrides strides;  // {1, 1} placeholder for the global head
  bool is_global = false;
  std::size_t global_stride = 1;
};

// ceil(T^(1 - 1/p)), evaluated exactly.
std::size_t global_stride(std::size_t tokens, std::size_t heads);

// Per-head 2D strides for h >= 1:
//   frequency = max(1, floor(s / lambda^h)), time = max(1, floor(s / frequency)).
HeadStrides head_strides(std::size_t global_stride, double lambda, std::size_t head);

// Starting offsets of head h's lattice for query i.
HeadOffsets head_offsets(std::size_t query, std::size_t head, HeadStrides strides) noexcept;

std::vector<HeadGeometry> head_geometry(const GridSpec& grid);

struct MaskBuildOptions {
  std::size_t max_tokens = 65536;
  // Guards total stored key indices (dense p = 1 masks grow as T^2).
  std::size_t max_entries = std::size_t{1} << 28;
  bool causal = false;  // fixed-strided baseline only
};

// Per-head, per-query strictly ascending key lists stored CSR-style.
// Immutable once built; safe to share across threads.
class SparseMaskSet {
 public:
  using Rows = std::vector<std::vector<TokenIndex>>;

  // Validates the sortedness/range invariants of arbitrary rows. Used by the
  // builders, the JSON importer and tests that need hand-crafted masks.
  static SparseMaskSet from_rows(const GridSpec& grid, PatternKind kind,
                                 std::size_t global_stride, const std::vector<Rows>& heads);

  [[nodiscard]] const GridSpec& grid() const noexcept { return grid_; }
  [[nodiscard]] PatternKind kind() const noexcept { return kind_; }
  [[nodiscard]] std::size_t global_stride() const noexcept { return stride_; }
  [[nodiscard]] std::size_t tokens() const noexcept { return tokens_; }
  [[nodiscard]] std::size_t head_count() const noexcept { return heads_.size(); }

  [[nodiscard]] std::span<const TokenIndex> row(std::size_t head, std::size_t query) const;
  [[nodiscard]] std::size_t row_size(std::size_t head, std::size_t query) const;
  [[nodiscard]] std::size_t nnz(std::size_t head) const;
  [[nodiscard]] std::size_t nnz() const;

  // Copy keeping only the listed heads, in the given order.
  [[nodiscard]] SparseMaskSet select_heads(std::span<const std::size_t> heads) const;

  friend bool operator==(const SparseMaskSet&, const SparseMaskSet&) = default;

 private:
  struct HeadCsr {
    std::vector<std::size_t> offsets;  // tokens + 1 entries
    std::vector<TokenIndex> keys;
    friend bool operator==(const HeadCsr&, const HeadCsr&) = default;
  };

  SparseMaskSet() = default;
  friend class MaskBuilder;

  GridSpec grid_;
  PatternKind kind_ = PatternKind::doppler_aware;
  std::size_t stride_ = 1;
  std::size_t tokens_ = 0;
  std::vector<HeadCsr> heads_;
};

// Doppler-aware masks: head 0 attends its residue class mod s, heads h >= 1
// attend a 2D lattice with head-specific strides and query-dependent offsets.
// Empty head rows are legal and reported through validate_masks().
SparseMaskSet build_doppler_masks(const GridSpec& grid, const MaskBuildOptions& options = {});

// Two-head fixed strided baseline: head 0 local window |i - j| < s, head 1
// strided (i - j) mod s == 0. Bidirectional unless options.causal.
SparseMaskSet build_fixed_strided_masks(const GridSpec& grid, const MaskBuildOptions& options = {});

// Closed-form row length of build_doppler_masks for (head, query).
std::size_t row_count_closedform(const GridSpec& grid, std::size_t head, std::size_t query);

struct MaskValidation {
  bool sorted_and_in_range = true;
  std::vector<std::size_t> empty_rows_per_head;
  std::size_t queries_with_empty_union = 0;
  bool head0_self_attention = true;  // only meaningful for doppler_aware

  [[nodiscard]] bool ok() const noexcept {
    return sorted_and_in_range && queries_with_empty_union == 0 && head0_self_attention;
  }
};

MaskValidation validate_masks(const SparseMaskSet& masks);

// JSON: {"grid": {L, K, p, lambda, pattern}, "heads": [{"head": h, "rows": [[j...]...]}]}
std::string masks_to_json(const SparseMaskSet& masks);
SparseMaskSet masks_from_json(std::string_view text);

}  // namespace dsparse
