#include "dsparse/masks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/multiprecision/cpp_int.hpp>
#include <nlohmann/json.hpp>

#include "dsparse/error.hpp"
#include "dsparse/parallel.hpp"

namespace dsparse {

namespace {

using BigInt = boost::multiprecision::cpp_int;

BigInt ipow(std::size_t base, std::size_t exp) {
  BigInt result = 1;
  for (std::size_t e = 0; e < exp; ++e) result *= base;
  return result;
}

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

// Number of lattice points start, start + step, ... below limit.
std::size_t lattice_count(std::size_t start, std::size_t step, std::size_t limit) {
  return start >= limit ? 0 : ceil_div(limit - start, step);
}


}  // namespace

void GridSpec::validate() const {
  if (L == 0 || K == 0) fail(Errc::invalid_argument, "grid dimensions L and K must be >= 1");
  if (heads == 0) fail(Errc::invalid_argument, "head count must be >= 1");
  if (!(lambda >= 1.0) || !std::isfinite(lambda)) {
    fail(Errc::invalid_argument, "time bias lambda must be a finite real >= 1");
  }
  if (K > std::numeric_limits<std::size_t>::max() / L) fail(Errc::resource_limit, "grid token count overflows");
}

std::string_view to_string(PatternKind kind) noexcept {
  return kind == PatternKind::doppler_aware ? "doppler" : "fixed";
}

PatternKind pattern_from_string(std::string_view name) {
  if (name == "doppler" || name == "doppler_aware") return PatternKind::doppler_aware;
  if (name == "fixed" || name == "fixed_strided") return PatternKind::fixed_strided;
  fail(Errc::invalid_argument, "unknown mask pattern '" + std::string(name) + "'");
}

std::size_t global_stride(std::size_t tokens, std::size_t heads) {
  if (tokens == 0 || heads == 0) fail(Errc::invalid_argument, "global_stride requires T >= 1 and p >= 1");
  if (heads == 1 || tokens == 1) return 1;

  // Smallest s with s^p >= T^(p-1). Start from the floating estimate and
  // correct it with exact integer comparisons.
  const BigInt target = ipow(tokens, heads - 1);
  const double estimate = std::pow(static_cast<double>(tokens), 1.0 - 1.0 / static_cast<double>(heads));
  auto s = static_cast<std::size_t>(std::max(1.0, std::ceil(estimate)));
  while (s > 1 && ipow(s - 1, heads) >= target) --s;
  while (ipow(s, heads) < target) ++s;
  return s;
}

HeadStrides head_strides(std::size_t global_stride, double lambda, std::size_t head) {
  if (head == 0) fail(Errc::invalid_argument, "the global head has no 2D strides");
  if (!(lambda >= 1.0)) fail(Errc::invalid_argument, "time bias lambda must be >= 1");
  if (global_stride == 0) fail(Errc::invalid_argument, "global stride must be >= 1");

  const double scaled = static_cast<double>(global_stride) / std::pow(lambda, static_cast<double>(head));
  const auto freq = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(scaled)));
  const auto time = std::max<std::size_t>(1, global_stride / freq);
  return {time, freq};
}

HeadOffsets head_offsets(std::size_t query, std::size_t head, HeadStrides strides) noexcept {
  return {(2 * head + query % strides.time) % strides.time,
          (3 * head + query % strides.frequency) % strides.frequency};
}

std::vector<HeadGeometry> head_geometry(const GridSpec& grid) {
  grid.validate();
  const std::size_t s = global_stride(grid.tokens(), grid.heads);
  std::vector<HeadGeometry> out;
  out.reserve(grid.heads);
  out.push_back({0, {1, 1}, true, s});
  for (std::size_t h = 1; h < grid.heads; ++h) out.push_back({h, head_strides(s, grid.lambda, h), false, s});
  return out;
}

// Internal access to the CSR storage for the builders.
class MaskBuilder {
 public:
  MaskBuilder(const GridSpec& grid, PatternKind kind, std::size_t stride, std::size_t heads) {
    masks_.grid_ = grid;
    masks_.kind_ = kind;
    masks_.stride_ = stride;
    masks_.tokens_ = grid.tokens();
    masks_.heads_.resize(heads);
  }

  // Fills head h from an enumerator emit(i, sink) that passes the ascending
  // keys of row i to sink. Rows are enumerated twice: once to size, once to
  // write.
  template <class EnumerateFn>
  void fill_head(std::size_t head, EnumerateFn emit, std::size_t max_entries) {
    auto& csr = masks_.heads_[head];
    const std::size_t T = masks_.tokens_;
    std::vector<std::size_t> counts(T, 0);
    parallel_for(T, [&](std::size_t i) { emit(i, [&](std::size_t) { ++counts[i]; }); });
    csr.offsets.assign(T + 1, 0);
    for (std::size_t i = 0; i < T; ++i) csr.offsets[i + 1] = csr.offsets[i] + counts[i];
    total_ += csr.offsets[T];
    if (total_ > max_entries) {
      fail(Errc::resource_limit, "mask set would store " + std::to_string(total_) +
                                     " keys, above the configured cap of " + std::to_string(max_entries));
    }
    csr.keys.resize(csr.offsets[T]);
    parallel_for(T, [&](std::size_t i) {
      TokenIndex* out = csr.keys.data() + csr.offsets[i];
      emit(i, [&](std::size_t j) { *out++ = static_cast<TokenIndex>(j); });
    });
  }

  void set_rows(std::size_t head, const SparseMaskSet::Rows& rows) {
    auto& csr = masks_.heads_[head];
    const std::size_t T = masks_.tokens_;
    if (rows.size() != T) {
      fail(Errc::dimension_mismatch, "head " + std::to_string(head) + " has " + std::to_string(rows.size()) +
                                         " rows, expected " + std::to_string(T));
    }
    csr.offsets.assign(T + 1, 0);
    for (std::size_t i = 0; i < T; ++i) {
      const auto& row = rows[i];
      for (std::size_t n = 0; n < row.size(); ++n) {
        if (row[n] >= T) fail(Errc::invalid_argument, "key index out of range in row " + std::to_string(i));
        if (n > 0 && row[n] <= row[n - 1]) {
          fail(Errc::invalid_argument, "row " + std::to_string(i) + " is not strictly ascending");
        }
      }
      csr.offsets[i + 1] = csr.offsets[i] + row.size();
    }
    csr.keys.reserve(csr.offsets[T]);
    for (const auto& row : rows) csr.keys.insert(csr.keys.end(), row.begin(), row.end());
  }

  static SparseMaskSet select(const SparseMaskSet& src, std::span<const std::size_t> heads) {
    SparseMaskSet out = src;
    out.heads_.clear();
    for (std::size_t h : heads) {
      if (h >= src.heads_.size()) fail(Errc::invalid_argument, "head index out of range");
      out.heads_.push_back(src.heads_[h]);
    }
    return out;
  }

  SparseMaskSet finish() && { return std::move(masks_); }

 private:
  SparseMaskSet masks_;
  std::size_t total_ = 0;
};

SparseMaskSet SparseMaskSet::from_rows(const GridSpec& grid, PatternKind kind, std::size_t global_stride,
                                       const std::vector<Rows>& heads) {
  grid.validate();
  if (global_stride == 0) fail(Errc::invalid_argument, "global stride must be >= 1");
  MaskBuilder builder(grid, kind, global_stride, heads.size());
  for (std::size_t h = 0; h < heads.size(); ++h) builder.set_rows(h, heads[h]);
  return std::move(builder).finish();
}

std::span<const TokenIndex> SparseMaskSet::row(std::size_t head, std::size_t query) const {
  const auto& csr = heads_.at(head);
  const std::size_t begin = csr.offsets.at(query);
  return {csr.keys.data() + begin, csr.offsets[query + 1] - begin};
}

std::size_t SparseMaskSet::row_size(std::size_t head, std::size_t query) const {
  const auto& csr = heads_.at(head);
  return csr.offsets.at(query + 1) - csr.offsets[query];
}

std::size_t SparseMaskSet::nnz(std::size_t head) const { return heads_.at(head).keys.size(); }

std::size_t SparseMaskSet::nnz() const {
  std::size_t total = 0;
  for (const auto& csr : heads_) total += csr.keys.size();
  return total;
}

SparseMaskSet SparseMaskSet::select_heads(std::span<const std::size_t> heads) const {
  return MaskBuilder::select(*this, heads);
}

namespace {

void check_token_cap(const GridSpec& grid, const MaskBuildOptions& options) {
  grid.validate();
  if (grid.tokens() > options.max_tokens) {
    fail(Errc::resource_limit, "grid has " + std::to_string(grid.tokens()) + " tokens, above the cap of " +
                                   std::to_string(options.max_tokens));
  }
  if (grid.tokens() > std::numeric_limits<TokenIndex>::max()) {
    fail(Errc::resource_limit, "token count exceeds the 32-bit index range");
  }
}

}  // namespace

SparseMaskSet build_doppler_masks(const GridSpec& grid, const MaskBuildOptions& options) {
  check_token_cap(grid, options);
  const auto geometry = head_geometry(grid);
  const std::size_t s = geometry.front().global_stride;

  MaskBuilder builder(grid, PatternKind::doppler_aware, s, grid.heads);
  builder.fill_head(
      0,
      [&](std::size_t i, auto&& sink) {
        for (std::size_t j = i % s; j < grid.tokens(); j += s) sink(j);
      },
      options.max_entries);

  for (std::size_t h = 1; h < grid.heads; ++h) {
    const HeadStrides strides = geometry[h].strides;
    builder.fill_head(
        h,
        [&, h](std::size_t i, auto&& sink) {
          const HeadOffsets off = head_offsets(i, h, strides);
          for (std::size_t l = off.time; l < grid.L; l += strides.time) {
            for (std::size_t k = off.frequency; k < grid.K; k += strides.frequency) sink(l * grid.K + k);
          }
        },
        options.max_entries);
  }
  return std::move(builder).finish();
}

SparseMaskSet build_fixed_strided_masks(const GridSpec& grid, const MaskBuildOptions& options) {
  check_token_cap(grid, options);
  if (grid.heads != 2) fail(Errc::invalid_argument, "the fixed strided baseline is defined for exactly 2 heads");
  const std::size_t T = grid.tokens();
  const std::size_t s = global_stride(T, grid.heads);
  const bool causal = options.causal;

  MaskBuilder builder(grid, PatternKind::fixed_strided, s, 2);
  builder.fill_head(
      0,
      [&](std::size_t i, auto&& sink) {
        const std::size_t lo = i >= s - 1 ? i - (s - 1) : 0;
        const std::size_t hi = causal ? i : std::min(T - 1, i + (s - 1));
        for (std::size_t j = lo; j <= hi; ++j) sink(j);
      },
      options.max_entries);
  builder.fill_head(
      1,
      [&](std::size_t i, auto&& sink) {
        const std::size_t last = causal ? i : T - 1;
        for (std::size_t j = i % s; j <= last; j += s) sink(j);
      },
      options.max_entries);
  return std::move(builder).finish();
}

std::size_t row_count_closedform(const GridSpec& grid, std::size_t head, std::size_t query) {
  grid.validate();
  if (head >= grid.heads) fail(Errc::invalid_argument, "head index out of range");
  const std::size_t T = grid.tokens();
  const std::size_t s = global_stride(T, grid.heads);
  if (head == 0) {
    const std::size_t r = query % s;
    return r < T ? (T - 1 - r) / s + 1 : 0;
  }
  const HeadStrides strides = head_strides(s, grid.lambda, head);
  const HeadOffsets off = head_offsets(query, head, strides);
  return lattice_count(off.time, strides.time, grid.L) * lattice_count(off.frequency, strides.frequency, grid.K);
}

MaskValidation validate_masks(const SparseMaskSet& masks) {
  MaskValidation report;
  const std::size_t T = masks.tokens();
  report.empty_rows_per_head.assign(masks.head_count(), 0);
  for (std::size_t i = 0; i < T; ++i) {
    bool any = false;
    for (std::size_t h = 0; h < masks.head_count(); ++h) {
      const auto row = masks.row(h, i);
      if (row.empty()) {
        ++report.empty_rows_per_head[h];
        continue;
      }
      any = true;
      for (std::size_t n = 0; n < row.size(); ++n) {
        if (row[n] >= T || (n > 0 && row[n] <= row[n - 1])) report.sorted_and_in_range = false;
      }
      if (h == 0 && masks.kind() == PatternKind::doppler_aware &&
          !std::binary_search(row.begin(), row.end(), static_cast<TokenIndex>(i))) {
        report.head0_self_attention = false;
      }
    }
    if (!any) ++report.queries_with_empty_union;
    if (masks.kind() == PatternKind::doppler_aware && masks.head_count() > 0 && masks.row(0, i).empty()) {
      report.head0_self_attention = false;
    }
  }
  return report;
}

std::string masks_to_json(const SparseMaskSet& masks) {
  const GridSpec& g = masks.grid();
  nlohmann::json doc;
  doc["grid"] = {{"L", g.L},
                 {"K", g.K},
                 {"p", g.heads},
                 {"lambda", g.lambda},
                 {"pattern", std::string(to_string(masks.kind()))}};
  auto heads = nlohmann::json::array();
  for (std::size_t h = 0; h < masks.head_count(); ++h) {
    auto rows = nlohmann::json::array();
    for (std::size_t i = 0; i < masks.tokens(); ++i) {
      const auto row = masks.row(h, i);
      rows.push_back(std::vector<TokenIndex>(row.begin(), row.end()));
    }
    heads.push_back({{"head", h}, {"rows", std::move(rows)}});
  }
  doc["heads"] = std::move(heads);
  return doc.dump();
}

SparseMaskSet masks_from_json(std::string_view text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    const auto& g = doc.at("grid");
    GridSpec grid{g.at("L").get<std::size_t>(), g.at("K").get<std::size_t>(), g.at("p").get<std::size_t>(),
                  g.at("lambda").get<double>()};
    const PatternKind kind = pattern_from_string(g.at("pattern").get<std::string>());
    grid.validate();
    std::vector<SparseMaskSet::Rows> heads;
    for (const auto& head : doc.at("heads")) heads.push_back(head.at("rows").get<SparseMaskSet::Rows>());
    return SparseMaskSet::from_rows(grid, kind, global_stride(grid.tokens(), grid.heads), heads);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::invalid_argument, std::string("malformed mask JSON: ") + e.what());
  }
}

}  // namespace dsparse
