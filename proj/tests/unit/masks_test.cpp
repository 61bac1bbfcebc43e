#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "dsparse/error.hpp"
#include "dsparse/masks.hpp"

using namespace dsparse;

namespace {

// Membership test written directly from the lattice definition, independent of
// the builder's loops.
bool oracle_attends(const GridSpec& g, std::size_t head, std::size_t i, std::size_t j) {
  const std::size_t s = global_stride(g.tokens(), g.heads);
  if (head == 0) return j % s == i % s;
  const HeadStrides st = head_strides(s, g.lambda, head);
  const HeadOffsets off = head_offsets(i, head, st);
  const std::size_t l = j / g.K, k = j % g.K;
  return l >= off.time && (l - off.time) % st.time == 0 && k >= off.frequency &&
         (k - off.frequency) % st.frequency == 0;
}

std::vector<TokenIndex> to_vec(std::span<const TokenIndex> row) { return {row.begin(), row.end()}; }

std::vector<TokenIndex> arithmetic(std::size_t start, std::size_t step, std::size_t end) {
  std::vector<TokenIndex> out;
  for (std::size_t j = start; j < end; j += step) out.push_back(static_cast<TokenIndex>(j));
  return out;
}

}  // namespace

TEST(GlobalStride, ReferenceValues) {
  EXPECT_EQ(global_stride(672, 2), 26u);
  EXPECT_EQ(global_stride(672, 1), 1u);
  EXPECT_EQ(global_stride(24, 2), 5u);
  EXPECT_EQ(global_stride(1, 3), 1u);
  EXPECT_THROW(global_stride(0, 2), Error);
  EXPECT_THROW(global_stride(10, 0), Error);
}

TEST(GlobalStride, ExactAgainstIntegerSearch) {
  // Perfect powers are where floating pow would round the wrong way.
  for (std::size_t p = 2; p <= 4; ++p) {
    for (std::size_t T : {4u, 9u, 16u, 64u, 81u, 256u, 625u, 729u, 4096u, 65536u, 1000000u, 999999u}) {
      const std::size_t s = global_stride(T, p);
      const long double target = std::pow(static_cast<long double>(T), static_cast<long double>(p - 1));
      EXPECT_GE(std::pow(static_cast<long double>(s), static_cast<long double>(p)), target) << T << "," << p;
      EXPECT_LT(std::pow(static_cast<long double>(s - 1), static_cast<long double>(p)), target) << T << "," << p;
    }
  }
  EXPECT_EQ(global_stride(1000000, 2), 1000u);
  EXPECT_EQ(global_stride(1000000, 3), 10000u);
}

TEST(HeadStrides, Examples) {
  EXPECT_EQ(head_strides(26, 2.0, 1), (HeadStrides{2, 13}));
  EXPECT_EQ(head_strides(26, 26.0, 1), (HeadStrides{26, 1}));
  EXPECT_EQ(head_strides(5, 1.0, 1), (HeadStrides{1, 5}));
  EXPECT_THROW(head_strides(26, 2.0, 0), Error);
  // lambda^h beyond s collapses the frequency stride to 1.
  EXPECT_EQ(head_strides(26, 4.0, 3), (HeadStrides{26, 1}));
  // Non-integer lambda is exponentiated before flooring: 26 / 1.5^2 = 11.56.
  EXPECT_EQ(head_strides(26, 1.5, 2), (HeadStrides{2, 11}));
}

TEST(HeadOffsets, Examples) {
  EXPECT_EQ(head_offsets(368, 1, {2, 13}), (HeadOffsets{0, 7}));
  EXPECT_EQ(head_offsets(0, 1, {2, 13}), (HeadOffsets{0, 3}));
  for (std::size_t i : {0u, 5u, 671u}) {
    for (std::size_t h : {1u, 2u, 7u}) EXPECT_EQ(head_offsets(i, h, {1, 1}), (HeadOffsets{0, 0}));
  }
}

TEST(DopplerMasks, CanonicalQuery) {
  const GridSpec grid{14, 48, 2, 2.0};
  const auto masks = build_doppler_masks(grid);
  ASSERT_EQ(masks.global_stride(), 26u);
  const std::size_t query = 7 * 48 + 32;
  ASSERT_EQ(query, 368u);

  EXPECT_EQ(to_vec(masks.row(0, query)), arithmetic(4, 26, 672));
  EXPECT_EQ(masks.row_size(0, query), 26u);

  std::vector<TokenIndex> lattice;
  for (std::size_t l = 0; l < 14; l += 2) {
    for (std::size_t k : {7u, 20u, 33u, 46u}) lattice.push_back(static_cast<TokenIndex>(l * 48 + k));
  }
  EXPECT_EQ(to_vec(masks.row(1, query)), lattice);
  EXPECT_EQ(masks.row_size(1, query), 28u);
}

TEST(DopplerMasks, EmptyHeadRowIsLegal) {
  const GridSpec grid{2, 3, 2, 2.0};
  const auto masks = build_doppler_masks(grid);
  EXPECT_EQ(masks.global_stride(), 3u);
  EXPECT_EQ(to_vec(masks.row(0, 0)), (std::vector<TokenIndex>{0, 3}));
  EXPECT_TRUE(masks.row(1, 0).empty());

  const auto report = validate_masks(masks);
  EXPECT_EQ(report.empty_rows_per_head[0], 0u);
  EXPECT_GT(report.empty_rows_per_head[1], 0u);
  EXPECT_EQ(report.queries_with_empty_union, 0u);
  EXPECT_TRUE(report.ok());
}

TEST(DopplerMasks, SingleHeadIsDense) {
  const GridSpec grid{3, 5, 1, 1.0};
  const auto masks = build_doppler_masks(grid);
  EXPECT_EQ(masks.global_stride(), 1u);
  for (std::size_t i = 0; i < grid.tokens(); ++i) EXPECT_EQ(to_vec(masks.row(0, i)), arithmetic(0, 1, 15));
}

TEST(DopplerMasks, TokenCapIsResourceLimit) {
  const GridSpec grid{300, 300, 2, 2.0};
  try {
    build_doppler_masks(grid);
    FAIL() << "expected resource-limit";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::resource_limit);
  }
  MaskBuildOptions small;
  small.max_tokens = 100;
  EXPECT_THROW(build_doppler_masks({14, 48, 2, 2.0}, small), Error);
}

TEST(DopplerMasks, InvalidGrid) {
  EXPECT_THROW(build_doppler_masks({0, 4, 2, 2.0}), Error);
  EXPECT_THROW(build_doppler_masks({4, 4, 0, 2.0}), Error);
  EXPECT_THROW(build_doppler_masks({4, 4, 2, 0.5}), Error);
  EXPECT_THROW(build_doppler_masks({4, 4, 2, std::nan("")}), Error);
}

// Randomized battery: enumerated rows == brute-force membership == closed form,
// plus the head-0 residue-class properties.
TEST(DopplerMasks, RandomBatteryMatchesOracles) {
  std::mt19937_64 rng(20240611);
  std::uniform_int_distribution<std::size_t> dim(1, 32), heads(1, 4);
  const double lambdas[] = {1.0, 2.0, 4.0};
  for (int trial = 0; trial < 60; ++trial) {
    const GridSpec grid{dim(rng), dim(rng), heads(rng), lambdas[trial % 3]};
    const auto masks = build_doppler_masks(grid);
    const std::size_t T = grid.tokens();
    const std::size_t s = masks.global_stride();
    for (std::size_t h = 0; h < grid.heads; ++h) {
      for (std::size_t i = 0; i < T; ++i) {
        const auto row = masks.row(h, i);
        ASSERT_EQ(row.size(), row_count_closedform(grid, h, i)) << "h=" << h << " i=" << i;
        ASSERT_TRUE(std::is_sorted(row.begin(), row.end()));
        ASSERT_TRUE(std::adjacent_find(row.begin(), row.end()) == row.end());
        std::vector<TokenIndex> expected;
        for (std::size_t j = 0; j < T; ++j) {
          if (oracle_attends(grid, h, i, j)) expected.push_back(static_cast<TokenIndex>(j));
        }
        ASSERT_EQ(to_vec(row), expected) << "h=" << h << " i=" << i;
      }
    }
    for (std::size_t i = 0; i < T; ++i) {
      const auto row = masks.row(0, i);
      ASSERT_TRUE(std::binary_search(row.begin(), row.end(), static_cast<TokenIndex>(i)));
      for (TokenIndex j : row) {
        const auto back = masks.row(0, j);
        ASSERT_TRUE(std::binary_search(back.begin(), back.end(), static_cast<TokenIndex>(i)));
        ASSERT_EQ(j % s, i % s);
      }
    }
    EXPECT_TRUE(validate_masks(masks).ok());
    EXPECT_EQ(build_doppler_masks(grid), masks);
  }
}

TEST(RowCountClosedForm, Examples) {
  const GridSpec grid{14, 48, 2, 2.0};
  EXPECT_EQ(row_count_closedform(grid, 0, 368), 26u);
  EXPECT_EQ(row_count_closedform(grid, 1, 368), 28u);
  EXPECT_EQ(row_count_closedform({2, 3, 2, 2.0}, 1, 0), 0u);
  EXPECT_THROW(row_count_closedform(grid, 2, 0), Error);
}

TEST(FixedStridedMasks, Bidirectional) {
  const GridSpec grid{14, 48, 2, 2.0};
  const auto masks = build_fixed_strided_masks(grid);
  EXPECT_EQ(masks.kind(), PatternKind::fixed_strided);
  EXPECT_EQ(to_vec(masks.row(1, 368)), arithmetic(4, 26, 672));
  EXPECT_EQ(to_vec(masks.row(0, 368)), arithmetic(368 - 25, 1, 368 + 26));
  EXPECT_EQ(to_vec(masks.row(0, 0)), arithmetic(0, 1, 26));
}

TEST(FixedStridedMasks, CausalEnumeration) {
  // T = 6, p = 2 gives s = ceil(sqrt 6) = 3.
  const GridSpec grid{2, 3, 2, 1.0};
  MaskBuildOptions opts;
  opts.causal = true;
  const auto masks = build_fixed_strided_masks(grid, opts);
  ASSERT_EQ(masks.global_stride(), 3u);
  EXPECT_EQ(to_vec(masks.row(0, 0)), (std::vector<TokenIndex>{0}));
  EXPECT_EQ(to_vec(masks.row(1, 0)), (std::vector<TokenIndex>{0}));
  EXPECT_EQ(to_vec(masks.row(0, 5)), (std::vector<TokenIndex>{3, 4, 5}));
  EXPECT_EQ(to_vec(masks.row(1, 5)), (std::vector<TokenIndex>{2, 5}));

  // Brute force over all (i, j) for both variants.
  for (bool causal : {false, true}) {
    opts.causal = causal;
    const auto m = build_fixed_strided_masks({3, 7, 2, 1.0}, opts);
    const std::size_t T = 21, s = m.global_stride();
    for (std::size_t i = 0; i < T; ++i) {
      std::vector<TokenIndex> local, strided;
      for (std::size_t j = 0; j < T; ++j) {
        if (causal && j > i) continue;
        const std::size_t gap = i > j ? i - j : j - i;
        if (gap < s) local.push_back(static_cast<TokenIndex>(j));
        if (gap % s == 0) strided.push_back(static_cast<TokenIndex>(j));
      }
      EXPECT_EQ(to_vec(m.row(0, i)), local);
      EXPECT_EQ(to_vec(m.row(1, i)), strided);
    }
  }
}

TEST(FixedStridedMasks, RequiresTwoHeads) {
  EXPECT_THROW(build_fixed_strided_masks({4, 4, 3, 1.0}), Error);
  EXPECT_THROW(build_fixed_strided_masks({4, 4, 1, 1.0}), Error);
}

TEST(SparseMaskSet, FromRowsRejectsBadRows) {
  const GridSpec grid{1, 3, 1, 1.0};
  using Rows = SparseMaskSet::Rows;
  EXPECT_THROW(SparseMaskSet::from_rows(grid, PatternKind::doppler_aware, 1, {Rows{{0}, {2, 1}, {}}}), Error);
  EXPECT_THROW(SparseMaskSet::from_rows(grid, PatternKind::doppler_aware, 1, {Rows{{0}, {3}, {}}}), Error);
  EXPECT_THROW(SparseMaskSet::from_rows(grid, PatternKind::doppler_aware, 1, {Rows{{0}, {1}}}), Error);
  const auto ok = SparseMaskSet::from_rows(grid, PatternKind::doppler_aware, 1, {Rows{{0}, {1}, {}}});
  const auto report = validate_masks(ok);
  EXPECT_EQ(report.queries_with_empty_union, 1u);
  EXPECT_FALSE(report.ok());
}

TEST(SparseMaskSet, JsonRoundTrip) {
  for (const GridSpec& grid : {GridSpec{4, 6, 3, 2.0}, GridSpec{2, 3, 2, 2.0}}) {
    const auto masks = build_doppler_masks(grid);
    EXPECT_EQ(masks_from_json(masks_to_json(masks)), masks);
  }
  const auto fixed = build_fixed_strided_masks({3, 5, 2, 1.0});
  EXPECT_EQ(masks_from_json(masks_to_json(fixed)), fixed);
  EXPECT_THROW(masks_from_json("{\"grid\": 3}"), Error);
}

TEST(SparseMaskSet, JsonLayout) {
  const auto json = masks_to_json(build_doppler_masks({1, 2, 1, 1.0}));
  EXPECT_EQ(json,
            R"({"grid":{"K":2,"L":1,"lambda":1.0,"p":1,"pattern":"doppler"},)"
            R"("heads":[{"head":0,"rows":[[0,1],[0,1]]}]})");
}
