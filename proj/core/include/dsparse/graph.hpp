#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dsparse/masks.hpp"

namespace dsparse {

// Union of the per-head query -> key edge layers, stored as deduplicated CSR
// adjacency. Self loops are kept; they never affect hop counts.
class AttentionGraph {
 public:
  enum class Direction { directed, undirected };

  static AttentionGraph from_masks(const SparseMaskSet& masks, Direction direction = Direction::directed);

  [[nodiscard]] std::size_t nodes() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  [[nodiscard]] std::size_t edges() const noexcept { return targets_.size(); }
  [[nodiscard]] Direction direction() const noexcept { return direction_; }
  [[nodiscard]] std::span<const TokenIndex> neighbors(std::size_t node) const;
  [[nodiscard]] bool has_edge(std::size_t from, std::size_t to) const;

 private:
  std::vector<std::size_t> offsets_;
  std::vector<TokenIndex> targets_;
  Direction direction_ = Direction::directed;
};

using TokenPair = std::pair<std::size_t, std::size_t>;

struct ResidueClass {
  std::size_t residue = 0;
  std::vector<TokenIndex> members;
};

// s classes C_r = {i : i = r mod s}; classes with r >= T are empty.
std::vector<ResidueClass> equivalence_classes(std::size_t tokens, std::size_t stride);

struct PartitionCheck {
  bool ok = true;
  std::size_t components = 0;  // non-empty residue classes
  std::optional<TokenPair> witness;
  bool witness_is_missing_edge = false;  // false: illegal inter-class edge present
};

// Head 0 must be exactly the disjoint union of complete graphs on the residue
// classes mod s.
PartitionCheck verify_partition(const SparseMaskSet& masks);

// gcd(stride_time * K, stride_frequency)
std::size_t effective_step(std::size_t stride_time, std::size_t stride_frequency, std::size_t K);

bool bridging_condition(std::size_t effective_step, std::size_t global_stride);

struct DiameterOptions {
  std::size_t max_all_pairs = 4096;
  bool allow_sampling = false;
  std::size_t sampled_sources = 1024;
  std::uint64_t seed = 0;
  std::size_t max_witnesses = 10;
};

struct DiameterResult {
  bool reachable = true;             // every evaluated pair has a path
  std::size_t diameter = 0;          // max shortest hop count over reachable pairs
  std::size_t unreachable_pairs = 0;
  std::vector<TokenPair> unreachable_sample;
  std::size_t sources_evaluated = 0;
  bool exact = true;                 // false when sources were sampled
};

// Max over (source, target) pairs, source != target, of the BFS hop count.
DiameterResult hop_diameter(const AttentionGraph& graph, const DiameterOptions& options = {});
DiameterResult hop_diameter(const SparseMaskSet& masks, AttentionGraph::Direction direction,
                            const DiameterOptions& options = {});

// Weakly connected components (edges symmetrized).
std::size_t connected_components(const AttentionGraph& graph);

struct HeadBridging {
  std::size_t head = 0;
  HeadStrides strides;
  std::size_t effective_step = 0;
  bool bridging_ok = false;
};

struct ConnectivityReport {
  GridSpec grid;
  std::size_t global_stride = 1;
  std::vector<std::size_t> class_sizes;
  std::vector<HeadBridging> heads;  // h >= 1
  bool any_bridging = false;
  std::size_t undirected_components = 0;
  DiameterResult directed;
  DiameterResult undirected;
  bool hop_bound_satisfied = false;  // undirected diameter <= p

  [[nodiscard]] bool fully_connected() const noexcept { return undirected_components == 1; }
};

ConnectivityReport connectivity_report(const GridSpec& grid, const DiameterOptions& options = {},
                                       const MaskBuildOptions& mask_options = {});

std::string report_to_json(const ConnectivityReport& report);

}  // namespace dsparse
