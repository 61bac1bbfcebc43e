#include "dsparse/graph.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "dsparse/error.hpp"
#include "dsparse/parallel.hpp"

namespace dsparse {

AttentionGraph AttentionGraph::from_masks(const SparseMaskSet& masks, Direction direction) {
  const std::size_t T = masks.tokens();
  std::vector<std::vector<TokenIndex>> adjacency(T);
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t h = 0; h < masks.head_count(); ++h) {
      const auto row = masks.row(h, i);
      adjacency[i].insert(adjacency[i].end(), row.begin(), row.end());
      if (direction == Direction::undirected) {
        for (TokenIndex j : row) adjacency[j].push_back(static_cast<TokenIndex>(i));
      }
    }
  }

  AttentionGraph graph;
  graph.direction_ = direction;
  graph.offsets_.assign(T + 1, 0);
  for (std::size_t i = 0; i < T; ++i) {
    auto& list = adjacency[i];
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
    graph.offsets_[i + 1] = graph.offsets_[i] + list.size();
  }
  graph.targets_.reserve(graph.offsets_[T]);
  for (auto& list : adjacency) {
    graph.targets_.insert(graph.targets_.end(), list.begin(), list.end());
    std::vector<TokenIndex>().swap(list);
  }
  return graph;
}

std::span<const TokenIndex> AttentionGraph::neighbors(std::size_t node) const {
  const std::size_t begin = offsets_.at(node);
  return {targets_.data() + begin, offsets_.at(node + 1) - begin};
}

bool AttentionGraph::has_edge(std::size_t from, std::size_t to) const {
  const auto adj = neighbors(from);
  return std::binary_search(adj.begin(), adj.end(), static_cast<TokenIndex>(to));
}

std::vector<ResidueClass> equivalence_classes(std::size_t tokens, std::size_t stride) {
  if (stride == 0) fail(Errc::invalid_argument, "stride must be >= 1");
  std::vector<ResidueClass> classes(stride);
  for (std::size_t r = 0; r < stride; ++r) classes[r].residue = r;
  for (std::size_t i = 0; i < tokens; ++i) classes[i % stride].members.push_back(static_cast<TokenIndex>(i));
  return classes;
}

PartitionCheck verify_partition(const SparseMaskSet& masks) {
  if (masks.kind() != PatternKind::doppler_aware) {
    fail(Errc::invalid_argument, "partition check applies to Doppler-aware masks only");
  }
  if (masks.head_count() == 0) fail(Errc::invalid_argument, "mask set has no heads");

  const std::size_t T = masks.tokens();
  const std::size_t s = masks.global_stride();
  PartitionCheck check;
  check.components = std::min(s, T);

  for (std::size_t i = 0; i < T; ++i) {
    const auto row = masks.row(0, i);
    for (TokenIndex j : row) {
      if (j % s != i % s) {
        check.ok = false;
        check.witness = TokenPair{i, j};
        return check;
      }
    }
    // Row is a subset of the class; complete iff it has every member.
    const std::size_t class_size = (T - 1 - i % s) / s + 1;
    if (row.size() != class_size) {
      std::size_t expected = i % s;
      for (TokenIndex j : row) {
        if (j != expected) break;
        expected += s;
      }
      check.ok = false;
      check.witness = TokenPair{i, expected};
      check.witness_is_missing_edge = true;
      return check;
    }
  }
  return check;
}

std::size_t effective_step(std::size_t stride_time, std::size_t stride_frequency, std::size_t K) {
  return std::gcd(stride_time * K, stride_frequency);
}

bool bridging_condition(std::size_t effective_step, std::size_t global_stride) {
  return std::gcd(effective_step, global_stride) == 1;
}

namespace {

struct SourceSweep {
  std::size_t eccentricity = 0;
  std::size_t unreachable = 0;
  std::vector<std::size_t> unreachable_targets;  // first few only
};

SourceSweep bfs_from(const AttentionGraph& graph, std::size_t source, std::size_t keep) {
  const std::size_t T = graph.nodes();
  constexpr auto unseen = static_cast<std::size_t>(-1);
  std::vector<std::size_t> dist(T, unseen);
  std::vector<std::size_t> frontier{source};
  std::vector<std::size_t> next;
  dist[source] = 0;
  std::size_t depth = 0;
  while (!frontier.empty()) {
    next.clear();
    for (std::size_t u : frontier) {
      for (TokenIndex v : graph.neighbors(u)) {
        if (dist[v] == unseen) {
          dist[v] = depth + 1;
          next.push_back(v);
        }
      }
    }
    if (!next.empty()) ++depth;
    frontier.swap(next);
  }

  SourceSweep sweep;
  sweep.eccentricity = depth;
  for (std::size_t t = 0; t < T; ++t) {
    if (dist[t] == unseen) {
      ++sweep.unreachable;
      if (sweep.unreachable_targets.size() < keep) sweep.unreachable_targets.push_back(t);
    }
  }
  return sweep;
}

}  // namespace

DiameterResult hop_diameter(const AttentionGraph& graph, const DiameterOptions& options) {
  const std::size_t T = graph.nodes();
  std::vector<std::size_t> sources(T);
  std::iota(sources.begin(), sources.end(), std::size_t{0});

  DiameterResult result;
  if (T > options.max_all_pairs) {
    if (!options.allow_sampling) {
      fail(Errc::resource_limit, "all-pairs BFS over " + std::to_string(T) + " nodes exceeds the cap of " +
                                     std::to_string(options.max_all_pairs) + "; enable source sampling");
    }
    std::mt19937_64 rng(options.seed);
    std::shuffle(sources.begin(), sources.end(), rng);
    sources.resize(std::min(options.sampled_sources, T));
    std::sort(sources.begin(), sources.end());
    result.exact = false;
  }

  std::vector<SourceSweep> sweeps(sources.size());
  parallel_for(sources.size(),
               [&](std::size_t n) { sweeps[n] = bfs_from(graph, sources[n], options.max_witnesses); });

  result.sources_evaluated = sources.size();
  for (std::size_t n = 0; n < sources.size(); ++n) {
    const auto& sweep = sweeps[n];
    result.diameter = std::max(result.diameter, sweep.eccentricity);
    result.unreachable_pairs += sweep.unreachable;
    for (std::size_t t : sweep.unreachable_targets) {
      if (result.unreachable_sample.size() < options.max_witnesses) result.unreachable_sample.emplace_back(sources[n], t);
    }
  }
  result.reachable = result.unreachable_pairs == 0;
  return result;
}

DiameterResult hop_diameter(const SparseMaskSet& masks, AttentionGraph::Direction direction,
                            const DiameterOptions& options) {
  if (masks.tokens() > options.max_all_pairs && !options.allow_sampling) {
    fail(Errc::resource_limit, "all-pairs BFS over " + std::to_string(masks.tokens()) +
                                   " nodes exceeds the cap of " + std::to_string(options.max_all_pairs));
  }
  return hop_diameter(AttentionGraph::from_masks(masks, direction), options);
}

std::size_t connected_components(const AttentionGraph& graph) {
  const std::size_t T = graph.nodes();
  std::vector<std::size_t> parent(T);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::size_t components = T;
  for (std::size_t u = 0; u < T; ++u) {
    for (TokenIndex v : graph.neighbors(u)) {
      const std::size_t a = find(u);
      const std::size_t b = find(v);
      if (a != b) {
        parent[std::max(a, b)] = std::min(a, b);
        --components;
      }
    }
  }
  return components;
}

ConnectivityReport connectivity_report(const GridSpec& grid, const DiameterOptions& options,
                                       const MaskBuildOptions& mask_options) {
  const SparseMaskSet masks = build_doppler_masks(grid, mask_options);
  ConnectivityReport report;
  report.grid = grid;
  report.global_stride = masks.global_stride();
  for (const auto& cls : equivalence_classes(grid.tokens(), report.global_stride)) {
    report.class_sizes.push_back(cls.members.size());
  }
  for (const auto& geom : head_geometry(grid)) {
    if (geom.is_global) continue;
    HeadBridging hb;
    hb.head = geom.head;
    hb.strides = geom.strides;
    hb.effective_step = effective_step(geom.strides.time, geom.strides.frequency, grid.K);
    hb.bridging_ok = bridging_condition(hb.effective_step, report.global_stride);
    report.any_bridging = report.any_bridging || hb.bridging_ok;
    report.heads.push_back(hb);
  }

  const auto directed = AttentionGraph::from_masks(masks, AttentionGraph::Direction::directed);
  const auto undirected = AttentionGraph::from_masks(masks, AttentionGraph::Direction::undirected);
  report.undirected_components = connected_components(undirected);
  report.directed = hop_diameter(directed, options);
  report.undirected = hop_diameter(undirected, options);
  report.hop_bound_satisfied = report.undirected.reachable && report.undirected.diameter <= grid.heads;
  return report;
}

namespace {

nlohmann::json diameter_json(const DiameterResult& d) {
  nlohmann::json j;
  j["reachable"] = d.reachable;
  j["diameter"] = d.reachable ? nlohmann::json(d.diameter) : nlohmann::json("UNREACHABLE");
  j["max_reachable_hops"] = d.diameter;
  j["unreachable_pairs"] = d.unreachable_pairs;
  auto sample = nlohmann::json::array();
  for (const auto& [a, b] : d.unreachable_sample) sample.push_back({a, b});
  j["unreachable_sample"] = std::move(sample);
  j["sources_evaluated"] = d.sources_evaluated;
  j["exact"] = d.exact;
  return j;
}

}  // namespace

std::string report_to_json(const ConnectivityReport& report) {
  nlohmann::json doc;
  doc["grid"] = {{"L", report.grid.L}, {"K", report.grid.K}, {"p", report.grid.heads}, {"lambda", report.grid.lambda}};
  doc["s"] = report.global_stride;
  auto classes = nlohmann::json::array();
  for (std::size_t r = 0; r < report.class_sizes.size(); ++r) classes.push_back({{"residue", r}, {"size", report.class_sizes[r]}});
  doc["classes"] = std::move(classes);
  auto heads = nlohmann::json::array();
  for (const auto& hb : report.heads) {
    heads.push_back({{"head", hb.head},
                     {"stride_l", hb.strides.time},
                     {"stride_k", hb.strides.frequency},
                     {"P_h", hb.effective_step},
                     {"bridging_ok", hb.bridging_ok}});
  }
  doc["heads"] = std::move(heads);
  doc["any_bridging"] = report.any_bridging;
  doc["undirected_components"] = report.undirected_components;
  doc["fully_connected"] = report.fully_connected();
  doc["directed_diameter"] = diameter_json(report.directed);
  doc["undirected_diameter"] = diameter_json(report.undirected);
  std::vector<TokenPair> unreachable = report.undirected.unreachable_sample;
  for (const auto& pair : report.directed.unreachable_sample) {
    if (unreachable.size() >= 10) break;
    if (std::find(unreachable.begin(), unreachable.end(), pair) == unreachable.end()) unreachable.push_back(pair);
  }
  auto sample = nlohmann::json::array();
  for (const auto& [a, b] : unreachable) sample.push_back({a, b});
  doc["unreachable_sample"] = std::move(sample);
  doc["hop_bound_satisfied"] = report.hop_bound_satisfied;
  return doc.dump(2);
}

}  // namespace dsparse
