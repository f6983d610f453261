#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "climber/index_build.hpp"
#include "climber/series.hpp"
#include "climber/signature.hpp"
#include "climber/storage.hpp"

namespace climber {

enum class QueryMode { knn, adaptive, od_smallest, scan };

struct QuerySpec {
  DataSeries series;
  std::size_t k = 500;
  QueryMode mode = QueryMode::adaptive;
  std::size_t multiplier = 4;  // partition cap for adaptive, relative to knn
};

/// Parses "knn", "adaptive2x", "adaptive4x", "od_smallest" or "scan" into
/// (mode, multiplier). Throws ConfigError for anything else.
std::pair<QueryMode, std::size_t> parse_mode(std::string_view name);
std::string mode_name(QueryMode mode, std::size_t multiplier);

/// One trie node to read: every cluster at or below `path` in `partitions`.
struct NodeTarget {
  GroupId group = 0;
  PivotList path;
  double size = 0.0;
  std::vector<PartitionId> partitions;
  bool operator==(const NodeTarget&) const = default;
};

struct RoutingPlan {
  std::vector<GroupId> groups;          // groups the plan reads from, ascending
  std::vector<NodeTarget> nodes;        // the first `base_nodes` come from CLIMBER-kNN
  std::size_t base_nodes = 0;
  std::vector<PartitionId> partitions;  // distinct, ascending
  std::vector<PartitionId> base_partitions;

  bool operator==(const RoutingPlan&) const = default;
};

struct Neighbor {
  SeriesId id = 0;
  double distance = 0.0;
  bool operator==(const Neighbor&) const = default;
};

struct QueryResult {
  std::vector<Neighbor> neighbors;  // ascending distance, ties by id
  std::size_t partitions_accessed = 0;
  std::size_t records_examined = 0;
  double elapsed_seconds = 0.0;

  std::vector<SeriesId> ids() const;
};

P4Signature query_signature(const DataSeries& q, const IndexSkeleton& skeleton,
                            const PivotSet& pivots);

/// Single best group and its deepest matching trie node.
RoutingPlan route_knn(const DataSeries& q, const IndexSkeleton& skeleton, const PivotSet& pivots);

/// route_knn, expanded over further trie nodes of the smallest-OD groups until
/// the targeted nodes hold at least k objects or the next node would push the
/// partition count above multiplier x |route_knn partitions|.
RoutingPlan route_adaptive(const DataSeries& q, std::size_t k, std::size_t multiplier,
                           const IndexSkeleton& skeleton, const PivotSet& pivots);

/// Every partition of every smallest-OD group, read in full.
RoutingPlan route_od_smallest(const DataSeries& q, const IndexSkeleton& skeleton,
                              const PivotSet& pivots);

/// Every partition of the index, read in full.
RoutingPlan route_all(const IndexSkeleton& skeleton);

RoutingPlan route(const QuerySpec& spec, const IndexSkeleton& skeleton, const PivotSet& pivots);

/// Ranks the records of the plan's target clusters by Euclidean distance.
/// When the base (kNN) clusters hold fewer than k records, the base
/// partitions are read in full.
QueryResult execute(const RoutingPlan& plan, const DataSeries& q, std::size_t k,
                    const PartitionStore& store);

/// Exact top-k over dataset files; ties at equal distance go to the smaller id.
QueryResult scan_exact(const DataSeries& q, std::size_t k, std::span<const fs::path> files);

/// scan_exact for many queries with one pass over the files.
std::vector<QueryResult> scan_exact_batch(std::span<const DataSeries> queries, std::size_t k,
                                          std::span<const fs::path> files);

/// A loaded index directory.
struct Index {
  PivotSet pivots;
  IndexSkeleton skeleton;
  PartitionStore store;

  explicit Index(const fs::path& dir, bool cache = true);
  QueryResult answer(const QuerySpec& spec) const;
};

}  // namespace climber
