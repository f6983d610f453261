#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "climber/series.hpp"
#include "climber/signature.hpp"

namespace climber {

using GroupId = std::uint32_t;
using PartitionId = std::uint32_t;

inline constexpr GroupId kFallbackGroup = 0;

struct BuildConfig {
  std::size_t segments = 16;     // w
  std::size_t pivots = 200;      // r
  std::size_t prefix = 10;       // m
  double capacity = 2000.0;      // c, in records
  double alpha = 0.1;            // sample fraction
  std::size_t epsilon = 2;       // minimum OD between centroids
  std::optional<std::size_t> max_centroids;
  DecaySpec decay;
  std::uint64_t seed = 42;

  /// Throws ConfigError when the parameters are inconsistent.
  void validate() const;
  bool operator==(const BuildConfig&) const = default;
};

/// Group centroid. The fall-back group 0 carries an empty (wildcard) signature.
struct Centroid {
  GroupId group_id = 0;
  PivotList signature;

  bool is_fallback() const { return group_id == kFallbackGroup; }
  bool operator==(const Centroid&) const = default;
};

/// Node of a per-group trie over rank-sensitive signatures. Children are
/// kept sorted by pivot id.
struct TrieNode {
  PivotId pivot = 0;  // edge label from the parent; 0 at the root
  double size = 0.0;  // estimated object count
  std::vector<TrieNode> children;
  std::vector<PartitionId> partition_ids;  // sorted, unique

  bool is_leaf() const { return children.empty(); }
  const TrieNode* child(PivotId id) const;
  TrieNode* child(PivotId id);
  bool operator==(const TrieNode&) const = default;
};

struct PartitionInfo {
  PartitionId id = 0;
  GroupId group = 0;
  double estimated_size = 0.0;
  bool operator==(const PartitionInfo&) const = default;
};

struct IndexSkeleton {
  BuildConfig config;
  Eigen::Index series_length = 0;
  std::vector<Centroid> centroids;  // group 0 first
  std::map<GroupId, TrieNode> tries;
  std::map<GroupId, PartitionId> default_partition;
  std::vector<PartitionInfo> partitions;  // indexed by partition id

  const Centroid& centroid(GroupId g) const;
  const TrieNode& trie(GroupId g) const;
  bool operator==(const IndexSkeleton&) const = default;
};

template <typename Key>
using FrequencyTable = std::vector<std::pair<Key, std::uint64_t>>;

struct SignatureTables {
  FrequencyTable<PivotList> rank_sensitive;    // sorted by signature
  FrequencyTable<PivotList> rank_insensitive;  // sorted by signature
};

/// Exact-match counting of both signature forms. Counters merge
/// associatively so workers can count disjoint slices.
class SignatureCounter {
 public:
  void add(const P4Signature& sig, std::uint64_t times = 1);
  void merge(const SignatureCounter& other);
  SignatureTables tables() const;

 private:
  std::map<PivotList, std::uint64_t> rank_sensitive_;
};

SignatureTables aggregate_signatures(std::span<const P4Signature> sigs);

/// Centroid discovery over rank-insensitive frequencies. The result lists the
/// fall-back centroid first, then accepted centroids with ids 1, 2, ...
std::vector<Centroid> compute_centroids(const FrequencyTable<PivotList>& table,
                                        const BuildConfig& cfg);

/// Deterministic stand-in for a random choice: the same key and seed always
/// pick the same candidate.
struct TieBreaker {
  std::uint64_t seed = 0;
  std::size_t pick(std::span<const PivotId> key, std::size_t candidates) const;
};

/// Group assignment by smallest OD, then smallest WD, then a keyed random pick.
GroupId assign_group(const P4Signature& sig, std::span<const Centroid> centroids,
                     const DecaySpec& decay, const TieBreaker& tie);

/// Trie over weighted rank-sensitive signatures. A node splits on the next
/// pivot position while its size exceeds `capacity` and its depth is below
/// the signature length. Sizes are frequencies scaled by 1/alpha.
TrieNode build_trie(const FrequencyTable<PivotList>& members, double capacity,
                    double alpha = 1.0);

struct LeafEntry {
  PivotList path;
  double size = 0.0;
};

struct Packing {
  std::vector<std::size_t> bin_of;  // per input leaf
  std::vector<double> load;         // per bin
  std::size_t bins() const { return load.size(); }
};

/// First Fit Decreasing. Leaves larger than `capacity` get bins of their own
/// first; equal sizes are ordered by path.
Packing pack_leaves(std::span<const LeafEntry> leaves, double capacity);

struct BuildResult {
  PivotSet pivots;
  IndexSkeleton skeleton;
};

BuildResult build_skeleton(const Dataset& sample, const BuildConfig& cfg);

/// The trie and packing half of build_skeleton: builds each group's trie from
/// its weighted rank-sensitive members, packs leaves into partitions, labels
/// every node with its partition ids and picks default partitions.
IndexSkeleton assemble_skeleton(const BuildConfig& cfg, Eigen::Index series_length,
                                std::vector<Centroid> centroids,
                                const std::map<GroupId, FrequencyTable<PivotList>>& members);

/// Where a signature lands in a built skeleton: the chosen group, the deepest
/// trie node its rank-sensitive signature reaches, and the partition that
/// stores records carrying it.
struct Placement {
  GroupId group = 0;
  PivotList node_path;
  const TrieNode* node = nullptr;
  PartitionId partition = 0;
  std::vector<GroupId> smallest_od_groups;  // ascending
};

/// Deepest node reachable from `root` along `sig`; `path` receives the
/// traversed pivot ids.
const TrieNode& descend(const TrieNode& root, std::span<const PivotId> sig, PivotList* path);

/// Group choice: smallest OD (all-OD-m goes to the fall-back group), then
/// smallest WD, then longest matched trie path, then largest node size, then
/// a keyed random pick.
Placement locate(const IndexSkeleton& skeleton, const P4Signature& sig);

/// Partitions holding the records of `node`'s subtree. Internal nodes also
/// include the group's default partition, which receives records whose
/// signatures stop there.
std::vector<PartitionId> node_partitions(const IndexSkeleton& skeleton, GroupId group,
                                         const TrieNode& node);

/// Cluster key for a pivot path: ids joined by '/'. The root is "".
std::string path_key(std::span<const PivotId> path);

}  // namespace climber
