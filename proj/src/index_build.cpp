#include "climber/index_build.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "climber/parallel.hpp"

namespace climber {

namespace {

constexpr double kWeightTolerance = 1e-12;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void insert_sorted_unique(std::vector<PartitionId>& ids, PartitionId id) {
  auto pos = std::lower_bound(ids.begin(), ids.end(), id);
  if (pos == ids.end() || *pos != id) ids.insert(pos, id);
}

}  // namespace

void BuildConfig::validate() const {
  if (segments < 1) throw ConfigError("segments must be >= 1");
  if (pivots < 1) throw ConfigError("pivot count must be >= 1");
  if (prefix < 1 || prefix > pivots) {
    throw ConfigError("prefix length " + std::to_string(prefix) + " outside [1, " +
                      std::to_string(pivots) + "]");
  }
  if (!(capacity >= 1.0)) throw ConfigError("capacity must be >= 1 record");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in (0, 1]");
  if (epsilon < 1 || epsilon > prefix) {
    throw ConfigError("epsilon " + std::to_string(epsilon) + " outside [1, " +
                      std::to_string(prefix) + "]");
  }
  if (max_centroids && *max_centroids < 1) throw ConfigError("max_centroids must be >= 1");
  climber::validate(decay, prefix);
}

const TrieNode* TrieNode::child(PivotId id) const {
  auto pos = std::lower_bound(children.begin(), children.end(), id,
                              [](const TrieNode& n, PivotId p) { return n.pivot < p; });
  return (pos != children.end() && pos->pivot == id) ? &*pos : nullptr;
}

TrieNode* TrieNode::child(PivotId id) {
  return const_cast<TrieNode*>(std::as_const(*this).child(id));
}

const Centroid& IndexSkeleton::centroid(GroupId g) const {
  for (const auto& c : centroids) {
    if (c.group_id == g) return c;
  }
  throw QueryError("skeleton has no group " + std::to_string(g));
}

const TrieNode& IndexSkeleton::trie(GroupId g) const {
  auto it = tries.find(g);
  if (it == tries.end()) throw QueryError("skeleton has no trie for group " + std::to_string(g));
  return it->second;
}

// ---------------------------------------------------------------------------
// Signature aggregation

void SignatureCounter::add(const P4Signature& sig, std::uint64_t times) {
  rank_sensitive_[sig.rank_sensitive] += times;
}

void SignatureCounter::merge(const SignatureCounter& other) {
  for (const auto& [sig, freq] : other.rank_sensitive_) rank_sensitive_[sig] += freq;
}

SignatureTables SignatureCounter::tables() const {
  SignatureTables out;
  std::map<PivotList, std::uint64_t> insensitive;
  out.rank_sensitive.reserve(rank_sensitive_.size());
  for (const auto& [sig, freq] : rank_sensitive_) {
    out.rank_sensitive.emplace_back(sig, freq);
    insensitive[to_rank_insensitive(sig)] += freq;
  }
  out.rank_insensitive.assign(insensitive.begin(), insensitive.end());
  return out;
}

SignatureTables aggregate_signatures(std::span<const P4Signature> sigs) {
  SignatureCounter counter;
  for (const auto& s : sigs) counter.add(s);
  return counter.tables();
}

// ---------------------------------------------------------------------------
// Centroids

std::vector<Centroid> compute_centroids(const FrequencyTable<PivotList>& table,
                                        const BuildConfig& cfg) {
  if (table.empty()) throw BuildError("compute_centroids: empty signature list");
  const std::size_t m = table.front().first.size();
  for (const auto& [sig, freq] : table) {
    if (sig.size() != m) throw BuildError("compute_centroids: mixed signature lengths");
  }

  std::vector<std::size_t> order(table.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (table[a].second != table[b].second) return table[a].second > table[b].second;
    return table[a].first < table[b].first;
  });

  double total = 0.0;
  for (const auto& entry : table) total += static_cast<double>(entry.second);

  std::vector<std::size_t> accepted{order.front()};
  double accepted_freq = static_cast<double>(table[order.front()].second);
  const double min_size = cfg.alpha * cfg.capacity;
  const std::size_t cap = cfg.max_centroids.value_or(table.size());

  for (std::size_t i = 1; i < order.size() && accepted.size() < cap; ++i) {
    const auto& [sig, freq] = table[order[i]];
    bool too_close = false;
    for (std::size_t j : accepted) {
      if (overlap_distance(sig, table[j].first) < cfg.epsilon) {
        too_close = true;
        break;
      }
    }
    if (too_close) continue;

    const double size_est = static_cast<double>(freq) +
                            (total - accepted_freq) / static_cast<double>(accepted.size() + 1);
    if (size_est < min_size) break;

    accepted.push_back(order[i]);
    accepted_freq += static_cast<double>(freq);
  }

  std::vector<Centroid> out;
  out.reserve(accepted.size() + 1);
  out.push_back(Centroid{kFallbackGroup, {}});
  for (std::size_t i = 0; i < accepted.size(); ++i) {
    out.push_back(Centroid{static_cast<GroupId>(i + 1), table[accepted[i]].first});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Group assignment

std::size_t TieBreaker::pick(std::span<const PivotId> key, std::size_t candidates) const {
  if (candidates == 0) throw InputError("TieBreaker::pick: no candidates");
  std::uint64_t h = splitmix64(seed);
  for (PivotId id : key) h = splitmix64(h ^ id);
  return static_cast<std::size_t>(h % candidates);
}

namespace {

// Non-fall-back groups at the smallest OD, ascending by id. Empty when every
// centroid is at OD m.
std::vector<GroupId> smallest_od(const P4Signature& sig, std::span<const Centroid> centroids) {
  const std::size_t m = sig.prefix_length();
  std::size_t best = m;
  std::vector<GroupId> groups;
  for (const auto& c : centroids) {
    if (c.is_fallback()) continue;
    const std::size_t od = overlap_distance(sig.rank_insensitive, c.signature);
    if (od < best) {
      best = od;
      groups.assign({c.group_id});
    } else if (od == best && od < m) {
      groups.push_back(c.group_id);
    }
  }
  std::sort(groups.begin(), groups.end());
  return groups;
}

std::vector<GroupId> smallest_wd(const P4Signature& sig, std::span<const GroupId> groups,
                                 std::span<const Centroid> centroids, const DecaySpec& decay) {
  auto find = [&](GroupId g) -> const Centroid& {
    for (const auto& c : centroids) {
      if (c.group_id == g) return c;
    }
    throw InputError("unknown group " + std::to_string(g));
  };
  std::vector<double> wd(groups.size());
  double best = INFINITY;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    wd[i] = weight_distance(sig.rank_sensitive, find(groups[i]).signature, decay);
    best = std::min(best, wd[i]);
  }
  std::vector<GroupId> out;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (wd[i] - best <= kWeightTolerance) out.push_back(groups[i]);
  }
  return out;
}

}  // namespace

GroupId assign_group(const P4Signature& sig, std::span<const Centroid> centroids,
                     const DecaySpec& decay, const TieBreaker& tie) {
  auto groups = smallest_od(sig, centroids);
  if (groups.empty()) return kFallbackGroup;
  if (groups.size() == 1) return groups.front();
  groups = smallest_wd(sig, groups, centroids, decay);
  if (groups.size() == 1) return groups.front();
  return groups[tie.pick(sig.rank_sensitive, groups.size())];
}

// ---------------------------------------------------------------------------
// Tries

namespace {

struct WeightedSig {
  const PivotList* sig;
  double size;
};

void split(TrieNode& node, std::vector<WeightedSig>& members, std::size_t depth,
           double capacity) {
  if (node.size <= capacity || members.empty() || depth >= members.front().sig->size()) return;
  std::stable_sort(members.begin(), members.end(), [depth](const auto& a, const auto& b) {
    return (*a.sig)[depth] < (*b.sig)[depth];
  });
  auto first = members.begin();
  while (first != members.end()) {
    const PivotId pivot = (*first->sig)[depth];
    auto last = std::find_if(first, members.end(),
                             [&](const auto& w) { return (*w.sig)[depth] != pivot; });
    TrieNode child;
    child.pivot = pivot;
    for (auto it = first; it != last; ++it) child.size += it->size;
    std::vector<WeightedSig> sub(first, last);
    split(child, sub, depth + 1, capacity);
    node.children.push_back(std::move(child));
    first = last;
  }
}

}  // namespace

TrieNode build_trie(const FrequencyTable<PivotList>& members, double capacity, double alpha) {
  if (!(capacity >= 1.0)) throw ConfigError("build_trie: capacity must be >= 1");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("build_trie: alpha must lie in (0, 1]");
  std::vector<WeightedSig> weighted;
  weighted.reserve(members.size());
  TrieNode root;
  for (const auto& [sig, freq] : members) {
    if (!weighted.empty() && sig.size() != weighted.front().sig->size()) {
      throw InputError("build_trie: mixed signature lengths");
    }
    const double size = static_cast<double>(freq) / alpha;
    weighted.push_back({&sig, size});
    root.size += size;
  }
  split(root, weighted, 0, capacity);
  return root;
}

const TrieNode& descend(const TrieNode& root, std::span<const PivotId> sig, PivotList* path) {
  const TrieNode* node = &root;
  for (PivotId id : sig) {
    const TrieNode* next = node->child(id);
    if (!next) break;
    node = next;
    if (path) path->push_back(id);
  }
  return *node;
}

std::string path_key(std::span<const PivotId> path) {
  std::string key;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i) key.push_back('/');
    key += std::to_string(path[i]);
  }
  return key;
}

// ---------------------------------------------------------------------------
// Packing

Packing pack_leaves(std::span<const LeafEntry> leaves, double capacity) {
  std::vector<std::size_t> order(leaves.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (leaves[a].size != leaves[b].size) return leaves[a].size > leaves[b].size;
    return leaves[a].path < leaves[b].path;
  });

  Packing out;
  out.bin_of.assign(leaves.size(), 0);
  auto first_regular = order.begin();
  for (; first_regular != order.end() && leaves[*first_regular].size > capacity; ++first_regular) {
    out.bin_of[*first_regular] = out.load.size();
    out.load.push_back(leaves[*first_regular].size);
  }
  const std::size_t dedicated = out.load.size();
  for (auto it = first_regular; it != order.end(); ++it) {
    const double size = leaves[*it].size;
    std::size_t bin = dedicated;
    while (bin < out.load.size() && out.load[bin] + size > capacity) ++bin;
    if (bin == out.load.size()) out.load.push_back(0.0);
    out.load[bin] += size;
    out.bin_of[*it] = bin;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Skeleton

namespace {

void collect_leaves(TrieNode& node, PivotList& path, std::vector<LeafEntry>& leaves,
                    std::vector<TrieNode*>& nodes) {
  if (node.is_leaf()) {
    leaves.push_back({path, node.size});
    nodes.push_back(&node);
    return;
  }
  for (auto& child : node.children) {
    path.push_back(child.pivot);
    collect_leaves(child, path, leaves, nodes);
    path.pop_back();
  }
}

void label_internal(TrieNode& node) {
  if (node.is_leaf()) return;
  node.partition_ids.clear();
  for (auto& child : node.children) {
    label_internal(child);
    for (PartitionId id : child.partition_ids) insert_sorted_unique(node.partition_ids, id);
  }
}

}  // namespace

BuildResult build_skeleton(const Dataset& sample, const BuildConfig& cfg) {
  cfg.validate();
  if (sample.empty()) throw BuildError("build_skeleton: empty sample");
  if (static_cast<std::size_t>(sample.length()) < cfg.segments) {
    throw ConfigError("segments " + std::to_string(cfg.segments) + " exceed series length " +
                      std::to_string(sample.length()));
  }

  const auto w = static_cast<Eigen::Index>(cfg.segments);
  std::vector<PaaVector> reduced(sample.size());
  parallel_for(sample.size(), [&](std::size_t i) { reduced[i] = paa(sample[i], w); });

  BuildResult result;
  result.pivots = select_pivots(reduced, cfg.pivots, cfg.seed);

  std::vector<P4Signature> sigs(reduced.size());
  parallel_for(reduced.size(), [&](std::size_t i) {
    sigs[i] = p4_signature(reduced[i], result.pivots, cfg.prefix);
  });
  const SignatureTables tables = aggregate_signatures(sigs);

  std::vector<Centroid> centroids = compute_centroids(tables.rank_insensitive, cfg);
  std::map<GroupId, FrequencyTable<PivotList>> members;
  const TieBreaker tie{cfg.seed};
  for (const auto& [sig, freq] : tables.rank_sensitive) {
    P4Signature s{sig, to_rank_insensitive(sig)};
    members[assign_group(s, centroids, cfg.decay, tie)].emplace_back(sig, freq);
  }
  result.skeleton = assemble_skeleton(cfg, sample.length(), std::move(centroids), members);
  return result;
}

IndexSkeleton assemble_skeleton(const BuildConfig& cfg, Eigen::Index series_length,
                                std::vector<Centroid> centroids,
                                const std::map<GroupId, FrequencyTable<PivotList>>& members) {
  IndexSkeleton sk;
  sk.config = cfg;
  sk.series_length = series_length;
  sk.centroids = std::move(centroids);
  std::sort(sk.centroids.begin(), sk.centroids.end(),
            [](const Centroid& a, const Centroid& b) { return a.group_id < b.group_id; });
  if (sk.centroids.empty() || !sk.centroids.front().is_fallback()) {
    throw BuildError("assemble_skeleton: the fall-back group 0 is missing");
  }
  static const FrequencyTable<PivotList> kNoMembers;

  PartitionId next_partition = 0;
  for (const auto& c : sk.centroids) {
    const GroupId group = c.group_id;
    auto found = members.find(group);
    const auto& list = found == members.end() ? kNoMembers : found->second;
    // The fall-back group keeps a flat trie.
    const double split_at = group == kFallbackGroup ? INFINITY : cfg.capacity;
    TrieNode root = build_trie(list, split_at, cfg.alpha);

    std::vector<LeafEntry> leaves;
    std::vector<TrieNode*> leaf_nodes;
    PivotList path;
    collect_leaves(root, path, leaves, leaf_nodes);
    const Packing packing = pack_leaves(leaves, cfg.capacity);

    for (std::size_t i = 0; i < leaves.size(); ++i) {
      leaf_nodes[i]->partition_ids = {next_partition +
                                      static_cast<PartitionId>(packing.bin_of[i])};
    }
    label_internal(root);

    PartitionId default_id = next_partition;
    for (std::size_t b = 0; b < packing.bins(); ++b) {
      const auto id = next_partition + static_cast<PartitionId>(b);
      sk.partitions.push_back({id, group, packing.load[b]});
      if (packing.load[b] < packing.load[default_id - next_partition]) default_id = id;
    }
    sk.default_partition[group] = default_id;
    next_partition += static_cast<PartitionId>(packing.bins());
    sk.tries[group] = std::move(root);
  }
  for (const auto& [group, list] : members) {
    if (!sk.tries.count(group)) {
      throw BuildError("assemble_skeleton: members for unknown group " + std::to_string(group));
    }
  }
  return sk;
}

// ---------------------------------------------------------------------------
// Placement

std::vector<PartitionId> node_partitions(const IndexSkeleton& skeleton, GroupId group,
                                         const TrieNode& node) {
  std::vector<PartitionId> ids = node.partition_ids;
  if (!node.is_leaf()) insert_sorted_unique(ids, skeleton.default_partition.at(group));
  return ids;
}

Placement locate(const IndexSkeleton& skeleton, const P4Signature& sig) {
  if (skeleton.centroids.empty() || skeleton.tries.empty()) {
    throw QueryError("locate: empty skeleton");
  }
  Placement out;
  out.smallest_od_groups = smallest_od(sig, skeleton.centroids);

  std::vector<GroupId> groups = out.smallest_od_groups;
  if (groups.empty()) groups = {kFallbackGroup};
  if (groups.size() > 1) {
    groups = smallest_wd(sig, groups, skeleton.centroids, skeleton.config.decay);
  }

  struct Candidate {
    GroupId group;
    const TrieNode* node;
    PivotList path;
  };
  std::vector<Candidate> candidates;
  for (GroupId g : groups) {
    Candidate c{g, nullptr, {}};
    c.node = &descend(skeleton.trie(g), sig.rank_sensitive, &c.path);
    candidates.push_back(std::move(c));
  }
  if (candidates.size() > 1) {
    std::size_t longest = 0;
    for (const auto& c : candidates) longest = std::max(longest, c.path.size());
    std::erase_if(candidates, [&](const Candidate& c) { return c.path.size() != longest; });
  }
  if (candidates.size() > 1) {
    double largest = 0.0;
    for (const auto& c : candidates) largest = std::max(largest, c.node->size);
    std::erase_if(candidates, [&](const Candidate& c) { return c.node->size != largest; });
  }
  const Candidate& chosen =
      candidates.size() == 1
          ? candidates.front()
          : candidates[TieBreaker{skeleton.config.seed}.pick(sig.rank_sensitive,
                                                             candidates.size())];

  out.group = chosen.group;
  out.node = chosen.node;
  out.node_path = chosen.path;
  out.partition = chosen.node->is_leaf() ? chosen.node->partition_ids.front()
                                         : skeleton.default_partition.at(chosen.group);
  return out;
}

}  // namespace climber
