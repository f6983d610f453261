#include "climber/query.hpp"

#include <algorithm>
#include <chrono>
#include <queue>

#include "climber/parallel.hpp"

namespace climber {

namespace {

void add_partitions(std::vector<PartitionId>& into, std::span<const PartitionId> ids) {
  for (PartitionId id : ids) {
    auto pos = std::lower_bound(into.begin(), into.end(), id);
    if (pos == into.end() || *pos != id) into.insert(pos, id);
  }
}

std::size_t union_size(std::span<const PartitionId> a, std::span<const PartitionId> b) {
  std::size_t extra = 0;
  for (PartitionId id : b) {
    if (!std::binary_search(a.begin(), a.end(), id)) ++extra;
  }
  return a.size() + extra;
}

void add_node(RoutingPlan& plan, NodeTarget node) {
  add_partitions(plan.partitions, node.partitions);
  if (std::find(plan.groups.begin(), plan.groups.end(), node.group) == plan.groups.end()) {
    plan.groups.insert(std::upper_bound(plan.groups.begin(), plan.groups.end(), node.group),
                       node.group);
  }
  plan.nodes.push_back(std::move(node));
}

void check_query(const DataSeries& q, const IndexSkeleton& skeleton) {
  if (skeleton.centroids.empty() || skeleton.tries.empty() || skeleton.partitions.empty()) {
    throw QueryError("query against an empty index");
  }
  if (q.length() != skeleton.series_length) {
    throw QueryError("query length " + std::to_string(q.length()) +
                     " does not match index series length " +
                     std::to_string(skeleton.series_length));
  }
}

// Bounded max-heap keyed by (squared distance, id).
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) {}

  void offer(double d2, SeriesId id) {
    const Entry e{d2, id};
    if (heap_.size() < k_) {
      heap_.push(e);
    } else if (k_ && e < heap_.top()) {
      heap_.pop();
      heap_.push(e);
    }
  }

  std::vector<Neighbor> sorted() {
    std::vector<Neighbor> out(heap_.size());
    for (std::size_t i = out.size(); i-- > 0;) {
      out[i] = {heap_.top().id, std::sqrt(heap_.top().d2)};
      heap_.pop();
    }
    return out;
  }

 private:
  struct Entry {
    double d2;
    SeriesId id;
    bool operator<(const Entry& o) const { return d2 != o.d2 ? d2 < o.d2 : id < o.id; }
  };
  std::size_t k_;
  std::priority_queue<Entry> heap_;
};

}  // namespace

std::pair<QueryMode, std::size_t> parse_mode(std::string_view name) {
  if (name == "knn") return {QueryMode::knn, 1};
  if (name == "adaptive2x") return {QueryMode::adaptive, 2};
  if (name == "adaptive4x") return {QueryMode::adaptive, 4};
  if (name == "od_smallest") return {QueryMode::od_smallest, 1};
  if (name == "scan") return {QueryMode::scan, 1};
  throw ConfigError("unknown query mode '" + std::string(name) +
                    "' (expected knn, adaptive2x, adaptive4x, od_smallest or scan)");
}

std::string mode_name(QueryMode mode, std::size_t multiplier) {
  switch (mode) {
    case QueryMode::knn: return "knn";
    case QueryMode::adaptive: return "adaptive" + std::to_string(multiplier) + "x";
    case QueryMode::od_smallest: return "od_smallest";
    case QueryMode::scan: return "scan";
  }
  return "unknown";
}

std::vector<SeriesId> QueryResult::ids() const {
  std::vector<SeriesId> out;
  out.reserve(neighbors.size());
  for (const auto& n : neighbors) out.push_back(n.id);
  return out;
}

P4Signature query_signature(const DataSeries& q, const IndexSkeleton& skeleton,
                            const PivotSet& pivots) {
  const auto w = static_cast<Eigen::Index>(skeleton.config.segments);
  return p4_signature(paa(q.values, w), pivots, skeleton.config.prefix);
}

RoutingPlan route_knn(const DataSeries& q, const IndexSkeleton& skeleton, const PivotSet& pivots) {
  check_query(q, skeleton);
  const Placement place = locate(skeleton, query_signature(q, skeleton, pivots));
  RoutingPlan plan;
  add_node(plan, {place.group, place.node_path, place.node->size,
                  node_partitions(skeleton, place.group, *place.node)});
  plan.base_nodes = 1;
  plan.base_partitions = plan.partitions;
  return plan;
}

RoutingPlan route_adaptive(const DataSeries& q, std::size_t k, std::size_t multiplier,
                           const IndexSkeleton& skeleton, const PivotSet& pivots) {
  check_query(q, skeleton);
  if (multiplier < 1) throw ConfigError("adaptive partition multiplier must be >= 1");
  const P4Signature sig = query_signature(q, skeleton, pivots);
  const Placement place = locate(skeleton, sig);

  RoutingPlan plan;
  add_node(plan, {place.group, place.node_path, place.node->size,
                  node_partitions(skeleton, place.group, *place.node)});
  plan.base_nodes = 1;
  plan.base_partitions = plan.partitions;
  if (place.node->size >= static_cast<double>(k)) return plan;

  struct Candidate {
    GroupId group;
    PivotList path;
    const TrieNode* node;
  };
  std::vector<Candidate> candidates;
  std::vector<GroupId> memorized = place.smallest_od_groups;
  if (memorized.empty()) memorized = {kFallbackGroup};
  for (GroupId g : memorized) {
    const TrieNode* node = &skeleton.trie(g);
    PivotList path;
    for (std::size_t depth = 0;; ++depth) {
      if (!(g == place.group && path == place.node_path)) candidates.push_back({g, path, node});
      if (depth == sig.rank_sensitive.size()) break;
      const TrieNode* next = node->child(sig.rank_sensitive[depth]);
      if (!next) break;
      path.push_back(next->pivot);
      node = next;
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    if (a.path.size() != b.path.size()) return a.path.size() > b.path.size();
    if (a.node->size != b.node->size) return a.node->size > b.node->size;
    return a.group < b.group;
  });

  // Candidates of one group lie on one root path and arrive deepest first, so
  // the covered size of a group is the size of its shallowest chosen node.
  std::map<GroupId, double> covered{{place.group, place.node->size}};
  auto total = [&] {
    double sum = 0.0;
    for (const auto& [g, s] : covered) sum += s;
    return sum;
  };
  const std::size_t cap = multiplier * plan.base_partitions.size();
  for (const auto& c : candidates) {
    auto parts = node_partitions(skeleton, c.group, *c.node);
    if (union_size(plan.partitions, parts) > cap) break;
    add_node(plan, {c.group, c.path, c.node->size, std::move(parts)});
    covered[c.group] = std::max(covered[c.group], c.node->size);
    if (total() >= static_cast<double>(k)) break;
  }
  return plan;
}

RoutingPlan route_od_smallest(const DataSeries& q, const IndexSkeleton& skeleton,
                              const PivotSet& pivots) {
  check_query(q, skeleton);
  const Placement place = locate(skeleton, query_signature(q, skeleton, pivots));
  std::vector<GroupId> groups = place.smallest_od_groups;
  if (groups.empty()) groups = {kFallbackGroup};
  RoutingPlan plan;
  for (GroupId g : groups) {
    const TrieNode& root = skeleton.trie(g);
    add_node(plan, {g, {}, root.size, node_partitions(skeleton, g, root)});
  }
  plan.base_nodes = plan.nodes.size();
  plan.base_partitions = plan.partitions;
  return plan;
}

RoutingPlan route_all(const IndexSkeleton& skeleton) {
  RoutingPlan plan;
  for (const auto& [g, root] : skeleton.tries) {
    add_node(plan, {g, {}, root.size, node_partitions(skeleton, g, root)});
  }
  plan.base_nodes = plan.nodes.size();
  plan.base_partitions = plan.partitions;
  return plan;
}

RoutingPlan route(const QuerySpec& spec, const IndexSkeleton& skeleton, const PivotSet& pivots) {
  switch (spec.mode) {
    case QueryMode::knn: return route_knn(spec.series, skeleton, pivots);
    case QueryMode::adaptive:
      return route_adaptive(spec.series, spec.k, spec.multiplier, skeleton, pivots);
    case QueryMode::od_smallest: return route_od_smallest(spec.series, skeleton, pivots);
    case QueryMode::scan: check_query(spec.series, skeleton); return route_all(skeleton);
  }
  throw ConfigError("unknown query mode");
}

QueryResult execute(const RoutingPlan& plan, const DataSeries& q, std::size_t k,
                    const PartitionStore& store) {
  if (k < 1) throw QueryError("k must be >= 1");
  const auto start = std::chrono::steady_clock::now();

  struct Loaded {
    std::shared_ptr<const PartitionFile> file;
    std::vector<bool> selected;  // per cluster
    bool base = false;
  };
  std::vector<Loaded> loaded;
  loaded.reserve(plan.partitions.size());
  std::size_t base_records = 0;
  for (PartitionId id : plan.partitions) {
    Loaded l;
    l.file = store.load(id);
    l.base = std::binary_search(plan.base_partitions.begin(), plan.base_partitions.end(), id);
    const auto& clusters = l.file->clusters();
    l.selected.assign(clusters.size(), false);
    for (std::size_t n = 0; n < plan.nodes.size(); ++n) {
      const auto& node = plan.nodes[n];
      if (!std::binary_search(node.partitions.begin(), node.partitions.end(), id)) continue;
      const std::string key = path_key(node.path);
      for (std::size_t c = 0; c < clusters.size(); ++c) {
        if (path_under(clusters[c].path, key)) {
          if (n < plan.base_nodes && !l.selected[c]) base_records += clusters[c].count;
          l.selected[c] = true;
        }
      }
    }
    loaded.push_back(std::move(l));
  }
  // Base clusters too small: read the base partitions in full.
  if (base_records < k) {
    for (auto& l : loaded) {
      if (l.base) std::fill(l.selected.begin(), l.selected.end(), true);
    }
  }

  TopK top(k);
  QueryResult result;
  result.partitions_accessed = plan.partitions.size();
  for (const auto& l : loaded) {
    const auto& clusters = l.file->clusters();
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      if (!l.selected[c] || clusters[c].count == 0) continue;
      const auto first = static_cast<Eigen::Index>(l.file->cluster_rows()[c]);
      const auto rows = static_cast<Eigen::Index>(clusters[c].count);
      // Same kernel as scan_exact so equal inputs give bit-equal distances.
      Eigen::VectorXd row(q.length());
      for (Eigen::Index r = 0; r < rows; ++r) {
        row = l.file->values().row(first + r).cast<double>().transpose();
        top.offer(squared_euclidean_distance(row, q.values),
                  l.file->ids()[static_cast<std::size_t>(first + r)]);
      }
      result.records_examined += static_cast<std::size_t>(rows);
    }
  }
  result.neighbors = top.sorted();
  result.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::vector<QueryResult> scan_exact_batch(std::span<const DataSeries> queries, std::size_t k,
                                          std::span<const fs::path> files) {
  if (k < 1) throw QueryError("k must be >= 1");
  const auto start = std::chrono::steady_clock::now();
  std::vector<TopK> tops(queries.size(), TopK(k));
  std::vector<QueryResult> results(queries.size());
  std::vector<DataSeries> block;
  for (const auto& f : files) {
    DatasetReader reader(f);
    for (const auto& q : queries) {
      if (q.length() != static_cast<Eigen::Index>(reader.header().length)) {
        throw QueryError("query length does not match " + f.string());
      }
    }
    block.clear();
    DataSeries s;
    while (reader.next(s)) block.push_back(std::move(s));
    parallel_for(queries.size(), [&](std::size_t i) {
      for (const auto& rec : block) {
        tops[i].offer(squared_euclidean_distance(rec.values, queries[i].values), rec.id);
      }
      results[i].records_examined += block.size();
    });
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (std::size_t i = 0; i < queries.size(); ++i) {
    results[i].neighbors = tops[i].sorted();
    results[i].partitions_accessed = files.size();
    results[i].elapsed_seconds = elapsed / static_cast<double>(queries.size());
  }
  return results;
}

QueryResult scan_exact(const DataSeries& q, std::size_t k, std::span<const fs::path> files) {
  return scan_exact_batch(std::span<const DataSeries>(&q, 1), k, files).front();
}

Index::Index(const fs::path& dir, bool cache) : store(dir, cache) {
  BuildResult loaded = load_skeleton(skeleton_path(dir));
  pivots = std::move(loaded.pivots);
  skeleton = std::move(loaded.skeleton);
}

QueryResult Index::answer(const QuerySpec& spec) const {
  const auto start = std::chrono::steady_clock::now();
  QueryResult r = execute(route(spec, skeleton, pivots), spec.series, spec.k, store);
  r.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace climber
