#include <functional>
#include <random>
#include <set>

#include "climber/index_build.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace climber;

namespace {

const DecaySpec kHalf{DecayKind::exponential, 0.5};

P4Signature sig_of(PivotList rank_sensitive) {
  return {rank_sensitive, to_rank_insensitive(rank_sensitive)};
}

// Alg 2 read line by line: the non-centroid sum is recomputed from scratch
// for every candidate.
std::vector<PivotList> centroid_oracle(FrequencyTable<PivotList> table, std::size_t epsilon,
                                       double min_size, std::size_t cap) {
  std::sort(table.begin(), table.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<PivotList> accepted{table.front().first};
  for (std::size_t i = 1; i < table.size(); ++i) {
    if (accepted.size() == cap) break;
    bool close = false;
    for (const auto& c : accepted) close = close || oracle::overlap_distance(table[i].first, c) < epsilon;
    if (close) continue;
    double rest = 0.0;
    for (const auto& [s, f] : table) {
      if (std::find(accepted.begin(), accepted.end(), s) == accepted.end()) rest += f;
    }
    const double est = table[i].second + rest / static_cast<double>(accepted.size() + 1);
    if (est < min_size) break;
    accepted.push_back(table[i].first);
  }
  return accepted;
}

void walk(const TrieNode& node, std::size_t depth, const std::function<void(const TrieNode&, std::size_t)>& fn) {
  fn(node, depth);
  for (const auto& c : node.children) walk(c, depth + 1, fn);
}

}  // namespace

TEST_CASE("aggregate signatures") {
  const std::vector<P4Signature> sigs{sig_of({1, 2}), sig_of({1, 2}), sig_of({2, 1})};
  const SignatureTables t = aggregate_signatures(sigs);
  CHECK(t.rank_sensitive == FrequencyTable<PivotList>{{{1, 2}, 2}, {{2, 1}, 1}});
  CHECK(t.rank_insensitive == FrequencyTable<PivotList>{{{1, 2}, 3}});

  const SignatureTables empty = aggregate_signatures({});
  CHECK(empty.rank_sensitive.empty());
  CHECK(empty.rank_insensitive.empty());

  // Merging partial counters gives the same tables as one pass.
  SignatureCounter a, b;
  a.add(sigs[0]);
  b.add(sigs[1]);
  b.add(sigs[2]);
  a.merge(b);
  CHECK(a.tables().rank_sensitive == t.rank_sensitive);
}

TEST_CASE("compute centroids") {
  BuildConfig cfg;
  cfg.prefix = 3;
  cfg.epsilon = 2;
  cfg.alpha = 0.01;
  cfg.capacity = 100;  // alpha * c = 1
  const FrequencyTable<PivotList> l{{{1, 2, 3}, 100}, {{1, 2, 4}, 90}, {{5, 6, 7}, 80}};
  const auto cs = compute_centroids(l, cfg);
  CHECK(cs == std::vector<Centroid>{{0, {}}, {1, {1, 2, 3}}, {2, {5, 6, 7}}});

  CHECK(compute_centroids({{{4, 5, 6}, 1}}, cfg) == std::vector<Centroid>{{0, {}}, {1, {4, 5, 6}}});

  cfg.max_centroids = 1;
  CHECK(compute_centroids(l, cfg) == std::vector<Centroid>{{0, {}}, {1, {1, 2, 3}}});

  CHECK_THROWS_AS(compute_centroids({}, cfg), BuildError);
}

TEST_CASE("compute centroids: size estimate stops the scan") {
  BuildConfig cfg;
  cfg.prefix = 2;
  cfg.epsilon = 1;
  cfg.alpha = 1.0;
  cfg.capacity = 30;
  // After <1,2>: <3,4> estimates 20 + (20 + 5) / 2 = 32.5, kept;
  // <5,6> estimates 5 + 5 / 3 < 30, stop.
  const FrequencyTable<PivotList> l{{{1, 2}, 100}, {{3, 4}, 20}, {{5, 6}, 5}};
  CHECK(compute_centroids(l, cfg) == std::vector<Centroid>{{0, {}}, {1, {1, 2}}, {2, {3, 4}}});
}

TEST_CASE("compute centroids agrees with the line-by-line oracle") {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 200; ++t) {
    const std::size_t m = 2 + rng() % 4;
    BuildConfig cfg;
    cfg.prefix = m;
    cfg.pivots = 12;
    cfg.epsilon = 1 + rng() % m;
    cfg.alpha = 0.5;
    cfg.capacity = static_cast<double>(rng() % 200);
    if (rng() % 3 == 0) cfg.max_centroids = 1 + rng() % 5;
    std::map<PivotList, std::uint64_t> counts;
    const std::size_t entries = 1 + rng() % 40;
    for (std::size_t i = 0; i < entries; ++i) {
      std::set<PivotId> s;
      while (s.size() < m) s.insert(static_cast<PivotId>(1 + rng() % 12));
      counts[PivotList(s.begin(), s.end())] += 1 + rng() % 50;
    }
    const FrequencyTable<PivotList> table(counts.begin(), counts.end());
    const auto got = compute_centroids(table, cfg);
    const auto want = centroid_oracle(table, cfg.epsilon, cfg.alpha * cfg.capacity,
                                      cfg.max_centroids.value_or(table.size()));
    REQUIRE(got.size() == want.size() + 1);
    CHECK(got.front().is_fallback());
    for (std::size_t i = 0; i < want.size(); ++i) {
      CHECK(got[i + 1].group_id == i + 1);
      CHECK(got[i + 1].signature == want[i]);
    }
    for (std::size_t i = 1; i < got.size(); ++i) {
      for (std::size_t j = i + 1; j < got.size(); ++j) {
        CHECK(overlap_distance(got[i].signature, got[j].signature) >= cfg.epsilon);
      }
    }
  }
}

TEST_CASE("assign group: the three objects of the worked example") {
  const std::vector<Centroid> cs{{0, {}}, {1, {1, 2, 3}}, {2, {2, 4, 5}}};
  const TieBreaker tie{42};
  CHECK(assign_group(sig_of({1, 3, 4}), cs, kHalf, tie) == 1);
  CHECK(assign_group(sig_of({4, 2, 1}), cs, kHalf, tie) == 2);

  const P4Signature z = sig_of({6, 2, 7});
  std::set<GroupId> seen;
  for (std::uint64_t seed = 0; seed < 64; ++seed) {
    const GroupId g = assign_group(z, cs, kHalf, TieBreaker{seed});
    CHECK(assign_group(z, cs, kHalf, TieBreaker{seed}) == g);
    seen.insert(g);
  }
  CHECK(seen == std::set<GroupId>{1, 2});

  CHECK(assign_group(sig_of({7, 8, 9}), cs, kHalf, tie) == kFallbackGroup);
}

TEST_CASE("assign group without ties ignores the seed") {
  std::mt19937_64 rng(4);
  const std::vector<Centroid> cs{{0, {}}, {1, {1, 2, 3}}, {2, {4, 5, 6}}, {3, {1, 5, 9}}};
  for (int t = 0; t < 300; ++t) {
    PivotList s;
    while (s.size() < 3) {
      const auto p = static_cast<PivotId>(1 + rng() % 10);
      if (std::find(s.begin(), s.end(), p) == s.end()) s.push_back(p);
    }
    const P4Signature sig = sig_of(s);
    std::vector<std::pair<std::size_t, double>> scores;
    for (std::size_t i = 1; i < cs.size(); ++i) {
      scores.emplace_back(oracle::overlap_distance(sig.rank_insensitive, cs[i].signature),
                          oracle::weight_distance(s, cs[i].signature, false, 0.5));
    }
    const auto best = *std::min_element(scores.begin(), scores.end());
    if (best.first == 3) {
      CHECK(assign_group(sig, cs, kHalf, TieBreaker{1}) == 0);
      continue;
    }
    if (std::count(scores.begin(), scores.end(), best) == 1) {
      const auto g = static_cast<GroupId>(
          1 + (std::find(scores.begin(), scores.end(), best) - scores.begin()));
      CHECK(assign_group(sig, cs, kHalf, TieBreaker{1}) == g);
      CHECK(assign_group(sig, cs, kHalf, TieBreaker{99}) == g);
    }
  }
}

TEST_CASE("build trie") {
  const TrieNode single = build_trie({{{1, 2}, 3}, {{2, 1}, 2}}, 5);
  CHECK(single.is_leaf());
  CHECK(single.size == 5);

  const TrieNode t = build_trie({{{1, 2}, 4}, {{1, 3}, 4}, {{2, 9}, 3}}, 5);
  REQUIRE(t.children.size() == 2);
  CHECK(t.size == 11);
  const TrieNode* n1 = t.child(1);
  const TrieNode* n2 = t.child(2);
  REQUIRE(n1);
  REQUIRE(n2);
  CHECK(n1->size == 8);
  CHECK(n2->size == 3);
  CHECK(n2->is_leaf());
  REQUIRE(n1->children.size() == 2);
  CHECK(n1->child(2)->size == 4);
  CHECK(n1->child(3)->size == 4);

  // Frequencies scale by 1/alpha.
  CHECK(build_trie({{{1, 2}, 3}}, 100, 0.1).size == doctest::Approx(30));

  // A signature repeated beyond capacity bottoms out at depth m.
  const TrieNode deep = build_trie({{{3, 1, 2}, 50}}, 10);
  std::size_t max_depth = 0;
  walk(deep, 0, [&](const TrieNode&, std::size_t d) { max_depth = std::max(max_depth, d); });
  CHECK(max_depth == 3);
  CHECK(deep.child(3)->child(1)->child(2)->size == 50);

  CHECK_THROWS_AS(build_trie({}, 0.5), ConfigError);
}

TEST_CASE("build trie: the group of Figure 5") {
  const auto members = fixtures::fig5_members().at(3);
  const TrieNode root = build_trie(members, 3000);
  CHECK(root.size == 5250);
  REQUIRE(root.children.size() == 4);
  CHECK(root.child(6)->size == 3700);
  CHECK(root.child(4)->size == 900);
  CHECK(root.child(5)->size == 400);
  CHECK(root.child(1)->size == 250);
  for (PivotId p : {1, 4, 5}) CHECK(root.child(p)->is_leaf());
  const TrieNode* six = root.child(6);
  REQUIRE(six->children.size() == 3);
  CHECK(six->child(1)->size == 2800);
  CHECK(six->child(7)->size == 500);
  CHECK(six->child(3)->size == 400);
  // Pivots 1 and 3 label trie edges but are not in the centroid <4,6,7>.
  CHECK(six->child(1)->is_leaf());
  CHECK(six->child(3)->is_leaf());
}

TEST_CASE("build trie consistency on random members") {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 100; ++t) {
    const std::size_t m = 1 + rng() % 5;
    std::map<PivotList, std::uint64_t> counts;
    for (std::size_t i = 0, n = 1 + rng() % 60; i < n; ++i) {
      PivotList s;
      while (s.size() < m) {
        const auto p = static_cast<PivotId>(1 + rng() % 8);
        if (std::find(s.begin(), s.end(), p) == s.end()) s.push_back(p);
      }
      counts[s] += 1 + rng() % 30;
    }
    const FrequencyTable<PivotList> members(counts.begin(), counts.end());
    const double c = 1.0 + static_cast<double>(rng() % 300);
    const double alpha = 0.25 * static_cast<double>(1 + rng() % 4);
    const TrieNode root = build_trie(members, c, alpha);

    double total = 0.0;
    for (const auto& [s, f] : members) total += static_cast<double>(f) / alpha;
    CHECK(root.size == doctest::Approx(total));

    walk(root, 0, [&](const TrieNode& n, std::size_t depth) {
      CHECK(depth <= m);
      if (n.is_leaf()) {
        CHECK((n.size <= c || depth == m));
        return;
      }
      CHECK(n.size > c);
      double sum = 0.0;
      for (std::size_t i = 0; i < n.children.size(); ++i) {
        sum += n.children[i].size;
        if (i) CHECK(n.children[i - 1].pivot < n.children[i].pivot);
      }
      CHECK(sum == doctest::Approx(n.size));
    });

    // Each member follows its signature to exactly one leaf or to a node
    // that did not need splitting.
    for (const auto& [s, f] : members) {
      PivotList path;
      const TrieNode& end = descend(root, s, &path);
      CHECK(end.is_leaf());
      CHECK(std::equal(path.begin(), path.end(), s.begin()));
    }
  }
}

TEST_CASE("pack leaves with first fit decreasing") {
  const std::vector<LeafEntry> leaves{{{1}, 5}, {{2}, 4}, {{3}, 3}, {{4}, 2}, {{5}, 2}};
  const Packing p = pack_leaves(leaves, 7);
  CHECK(p.bins() == 3);
  CHECK(p.bin_of == std::vector<std::size_t>{0, 1, 1, 0, 2});
  CHECK(p.load == std::vector<double>{7, 7, 2});
  CHECK(oracle::optimal_bins({5, 4, 3, 2, 2}, 7) == 3);

  const Packing one = pack_leaves(std::vector<LeafEntry>{{{9}, 4}}, 7);
  CHECK(one.bins() == 1);

  // Oversized leaves take bins of their own, first.
  const Packing big = pack_leaves(std::vector<LeafEntry>{{{1}, 3}, {{2, 1}, 12}, {{3}, 3}}, 7);
  CHECK(big.bin_of == std::vector<std::size_t>{1, 0, 1});
  CHECK(big.load == std::vector<double>{12, 6});

  // Equal sizes go in path order.
  const Packing ties = pack_leaves(std::vector<LeafEntry>{{{2}, 4}, {{1}, 4}}, 7);
  CHECK(ties.bin_of == std::vector<std::size_t>{1, 0});
}

TEST_CASE("pack leaves stays within 1.5x of the optimum") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng() % 9;
    const double c = 10.0 + static_cast<double>(rng() % 20);
    std::vector<LeafEntry> leaves;
    std::vector<double> sizes;
    for (std::size_t i = 0; i < n; ++i) {
      const double s = 1.0 + static_cast<double>(rng() % static_cast<std::uint64_t>(c));
      leaves.push_back({{static_cast<PivotId>(i + 1)}, s});
      sizes.push_back(s);
    }
    const Packing p = pack_leaves(leaves, c);
    for (double load : p.load) CHECK(load <= c);
    CHECK(static_cast<double>(p.bins()) <= 1.5 * static_cast<double>(oracle::optimal_bins(sizes, c)));
  }
}

TEST_CASE("assemble skeleton: Figure 5 partitions") {
  const IndexSkeleton sk = fixtures::fig5_skeleton();
  REQUIRE(sk.partitions.size() == 5);
  CHECK(sk.partitions[0].group == 0);
  CHECK(sk.partitions[0].estimated_size == 0);
  CHECK(sk.partitions[1].estimated_size == 1000);
  CHECK(sk.partitions[2].estimated_size == 1500);
  CHECK(sk.partitions[3].estimated_size == 2800);
  CHECK(sk.partitions[4].estimated_size == 2450);
  CHECK(sk.default_partition.at(3) == 4);
  CHECK(sk.default_partition.at(0) == 0);

  const TrieNode& g3 = sk.trie(3);
  CHECK(g3.partition_ids == std::vector<PartitionId>{3, 4});
  CHECK(g3.child(6)->partition_ids == std::vector<PartitionId>{3, 4});
  CHECK(g3.child(6)->child(1)->partition_ids == std::vector<PartitionId>{3});
  for (PivotId p : {1, 4, 5}) CHECK(g3.child(p)->partition_ids == std::vector<PartitionId>{4});
  CHECK(g3.child(6)->child(7)->partition_ids == std::vector<PartitionId>{4});
  CHECK(g3.child(6)->child(3)->partition_ids == std::vector<PartitionId>{4});

  // Every known signature reaches exactly one partition of its own group.
  for (const auto& [group, list] : fixtures::fig5_members()) {
    for (const auto& [s, f] : list) {
      const TrieNode& leaf = descend(sk.trie(group), s, nullptr);
      REQUIRE(leaf.partition_ids.size() == 1);
      CHECK(sk.partitions[leaf.partition_ids[0]].group == group);
    }
  }
}

TEST_CASE("locate follows the query routing rules") {
  const IndexSkeleton sk = fixtures::fig5_skeleton();
  const Placement p = locate(sk, sig_of({6, 2, 7}));
  CHECK(p.group == 3);
  CHECK(p.node_path == PivotList{6});
  CHECK(p.node->size == 3700);
  CHECK(p.partition == 4);  // internal node: the group's default partition
  CHECK(p.smallest_od_groups == std::vector<GroupId>{3});
  CHECK(node_partitions(sk, 3, *p.node) == std::vector<PartitionId>{3, 4});

  const Placement leaf = locate(sk, sig_of({6, 1, 4}));
  CHECK(leaf.partition == 3);
  CHECK(leaf.node_path == PivotList{6, 1});

  const Placement none = locate(sk, sig_of({8, 9, 10}));
  CHECK(none.group == 0);
  CHECK(none.partition == 0);
  CHECK(none.smallest_od_groups.empty());

  CHECK(path_key(PivotList{}) == "");
  CHECK(path_key(PivotList{6, 1}) == "6/1");
}

TEST_CASE("build skeleton end to end") {
  BuildConfig cfg;
  cfg.segments = 4;
  cfg.pivots = 5;
  cfg.prefix = 3;
  cfg.capacity = 10;
  cfg.alpha = 1.0;

  Dataset tiny;
  for (SeriesId i = 0; i < 3; ++i) tiny.add(DataSeries(i, Eigen::VectorXd::Constant(8, double(i))));
  CHECK_THROWS_AS(build_skeleton(tiny, cfg), BuildError);

  Dataset same;
  for (SeriesId i = 0; i < 50; ++i) same.add(DataSeries(i, Eigen::VectorXd::Constant(8, 1.5)));
  const BuildResult r = build_skeleton(same, cfg);
  CHECK(r.skeleton.centroids.size() == 2);
  std::size_t g1_parts = 0;
  for (const auto& p : r.skeleton.partitions) {
    if (p.group == 1) {
      ++g1_parts;
      CHECK(p.estimated_size == 50);
    } else {
      CHECK(p.estimated_size == 0);
    }
  }
  CHECK(g1_parts == 1);

  cfg.pivots = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("build skeleton on random walks keeps the centroid rules") {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g;
  Dataset sample;
  for (SeriesId i = 0; i < 3000; ++i) {
    Eigen::VectorXd v(64);
    double x = 0.0;
    for (auto& e : v) e = x += g(rng);
    sample.add(DataSeries(i, v));
  }
  BuildConfig cfg;
  cfg.segments = 8;
  cfg.pivots = 40;
  cfg.prefix = 5;
  cfg.capacity = 200;
  cfg.alpha = 0.5;
  const BuildResult r = build_skeleton(sample, cfg);
  const IndexSkeleton& sk = r.skeleton;

  CHECK(r.pivots.size() == 40);
  CHECK(sk.centroids.front().is_fallback());
  for (std::size_t i = 1; i < sk.centroids.size(); ++i) {
    for (std::size_t j = i + 1; j < sk.centroids.size(); ++j) {
      CHECK(overlap_distance(sk.centroids[i].signature, sk.centroids[j].signature) >= cfg.epsilon);
    }
  }

  double total = 0.0;
  for (std::size_t i = 0; i < sk.partitions.size(); ++i) {
    CHECK(sk.partitions[i].id == i);
    total += sk.partitions[i].estimated_size;
  }
  CHECK(total == doctest::Approx(3000 / 0.5));

  for (const auto& [group, root] : sk.tries) {
    const PartitionId def = sk.default_partition.at(group);
    CHECK(sk.partitions[def].group == group);
    for (const auto& p : sk.partitions) {
      if (p.group == group) CHECK(sk.partitions[def].estimated_size <= p.estimated_size);
    }
    walk(root, 0, [&](const TrieNode& n, std::size_t) {
      if (n.is_leaf()) {
        CHECK(n.partition_ids.size() == 1);
        return;
      }
      std::set<PartitionId> u;
      for (const auto& c : n.children) u.insert(c.partition_ids.begin(), c.partition_ids.end());
      CHECK(std::vector<PartitionId>(u.begin(), u.end()) == n.partition_ids);
    });
  }

  const BuildResult again = build_skeleton(sample, cfg);
  CHECK(again.skeleton == sk);
  CHECK(again.pivots == r.pivots);
}
