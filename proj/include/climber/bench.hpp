#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "climber/index_build.hpp"
#include "climber/query.hpp"
#include "climber/storage.hpp"

namespace climber {

enum class StepKind { gaussian, uniform };

/// Increment distribution of the random walk. `scale` is the standard
/// deviation for gaussian steps and the half-width for uniform steps.
struct StepDistribution {
  StepKind kind = StepKind::gaussian;
  double scale = 1.0;
};

/// Random walk i: ids are record indices, x[0] = step[0], x[t] = x[t-1] + step[t].
/// Each walk depends only on (seed, record index).
Eigen::VectorXd random_walk(std::uint64_t seed, std::uint64_t index, std::size_t length,
                            const StepDistribution& steps = {});

/// Writes `count` walks of `length` points into `files` dataset files
/// (data-NNNNN.clbd) under out_dir.
std::vector<fs::path> gen_randomwalk(const fs::path& out_dir, std::uint64_t count,
                                     std::size_t length, std::uint64_t seed,
                                     std::size_t files = 1, const StepDistribution& steps = {});

struct BuildStats {
  std::uint64_t sample_records = 0;
  std::size_t sample_files = 0;
  double sample_fraction = 0.0;
  std::size_t groups = 0;
  std::size_t partitions = 0;
  std::size_t trie_nodes = 0;
  RedistributeStats redistribution;
  double skeleton_seconds = 0.0;  // sampling + skeleton construction
  double conversion_seconds = 0.0;
  double redistribution_seconds = 0.0;
  double total_seconds = 0.0;
};

/// Sample, build the skeleton, and redistribute into index_dir. The
/// configured alpha selects the sampled files; the skeleton records the
/// realised record fraction as its alpha.
BuildStats build_index(std::span<const fs::path> files, const BuildConfig& cfg,
                       const fs::path& index_dir);

std::size_t count_trie_nodes(const TrieNode& node);

struct BenchSpec {
  fs::path data;
  fs::path index;
  std::size_t queries = 50;
  std::vector<std::size_t> ks{500};
  std::vector<std::string> modes{"knn", "adaptive2x", "adaptive4x", "od_smallest", "scan"};
  std::uint64_t seed = 7;
  double noise = 0.0;  // std-dev of Gaussian noise added to query objects
};

struct QueryRow {
  SeriesId query_id = 0;
  std::size_t k = 0;
  std::string mode;
  double recall = 0.0;
  std::size_t partitions = 0;
  std::size_t records = 0;
  double seconds = 0.0;
};

struct ModeSummary {
  std::size_t k = 0;
  std::string mode;
  double mean_recall = 0.0;
  double min_recall = 0.0;
  double max_recall = 0.0;
  double mean_partitions = 0.0;
  double mean_records = 0.0;
  double mean_seconds = 0.0;
};

struct BenchReport {
  BenchSpec spec;
  BuildConfig config;
  std::optional<std::string> build_json;  // build_stats.json of the index, when present
  std::vector<ModeSummary> summary;
  std::vector<QueryRow> rows;
  std::size_t chain_violations = 0;  // recall order knn <= 2x <= 4x <= od_smallest <= scan
  double ground_truth_seconds = 0.0;

  const ModeSummary& find(std::size_t k, std::string_view mode) const;

  /// JSON form; timing fields are dropped when include_timing is false so
  /// two runs can be compared value for value.
  std::string to_json(bool include_timing = true) const;
  std::string to_text() const;
};

/// Draws query objects from the dataset, computes exact answers by full
/// scan, and evaluates every requested mode against them.
BenchReport run_bench(const BenchSpec& spec, const Index& index);

}  // namespace climber
