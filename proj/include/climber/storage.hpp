#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "climber/index_build.hpp"
#include "climber/series.hpp"
#include "climber/signature.hpp"

namespace climber {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Dataset files
//
//   "CLBD" | u32 version | u64 count | u32 length | u8 value width (4 or 8)
//   count x ( u64 id | length x value )
//
// All integers and floats little-endian.

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::uint32_t kPartitionVersion = 1;

struct DatasetHeader {
  std::uint64_t count = 0;
  std::uint32_t length = 0;
  std::uint8_t value_width = 4;

  static constexpr std::size_t kBytes = 4 + 4 + 8 + 4 + 1;
  std::size_t record_bytes() const { return 8 + std::size_t{length} * value_width; }
};

/// Streams records into a dataset file. The record count in the header is
/// patched on close().
class DatasetWriter {
 public:
  DatasetWriter(const fs::path& path, std::uint32_t length, std::uint8_t value_width = 4);
  ~DatasetWriter();
  DatasetWriter(const DatasetWriter&) = delete;
  DatasetWriter& operator=(const DatasetWriter&) = delete;

  void append(SeriesId id, const Eigen::Ref<const Eigen::VectorXd>& values);
  void append(const DataSeries& s) { append(s.id, s.values); }
  void close();
  std::uint64_t count() const { return count_; }

 private:
  fs::path path_;
  std::ofstream out_;
  std::uint32_t length_;
  std::uint8_t width_;
  std::uint64_t count_ = 0;
  std::vector<char> buffer_;
};

class DatasetReader {
 public:
  explicit DatasetReader(const fs::path& path);

  const DatasetHeader& header() const { return header_; }
  const fs::path& path() const { return path_; }

  /// Sequential read; returns false at end of file.
  bool next(DataSeries& out);
  DataSeries read_at(std::uint64_t index);

 private:
  DataSeries decode(const char* record) const;

  fs::path path_;
  std::ifstream in_;
  DatasetHeader header_;
  std::uint64_t position_ = 0;
  std::vector<char> buffer_;
};

DatasetHeader read_dataset_header(const fs::path& path);
void write_dataset(const fs::path& path, const Dataset& data, std::uint8_t value_width = 4);
Dataset read_dataset(const fs::path& path);
Dataset read_datasets(std::span<const fs::path> files);

/// A single dataset file, or every *.clbd file of a directory in name order.
std::vector<fs::path> list_dataset_files(const fs::path& path);

/// CSV import: one series per line, id in column 0. Writes `files` dataset
/// files named data-NNNNN.clbd into out_dir and returns their paths.
std::vector<fs::path> import_csv(const fs::path& csv, const fs::path& out_dir,
                                 std::size_t files = 1);

struct Sample {
  Dataset data;
  std::vector<fs::path> files;
  double record_fraction = 0.0;  // sampled records / all records
};

/// Partition-level sampling: ceil(alpha * files) whole files, chosen
/// uniformly at random under `seed`.
Sample sample_partitions(std::span<const fs::path> files, double alpha, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Partition files
//
//   "CLBP" | u32 version | u64 partition id | u64 group id | u32 cluster count
//   cluster count x ( u32 path bytes | path | u64 byte offset | u64 record count )
//   records: u64 id | length x f32, contiguous per cluster
//
// Cluster offsets are absolute byte offsets into the file.

struct ClusterEntry {
  std::string path;  // pivot ids joined by '/'; "" is the root
  std::uint64_t offset = 0;
  std::uint64_t count = 0;
  bool operator==(const ClusterEntry&) const = default;
};

/// True when `stored` equals `prefix` or lies beneath it in the trie.
bool path_under(std::string_view stored, std::string_view prefix);

using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One partition file held in memory.
class PartitionFile {
 public:
  static PartitionFile load(const fs::path& path);

  PartitionId partition_id() const { return partition_id_; }
  GroupId group_id() const { return group_id_; }
  const std::vector<ClusterEntry>& clusters() const { return clusters_; }
  const std::vector<SeriesId>& ids() const { return ids_; }
  const RowMatrixXf& values() const { return values_; }
  std::size_t record_count() const { return ids_.size(); }

  /// Row index of the first record of each cluster, parallel to clusters().
  const std::vector<std::size_t>& cluster_rows() const { return cluster_rows_; }

  /// Records stored under node_path or any descendant path.
  std::vector<DataSeries> read_cluster(std::string_view node_path) const;

 private:
  PartitionId partition_id_ = 0;
  GroupId group_id_ = 0;
  std::vector<ClusterEntry> clusters_;
  std::vector<std::size_t> cluster_rows_;
  std::vector<SeriesId> ids_;
  RowMatrixXf values_;
};

/// Reads only the matching clusters of a partition file, one contiguous read
/// per cluster. Unknown paths yield an empty result.
std::vector<DataSeries> read_cluster(const fs::path& partition, std::string_view node_path);

struct PartitionHeader {
  PartitionId partition_id = 0;
  GroupId group_id = 0;
  std::vector<ClusterEntry> clusters;
};
PartitionHeader read_partition_header(const fs::path& path);

fs::path partition_path(const fs::path& dir, PartitionId id);

/// Writes a partition file with one cluster per map entry, in key order.
void write_partition(const fs::path& path, PartitionId id, GroupId group,
                     const std::map<std::string, std::vector<DataSeries>>& clusters);

struct RedistributeStats {
  std::uint64_t records = 0;
  std::size_t partitions_written = 0;
  std::vector<std::uint64_t> partition_records;  // indexed by partition id
  std::vector<std::uint64_t> group_records;      // indexed by group id
  double conversion_seconds = 0.0;
  double write_seconds = 0.0;
};

/// Routes every record of `files` through the skeleton and writes one
/// partition file per skeleton partition into out_dir. Empty input writes
/// nothing.
RedistributeStats redistribute(std::span<const fs::path> files, const PivotSet& pivots,
                               const IndexSkeleton& skeleton, const fs::path& out_dir);

// ---------------------------------------------------------------------------
// Skeleton files (JSON)

std::string serialize_skeleton(const PivotSet& pivots, const IndexSkeleton& skeleton);
BuildResult deserialize_skeleton(std::string_view text);
void save_skeleton(const fs::path& path, const PivotSet& pivots, const IndexSkeleton& skeleton);
BuildResult load_skeleton(const fs::path& path);

// ---------------------------------------------------------------------------

/// Index directory: skeleton.json plus part-NNNNNN.clbp files. Loaded
/// partitions are cached; the cache is safe to share between threads.
class PartitionStore {
 public:
  explicit PartitionStore(fs::path dir, bool cache = true);

  const fs::path& dir() const { return dir_; }
  std::shared_ptr<const PartitionFile> load(PartitionId id) const;

 private:
  fs::path dir_;
  bool cache_enabled_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<PartitionId, std::shared_ptr<const PartitionFile>> cache_;
};

inline fs::path skeleton_path(const fs::path& index_dir) { return index_dir / "skeleton.json"; }

}  // namespace climber
