#include "climber/storage.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "binary_io.hpp"
#include "climber/parallel.hpp"

namespace climber {

using detail::Cursor;
using detail::get;
using detail::put;

namespace {

constexpr char kDatasetMagic[4] = {'C', 'L', 'B', 'D'};
constexpr char kPartitionMagic[4] = {'C', 'L', 'B', 'P'};

std::vector<char> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + path.string());
  const auto size = static_cast<std::size_t>(in.tellg());
  std::vector<char> data(size);
  in.seekg(0);
  if (size && !in.read(data.data(), static_cast<std::streamsize>(size))) {
    throw IoError("cannot read " + path.string());
  }
  return data;
}

DatasetHeader parse_dataset_header(const char* data, std::size_t size, const fs::path& path) {
  Cursor cur(data, size, path.string());
  const std::string magic = cur.read_string(4);
  if (magic != std::string(kDatasetMagic, 4)) {
    throw IoError(path.string() + ": not a dataset file (bad magic)");
  }
  const auto version = cur.read<std::uint32_t>();
  if (version != kDatasetVersion) {
    throw IoError(path.string() + ": unsupported dataset version " + std::to_string(version));
  }
  DatasetHeader h;
  h.count = cur.read<std::uint64_t>();
  h.length = cur.read<std::uint32_t>();
  h.value_width = cur.read<std::uint8_t>();
  if (h.value_width != 4 && h.value_width != 8) {
    throw IoError(path.string() + ": unsupported value width " + std::to_string(h.value_width));
  }
  if (h.length == 0) throw IoError(path.string() + ": zero series length");
  return h;
}

void encode_record(std::vector<char>& buf, SeriesId id,
                   const Eigen::Ref<const Eigen::VectorXd>& values, std::uint8_t width) {
  put<std::uint64_t>(buf, id);
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (width == 4) {
      put<float>(buf, static_cast<float>(values[i]));
    } else {
      put<double>(buf, values[i]);
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------

DatasetWriter::DatasetWriter(const fs::path& path, std::uint32_t length,
                             std::uint8_t value_width)
    : path_(path), length_(length), width_(value_width) {
  if (length == 0) throw InputError("dataset writer: series length must be positive");
  if (value_width != 4 && value_width != 8) {
    throw InputError("dataset writer: value width must be 4 or 8");
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw IoError("cannot create " + path.string());
  std::vector<char> header(kDatasetMagic, kDatasetMagic + 4);
  put<std::uint32_t>(header, kDatasetVersion);
  put<std::uint64_t>(header, 0);
  put<std::uint32_t>(header, length_);
  put<std::uint8_t>(header, width_);
  out_.write(header.data(), static_cast<std::streamsize>(header.size()));
}

DatasetWriter::~DatasetWriter() {
  if (out_.is_open()) {
    try {
      close();
    } catch (...) {
    }
  }
}

void DatasetWriter::append(SeriesId id, const Eigen::Ref<const Eigen::VectorXd>& values) {
  if (values.size() != static_cast<Eigen::Index>(length_)) {
    throw InputError("dataset writer: series " + std::to_string(id) + " has length " +
                     std::to_string(values.size()) + ", expected " + std::to_string(length_));
  }
  if (!values.allFinite()) {
    throw InputError("dataset writer: series " + std::to_string(id) + " has non-finite values");
  }
  buffer_.clear();
  encode_record(buffer_, id, values, width_);
  out_.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
  ++count_;
}

void DatasetWriter::close() {
  if (!out_.is_open()) return;
  std::vector<char> count;
  put<std::uint64_t>(count, count_);
  out_.seekp(8);
  out_.write(count.data(), static_cast<std::streamsize>(count.size()));
  out_.close();
  if (!out_) throw IoError("failed writing " + path_.string());
}

DatasetReader::DatasetReader(const fs::path& path) : path_(path) {
  in_.open(path, std::ios::binary);
  if (!in_) throw IoError("cannot open " + path.string());
  char raw[DatasetHeader::kBytes];
  if (!in_.read(raw, sizeof raw)) throw IoError(path.string() + ": truncated header");
  header_ = parse_dataset_header(raw, sizeof raw, path);
  const auto expected = DatasetHeader::kBytes + header_.count * header_.record_bytes();
  if (fs::file_size(path) != expected) {
    throw IoError(path.string() + ": body size does not match header record count");
  }
  buffer_.resize(header_.record_bytes());
}

DataSeries DatasetReader::decode(const char* record) const {
  const auto id = get<std::uint64_t>(record);
  Eigen::VectorXd values(header_.length);
  const char* p = record + 8;
  for (std::uint32_t i = 0; i < header_.length; ++i, p += header_.value_width) {
    values[i] = header_.value_width == 4 ? static_cast<double>(get<float>(p)) : get<double>(p);
  }
  return DataSeries(id, std::move(values));
}

bool DatasetReader::next(DataSeries& out) {
  if (position_ >= header_.count) return false;
  if (!in_.read(buffer_.data(), static_cast<std::streamsize>(buffer_.size()))) {
    throw IoError(path_.string() + ": truncated record " + std::to_string(position_));
  }
  ++position_;
  out = decode(buffer_.data());
  return true;
}

DataSeries DatasetReader::read_at(std::uint64_t index) {
  if (index >= header_.count) {
    throw InputError(path_.string() + ": record index " + std::to_string(index) +
                     " out of range");
  }
  in_.clear();
  in_.seekg(static_cast<std::streamoff>(DatasetHeader::kBytes + index * header_.record_bytes()));
  if (!in_.read(buffer_.data(), static_cast<std::streamsize>(buffer_.size()))) {
    throw IoError(path_.string() + ": cannot read record " + std::to_string(index));
  }
  position_ = index + 1;
  return decode(buffer_.data());
}

DatasetHeader read_dataset_header(const fs::path& path) { return DatasetReader(path).header(); }

void write_dataset(const fs::path& path, const Dataset& data, std::uint8_t value_width) {
  if (data.empty()) throw InputError("write_dataset: empty dataset");
  DatasetWriter writer(path, static_cast<std::uint32_t>(data.length()), value_width);
  for (const auto& s : data.series()) writer.append(s);
  writer.close();
}

Dataset read_dataset(const fs::path& path) {
  DatasetReader reader(path);
  Dataset out;
  DataSeries s;
  while (reader.next(s)) out.add(std::move(s));
  return out;
}

Dataset read_datasets(std::span<const fs::path> files) {
  Dataset out;
  for (const auto& f : files) {
    DatasetReader reader(f);
    DataSeries s;
    while (reader.next(s)) out.add(std::move(s));
  }
  return out;
}

std::vector<fs::path> list_dataset_files(const fs::path& path) {
  std::vector<fs::path> files;
  if (fs::is_regular_file(path)) {
    files.push_back(path);
  } else if (fs::is_directory(path)) {
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file() && entry.path().extension() == ".clbd") {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
  }
  if (files.empty()) throw IoError("no dataset files at " + path.string());
  return files;
}

std::vector<fs::path> import_csv(const fs::path& csv, const fs::path& out_dir,
                                 std::size_t files) {
  if (files == 0) throw InputError("import_csv: file count must be positive");
  std::ifstream in(csv);
  if (!in) throw IoError("cannot open " + csv.string());
  Dataset data;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::stringstream fields(line);
    std::string cell;
    std::vector<double> values;
    SeriesId id = 0;
    bool first = true;
    while (std::getline(fields, cell, ',')) {
      try {
        std::size_t used = 0;
        if (first) {
          id = std::stoull(cell, &used);
        } else {
          values.push_back(std::stod(cell, &used));
        }
        if (cell.find_first_not_of(" \t\r", used) != std::string::npos) throw std::exception();
      } catch (const std::exception&) {
        throw ParseError(csv.string() + ":" + std::to_string(line_no) + ": bad field '" + cell +
                         "'");
      }
      first = false;
    }
    if (values.empty()) {
      throw ParseError(csv.string() + ":" + std::to_string(line_no) + ": no values");
    }
    try {
      data.add(DataSeries(id, Eigen::Map<Eigen::VectorXd>(values.data(),
                                                          static_cast<Eigen::Index>(values.size()))));
    } catch (const InputError& e) {
      throw ParseError(csv.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (data.empty()) throw ParseError(csv.string() + ": no records");

  fs::create_directories(out_dir);
  files = std::min(files, data.size());
  std::vector<fs::path> out;
  const std::size_t per_file = (data.size() + files - 1) / files;
  for (std::size_t f = 0, begin = 0; begin < data.size(); ++f, begin += per_file) {
    char name[32];
    std::snprintf(name, sizeof name, "data-%05zu.clbd", f);
    out.push_back(out_dir / name);
    DatasetWriter writer(out.back(), static_cast<std::uint32_t>(data.length()));
    for (std::size_t i = begin; i < std::min(data.size(), begin + per_file); ++i) {
      writer.append(data[i]);
    }
    writer.close();
  }
  return out;
}

Sample sample_partitions(std::span<const fs::path> files, double alpha, std::uint64_t seed) {
  if (files.empty()) throw IoError("sample_partitions: no input files");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("sample fraction must lie in (0, 1]");

  const auto take = std::min(
      files.size(),
      static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(files.size()) - 1e-9)));
  std::vector<std::size_t> order(files.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  order.resize(take);
  std::sort(order.begin(), order.end());

  std::uint64_t total = 0;
  for (const auto& f : files) total += read_dataset_header(f).count;

  Sample out;
  for (std::size_t i : order) out.files.push_back(files[i]);
  out.data = read_datasets(out.files);
  out.record_fraction =
      total ? static_cast<double>(out.data.size()) / static_cast<double>(total) : 0.0;
  return out;
}

// ---------------------------------------------------------------------------

bool path_under(std::string_view stored, std::string_view prefix) {
  if (prefix.empty()) return true;
  if (stored.size() < prefix.size() || stored.substr(0, prefix.size()) != prefix) return false;
  return stored.size() == prefix.size() || stored[prefix.size()] == '/';
}

fs::path partition_path(const fs::path& dir, PartitionId id) {
  char name[32];
  std::snprintf(name, sizeof name, "part-%06u.clbp", id);
  return dir / name;
}

namespace {

struct ParsedPartitionHeader {
  PartitionHeader header;
  std::size_t body_offset = 0;
};

ParsedPartitionHeader parse_partition_header(Cursor& cur, const fs::path& path) {
  if (cur.read_string(4) != std::string(kPartitionMagic, 4)) {
    throw IoError(path.string() + ": not a partition file (bad magic)");
  }
  const auto version = cur.read<std::uint32_t>();
  if (version != kPartitionVersion) {
    throw IoError(path.string() + ": unsupported partition version " + std::to_string(version));
  }
  ParsedPartitionHeader out;
  out.header.partition_id = static_cast<PartitionId>(cur.read<std::uint64_t>());
  out.header.group_id = static_cast<GroupId>(cur.read<std::uint64_t>());
  const auto clusters = cur.read<std::uint32_t>();
  out.header.clusters.reserve(clusters);
  for (std::uint32_t i = 0; i < clusters; ++i) {
    ClusterEntry e;
    e.path = cur.read_string(cur.read<std::uint32_t>());
    e.offset = cur.read<std::uint64_t>();
    e.count = cur.read<std::uint64_t>();
    out.header.clusters.push_back(std::move(e));
  }
  out.body_offset = cur.position();
  return out;
}

// Record width implied by the body size; 0 for an empty partition.
std::size_t record_width(const ParsedPartitionHeader& parsed, std::size_t file_size,
                         const fs::path& path) {
  std::uint64_t total = 0;
  std::uint64_t expected_offset = parsed.body_offset;
  for (const auto& c : parsed.header.clusters) total += c.count;
  if (total == 0) return 0;
  const std::size_t body = file_size - parsed.body_offset;
  if (body % total != 0 || body / total <= 8 || (body / total - 8) % 4 != 0) {
    throw IoError(path.string() + ": body size inconsistent with cluster table");
  }
  const std::size_t width = body / total;
  for (const auto& c : parsed.header.clusters) {
    if (c.offset != expected_offset) {
      throw IoError(path.string() + ": cluster '" + c.path + "' has offset " +
                    std::to_string(c.offset) + ", expected " + std::to_string(expected_offset));
    }
    expected_offset += c.count * width;
  }
  return width;
}

}  // namespace

PartitionHeader read_partition_header(const fs::path& path) {
  const auto data = slurp(path);
  Cursor cur(data.data(), data.size(), path.string());
  auto parsed = parse_partition_header(cur, path);
  record_width(parsed, data.size(), path);
  return parsed.header;
}

PartitionFile PartitionFile::load(const fs::path& path) {
  const auto data = slurp(path);
  Cursor cur(data.data(), data.size(), path.string());
  auto parsed = parse_partition_header(cur, path);
  const std::size_t width = record_width(parsed, data.size(), path);

  PartitionFile out;
  out.partition_id_ = parsed.header.partition_id;
  out.group_id_ = parsed.header.group_id;
  out.clusters_ = std::move(parsed.header.clusters);

  std::size_t total = 0;
  for (const auto& c : out.clusters_) {
    out.cluster_rows_.push_back(total);
    total += c.count;
  }
  const Eigen::Index length = width ? static_cast<Eigen::Index>((width - 8) / 4) : 0;
  out.ids_.resize(total);
  out.values_.resize(static_cast<Eigen::Index>(total), length);
  const char* p = data.data() + parsed.body_offset;
  for (std::size_t row = 0; row < total; ++row) {
    out.ids_[row] = get<std::uint64_t>(p);
    p += 8;
    for (Eigen::Index j = 0; j < length; ++j, p += 4) {
      out.values_(static_cast<Eigen::Index>(row), j) = get<float>(p);
    }
  }
  return out;
}

std::vector<DataSeries> PartitionFile::read_cluster(std::string_view node_path) const {
  std::vector<DataSeries> out;
  for (std::size_t c = 0; c < clusters_.size(); ++c) {
    if (!path_under(clusters_[c].path, node_path)) continue;
    for (std::size_t r = cluster_rows_[c]; r < cluster_rows_[c] + clusters_[c].count; ++r) {
      out.emplace_back(ids_[r],
                       values_.row(static_cast<Eigen::Index>(r)).transpose().cast<double>());
    }
  }
  return out;
}

std::vector<DataSeries> read_cluster(const fs::path& partition, std::string_view node_path) {
  std::ifstream in(partition, std::ios::binary);
  if (!in) throw IoError("cannot open " + partition.string());
  const std::size_t file_size = fs::file_size(partition);

  // The header is small; read a generous prefix and grow if needed.
  std::vector<char> head(std::min<std::size_t>(file_size, 1 << 16));
  ParsedPartitionHeader parsed;
  for (;;) {
    in.seekg(0);
    in.read(head.data(), static_cast<std::streamsize>(head.size()));
    try {
      Cursor cur(head.data(), head.size(), partition.string());
      parsed = parse_partition_header(cur, partition);
      break;
    } catch (const IoError&) {
      if (head.size() == file_size) throw;
      head.resize(std::min(file_size, head.size() * 4));
    }
  }
  const std::size_t width = record_width(parsed, file_size, partition);
  std::vector<DataSeries> out;
  std::vector<char> block;
  for (const auto& c : parsed.header.clusters) {
    if (!path_under(c.path, node_path) || c.count == 0) continue;
    block.resize(c.count * width);
    in.clear();
    in.seekg(static_cast<std::streamoff>(c.offset));
    if (!in.read(block.data(), static_cast<std::streamsize>(block.size()))) {
      throw IoError(partition.string() + ": cannot read cluster '" + c.path + "'");
    }
    const auto length = static_cast<Eigen::Index>((width - 8) / 4);
    for (std::size_t r = 0; r < c.count; ++r) {
      const char* p = block.data() + r * width;
      Eigen::VectorXd values(length);
      for (Eigen::Index j = 0; j < length; ++j) values[j] = get<float>(p + 8 + 4 * j);
      out.emplace_back(get<std::uint64_t>(p), std::move(values));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct Routed {
  PartitionId partition;
  std::string key;
};

// Raw record bytes per cluster key, per partition.
using Buckets = std::vector<std::map<std::string, std::vector<char>>>;

void write_partition(const fs::path& path, PartitionId id, GroupId group,
                     const std::map<std::string, std::vector<char>>& clusters,
                     std::size_t record_bytes) {
  std::size_t header_bytes = 4 + 4 + 8 + 8 + 4;
  for (const auto& [key, bytes] : clusters) header_bytes += 4 + key.size() + 8 + 8;

  std::vector<char> header(kPartitionMagic, kPartitionMagic + 4);
  put<std::uint32_t>(header, kPartitionVersion);
  put<std::uint64_t>(header, id);
  put<std::uint64_t>(header, group);
  put<std::uint32_t>(header, static_cast<std::uint32_t>(clusters.size()));
  std::uint64_t offset = header_bytes;
  for (const auto& [key, bytes] : clusters) {
    put<std::uint32_t>(header, static_cast<std::uint32_t>(key.size()));
    header.insert(header.end(), key.begin(), key.end());
    put<std::uint64_t>(header, offset);
    put<std::uint64_t>(header, bytes.size() / record_bytes);
    offset += bytes.size();
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& [key, bytes] : clusters) {
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

void write_partition(const fs::path& path, PartitionId id, GroupId group,
                     const std::map<std::string, std::vector<DataSeries>>& clusters) {
  std::map<std::string, std::vector<char>> encoded;
  Eigen::Index length = -1;
  for (const auto& [key, records] : clusters) {
    auto& bytes = encoded[key];
    for (const auto& r : records) {
      if (length < 0) length = r.length();
      if (r.length() != length) throw InputError("write_partition: mixed series lengths");
      encode_record(bytes, r.id, r.values, 4);
    }
  }
  const std::size_t record_bytes = 8 + 4 * static_cast<std::size_t>(std::max<Eigen::Index>(length, 0));
  write_partition(path, id, group, encoded, record_bytes);
}

RedistributeStats redistribute(std::span<const fs::path> files, const PivotSet& pivots,
                               const IndexSkeleton& skeleton, const fs::path& out_dir) {
  const BuildConfig& cfg = skeleton.config;
  if (static_cast<std::size_t>(pivots.size()) != cfg.pivots ||
      static_cast<std::size_t>(pivots.dimension()) != cfg.segments) {
    throw ConfigError("redistribute: pivot set does not match the skeleton configuration");
  }
  for (const auto& f : files) {
    if (read_dataset_header(f).length != skeleton.series_length) {
      throw ConfigError("redistribute: " + f.string() + " has series length " +
                        std::to_string(read_dataset_header(f).length) + ", index expects " +
                        std::to_string(skeleton.series_length));
    }
  }

  using Clock = std::chrono::steady_clock;
  RedistributeStats stats;
  stats.partition_records.assign(skeleton.partitions.size(), 0);
  GroupId max_group = 0;
  for (const auto& c : skeleton.centroids) max_group = std::max(max_group, c.group_id);
  stats.group_records.assign(max_group + 1, 0);

  const std::size_t record_bytes = 8 + 4 * static_cast<std::size_t>(skeleton.series_length);
  Buckets buckets(skeleton.partitions.size());
  const auto w = static_cast<Eigen::Index>(cfg.segments);

  // Files are routed in parallel batches and merged in file order so the
  // output does not depend on scheduling.
  const std::size_t batch = std::max<std::size_t>(1, worker_count());
  for (std::size_t begin = 0; begin < files.size(); begin += batch) {
    const std::size_t end = std::min(files.size(), begin + batch);
    std::vector<std::vector<DataSeries>> records(end - begin);
    std::vector<std::vector<Routed>> routes(end - begin);

    const auto t0 = Clock::now();
    parallel_for(end - begin, [&](std::size_t i) {
      DatasetReader reader(files[begin + i]);
      DataSeries s;
      while (reader.next(s)) {
        const P4Signature sig = p4_signature(paa(s.values, w), pivots, cfg.prefix);
        const Placement place = locate(skeleton, sig);
        routes[i].push_back({place.partition, path_key(place.node_path)});
        records[i].push_back(std::move(s));
      }
    });
    const auto t1 = Clock::now();
    for (std::size_t i = 0; i < records.size(); ++i) {
      for (std::size_t r = 0; r < records[i].size(); ++r) {
        const Routed& route = routes[i][r];
        encode_record(buckets.at(route.partition)[route.key], records[i][r].id,
                      records[i][r].values, 4);
        ++stats.partition_records[route.partition];
        ++stats.group_records[skeleton.partitions[route.partition].group];
        ++stats.records;
      }
    }
    const auto t2 = Clock::now();
    stats.conversion_seconds += std::chrono::duration<double>(t1 - t0).count();
    stats.write_seconds += std::chrono::duration<double>(t2 - t1).count();
  }

  if (stats.records == 0) return stats;

  const auto t0 = Clock::now();
  fs::create_directories(out_dir);
  for (const auto& info : skeleton.partitions) {
    write_partition(partition_path(out_dir, info.id), info.id, info.group, buckets[info.id],
                    record_bytes);
    ++stats.partitions_written;
  }
  stats.write_seconds += std::chrono::duration<double>(Clock::now() - t0).count();
  return stats;
}

// ---------------------------------------------------------------------------

PartitionStore::PartitionStore(fs::path dir, bool cache)
    : dir_(std::move(dir)), cache_enabled_(cache) {}

std::shared_ptr<const PartitionFile> PartitionStore::load(PartitionId id) const {
  if (cache_enabled_) {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(id); it != cache_.end()) return it->second;
  }
  const fs::path path = partition_path(dir_, id);
  if (!fs::exists(path)) throw IoError("missing partition file " + path.string());
  auto file = std::make_shared<const PartitionFile>(PartitionFile::load(path));
  if (cache_enabled_) {
    std::lock_guard lock(mutex_);
    cache_.emplace(id, file);
  }
  return file;
}

}  // namespace climber
