#include "climber/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>
#include <array>

#include "climber/parallel.hpp"
#include "json.hpp"

namespace climber {

using Json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Eigen::VectorXd random_walk(std::uint64_t seed, std::uint64_t index, std::size_t length,
                            const StepDistribution& steps) {
  if (length < 1) throw InputError("random walk length must be >= 1");
  std::mt19937_64 rng(mix(seed ^ mix(index)));
  std::normal_distribution<double> gaussian(0.0, steps.scale);
  std::uniform_real_distribution<double> uniform(-steps.scale, steps.scale);
  Eigen::VectorXd x(static_cast<Eigen::Index>(length));
  double level = 0.0;
  for (Eigen::Index t = 0; t < x.size(); ++t) {
    level += steps.kind == StepKind::gaussian ? gaussian(rng) : uniform(rng);
    x[t] = level;
  }
  return x;
}

std::vector<fs::path> gen_randomwalk(const fs::path& out_dir, std::uint64_t count,
                                     std::size_t length, std::uint64_t seed, std::size_t files,
                                     const StepDistribution& steps) {
  if (count < 1) throw InputError("gen_randomwalk: count must be >= 1");
  if (length < 1) throw InputError("gen_randomwalk: length must be >= 1");
  if (files < 1) throw InputError("gen_randomwalk: file count must be >= 1");
  files = static_cast<std::size_t>(std::min<std::uint64_t>(files, count));
  fs::create_directories(out_dir);
  std::vector<fs::path> out;
  const std::uint64_t per_file = (count + files - 1) / files;
  for (std::uint64_t begin = 0, f = 0; begin < count; begin += per_file, ++f) {
    char name[32];
    std::snprintf(name, sizeof name, "data-%05llu.clbd", static_cast<unsigned long long>(f));
    out.push_back(out_dir / name);
    DatasetWriter writer(out.back(), static_cast<std::uint32_t>(length));
    for (std::uint64_t i = begin; i < std::min(count, begin + per_file); ++i) {
      writer.append(i, random_walk(seed, i, length, steps));
    }
    writer.close();
  }
  return out;
}

std::size_t count_trie_nodes(const TrieNode& node) {
  std::size_t n = 1;
  for (const auto& c : node.children) n += count_trie_nodes(c);
  return n;
}

BuildStats build_index(std::span<const fs::path> files, const BuildConfig& cfg,
                       const fs::path& index_dir) {
  cfg.validate();
  BuildStats stats;
  const auto start = Clock::now();

  Sample sample = sample_partitions(files, cfg.alpha, cfg.seed);
  BuildConfig effective = cfg;
  effective.alpha = sample.record_fraction;
  const BuildResult built = build_skeleton(sample.data, effective);
  stats.sample_records = sample.data.size();
  stats.sample_files = sample.files.size();
  stats.sample_fraction = sample.record_fraction;
  stats.groups = built.skeleton.centroids.size();
  stats.partitions = built.skeleton.partitions.size();
  for (const auto& [g, root] : built.skeleton.tries) stats.trie_nodes += count_trie_nodes(root);

  fs::create_directories(index_dir);
  for (const auto& entry : fs::directory_iterator(index_dir)) {
    if (entry.path().extension() == ".clbp") fs::remove(entry.path());
  }
  save_skeleton(skeleton_path(index_dir), built.pivots, built.skeleton);
  stats.skeleton_seconds = seconds_since(start);

  stats.redistribution = redistribute(files, built.pivots, built.skeleton, index_dir);
  stats.conversion_seconds = stats.redistribution.conversion_seconds;
  stats.redistribution_seconds = stats.redistribution.write_seconds;
  stats.total_seconds = seconds_since(start);

  Json j;
  j["sample_records"] = stats.sample_records;
  j["sample_files"] = stats.sample_files;
  j["sample_fraction"] = stats.sample_fraction;
  j["groups"] = stats.groups;
  j["partitions"] = stats.partitions;
  j["trie_nodes"] = stats.trie_nodes;
  j["records"] = stats.redistribution.records;
  j["partition_records"] = stats.redistribution.partition_records;
  j["timing"] = {{"sampling_and_skeleton_seconds", stats.skeleton_seconds},
                 {"conversion_seconds", stats.conversion_seconds},
                 {"redistribution_seconds", stats.redistribution_seconds},
                 {"total_seconds", stats.total_seconds}};
  std::ofstream(index_dir / "build_stats.json") << j.dump(2) << '\n';
  return stats;
}

// ---------------------------------------------------------------------------

const ModeSummary& BenchReport::find(std::size_t k, std::string_view mode) const {
  for (const auto& s : summary) {
    if (s.k == k && s.mode == mode) return s;
  }
  throw InputError("bench report has no row for k=" + std::to_string(k) + " mode " +
                   std::string(mode));
}

BenchReport run_bench(const BenchSpec& spec, const Index& index) {
  if (spec.queries < 1) throw ConfigError("bench: query count must be >= 1");
  if (spec.ks.empty() || spec.modes.empty()) throw ConfigError("bench: no k values or modes");
  std::vector<std::pair<QueryMode, std::size_t>> modes;
  for (const auto& m : spec.modes) modes.push_back(parse_mode(m));

  const auto files = list_dataset_files(spec.data);
  std::vector<std::uint64_t> offsets{0};
  for (const auto& f : files) offsets.push_back(offsets.back() + read_dataset_header(f).count);
  const std::uint64_t total = offsets.back();
  if (total < spec.queries) throw ConfigError("bench: more queries than records");

  // Query objects: distinct records drawn uniformly, in draw order.
  std::mt19937_64 rng(spec.seed);
  std::vector<std::uint64_t> picks;
  {
    std::unordered_map<std::uint64_t, std::uint64_t> swapped;
    auto at = [&](std::uint64_t i) {
      auto it = swapped.find(i);
      return it == swapped.end() ? i : it->second;
    };
    for (std::uint64_t i = 0; i < spec.queries; ++i) {
      std::uniform_int_distribution<std::uint64_t> pick(i, total - 1);
      const std::uint64_t j = pick(rng);
      const std::uint64_t vi = at(i), vj = at(j);
      swapped[i] = vj;
      swapped[j] = vi;
      picks.push_back(vj);
    }
  }
  std::vector<DataSeries> queries;
  std::normal_distribution<double> noise(0.0, spec.noise > 0 ? spec.noise : 1.0);
  for (std::uint64_t g : picks) {
    const auto f = static_cast<std::size_t>(
        std::upper_bound(offsets.begin(), offsets.end(), g) - offsets.begin() - 1);
    DataSeries q = DatasetReader(files[f]).read_at(g - offsets[f]);
    if (spec.noise > 0) {
      for (Eigen::Index t = 0; t < q.values.size(); ++t) q.values[t] += noise(rng);
    }
    queries.push_back(std::move(q));
  }

  BenchReport report;
  report.spec = spec;
  report.config = index.skeleton.config;
  if (std::ifstream in(spec.index / "build_stats.json"); in) {
    std::stringstream buf;
    buf << in.rdbuf();
    report.build_json = buf.str();
  }

  const std::array<std::string, 5> chain{"knn", "adaptive2x", "adaptive4x", "od_smallest",
                                         "scan"};
  for (std::size_t k : spec.ks) {
    const auto t0 = Clock::now();
    const auto truth = scan_exact_batch(queries, k, files);
    report.ground_truth_seconds += seconds_since(t0);

    std::vector<std::vector<QueryRow>> rows(queries.size());
    parallel_for(queries.size(), [&](std::size_t qi) {
      const auto exact = truth[qi].ids();
      for (std::size_t mi = 0; mi < modes.size(); ++mi) {
        QuerySpec q{queries[qi], k, modes[mi].first, modes[mi].second};
        const QueryResult r = index.answer(q);
        const auto got = r.ids();
        rows[qi].push_back({queries[qi].id, k, spec.modes[mi], recall(got, exact),
                            r.partitions_accessed, r.records_examined, r.elapsed_seconds});
      }
    });

    for (const auto& per_query : rows) {
      double previous = -1.0;
      for (const auto& name : chain) {
        auto it = std::find_if(per_query.begin(), per_query.end(),
                               [&](const QueryRow& r) { return r.mode == name; });
        if (it == per_query.end()) continue;
        if (it->recall < previous) ++report.chain_violations;
        previous = it->recall;
      }
      report.rows.insert(report.rows.end(), per_query.begin(), per_query.end());
    }

    for (const auto& name : spec.modes) {
      ModeSummary s{k, name, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0};
      std::size_t n = 0;
      for (const auto& per_query : rows) {
        for (const auto& r : per_query) {
          if (r.mode != name) continue;
          s.mean_recall += r.recall;
          s.min_recall = std::min(s.min_recall, r.recall);
          s.max_recall = std::max(s.max_recall, r.recall);
          s.mean_partitions += static_cast<double>(r.partitions);
          s.mean_records += static_cast<double>(r.records);
          s.mean_seconds += r.seconds;
          ++n;
        }
      }
      const double d = static_cast<double>(n);
      s.mean_recall /= d;
      s.mean_partitions /= d;
      s.mean_records /= d;
      s.mean_seconds /= d;
      report.summary.push_back(s);
    }
  }
  return report;
}

std::string BenchReport::to_json(bool include_timing) const {
  Json j;
  j["bench"] = {{"data", spec.data.string()},
                {"index", spec.index.string()},
                {"queries", spec.queries},
                {"k", spec.ks},
                {"modes", spec.modes},
                {"seed", spec.seed},
                {"noise", spec.noise}};
  j["config"] = {{"segments", config.segments},
                 {"pivots", config.pivots},
                 {"prefix", config.prefix},
                 {"capacity", config.capacity},
                 {"alpha", config.alpha},
                 {"epsilon", config.epsilon},
                 {"max_centroids", config.max_centroids ? Json(*config.max_centroids) : Json()},
                 {"decay",
                  {{"kind", config.decay.kind == DecayKind::linear ? "linear" : "exponential"},
                   {"lambda", config.decay.lambda}}},
                 {"seed", config.seed}};
  if (build_json) {
    Json build = Json::parse(*build_json);
    if (!include_timing) build.erase("timing");
    j["build"] = std::move(build);
  }
  Json summary = Json::array();
  for (const auto& s : this->summary) {
    Json row = {{"k", s.k},
                {"mode", s.mode},
                {"mean_recall", s.mean_recall},
                {"min_recall", s.min_recall},
                {"max_recall", s.max_recall},
                {"mean_partitions", s.mean_partitions},
                {"mean_records", s.mean_records}};
    if (include_timing) row["mean_seconds"] = s.mean_seconds;
    summary.push_back(std::move(row));
  }
  j["summary"] = std::move(summary);
  j["chain_violations"] = chain_violations;
  Json queries = Json::array();
  for (const auto& r : rows) {
    Json row = {{"query_id", r.query_id}, {"k", r.k},           {"mode", r.mode},
                {"recall", r.recall},     {"partitions", r.partitions},
                {"records", r.records}};
    if (include_timing) row["seconds"] = r.seconds;
    queries.push_back(std::move(row));
  }
  j["queries"] = std::move(queries);
  if (include_timing) j["timing"] = {{"ground_truth_seconds", ground_truth_seconds}};
  return j.dump(2);
}

std::string BenchReport::to_text() const {
  std::ostringstream out;
  out << std::left << std::setw(6) << "k" << std::setw(13) << "mode" << std::right
      << std::setw(12) << "recall" << std::setw(9) << "min" << std::setw(9) << "max"
      << std::setw(12) << "partitions" << std::setw(12) << "records" << std::setw(11)
      << "ms/query" << '\n';
  out << std::fixed;
  for (const auto& s : summary) {
    out << std::left << std::setw(6) << s.k << std::setw(13) << s.mode << std::right
        << std::setprecision(4) << std::setw(12) << s.mean_recall << std::setw(9)
        << s.min_recall << std::setw(9) << s.max_recall << std::setprecision(2)
        << std::setw(12) << s.mean_partitions << std::setprecision(0) << std::setw(12)
        << s.mean_records << std::setprecision(3) << std::setw(11) << s.mean_seconds * 1e3
        << '\n';
  }
  out << "recall-order violations: " << chain_violations << '\n';
  return out.str();
}

}  // namespace climber
