// Command-line front end: dataset generation, index build, single queries,
// benchmarks and skeleton inspection.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <unistd.h>

#include "CLI11.hpp"
#include "climber/bench.hpp"
#include "climber/index_build.hpp"
#include "climber/query.hpp"
#include "climber/storage.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace climber;
using Json = nlohmann::ordered_json;

namespace {

DataSeries load_query(const fs::path& path, std::uint64_t record) {
  if (path.extension() == ".csv") {
    const fs::path tmp = fs::temp_directory_path() / ("climber-query-" + std::to_string(::getpid()));
    const auto files = import_csv(path, tmp, 1);
    DataSeries q = DatasetReader(files.front()).read_at(record);
    fs::remove_all(tmp);
    return q;
  }
  return DatasetReader(path).read_at(record);
}

void depth_histogram(const TrieNode& node, std::size_t depth, std::map<std::size_t, std::size_t>& h) {
  if (node.is_leaf()) {
    ++h[depth];
    return;
  }
  for (const auto& c : node.children) depth_histogram(c, depth + 1, h);
}

std::size_t max_depth(const TrieNode& node) {
  std::size_t d = 0;
  for (const auto& c : node.children) d = std::max(d, 1 + max_depth(c));
  return d;
}

Json inspect(const fs::path& dir) {
  const BuildResult built = load_skeleton(skeleton_path(dir));
  const IndexSkeleton& sk = built.skeleton;
  Json j;
  Json groups = Json::array();
  std::map<std::size_t, std::size_t> hist;
  std::size_t nodes = 0;
  for (const auto& c : sk.centroids) {
    const TrieNode& root = sk.trie(c.group_id);
    depth_histogram(root, 0, hist);
    nodes += count_trie_nodes(root);
    groups.push_back({{"group", c.group_id},
                      {"centroid", c.is_fallback() ? Json("*") : Json(c.signature)},
                      {"estimated_size", root.size},
                      {"trie_nodes", count_trie_nodes(root)},
                      {"trie_depth", max_depth(root)},
                      {"partitions", node_partitions(sk, c.group_id, root)},
                      {"default_partition", sk.default_partition.at(c.group_id)}});
  }
  j["groups"] = std::move(groups);
  Json depth = Json::object();
  for (const auto& [d, n] : hist) depth[std::to_string(d)] = n;
  j["leaf_depth_histogram"] = std::move(depth);
  j["trie_nodes"] = nodes;

  Json fill = Json::array();
  std::map<std::pair<GroupId, std::string>, std::size_t> cluster_files;
  for (const auto& p : sk.partitions) {
    Json row = {{"partition", p.id}, {"group", p.group}, {"estimated", p.estimated_size},
                {"capacity", sk.config.capacity}};
    const fs::path file = partition_path(dir, p.id);
    if (fs::exists(file)) {
      const PartitionHeader h = read_partition_header(file);
      std::uint64_t records = 0;
      for (const auto& c : h.clusters) {
        records += c.count;
        ++cluster_files[{h.group_id, c.path}];
      }
      row["records"] = records;
      row["clusters"] = h.clusters.size();
    } else {
      row["records"] = nullptr;
    }
    fill.push_back(std::move(row));
  }
  std::size_t split = 0;
  for (const auto& [key, files] : cluster_files) split += files > 1;
  j["partitions"] = std::move(fill);
  j["clusters_split_across_files"] = split;
  return j;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"climber: pivot-permutation-prefix index for approximate kNN over data series"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate or import a dataset");
  gen->require_subcommand(1);
  auto* rw = gen->add_subcommand("randomwalk", "Random-walk benchmark series");
  std::string rw_out, rw_step = "gaussian";
  std::uint64_t rw_count = 100000, rw_seed = 1;
  std::size_t rw_length = 256, rw_files = 100;
  double rw_scale = 1.0;
  rw->add_option("--out", rw_out, "Output directory")->required();
  rw->add_option("--count", rw_count, "Number of series")->check(CLI::PositiveNumber);
  rw->add_option("--length", rw_length, "Points per series")->check(CLI::PositiveNumber);
  rw->add_option("--seed", rw_seed, "RNG seed");
  rw->add_option("--files", rw_files, "Number of dataset files")->check(CLI::PositiveNumber);
  rw->add_option("--step", rw_step, "Step distribution")
      ->check(CLI::IsMember({"gaussian", "uniform"}));
  rw->add_option("--step-scale", rw_scale, "Step std-dev (gaussian) or half-width (uniform)");

  auto* csv = gen->add_subcommand("csv-import", "Convert CSV (id,v1,v2,...) to dataset files");
  std::string csv_in, csv_out;
  std::size_t csv_files = 1;
  csv->add_option("--input", csv_in, "CSV file")->required()->check(CLI::ExistingFile);
  csv->add_option("--out", csv_out, "Output directory")->required();
  csv->add_option("--files", csv_files, "Number of dataset files")->check(CLI::PositiveNumber);

  // build
  auto* build = app.add_subcommand("build", "Build the index skeleton and partitions");
  std::string build_data, build_out, decay = "exponential";
  BuildConfig cfg;
  std::size_t max_centroids = 0;
  build->add_option("--data", build_data, "Dataset file or directory")->required();
  build->add_option("--out", build_out, "Index directory")->required();
  build->add_option("--segments", cfg.segments, "PAA segments (w)")->capture_default_str();
  build->add_option("--pivots", cfg.pivots, "Pivot count (r)")->capture_default_str();
  build->add_option("--prefix", cfg.prefix, "Pivot prefix length (m)")->capture_default_str();
  build->add_option("--capacity", cfg.capacity, "Partition capacity in records (c)")
      ->capture_default_str();
  build->add_option("--alpha", cfg.alpha, "Sample fraction")->capture_default_str();
  build->add_option("--epsilon", cfg.epsilon, "Minimum OD between centroids")
      ->capture_default_str();
  build->add_option("--max-centroids", max_centroids, "Optional cap on centroids");
  build->add_option("--decay", decay, "Pivot weight decay")
      ->check(CLI::IsMember({"exponential", "linear"}))
      ->capture_default_str();
  build->add_option("--lambda", cfg.decay.lambda, "Exponential decay rate")
      ->capture_default_str();
  build->add_option("--seed", cfg.seed, "RNG seed")->capture_default_str();

  // query
  auto* query = app.add_subcommand("query", "Answer one kNN query");
  std::string query_index, query_file, query_mode = "adaptive4x";
  std::uint64_t query_record = 0;
  std::size_t query_k = 500;
  bool query_json = false;
  query->add_option("--index", query_index, "Index directory")->required();
  query->add_option("--query", query_file, "Query series (.clbd or .csv)")
      ->required()
      ->check(CLI::ExistingFile);
  query->add_option("--record", query_record, "Record position inside the query file");
  query->add_option("--k", query_k, "Answer size")->check(CLI::PositiveNumber)
      ->capture_default_str();
  query->add_option("--mode", query_mode, "knn | adaptive2x | adaptive4x | od_smallest | scan")
      ->capture_default_str();
  query->add_flag("--json", query_json, "Print JSON");

  // bench
  auto* bench = app.add_subcommand("bench", "Recall / latency benchmark against exact answers");
  BenchSpec spec;
  std::string bench_k = "500", bench_modes = "knn,adaptive2x,adaptive4x,od_smallest,scan";
  std::string bench_data, bench_index, bench_report;
  bench->add_option("--data", bench_data, "Dataset file or directory")->required();
  bench->add_option("--index", bench_index, "Index directory")->required();
  bench->add_option("--queries", spec.queries, "Query count")->check(CLI::PositiveNumber)
      ->capture_default_str();
  bench->add_option("--k", bench_k, "Comma-separated answer sizes")->capture_default_str();
  bench->add_option("--modes", bench_modes, "Comma-separated modes")->capture_default_str();
  bench->add_option("--seed", spec.seed, "Query sampling seed")->capture_default_str();
  bench->add_option("--noise", spec.noise,
                    "Std-dev of Gaussian noise added to queries (off by default)");
  bench->add_option("--report", bench_report, "Write the JSON report here");

  // inspect
  auto* insp = app.add_subcommand("inspect", "Skeleton statistics");
  std::string insp_index;
  insp->add_option("--index", insp_index, "Index directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (rw->parsed()) {
      const StepDistribution steps{rw_step == "uniform" ? StepKind::uniform : StepKind::gaussian,
                                   rw_scale};
      const auto files = gen_randomwalk(rw_out, rw_count, rw_length, rw_seed, rw_files, steps);
      std::cout << "wrote " << rw_count << " series to " << files.size() << " files in "
                << rw_out << '\n';
    } else if (csv->parsed()) {
      const auto files = import_csv(csv_in, csv_out, csv_files);
      std::cout << "wrote " << files.size() << " files in " << csv_out << '\n';
    } else if (build->parsed()) {
      if (max_centroids) cfg.max_centroids = max_centroids;
      if (decay == "linear") cfg.decay = DecaySpec::linear(cfg.prefix);
      const auto files = list_dataset_files(build_data);
      const BuildStats s = build_index(files, cfg, build_out);
      std::cout << "groups " << s.groups << ", partitions " << s.partitions << ", trie nodes "
                << s.trie_nodes << ", records " << s.redistribution.records << '\n'
                << "sample " << s.sample_records << " records from " << s.sample_files
                << " files\n"
                << "time: skeleton " << s.skeleton_seconds << " s, conversion "
                << s.conversion_seconds << " s, redistribution " << s.redistribution_seconds
                << " s, total " << s.total_seconds << " s\n";
    } else if (query->parsed()) {
      const Index index(query_index, false);
      const auto [mode, multiplier] = parse_mode(query_mode);
      QuerySpec q{load_query(query_file, query_record), query_k, mode, multiplier};
      const QueryResult r = index.answer(q);
      if (query_json) {
        Json j;
        Json nn = Json::array();
        for (const auto& n : r.neighbors) nn.push_back({{"id", n.id}, {"distance", n.distance}});
        j["neighbors"] = std::move(nn);
        j["partitions_accessed"] = r.partitions_accessed;
        j["records_examined"] = r.records_examined;
        j["elapsed_seconds"] = r.elapsed_seconds;
        std::cout << j.dump(2) << '\n';
      } else {
        std::printf("%-6s %-20s %s\n", "rank", "id", "distance");
        for (std::size_t i = 0; i < r.neighbors.size(); ++i) {
          std::printf("%-6zu %-20llu %.6f\n", i + 1,
                      static_cast<unsigned long long>(r.neighbors[i].id),
                      r.neighbors[i].distance);
        }
        std::printf("partitions accessed %zu, records examined %zu, %.3f ms\n",
                    r.partitions_accessed, r.records_examined, r.elapsed_seconds * 1e3);
      }
    } else if (bench->parsed()) {
      spec.data = bench_data;
      spec.index = bench_index;
      spec.modes = split_list(bench_modes);
      spec.ks.clear();
      for (const auto& k : split_list(bench_k)) spec.ks.push_back(std::stoul(k));
      for (const auto& m : spec.modes) parse_mode(m);
      const Index index(spec.index);
      const BenchReport report = run_bench(spec, index);
      std::cout << report.to_text();
      if (!bench_report.empty()) {
        std::ofstream(bench_report) << report.to_json() << '\n';
      }
    } else if (insp->parsed()) {
      std::cout << inspect(insp_index).dump(2) << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "climber: configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "climber: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
