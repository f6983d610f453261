#include <fstream>
#include <sstream>

#include "json.hpp"

#include "climber/storage.hpp"

namespace climber {

using Json = nlohmann::ordered_json;

namespace {

constexpr const char* kSkeletonMagic = "CLBS";
constexpr int kSkeletonVersion = 1;

Json trie_to_json(const TrieNode& node) {
  Json j;
  j["pivot"] = node.pivot;
  j["size"] = node.size;
  j["partitions"] = node.partition_ids;
  Json children = Json::array();
  for (const auto& c : node.children) children.push_back(trie_to_json(c));
  j["children"] = std::move(children);
  return j;
}

// Field access that reports the JSON pointer of whatever is missing or
// mistyped.
const Json& field(const Json& j, const std::string& key, const std::string& where) {
  if (!j.is_object()) throw ParseError("skeleton: " + where + " is not an object");
  auto it = j.find(key);
  if (it == j.end()) throw ParseError("skeleton: missing " + where + "/" + key);
  return *it;
}

template <typename T>
T value(const Json& j, const std::string& key, const std::string& where) {
  const Json& v = field(j, key, where);
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("skeleton: bad value at " + where + "/" + key + ": " + e.what());
  }
}

const Json& array(const Json& j, const std::string& key, const std::string& where) {
  const Json& v = field(j, key, where);
  if (!v.is_array()) throw ParseError("skeleton: " + where + "/" + key + " is not an array");
  return v;
}

TrieNode trie_from_json(const Json& j, const std::string& where) {
  TrieNode node;
  node.pivot = value<PivotId>(j, "pivot", where);
  node.size = value<double>(j, "size", where);
  node.partition_ids = value<std::vector<PartitionId>>(j, "partitions", where);
  const Json& children = array(j, "children", where);
  for (std::size_t i = 0; i < children.size(); ++i) {
    node.children.push_back(
        trie_from_json(children[i], where + "/children/" + std::to_string(i)));
  }
  return node;
}

}  // namespace

std::string serialize_skeleton(const PivotSet& pivots, const IndexSkeleton& sk) {
  Json doc;
  doc["magic"] = kSkeletonMagic;
  doc["version"] = kSkeletonVersion;

  const BuildConfig& cfg = sk.config;
  Json config;
  config["series_length"] = sk.series_length;
  config["segments"] = cfg.segments;
  config["pivots"] = cfg.pivots;
  config["prefix"] = cfg.prefix;
  config["capacity"] = cfg.capacity;
  config["alpha"] = cfg.alpha;
  config["epsilon"] = cfg.epsilon;
  config["max_centroids"] = cfg.max_centroids ? Json(*cfg.max_centroids) : Json(nullptr);
  config["decay"] = {{"kind", cfg.decay.kind == DecayKind::linear ? "linear" : "exponential"},
                     {"lambda", cfg.decay.lambda}};
  config["seed"] = cfg.seed;
  doc["config"] = std::move(config);

  Json points = Json::array();
  for (Eigen::Index i = 0; i < pivots.size(); ++i) {
    std::vector<double> row(pivots.points().row(i).begin(), pivots.points().row(i).end());
    points.push_back(row);
  }
  doc["pivots"] = {{"seed", pivots.seed()}, {"ids", pivots.ids()}, {"points", points}};

  Json centroids = Json::array();
  for (const auto& c : sk.centroids) {
    centroids.push_back({{"group", c.group_id}, {"signature", c.signature}});
  }
  doc["centroids"] = std::move(centroids);

  Json tries = Json::array();
  for (const auto& [group, root] : sk.tries) {
    tries.push_back({{"group", group}, {"root", trie_to_json(root)}});
  }
  doc["tries"] = std::move(tries);

  Json defaults = Json::array();
  for (const auto& [group, id] : sk.default_partition) {
    defaults.push_back({{"group", group}, {"partition", id}});
  }
  doc["default_partitions"] = std::move(defaults);

  Json partitions = Json::array();
  for (const auto& p : sk.partitions) {
    partitions.push_back({{"id", p.id}, {"group", p.group}, {"estimated_size", p.estimated_size}});
  }
  doc["partitions"] = std::move(partitions);
  return doc.dump(1);
}

BuildResult deserialize_skeleton(std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("skeleton: malformed JSON at byte " + std::to_string(e.byte) + ": " +
                     e.what());
  }
  if (!doc.is_object() || !doc.contains("magic") || doc["magic"] != kSkeletonMagic) {
    throw ParseError("skeleton: missing or wrong magic (expected \"CLBS\")");
  }
  if (value<int>(doc, "version", "") != kSkeletonVersion) {
    throw ParseError("skeleton: unsupported version");
  }

  BuildResult out;
  IndexSkeleton& sk = out.skeleton;
  const Json& config = field(doc, "config", "");
  BuildConfig& cfg = sk.config;
  sk.series_length = value<Eigen::Index>(config, "series_length", "/config");
  cfg.segments = value<std::size_t>(config, "segments", "/config");
  cfg.pivots = value<std::size_t>(config, "pivots", "/config");
  cfg.prefix = value<std::size_t>(config, "prefix", "/config");
  cfg.capacity = value<double>(config, "capacity", "/config");
  cfg.alpha = value<double>(config, "alpha", "/config");
  cfg.epsilon = value<std::size_t>(config, "epsilon", "/config");
  if (const Json& mc = field(config, "max_centroids", "/config"); !mc.is_null()) {
    cfg.max_centroids = value<std::size_t>(config, "max_centroids", "/config");
  }
  const Json& decay = field(config, "decay", "/config");
  const auto kind = value<std::string>(decay, "kind", "/config/decay");
  if (kind != "exponential" && kind != "linear") {
    throw ParseError("skeleton: unknown decay kind '" + kind + "'");
  }
  cfg.decay.kind = kind == "linear" ? DecayKind::linear : DecayKind::exponential;
  cfg.decay.lambda = value<double>(decay, "lambda", "/config/decay");
  cfg.seed = value<std::uint64_t>(config, "seed", "/config");
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ParseError(std::string("skeleton: invalid config: ") + e.what());
  }

  const Json& pv = field(doc, "pivots", "");
  const auto ids = value<std::vector<PivotId>>(pv, "ids", "/pivots");
  const auto rows = value<std::vector<std::vector<double>>>(pv, "points", "/pivots");
  if (rows.size() != ids.size()) throw ParseError("skeleton: pivot ids and points differ in count");
  Eigen::MatrixXd points(static_cast<Eigen::Index>(rows.size()),
                         static_cast<Eigen::Index>(cfg.segments));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != cfg.segments) {
      throw ParseError("skeleton: pivot " + std::to_string(i) + " has wrong dimension");
    }
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  try {
    out.pivots = PivotSet(std::move(points), ids, value<std::uint64_t>(pv, "seed", "/pivots"));
  } catch (const InputError& e) {
    throw ParseError(std::string("skeleton: ") + e.what());
  }

  const Json& centroids = array(doc, "centroids", "");
  for (std::size_t i = 0; i < centroids.size(); ++i) {
    const std::string where = "/centroids/" + std::to_string(i);
    sk.centroids.push_back({value<GroupId>(centroids[i], "group", where),
                            value<PivotList>(centroids[i], "signature", where)});
  }
  const Json& tries = array(doc, "tries", "");
  for (std::size_t i = 0; i < tries.size(); ++i) {
    const std::string where = "/tries/" + std::to_string(i);
    sk.tries[value<GroupId>(tries[i], "group", where)] =
        trie_from_json(field(tries[i], "root", where), where + "/root");
  }
  const Json& defaults = array(doc, "default_partitions", "");
  for (std::size_t i = 0; i < defaults.size(); ++i) {
    const std::string where = "/default_partitions/" + std::to_string(i);
    sk.default_partition[value<GroupId>(defaults[i], "group", where)] =
        value<PartitionId>(defaults[i], "partition", where);
  }
  const Json& partitions = array(doc, "partitions", "");
  for (std::size_t i = 0; i < partitions.size(); ++i) {
    const std::string where = "/partitions/" + std::to_string(i);
    PartitionInfo info{value<PartitionId>(partitions[i], "id", where),
                       value<GroupId>(partitions[i], "group", where),
                       value<double>(partitions[i], "estimated_size", where)};
    if (info.id != i) throw ParseError("skeleton: partition ids must be dense at " + where);
    sk.partitions.push_back(info);
  }
  return out;
}

void save_skeleton(const fs::path& path, const PivotSet& pivots, const IndexSkeleton& skeleton) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out << serialize_skeleton(pivots, skeleton) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

BuildResult load_skeleton(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return deserialize_skeleton(buf.str());
}

}  // namespace climber
