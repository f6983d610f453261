#include "climber/signature.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <string>

namespace climber {

PivotSet::PivotSet(Eigen::MatrixXd points, std::vector<PivotId> ids, std::uint64_t seed)
    : points_(std::move(points)), ids_(std::move(ids)), seed_(seed) {
  if (static_cast<Eigen::Index>(ids_.size()) != points_.rows()) {
    throw InputError("pivot set: id count does not match pivot count");
  }
  std::vector<PivotId> sorted = ids_;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] != i + 1) throw InputError("pivot set: ids must be a permutation of 1..r");
  }
}

PivotSet select_pivots(std::span<const PaaVector> sample, std::size_t r, std::uint64_t seed) {
  if (r == 0) throw ConfigError("select_pivots: pivot count must be positive");
  if (sample.size() < r) {
    throw BuildError("select_pivots: sample of " + std::to_string(sample.size()) +
                     " vectors is smaller than the pivot count " + std::to_string(r));
  }
  const Eigen::Index w = sample.front().means.size();
  for (const auto& v : sample) {
    if (v.means.size() != w) throw InputError("select_pivots: mixed PAA dimensions");
  }

  // Partial Fisher-Yates over sample positions.
  std::vector<std::size_t> order(sample.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < r; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
    std::swap(order[i], order[pick(rng)]);
  }

  Eigen::MatrixXd points(static_cast<Eigen::Index>(r), w);
  std::vector<PivotId> ids(r);
  for (std::size_t i = 0; i < r; ++i) {
    points.row(static_cast<Eigen::Index>(i)) = sample[order[i]].means.transpose();
    ids[i] = static_cast<PivotId>(i + 1);
  }
  return PivotSet(std::move(points), std::move(ids), seed);
}

P4Signature p4_signature(const Eigen::VectorXd& paa_values, const PivotSet& pivots,
                         std::size_t m) {
  const auto r = static_cast<std::size_t>(pivots.size());
  if (m == 0 || m > r) {
    throw ConfigError("p4_signature: prefix length " + std::to_string(m) +
                      " outside [1, " + std::to_string(r) + "]");
  }
  if (paa_values.size() != pivots.dimension()) {
    throw InputError("p4_signature: vector dimension " + std::to_string(paa_values.size()) +
                     " does not match pivot dimension " + std::to_string(pivots.dimension()));
  }
  const Eigen::VectorXd dist =
      (pivots.points().rowwise() - paa_values.transpose()).rowwise().squaredNorm();

  std::vector<std::uint32_t> rows(r);
  std::iota(rows.begin(), rows.end(), 0u);
  const auto& ids = pivots.ids();
  auto closer = [&](std::uint32_t a, std::uint32_t b) {
    if (dist[a] != dist[b]) return dist[a] < dist[b];
    return ids[a] < ids[b];
  };
  std::partial_sort(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(m), rows.end(),
                    closer);

  P4Signature sig;
  sig.rank_sensitive.reserve(m);
  for (std::size_t i = 0; i < m; ++i) sig.rank_sensitive.push_back(ids[rows[i]]);
  sig.rank_insensitive = to_rank_insensitive(sig.rank_sensitive);
  return sig;
}

PivotList to_rank_insensitive(PivotList rank_sensitive) {
  std::sort(rank_sensitive.begin(), rank_sensitive.end());
  return rank_sensitive;
}

std::size_t overlap_distance(std::span<const PivotId> a, std::span<const PivotId> b) {
  if (a.size() != b.size()) {
    throw InputError("overlap_distance: signature lengths differ (" + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()) + ")");
  }
  std::size_t common = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++common;
      ++ia;
      ++ib;
    }
  }
  return a.size() - common;
}

void validate(const DecaySpec& decay, std::size_t m) {
  if (!(decay.lambda > 0.0 && decay.lambda < 1.0)) {
    // m = 1 under linear decay gives lambda = 1, the single weight 1.0.
    if (!(decay.kind == DecayKind::linear && m == 1 && decay.lambda == 1.0)) {
      throw ConfigError("decay rate " + std::to_string(decay.lambda) + " outside (0, 1)");
    }
  }
  if (decay.kind == DecayKind::linear &&
      std::abs(decay.lambda * static_cast<double>(m) - 1.0) > 1e-12) {
    throw ConfigError("linear decay requires lambda = 1/m");
  }
}

std::vector<double> pivot_weights(std::size_t m, const DecaySpec& decay) {
  validate(decay, m);
  std::vector<double> w(m);
  double value = 1.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (decay.kind == DecayKind::exponential) {
      w[i] = value;
      value *= decay.lambda;
    } else {
      w[i] = decay.lambda * static_cast<double>(m - i);
    }
  }
  return w;
}

double total_weight(std::size_t m, const DecaySpec& decay) {
  const auto w = pivot_weights(m, decay);
  return std::accumulate(w.begin(), w.end(), 0.0);
}

double weight_distance(std::span<const PivotId> rank_sensitive,
                       std::span<const PivotId> centroid, const DecaySpec& decay) {
  if (rank_sensitive.size() != centroid.size()) {
    throw InputError("weight_distance: signature and centroid lengths differ");
  }
  const auto w = pivot_weights(rank_sensitive.size(), decay);
  double total = 0.0;
  double matched = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    total += w[i];
    if (std::binary_search(centroid.begin(), centroid.end(), rank_sensitive[i])) {
      matched += w[i];
    }
  }
  return total - matched;
}

}  // namespace climber
