#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "climber/series.hpp"

namespace climber {

using PivotId = std::uint32_t;

/// Pivot ids ordered by proximity (rank-sensitive) or by id (rank-insensitive).
using PivotList = std::vector<PivotId>;

/// r reference points in PAA space. Row i of `points` is the pivot with id
/// `ids[i]`; ids are a permutation of 1..r. Immutable once built.
class PivotSet {
 public:
  PivotSet() = default;
  PivotSet(Eigen::MatrixXd points, std::vector<PivotId> ids, std::uint64_t seed);

  Eigen::Index size() const { return points_.rows(); }
  Eigen::Index dimension() const { return points_.cols(); }
  const Eigen::MatrixXd& points() const { return points_; }
  const std::vector<PivotId>& ids() const { return ids_; }
  std::uint64_t seed() const { return seed_; }

  bool operator==(const PivotSet&) const = default;

 private:
  Eigen::MatrixXd points_;
  std::vector<PivotId> ids_;
  std::uint64_t seed_ = 0;
};

/// The dual signature: the m nearest pivots in proximity order, and the same
/// ids sorted ascending.
struct P4Signature {
  PivotList rank_sensitive;
  PivotList rank_insensitive;

  std::size_t prefix_length() const { return rank_sensitive.size(); }
  bool operator==(const P4Signature&) const = default;
};

enum class DecayKind { exponential, linear };

struct DecaySpec {
  DecayKind kind = DecayKind::exponential;
  double lambda = 0.5;

  /// Linear decay has its rate fixed to 1/m.
  static DecaySpec linear(std::size_t m) {
    return {DecayKind::linear, 1.0 / static_cast<double>(m)};
  }
  bool operator==(const DecaySpec&) const = default;
};

/// Picks r distinct members of `sample` uniformly at random. Pivot ids are
/// assigned 1..r in selection order.
PivotSet select_pivots(std::span<const PaaVector> sample, std::size_t r, std::uint64_t seed);

/// Distance ties between pivots resolve to the smaller pivot id.
P4Signature p4_signature(const Eigen::VectorXd& paa_values, const PivotSet& pivots,
                         std::size_t m);
inline P4Signature p4_signature(const PaaVector& v, const PivotSet& pivots, std::size_t m) {
  return p4_signature(v.means, pivots, m);
}

/// Rank-insensitive form of a rank-sensitive list.
PivotList to_rank_insensitive(PivotList rank_sensitive);

/// m minus the size of the id intersection. Both inputs must be sorted.
std::size_t overlap_distance(std::span<const PivotId> a, std::span<const PivotId> b);

void validate(const DecaySpec& decay, std::size_t m);

std::vector<double> pivot_weights(std::size_t m, const DecaySpec& decay);

double total_weight(std::size_t m, const DecaySpec& decay);

/// Total weight minus the weights of those rank-sensitive pivots that appear
/// in the (sorted) centroid id list.
double weight_distance(std::span<const PivotId> rank_sensitive,
                       std::span<const PivotId> centroid, const DecaySpec& decay);

}  // namespace climber
