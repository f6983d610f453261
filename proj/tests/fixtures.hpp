#pragma once

// Hand-built index fixtures.
//
// Pivots are the unit basis vectors of R^r, so ||v - e_j||^2 = |v|^2 - 2 v_j + 1
// and a vector's signature is its coordinates in descending order (ties by
// id). `axis_series` turns any wanted signature into a series, with n = w = r
// so PAA is the identity.

#include <map>

#include <Eigen/Core>

#include "climber/index_build.hpp"
#include "climber/series.hpp"
#include "climber/signature.hpp"

namespace fixtures {

using namespace climber;

inline PivotSet axis_pivots(std::size_t r) {
  std::vector<PivotId> ids(r);
  for (std::size_t i = 0; i < r; ++i) ids[i] = static_cast<PivotId>(i + 1);
  return PivotSet(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(r),
                                            static_cast<Eigen::Index>(r)),
                  ids, 0);
}

// Series of length r whose signature starts with `order`. `jitter` shifts
// every coordinate by the same amount, which keeps the order.
inline DataSeries axis_series(SeriesId id, std::size_t r, const PivotList& order,
                              double jitter = 0.0) {
  Eigen::VectorXd v = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(r), jitter);
  double level = static_cast<double>(order.size());
  for (PivotId p : order) {
    v[p - 1] = level + jitter;
    level -= 1.0;
  }
  return DataSeries(id, v);
}

inline constexpr std::size_t kFig5Pivots = 10;

// Three groups over pivots 1..7 of ten, m = 3, c = 3000. Group 3 (centroid
// <4,6,7>) holds 5250 objects: first level 6 -> 3700, 4 -> 900, 5 -> 400,
// 1 -> 250, and node 6 splits into 6/1 -> 2800, 6/7 -> 500, 6/3 -> 400.
// Partitions: 0 group 0 (empty), 1 group 1, 2 group 2, 3 = {6/1},
// 4 = the other five leaves of group 3 and its default.
inline BuildConfig fig5_config() {
  BuildConfig cfg;
  cfg.segments = kFig5Pivots;
  cfg.pivots = kFig5Pivots;
  cfg.prefix = 3;
  cfg.capacity = 3000;
  cfg.alpha = 1.0;
  cfg.epsilon = 2;
  return cfg;
}

inline std::map<GroupId, FrequencyTable<PivotList>> fig5_members() {
  std::map<GroupId, FrequencyTable<PivotList>> members;
  members[1] = {{{1, 2, 3}, 1000}};
  members[2] = {{{2, 4, 5}, 1500}};
  members[3] = {{{1, 6, 7}, 250}, {{4, 6, 7}, 900}, {{5, 6, 7}, 400},
                {{6, 1, 4}, 2800}, {{6, 3, 4}, 400}, {{6, 7, 4}, 500}};
  return members;
}

inline std::vector<Centroid> fig5_centroids() {
  return {{0, {}}, {1, {1, 2, 3}}, {2, {2, 4, 5}}, {3, {4, 6, 7}}};
}

inline IndexSkeleton fig5_skeleton() {
  return assemble_skeleton(fig5_config(), kFig5Pivots, fig5_centroids(), fig5_members());
}

// One series for every `per` objects of estimated frequency.
inline std::vector<DataSeries> fig5_records(std::uint64_t per = 50) {
  std::vector<DataSeries> out;
  SeriesId next = 0;
  for (const auto& [group, list] : fig5_members()) {
    for (const auto& [sig, freq] : list) {
      for (std::uint64_t i = 0; i < freq / per; ++i) {
        out.push_back(axis_series(next++, kFig5Pivots, sig, 0.001 * static_cast<double>(i)));
      }
    }
  }
  return out;
}

}  // namespace fixtures
