#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Core>

#include "climber/error.hpp"

namespace climber {

using SeriesId = std::uint64_t;

/// One fixed-length, real-valued data series.
struct DataSeries {
  SeriesId id = 0;
  Eigen::VectorXd values;

  DataSeries() = default;
  DataSeries(SeriesId id_, Eigen::VectorXd values_);

  Eigen::Index length() const { return values.size(); }
  bool operator==(const DataSeries& other) const {
    return id == other.id && values == other.values;
  }
};

/// A collection of series sharing one length, with unique ids.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<DataSeries> series);

  /// Appends a series; throws InputError on a length mismatch or a duplicate id.
  void add(DataSeries s);

  const std::vector<DataSeries>& series() const { return series_; }
  std::size_t size() const { return series_.size(); }
  bool empty() const { return series_.empty(); }
  Eigen::Index length() const { return length_; }
  const DataSeries& operator[](std::size_t i) const { return series_[i]; }

 private:
  std::vector<DataSeries> series_;
  std::unordered_set<SeriesId> ids_;
  Eigen::Index length_ = 0;
};

/// Piecewise-aggregate approximation of one series.
struct PaaVector {
  Eigen::VectorXd means;
  SeriesId source_id = 0;
};

template <typename DerivedA, typename DerivedB>
double squared_euclidean_distance(const Eigen::MatrixBase<DerivedA>& a,
                                  const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size()) {
    throw InputError("euclidean_distance: length mismatch (" + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()) + ")");
  }
  return (a.template cast<double>() - b.template cast<double>()).squaredNorm();
}

template <typename DerivedA, typename DerivedB>
double euclidean_distance(const Eigen::MatrixBase<DerivedA>& a,
                          const Eigen::MatrixBase<DerivedB>& b) {
  return std::sqrt(squared_euclidean_distance(a, b));
}

inline double euclidean_distance(const DataSeries& a, const DataSeries& b) {
  return euclidean_distance(a.values, b.values);
}

/// Segment means of x over w segments. When w does not divide n, the first
/// n mod w segments take one extra element.
template <typename Derived>
Eigen::VectorXd paa(const Eigen::MatrixBase<Derived>& x, Eigen::Index w) {
  const Eigen::Index n = x.size();
  if (w < 1 || w > n) {
    throw ConfigError("paa: segment count " + std::to_string(w) + " outside [1, " +
                      std::to_string(n) + "]");
  }
  Eigen::VectorXd out(w);
  const Eigen::Index base = n / w;
  const Eigen::Index extra = n % w;
  Eigen::Index start = 0;
  for (Eigen::Index i = 0; i < w; ++i) {
    const Eigen::Index len = base + (i < extra ? 1 : 0);
    out[i] = x.segment(start, len).template cast<double>().mean();
    start += len;
  }
  return out;
}

PaaVector paa(const DataSeries& x, Eigen::Index w);

/// |approx ∩ exact| / |exact|. Duplicate ids count once.
double recall(std::span<const SeriesId> approx, std::span<const SeriesId> exact);

}  // namespace climber
