#include "climber/series.hpp"

#include <unordered_set>

namespace climber {

DataSeries::DataSeries(SeriesId id_, Eigen::VectorXd values_)
    : id(id_), values(std::move(values_)) {
  if (values.size() == 0) {
    throw InputError("data series " + std::to_string(id) + " is empty");
  }
  if (!values.allFinite()) {
    throw InputError("data series " + std::to_string(id) + " has non-finite values");
  }
}

Dataset::Dataset(std::vector<DataSeries> series) {
  series_.reserve(series.size());
  for (auto& s : series) add(std::move(s));
}

void Dataset::add(DataSeries s) {
  if (s.length() == 0) throw InputError("dataset: empty series " + std::to_string(s.id));
  if (series_.empty()) {
    length_ = s.length();
  } else if (s.length() != length_) {
    throw InputError("dataset: series " + std::to_string(s.id) + " has length " +
                     std::to_string(s.length()) + ", expected " + std::to_string(length_));
  }
  if (!ids_.insert(s.id).second) {
    throw InputError("dataset: duplicate id " + std::to_string(s.id));
  }
  series_.push_back(std::move(s));
}

PaaVector paa(const DataSeries& x, Eigen::Index w) {
  return PaaVector{paa(x.values, w), x.id};
}

double recall(std::span<const SeriesId> approx, std::span<const SeriesId> exact) {
  std::unordered_set<SeriesId> truth(exact.begin(), exact.end());
  if (truth.empty()) throw InputError("recall: exact answer set is empty");
  std::unordered_set<SeriesId> seen;
  std::size_t hits = 0;
  for (SeriesId id : approx) {
    if (truth.count(id) && seen.insert(id).second) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

}  // namespace climber
