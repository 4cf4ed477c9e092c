#pragma once

#include <string>
#include <vector>

#include "commlat/correlation.hpp"

namespace commlat {

struct Merge {
  std::vector<Rank> a;
  std::vector<Rank> b;
  double linkage = 0.0;
};

enum class StopReason { SingleCluster, Threshold, SingleMessage, Unreachable };
std::string_view to_string(StopReason reason);

struct RegionModel {
  // Sorted members; regions ordered by smallest member. Region id = index.
  std::vector<std::vector<Rank>> regions;
  std::vector<Merge> dendrogram;
  double threshold = 2.0;
  StopReason stop_reason = StopReason::SingleCluster;
  // Linkage of the pair that triggered the stop, if any.
  double stop_linkage = 0.0;

  int region_of(Rank rank) const;
};

struct ClusterOptions {
  double threshold = 2.0;
  // When set, agglomeration also stops as soon as the closest pair of
  // clusters is joined by exactly one message.
  const CommGraph* graph = nullptr;
};

// Average-linkage agglomerative clustering. Ties on linkage are broken by the
// smallest member pid of the two clusters.
RegionModel cluster(const DistanceMatrix& dist, const ClusterOptions& options = {});

// Reads a labelled square matrix: header row of labels (first cell ignored),
// then one row per label. Labels may be integers or `p<int>`.
DistanceMatrix parse_distance_csv(std::string_view text);

}  // namespace commlat
