#include "commlat/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <tuple>

namespace commlat {

std::string_view to_string(StopReason reason) {
  switch (reason) {
    case StopReason::SingleCluster: return "single_cluster";
    case StopReason::Threshold: return "threshold";
    case StopReason::SingleMessage: return "single_message";
    case StopReason::Unreachable: return "unreachable";
  }
  return "unknown";
}

int RegionModel::region_of(Rank rank) const {
  for (std::size_t r = 0; r < regions.size(); ++r) {
    if (std::binary_search(regions[r].begin(), regions[r].end(), rank)) return static_cast<int>(r);
  }
  return -1;
}

RegionModel cluster(const DistanceMatrix& dist, const ClusterOptions& options) {
  const std::size_t n = dist.size();
  if (n == 0) throw ValidationError("cluster: empty distance matrix");
  if (dist.values.size() != n) throw ValidationError("cluster: label/matrix size mismatch");

  RegionModel model;
  model.threshold = options.threshold;

  std::vector<std::vector<Rank>> members(n);
  for (std::size_t i = 0; i < n; ++i) members[i] = {dist.labels[i]};
  std::vector<char> active(n, 1);
  SquareMatrix link = dist.values;

  for (std::size_t remaining = n; remaining > 1; --remaining) {
    std::size_t bi = n, bj = n;
    double best = kInfiniteDistance;
    std::pair<Rank, Rank> best_key{};
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!active[j]) continue;
        const double d = link(i, j);
        if (std::isinf(d)) continue;
        const std::pair<Rank, Rank> key = std::minmax(members[i].front(), members[j].front());
        if (bi == n || d < best || (d == best && key < best_key)) {
          best = d;
          bi = i;
          bj = j;
          best_key = key;
        }
      }
    }
    if (bi == n) {
      model.stop_reason = StopReason::Unreachable;
      model.stop_linkage = kInfiniteDistance;
      break;
    }
    if (best >= options.threshold) {
      model.stop_reason = StopReason::Threshold;
      model.stop_linkage = best;
      break;
    }
    if (options.graph != nullptr && options.graph->weight_between(members[bi], members[bj]) == 1) {
      model.stop_reason = StopReason::SingleMessage;
      model.stop_linkage = best;
      break;
    }
    // Lance-Williams update for average linkage.
    const double si = static_cast<double>(members[bi].size());
    const double sj = static_cast<double>(members[bj].size());
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == bi || k == bj) continue;
      const double d = (si * link(bi, k) + sj * link(bj, k)) / (si + sj);
      link(bi, k) = link(k, bi) = d;
    }
    model.dendrogram.push_back({members[bi], members[bj], best});
    auto& merged = members[bi];
    merged.insert(merged.end(), members[bj].begin(), members[bj].end());
    std::sort(merged.begin(), merged.end());
    members[bj].clear();
    active[bj] = 0;
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (active[i]) model.regions.push_back(members[i]);
  }
  std::sort(model.regions.begin(), model.regions.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return model;
}

namespace {
Rank parse_label(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  while (!s.empty() && s.front() == ' ') s.erase(s.begin());
  if (!s.empty() && (s.front() == 'p' || s.front() == 'P')) s.erase(s.begin());
  try {
    std::size_t used = 0;
    int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("bad process label '" + s + "'");
  }
}
}  // namespace

DistanceMatrix parse_distance_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  if (rows.size() < 2) throw ValidationError("distance matrix: need header and rows");
  const std::size_t n = rows.front().size() - 1;
  if (rows.size() != n + 1) throw ValidationError("distance matrix: not square");
  DistanceMatrix dm;
  for (std::size_t i = 1; i <= n; ++i) dm.labels.push_back(parse_label(rows[0][i]));
  dm.values = SquareMatrix(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = rows[r + 1];
    if (row.size() != n + 1) throw ValidationError("distance matrix: ragged row");
    if (parse_label(row[0]) != dm.labels[r]) throw ValidationError("distance matrix: row label order");
    for (std::size_t c = 0; c < n; ++c) {
      std::string cell = row[c + 1];
      double v = 0.0;
      if (cell == "inf" || cell == "Infinity") {
        v = kInfiniteDistance;
      } else {
        try {
          v = std::stod(cell);
        } catch (const std::exception&) {
          throw ValidationError("distance matrix: bad number '" + cell + "'");
        }
      }
      if (v < 0.0) throw ValidationError("distance matrix: negative entry");
      dm.values(r, c) = v;
    }
  }
  return dm;
}

}  // namespace commlat
