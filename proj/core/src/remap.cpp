#include <algorithm>
#include <numeric>

#include "commlat/attribution.hpp"

namespace commlat {

std::int64_t inter_node_messages(const CommGraph& graph, const NodeMap& node_map) {
  std::int64_t total = 0;
  for (const auto& [key, w] : graph.edges()) {
    const Rank a = graph.vertices()[key.first];
    const Rank b = graph.vertices()[key.second];
    if (node_map.node_of(a) != node_map.node_of(b)) total += w;
  }
  return total;
}

namespace {

struct Partitioner {
  std::size_t n = 0;
  std::size_t k = 0;
  std::size_t cap = 0;
  std::vector<std::int64_t> adj;  // n x n
  std::vector<std::vector<std::size_t>> nbrs;

  std::int64_t w(std::size_t i, std::size_t j) const { return adj[i * n + j]; }

  std::int64_t cut(const std::vector<std::size_t>& part) const {
    std::int64_t c = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j : nbrs[i]) {
        if (j > i && part[i] != part[j]) c += w(i, j);
      }
    }
    return c;
  }

  // Fill parts one at a time to capacity, always adding the unassigned
  // vertex most connected to the current part.
  std::vector<std::size_t> grow(std::size_t seed) const {
    std::vector<std::size_t> part(n, k);
    std::vector<std::int64_t> degree(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j : nbrs[i]) degree[i] += w(i, j);
    }
    std::size_t assigned = 0;
    for (std::size_t p = 0; p < k && assigned < n; ++p) {
      std::vector<std::int64_t> conn(n, 0);
      std::size_t start = seed;
      if (p > 0 || part[start] != k) {
        start = n;
        for (std::size_t i = 0; i < n; ++i) {
          if (part[i] != k) continue;
          if (start == n || degree[i] > degree[start]) start = i;
        }
      }
      std::size_t v = start;
      for (std::size_t filled = 0; filled < cap && assigned < n; ++filled) {
        part[v] = p;
        ++assigned;
        for (std::size_t j : nbrs[v]) conn[j] += w(v, j);
        std::size_t next = n;
        for (std::size_t i = 0; i < n; ++i) {
          if (part[i] != k) continue;
          if (next == n || conn[i] > conn[next]) next = i;
        }
        if (next == n) break;
        v = next;
      }
    }
    return part;
  }

  // Best-improvement moves into spare capacity and pairwise swaps until no
  // step lowers the cut.
  void refine(std::vector<std::size_t>& part) const {
    std::vector<std::int64_t> conn(n * k, 0);
    std::vector<std::size_t> load(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++load[part[i]];
      for (std::size_t j : nbrs[i]) conn[i * k + part[j]] += w(i, j);
    }
    auto move = [&](std::size_t v, std::size_t to) {
      const std::size_t from = part[v];
      for (std::size_t j : nbrs[v]) {
        conn[j * k + from] -= w(v, j);
        conn[j * k + to] += w(v, j);
      }
      --load[from];
      ++load[to];
      part[v] = to;
    };
    for (;;) {
      std::int64_t best_gain = 0;
      std::size_t bu = n, bv = n, bto = k;
      for (std::size_t u = 0; u < n; ++u) {
        const std::size_t a = part[u];
        for (std::size_t b = 0; b < k; ++b) {
          if (b == a || load[b] >= cap) continue;
          const std::int64_t gain = conn[u * k + b] - conn[u * k + a];
          if (gain > best_gain) {
            best_gain = gain;
            bu = u;
            bv = n;
            bto = b;
          }
        }
      }
      for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t v = u + 1; v < n; ++v) {
          const std::size_t a = part[u];
          const std::size_t b = part[v];
          if (a == b) continue;
          const std::int64_t gain = conn[u * k + b] - conn[u * k + a] + conn[v * k + a] -
                                    conn[v * k + b] - 2 * w(u, v);
          if (gain > best_gain) {
            best_gain = gain;
            bu = u;
            bv = v;
            bto = k;
          }
        }
      }
      if (best_gain <= 0) break;
      if (bv == n) {
        move(bu, bto);
      } else {
        const std::size_t a = part[bu];
        const std::size_t b = part[bv];
        move(bu, b);
        move(bv, a);
      }
    }
  }
};

}  // namespace

RemapResult recommend_remap(const CommGraph& graph, const NodeMap& node_map, int cores_per_node) {
  if (cores_per_node <= 0) throw ValidationError("cores_per_node must be positive");
  const auto node_set = node_map.nodes();
  const std::vector<NodeId> nodes(node_set.begin(), node_set.end());
  std::vector<Rank> ranks;
  for (const auto& [rank, node] : node_map.mapping()) ranks.push_back(rank);
  for (Rank r : graph.vertices()) {
    if (!node_map.contains(r)) throw UnknownRankError(r);
  }
  const std::size_t n = ranks.size();
  if (nodes.size() * static_cast<std::size_t>(cores_per_node) < n) {
    throw InfeasibleError(std::to_string(n) + " processes do not fit on " +
                          std::to_string(nodes.size()) + " nodes of " +
                          std::to_string(cores_per_node) + " cores");
  }

  RemapResult result;
  result.mapping = node_map;
  result.before = inter_node_messages(graph, node_map);
  result.after = result.before;
  if (n == 0) return result;

  Partitioner pt;
  pt.n = n;
  pt.k = nodes.size();
  pt.cap = static_cast<std::size_t>(cores_per_node);
  pt.adj.assign(n * n, 0);
  pt.nbrs.resize(n);
  auto local = [&](std::size_t graph_index) {
    const Rank r = graph.vertices()[graph_index];
    return static_cast<std::size_t>(std::lower_bound(ranks.begin(), ranks.end(), r) - ranks.begin());
  };
  for (const auto& [key, w] : graph.edges()) {
    const std::size_t a = local(key.first);
    const std::size_t b = local(key.second);
    pt.adj[a * n + b] = w;
    pt.adj[b * n + a] = w;
    pt.nbrs[a].push_back(b);
    pt.nbrs[b].push_back(a);
  }

  std::vector<std::vector<std::size_t>> candidates;
  std::vector<std::size_t> load(pt.k, 0);
  std::vector<std::size_t> original(n);
  bool original_fits = true;
  for (std::size_t i = 0; i < n; ++i) {
    const NodeId node = node_map.node_of(ranks[i]);
    original[i] = static_cast<std::size_t>(std::lower_bound(nodes.begin(), nodes.end(), node) - nodes.begin());
    if (++load[original[i]] > pt.cap) original_fits = false;
  }
  if (original_fits) candidates.push_back(original);
  const std::size_t starts = n <= 64 ? n : 4;
  for (std::size_t s = 0; s < starts; ++s) candidates.push_back(pt.grow(s * n / starts));

  std::vector<std::size_t> best;
  std::int64_t best_cut = 0;
  for (auto& part : candidates) {
    pt.refine(part);
    const std::int64_t c = pt.cut(part);
    if (best.empty() || c < best_cut) {
      best = part;
      best_cut = c;
    }
  }
  if (best_cut >= result.before) return result;

  // Part -> node label with the largest overlap against the input mapping.
  std::vector<std::vector<std::size_t>> overlap(pt.k, std::vector<std::size_t>(pt.k, 0));
  for (std::size_t i = 0; i < n; ++i) ++overlap[best[i]][original[i]];
  std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> pairs;
  for (std::size_t p = 0; p < pt.k; ++p) {
    for (std::size_t q = 0; q < pt.k; ++q) pairs.emplace_back(overlap[p][q], p, q);
  }
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const auto& a, const auto& b) { return std::get<0>(a) > std::get<0>(b); });
  std::vector<std::size_t> label(pt.k, pt.k);
  std::vector<char> used(pt.k, 0);
  for (const auto& [count, p, q] : pairs) {
    if (label[p] != pt.k || used[q]) continue;
    label[p] = q;
    used[q] = 1;
  }

  NodeMap mapped = node_map;
  for (std::size_t i = 0; i < n; ++i) mapped.assign(ranks[i], nodes[label[best[i]]]);
  result.mapping = std::move(mapped);
  result.after = best_cut;
  result.improved = true;
  return result;
}

}  // namespace commlat
