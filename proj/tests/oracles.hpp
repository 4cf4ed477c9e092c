#pragma once

// Independent reference computations used by unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "commlat/causality.hpp"
#include "commlat/correlation.hpp"
#include "commlat/trace.hpp"

namespace commlat::oracle {

// Sum over first-arrival walks p -> q of length 1..max_len, by dynamic
// programming over walk prefixes that avoid q.
inline double walk_sum_partition(const SquareMatrix& w, std::size_t p, std::size_t q, int max_len) {
  if (p == q) return 1.0;
  const std::size_t n = w.size();
  std::vector<double> mass(n, 0.0), next(n);
  mass[p] = 1.0;
  double z = 0.0;
  for (int len = 1; len <= max_len; ++len) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (mass[i] == 0.0) continue;
      z += mass[i] * w(i, q);
      for (std::size_t j = 0; j < n; ++j) {
        if (j != q) next[j] += mass[i] * w(i, j);
      }
    }
    mass.swap(next);
  }
  return z;
}

// R(p, q) by enumerating simple paths from p of length <= max_depth; each
// path ending at q contributes 1 / length^2.
inline double simple_path_correlation(const CommGraph& g, std::size_t p, std::size_t q,
                                      int max_depth) {
  std::vector<char> on_path(g.size(), 0);
  double r = 0.0;
  auto walk = [&](auto&& self, std::size_t v, int len) -> void {
    if (len > 0 && v == q) r += 1.0 / (static_cast<double>(len) * len);
    if (len == max_depth) return;
    on_path[v] = 1;
    for (std::size_t u : g.neighbors(v)) {
      if (!on_path[u]) self(self, u, len + 1);
    }
    on_path[v] = 0;
  };
  walk(walk, p, 0);
  return r;
}

// Random digraph on n vertices, weakly connected, row-normalized, then
// killed with exponent 1 + beta.
inline SquareMatrix random_killed_digraph(std::mt19937_64& rng, std::size_t n, double beta) {
  std::uniform_real_distribution<double> weight(0.7, 1.0);
  std::bernoulli_distribution edge(0.5);
  SquareMatrix w(n);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    // Spanning path in a random direction keeps the graph connected.
    if (edge(rng)) {
      w(i, i + 1) = weight(rng);
    } else {
      w(i + 1, i) = weight(rng);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && w(i, j) == 0.0 && edge(rng)) w(i, j) = weight(rng);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += w(i, j);
    for (std::size_t j = 0; j < n; ++j) {
      if (sum > 0.0 && w(i, j) > 0.0) w(i, j) = std::pow(w(i, j) / sum, 1.0 + beta);
    }
  }
  return w;
}

// Random undirected communication graph with positive message counts.
inline CommGraph random_comm_graph(std::mt19937_64& rng, std::size_t n) {
  std::vector<Rank> ranks;
  for (std::size_t i = 0; i < n; ++i) ranks.push_back(static_cast<Rank>(i));
  CommGraph g(ranks);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::int64_t> count(1, 20);
  const double density = 0.15 + 0.6 * u(rng);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (u(rng) < density) g.add_messages(ranks[i], ranks[j], count(rng));
    }
  }
  return g;
}

struct MetricReport {
  bool zero_diagonal = true;
  bool symmetric = true;
  bool non_negative = true;
  std::size_t triangle_violations = 0;
  double worst_excess = 0.0;

  bool ok() const { return zero_diagonal && symmetric && non_negative && triangle_violations == 0; }
};

inline MetricReport check_metric(const SquareMatrix& d, double tol = 1e-9) {
  MetricReport r;
  const std::size_t n = d.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (d(i, i) != 0.0) r.zero_diagonal = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (d(i, j) != d(j, i)) r.symmetric = false;
      if (!(d(i, j) >= 0.0)) r.non_negative = false;
      for (std::size_t k = 0; k < n; ++k) {
        const double via = d(i, k) + d(k, j);
        if (std::isinf(via)) continue;
        if (d(i, j) > via + tol) {
          ++r.triangle_violations;
          r.worst_excess = std::max(r.worst_excess, d(i, j) - via);
        }
      }
    }
  }
  return r;
}

// happened-before over window events as the transitive closure of program
// order and in-window message edges. reach[a][b] = a happened before b.
inline std::vector<std::vector<char>> causal_closure(const Trace& trace, const EventWindow& window) {
  const std::size_t n = window.events.size();
  std::vector<std::vector<char>> reach(n, std::vector<char>(n, 0));
  std::map<std::size_t, std::size_t> pos;
  for (std::size_t i = 0; i < n; ++i) pos[window.events[i]] = i;
  std::map<Rank, std::vector<std::size_t>> by_rank;
  for (std::size_t i = 0; i < n; ++i) by_rank[trace.events[window.events[i]].rank].push_back(i);
  for (const auto& [r, seq] : by_rank) {
    for (std::size_t k = 0; k + 1 < seq.size(); ++k) reach[seq[k]][seq[k + 1]] = 1;
  }
  for (const auto& m : trace.messages) {
    auto s = pos.find(m.send_event);
    auto r = pos.find(m.recv_event);
    if (s != pos.end() && r != pos.end()) reach[s->second][r->second] = 1;
  }
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!reach[i][k]) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (reach[k][j]) reach[i][j] = 1;
      }
    }
  }
  return reach;
}

// Replays the DAG rules from scratch: returns edges as
// (sender node, receiver node, message index) and node owners.
struct ReplayedDag {
  std::vector<Rank> node_pid;
  std::set<std::tuple<int, int, std::size_t>> edges;
};

inline ReplayedDag replay_dag(const Trace& trace, const std::vector<std::size_t>& ordered) {
  ReplayedDag out;
  std::vector<bool> node_has_send;
  std::map<Rank, std::vector<int>> nodes_of;
  std::map<std::size_t, int> node_of_event;
  for (std::size_t e : ordered) {
    const auto& ev = trace.events[e];
    int target = -1;
    auto& mine = nodes_of[ev.rank];
    if (ev.kind == EventKind::Send) {
      if (!mine.empty()) target = mine.back();
    } else {
      for (auto it = mine.rbegin(); it != mine.rend(); ++it) {
        if (!node_has_send[static_cast<std::size_t>(*it)]) {
          target = *it;
          break;
        }
      }
    }
    if (target < 0) {
      target = static_cast<int>(out.node_pid.size());
      out.node_pid.push_back(ev.rank);
      node_has_send.push_back(false);
      mine.push_back(target);
    }
    if (ev.kind == EventKind::Send) node_has_send[static_cast<std::size_t>(target)] = true;
    node_of_event[e] = target;
    if (ev.kind == EventKind::Receive && trace.message_of_event[e]) {
      const std::size_t mi = *trace.message_of_event[e];
      auto s = node_of_event.find(trace.messages[mi].send_event);
      if (s != node_of_event.end()) out.edges.insert({s->second, target, mi});
    }
  }
  return out;
}

// Minimum inter-node message count over all capacity-respecting
// assignments of graph vertices to `nodes` nodes.
inline std::int64_t exhaustive_min_cut(const CommGraph& g, std::size_t nodes, std::size_t cap) {
  const std::size_t n = g.size();
  std::vector<std::size_t> part(n, 0), load(nodes, 0);
  std::int64_t best = std::numeric_limits<std::int64_t>::max();
  auto cut = [&] {
    std::int64_t c = 0;
    for (const auto& [key, w] : g.edges()) {
      if (part[key.first] != part[key.second]) c += w;
    }
    return c;
  };
  auto rec = [&](auto&& self, std::size_t i) -> void {
    if (i == n) {
      best = std::min(best, cut());
      return;
    }
    for (std::size_t p = 0; p < nodes; ++p) {
      if (load[p] >= cap) continue;
      part[i] = p;
      ++load[p];
      self(self, i + 1);
      --load[p];
    }
  };
  rec(rec, 0);
  return best;
}

// Average linkage recomputed from raw pairwise distances at every step.
// Returns merge linkages in order; stops at `threshold`.
struct NaiveMerge {
  std::vector<Rank> a, b;
  double linkage;
};

inline std::vector<NaiveMerge> naive_average_linkage(const std::vector<Rank>& labels,
                                                     const SquareMatrix& d, double threshold) {
  std::vector<std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < labels.size(); ++i) clusters.push_back({i});
  std::vector<NaiveMerge> out;
  auto min_label = [&](const std::vector<std::size_t>& c) {
    Rank m = labels[c.front()];
    for (std::size_t i : c) m = std::min(m, labels[i]);
    return m;
  };
  auto as_ranks = [&](const std::vector<std::size_t>& c) {
    std::vector<Rank> r;
    for (std::size_t i : c) r.push_back(labels[i]);
    std::sort(r.begin(), r.end());
    return r;
  };
  while (clusters.size() > 1) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    std::pair<Rank, Rank> best_key{};
    bool found = false;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      for (std::size_t j = i + 1; j < clusters.size(); ++j) {
        double sum = 0.0;
        for (std::size_t x : clusters[i]) {
          for (std::size_t y : clusters[j]) sum += d(x, y);
        }
        const double avg = sum / static_cast<double>(clusters[i].size() * clusters[j].size());
        if (std::isinf(avg)) continue;
        auto key = std::minmax(min_label(clusters[i]), min_label(clusters[j]));
        std::pair<Rank, Rank> k2{key.first, key.second};
        if (!found || avg < best - 1e-12 || (std::abs(avg - best) <= 1e-12 && k2 < best_key)) {
          found = true;
          best = avg;
          bi = i;
          bj = j;
          best_key = k2;
        }
      }
    }
    if (!found || best >= threshold) break;
    out.push_back({as_ranks(clusters[bi]), as_ranks(clusters[bj]), best});
    clusters[bi].insert(clusters[bi].end(), clusters[bj].begin(), clusters[bj].end());
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bj));
  }
  return out;
}

// Adjusted Rand index between two partitions of the same items.
inline double adjusted_rand(const std::vector<std::vector<Rank>>& a,
                            const std::vector<std::vector<Rank>>& b) {
  std::map<Rank, std::size_t> la, lb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (Rank r : a[i]) la[r] = i;
  }
  for (std::size_t i = 0; i < b.size(); ++i) {
    for (Rank r : b[i]) lb[r] = i;
  }
  std::map<std::pair<std::size_t, std::size_t>, double> table;
  std::map<std::size_t, double> rows, cols;
  double n = 0.0;
  for (const auto& [r, i] : la) {
    auto it = lb.find(r);
    if (it == lb.end()) continue;
    table[{i, it->second}] += 1.0;
    rows[i] += 1.0;
    cols[it->second] += 1.0;
    n += 1.0;
  }
  auto c2 = [](double x) { return x * (x - 1.0) / 2.0; };
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& [k, v] : table) index += c2(v);
  for (const auto& [k, v] : rows) sa += c2(v);
  for (const auto& [k, v] : cols) sb += c2(v);
  const double expected = sa * sb / c2(n);
  const double max_index = (sa + sb) / 2.0;
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

}  // namespace commlat::oracle
