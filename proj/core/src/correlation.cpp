#include "commlat/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include <Eigen/Dense>

namespace commlat {

CommGraph::CommGraph(std::vector<Rank> vertices) : vertices_(std::move(vertices)) {
  std::sort(vertices_.begin(), vertices_.end());
  vertices_.erase(std::unique(vertices_.begin(), vertices_.end()), vertices_.end());
  for (std::size_t i = 0; i < vertices_.size(); ++i) index_[vertices_[i]] = i;
  adjacency_.resize(vertices_.size());
}

CommGraph CommGraph::from_trace(const Trace& trace) {
  CommGraph g(std::vector<Rank>(trace.ranks.begin(), trace.ranks.end()));
  for (const auto& m : trace.messages) g.add_messages(m.source, m.destination);
  return g;
}

std::size_t CommGraph::index_of(Rank rank) const {
  auto it = index_.find(rank);
  if (it == index_.end()) throw UnknownRankError(rank);
  return it->second;
}

void CommGraph::add_messages(Rank a, Rank b, std::int64_t count) {
  if (a == b) throw ValidationError("self-communication is not modeled");
  std::size_t i = index_of(a), j = index_of(b);
  auto key = std::minmax(i, j);
  auto [it, inserted] = weights_.try_emplace({key.first, key.second}, 0);
  it->second += count;
  if (inserted) {
    auto insert_sorted = [](std::vector<std::size_t>& v, std::size_t x) {
      v.insert(std::lower_bound(v.begin(), v.end(), x), x);
    };
    insert_sorted(adjacency_[i], j);
    insert_sorted(adjacency_[j], i);
  }
}

std::set<Rank> CommGraph::communication_set(Rank rank) const {
  std::set<Rank> out;
  for (std::size_t j : adjacency_[index_of(rank)]) out.insert(vertices_[j]);
  return out;
}

std::int64_t CommGraph::weight(std::size_t i, std::size_t j) const {
  auto key = std::minmax(i, j);
  auto it = weights_.find({key.first, key.second});
  return it == weights_.end() ? 0 : it->second;
}

std::int64_t CommGraph::weight_between(const std::vector<Rank>& a,
                                       const std::vector<Rank>& b) const {
  std::int64_t total = 0;
  for (Rank x : a) {
    for (Rank y : b) {
      if (contains(x) && contains(y)) total += weight(index_of(x), index_of(y));
    }
  }
  return total;
}

std::int64_t CommGraph::total_weight() const {
  std::int64_t total = 0;
  for (const auto& [key, w] : weights_) total += w;
  return total;
}

std::vector<std::size_t> CorrelationTree::children(std::size_t node) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].parent == static_cast<int>(node)) out.push_back(i);
  }
  return out;
}

CorrelationTree build_tree(const CommGraph& graph, Rank root, int max_depth) {
  CorrelationTree tree;
  tree.root = root;
  tree.nodes.push_back({root, 0, -1});
  const std::size_t root_index = graph.index_of(root);
  // Graph index per tree node, to walk adjacency.
  std::vector<std::size_t> vertex_of{root_index};
  std::deque<std::size_t> queue{0};
  while (!queue.empty()) {
    const std::size_t cur = queue.front();
    queue.pop_front();
    if (tree.nodes[cur].depth >= max_depth) continue;
    for (std::size_t nb : graph.neighbors(vertex_of[cur])) {
      const Rank pid = graph.vertices()[nb];
      bool on_path = false;
      for (int a = static_cast<int>(cur); a >= 0; a = tree.nodes[a].parent) {
        if (tree.nodes[a].pid == pid) {
          on_path = true;
          break;
        }
      }
      if (on_path) continue;
      tree.nodes.push_back({pid, tree.nodes[cur].depth + 1, static_cast<int>(cur)});
      vertex_of.push_back(nb);
      queue.push_back(tree.nodes.size() - 1);
    }
  }
  return tree;
}

double raw_correlation(const CorrelationTree& tree, Rank q) {
  double r = 0.0;
  for (const auto& node : tree.nodes) {
    if (node.pid == q && node.depth > 0) r += 1.0 / (static_cast<double>(node.depth) * node.depth);
  }
  return r;
}

namespace {

void accumulate_paths(const CommGraph& graph, std::size_t root, std::size_t at, int depth,
                      int max_depth, std::vector<char>& on_path, SquareMatrix& out) {
  for (std::size_t nb : graph.neighbors(at)) {
    if (on_path[nb]) continue;
    out(root, nb) += 1.0 / (static_cast<double>(depth) * depth);
    if (depth < max_depth) {
      on_path[nb] = 1;
      accumulate_paths(graph, root, nb, depth + 1, max_depth, on_path, out);
      on_path[nb] = 0;
    }
  }
}

}  // namespace

SquareMatrix correlation_matrix(const CommGraph& graph, int max_depth) {
  const std::size_t n = graph.size();
  SquareMatrix r(n);
  if (max_depth < 1) return r;
  std::vector<char> on_path(n, 0);
  for (std::size_t p = 0; p < n; ++p) {
    on_path[p] = 1;
    accumulate_paths(graph, p, p, 1, max_depth, on_path, r);
    on_path[p] = 0;
  }
  return r;
}

SquareMatrix transition_probabilities(const SquareMatrix& correlation) {
  const std::size_t n = correlation.size();
  SquareMatrix w(n);
  for (std::size_t p = 0; p < n; ++p) {
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) sum += correlation(p, k);
    if (sum <= 0.0) continue;
    for (std::size_t q = 0; q < n; ++q) w(p, q) = correlation(p, q) / sum;
  }
  return w;
}

SquareMatrix killed_weights(const SquareMatrix& transition, double beta) {
  if (!(beta > 0.0)) throw ValidationError("beta must be positive");
  const std::size_t n = transition.size();
  SquareMatrix out(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double w = transition(i, j);
      out(i, j) = w > 0.0 ? std::pow(w, 1.0 + beta) : 0.0;
    }
  }
  return out;
}

namespace {

// States (other than target) that reach `target` through positive weights
// without passing through it first.
std::vector<char> reaches_target(const SquareMatrix& killed, std::size_t target) {
  const std::size_t n = killed.size();
  std::vector<char> seen(n, 0);
  std::deque<std::size_t> queue{target};
  while (!queue.empty()) {
    std::size_t v = queue.front();
    queue.pop_front();
    for (std::size_t u = 0; u < n; ++u) {
      if (u == target || seen[u] || killed(u, v) <= 0.0) continue;
      seen[u] = 1;
      queue.push_back(u);
    }
  }
  return seen;
}

// h_s = Z_{s,target} for every state s.
std::vector<double> solve_absorbing(const SquareMatrix& killed, std::size_t target) {
  const std::size_t n = killed.size();
  auto live = reaches_target(killed, target);
  std::vector<std::size_t> states;
  for (std::size_t s = 0; s < n; ++s) {
    if (live[s]) states.push_back(s);
  }
  std::vector<double> h(n, 0.0);
  h[target] = 1.0;
  if (states.empty()) return h;
  const auto m = static_cast<Eigen::Index>(states.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(m, m);
  Eigen::VectorXd b(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) a(i, j) -= killed(states[i], states[j]);
    b(i) = killed(states[i], target);
  }
  Eigen::VectorXd x = a.partialPivLu().solve(b);
  for (Eigen::Index i = 0; i < m; ++i) h[states[i]] = std::clamp(x(i), 0.0, 1.0);
  return h;
}

// Weakly connected components of the support.
std::vector<std::vector<std::size_t>> components(const SquareMatrix& killed) {
  const std::size_t n = killed.size();
  std::vector<int> comp(n, -1);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    out.emplace_back();
    std::deque<std::size_t> queue{s};
    comp[s] = static_cast<int>(out.size() - 1);
    while (!queue.empty()) {
      std::size_t v = queue.front();
      queue.pop_front();
      out.back().push_back(v);
      for (std::size_t u = 0; u < n; ++u) {
        if (comp[u] < 0 && (killed(u, v) > 0.0 || killed(v, u) > 0.0)) {
          comp[u] = comp[s];
          queue.push_back(u);
        }
      }
    }
    std::sort(out.back().begin(), out.back().end());
  }
  return out;
}

}  // namespace

double first_arrival_partition(const SquareMatrix& killed, std::size_t p, std::size_t q) {
  if (p >= killed.size() || q >= killed.size()) throw ValidationError("state index out of range");
  if (p == q) return 1.0;
  return solve_absorbing(killed, q)[p];
}

double partition_function(const SquareMatrix& transition, double beta, std::size_t p,
                          std::size_t q) {
  return first_arrival_partition(killed_weights(transition, beta), p, q);
}

SquareMatrix partition_matrix(const SquareMatrix& killed) {
  const std::size_t n = killed.size();
  SquareMatrix z(n);
  for (std::size_t i = 0; i < n; ++i) z(i, i) = 1.0;

  for (const auto& comp : components(killed)) {
    const std::size_t m = comp.size();
    if (m == 1) continue;
    SquareMatrix local(m);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) local(i, j) = killed(comp[i], comp[j]);
    }
    // Transient iff every state can reach a state that leaks mass.
    std::vector<char> transient(m, 0);
    std::deque<std::size_t> queue;
    for (std::size_t i = 0; i < m; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < m; ++j) sum += local(i, j);
      if (sum < 1.0 - 1e-12) {
        transient[i] = 1;
        queue.push_back(i);
      }
    }
    while (!queue.empty()) {
      std::size_t v = queue.front();
      queue.pop_front();
      for (std::size_t u = 0; u < m; ++u) {
        if (!transient[u] && local(u, v) > 0.0) {
          transient[u] = 1;
          queue.push_back(u);
        }
      }
    }
    const bool all_transient = std::all_of(transient.begin(), transient.end(), [](char c) { return c; });

    SquareMatrix local_z(m);
    if (all_transient) {
      const auto em = static_cast<Eigen::Index>(m);
      Eigen::MatrixXd a = Eigen::MatrixXd::Identity(em, em);
      for (Eigen::Index i = 0; i < em; ++i) {
        for (Eigen::Index j = 0; j < em; ++j) a(i, j) -= local(i, j);
      }
      Eigen::MatrixXd fundamental = a.partialPivLu().inverse();
      for (std::size_t q = 0; q < m; ++q) {
        auto live = reaches_target(local, q);
        const double nqq = fundamental(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(q));
        for (std::size_t p = 0; p < m; ++p) {
          if (p == q) {
            local_z(p, q) = 1.0;
          } else if (live[p]) {
            const double v = fundamental(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q)) / nqq;
            local_z(p, q) = std::clamp(v, 0.0, 1.0);
          }
        }
      }
    } else {
      for (std::size_t q = 0; q < m; ++q) {
        auto h = solve_absorbing(local, q);
        for (std::size_t p = 0; p < m; ++p) local_z(p, q) = h[p];
      }
    }
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) z(comp[i], comp[j]) = local_z(i, j);
    }
  }
  return z;
}

SquareMatrix free_energy_distance(const SquareMatrix& partition) {
  const std::size_t n = partition.size();
  auto directed = [&](std::size_t p, std::size_t q) {
    const double z = partition(p, q);
    return z > 0.0 ? -std::log(z) : kInfiniteDistance;
  };
  SquareMatrix d(n);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t q = p + 1; q < n; ++q) {
      const double sym = 0.5 * (directed(p, q) + directed(q, p));
      // -log(1) can come out as -0.0; keep the matrix non-negative.
      d(p, q) = d(q, p) = sym > 0.0 ? sym : 0.0;
    }
  }
  return d;
}

DistanceMatrix distance_matrix(const CommGraph& graph, const DistanceOptions& options) {
  auto r = correlation_matrix(graph, options.max_depth);
  auto w = transition_probabilities(r);
  auto z = partition_matrix(killed_weights(w, options.beta));
  return {graph.vertices(), free_energy_distance(z)};
}

}  // namespace commlat
