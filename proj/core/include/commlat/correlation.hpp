#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <vector>

#include "commlat/trace.hpp"

namespace commlat {

// Row-major dense n x n matrix of doubles.
class SquareMatrix {
 public:
  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}

  std::size_t size() const { return n_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const SquareMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

inline constexpr double kInfiniteDistance = std::numeric_limits<double>::infinity();

// Undirected communication graph; edge weight = number of messages exchanged
// in either direction. Vertices are kept sorted by rank.
class CommGraph {
 public:
  CommGraph() = default;
  explicit CommGraph(std::vector<Rank> vertices);

  static CommGraph from_trace(const Trace& trace);

  void add_messages(Rank a, Rank b, std::int64_t count = 1);

  const std::vector<Rank>& vertices() const { return vertices_; }
  std::size_t size() const { return vertices_.size(); }
  std::size_t index_of(Rank rank) const;
  bool contains(Rank rank) const { return index_.count(rank) != 0; }

  // Adjacency by vertex index, sorted ascending.
  const std::vector<std::size_t>& neighbors(std::size_t index) const { return adjacency_[index]; }
  // cs(p): ranks that exchanged at least one message with p.
  std::set<Rank> communication_set(Rank rank) const;

  std::int64_t weight(std::size_t i, std::size_t j) const;
  std::int64_t weight_between(const std::vector<Rank>& a, const std::vector<Rank>& b) const;
  std::int64_t total_weight() const;
  const std::map<std::pair<std::size_t, std::size_t>, std::int64_t>& edges() const { return weights_; }

 private:
  std::vector<Rank> vertices_;
  std::map<Rank, std::size_t> index_;
  std::vector<std::vector<std::size_t>> adjacency_;
  // Keyed by (min index, max index).
  std::map<std::pair<std::size_t, std::size_t>, std::int64_t> weights_;
};

struct TreeNode {
  Rank pid = 0;
  int depth = 0;    // root is 0, its children 1
  int parent = -1;  // index into CorrelationTree::nodes
};

// Breadth-first expansion of cs-neighbors; a child is skipped when its pid
// already appears among its ancestors.
struct CorrelationTree {
  Rank root = 0;
  std::vector<TreeNode> nodes;

  std::vector<std::size_t> children(std::size_t node) const;
};

inline constexpr int kDefaultMaxDepth = 4;

CorrelationTree build_tree(const CommGraph& graph, Rank root, int max_depth = kDefaultMaxDepth);

// R(p, q) = sum over tree nodes with pid q of 1 / depth^2.
double raw_correlation(const CorrelationTree& tree, Rank q);

// All rows of R at once by depth-first path enumeration (no tree is
// materialized). Entry (i, j) uses graph vertex indices.
SquareMatrix correlation_matrix(const CommGraph& graph, int max_depth = kDefaultMaxDepth);

// w_pq = R(p,q) / sum_k R(p,k). Zero rows stay zero.
SquareMatrix transition_probabilities(const SquareMatrix& correlation);

// Elementwise w^(1 + beta): the substochastic step weights of the killed walk.
SquareMatrix killed_weights(const SquareMatrix& transition, double beta);

// Z_pq over first-arrival paths, solved by making q absorbing. `killed`
// holds the substochastic step weights directly. Z_pp = 1; unreachable q
// gives 0.
double first_arrival_partition(const SquareMatrix& killed, std::size_t p, std::size_t q);

// Same with w -> w^(1+beta) applied first.
double partition_function(const SquareMatrix& transition, double beta, std::size_t p,
                          std::size_t q);

// All pairs. Uses the fundamental matrix N = (I - W)^-1 and Z_pq = N_pq / N_qq
// when the walk is transient everywhere, and falls back to per-target
// absorbing solves otherwise.
SquareMatrix partition_matrix(const SquareMatrix& killed);

struct DistanceMatrix {
  std::vector<Rank> labels;
  SquareMatrix values;

  std::size_t size() const { return labels.size(); }
  double operator()(std::size_t i, std::size_t j) const { return values(i, j); }
};

// D = -log Z, symmetrized; Z = 0 maps to +inf.
SquareMatrix free_energy_distance(const SquareMatrix& partition);

struct DistanceOptions {
  double beta = 1.0;
  int max_depth = kDefaultMaxDepth;
};

// Full pipeline from graph to symmetric distance. Isolated processes are at
// infinite distance from everyone else.
DistanceMatrix distance_matrix(const CommGraph& graph, const DistanceOptions& options = {});

}  // namespace commlat
