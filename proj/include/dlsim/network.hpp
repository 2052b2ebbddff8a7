#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

namespace dlsim {

/// Undirected sensor communication graph. Node labels are 1..N in configs;
/// neighbor sets include the node itself (the diffusion sums run over
/// N_i ∪ {i}). Immutable after construction.
struct NetworkTopology {
  int node_count = 0;
  std::vector<std::pair<int, int>> edges;       // canonical (min,max), 1-based
  std::vector<std::vector<int>> neighbors;      // 0-based, self included, sorted
  bool connected = false;
  int diameter = 0;                             // D_G; 1 for a single node

  int degree(int node0) const {                 // edge degree, self excluded
    return static_cast<int>(neighbors[node0].size()) - 1;
  }
};

/// Builds the topology, computes neighbor sets, the connectivity flag and the
/// diameter (all-pairs BFS). Throws ConfigError on labels outside 1..N,
/// self-loops, or duplicate edges.
NetworkTopology build_topology(int node_count,
                               const std::vector<std::pair<int, int>>& edges);

/// Metropolis weights: a_ij = 1/(1 + max(d_i, d_j)) for neighbors i != j,
/// a_ii = 1 - sum_j a_ij. Symmetric and doubly stochastic by construction.
/// Well-defined for disconnected graphs too; the caller is expected to check
/// topology.connected (convergence guarantees need a connected graph).
Eigen::MatrixXd metropolis_weights(const NetworkTopology& topology);

/// Smallest entry of W^m. For a connected graph this is strictly positive
/// once m >= D_G, which is the floor a_min used by the error bounds.
double weight_power_floor(const Eigen::MatrixXd& weights, int m);

}  // namespace dlsim
