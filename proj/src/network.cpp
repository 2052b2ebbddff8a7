#include "dlsim/network.hpp"

#include <algorithm>
#include <queue>
#include <set>
#include <string>

#include "dlsim/errors.hpp"

namespace dlsim {

namespace {

// Single-source BFS distances; -1 marks unreachable nodes.
std::vector<int> bfs_distances(const NetworkTopology& topo, int source0) {
  std::vector<int> dist(topo.node_count, -1);
  std::queue<int> frontier;
  dist[source0] = 0;
  frontier.push(source0);
  while (!frontier.empty()) {
    int u = frontier.front();
    frontier.pop();
    for (int v : topo.neighbors[u]) {
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        frontier.push(v);
      }
    }
  }
  return dist;
}

}  // namespace

NetworkTopology build_topology(int node_count,
                               const std::vector<std::pair<int, int>>& edges) {
  if (node_count <= 0) {
    throw ConfigError("node_count must be positive, got " +
                      std::to_string(node_count));
  }
  NetworkTopology topo;
  topo.node_count = node_count;
  topo.neighbors.resize(node_count);

  std::set<std::pair<int, int>> seen;
  for (auto [a, b] : edges) {
    if (a < 1 || a > node_count || b < 1 || b > node_count) {
      throw ConfigError("edge (" + std::to_string(a) + "," + std::to_string(b) +
                        ") has a label outside 1.." + std::to_string(node_count));
    }
    if (a == b) {
      throw ConfigError("self-loop on node " + std::to_string(a) +
                        "; self membership in N_i is implicit");
    }
    auto canon = std::minmax(a, b);
    if (!seen.insert(canon).second) {
      throw ConfigError("duplicate edge (" + std::to_string(canon.first) + "," +
                        std::to_string(canon.second) + ")");
    }
    topo.edges.emplace_back(canon);
    topo.neighbors[a - 1].push_back(b - 1);
    topo.neighbors[b - 1].push_back(a - 1);
  }
  std::sort(topo.edges.begin(), topo.edges.end());
  for (int i = 0; i < node_count; ++i) {
    topo.neighbors[i].push_back(i);  // Metropolis self-weight needs i in N_i
    std::sort(topo.neighbors[i].begin(), topo.neighbors[i].end());
  }

  // Connectivity and diameter by all-pairs BFS. A single node gets D_G = 1 so
  // the excitation sums (which run to n - D_G) degenerate to the single-agent
  // condition.
  topo.connected = true;
  int diameter = 0;
  for (int s = 0; s < node_count; ++s) {
    auto dist = bfs_distances(topo, s);
    for (int v = 0; v < node_count; ++v) {
      if (dist[v] < 0) {
        topo.connected = false;
      } else {
        diameter = std::max(diameter, dist[v]);
      }
    }
  }
  topo.diameter = std::max(diameter, 1);
  return topo;
}

Eigen::MatrixXd metropolis_weights(const NetworkTopology& topology) {
  const int n = topology.node_count;
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j : topology.neighbors[i]) {
      if (j == i) continue;
      w(i, j) = 1.0 / (1.0 + std::max(topology.degree(i), topology.degree(j)));
    }
  }
  for (int i = 0; i < n; ++i) {
    w(i, i) = 1.0 - w.row(i).sum();
  }
  return w;
}

double weight_power_floor(const Eigen::MatrixXd& weights, int m) {
  if (m < 1) {
    throw ConfigError("weight_power_floor requires m >= 1");
  }
  Eigen::MatrixXd power = weights;
  for (int k = 1; k < m; ++k) {
    power = (power * weights).eval();
  }
  return power.minCoeff();
}

}  // namespace dlsim
