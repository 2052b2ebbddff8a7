#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <queue>
#include <random>

#include "dlsim/errors.hpp"
#include "dlsim/network.hpp"

using namespace dlsim;

namespace {

// Independent all-pairs BFS oracle working from the raw edge list.
int bfs_diameter(int n, const std::vector<std::pair<int, int>>& edges) {
  std::vector<std::vector<int>> adj(n);
  for (auto [a, b] : edges) {
    adj[a - 1].push_back(b - 1);
    adj[b - 1].push_back(a - 1);
  }
  int diameter = 0;
  for (int s = 0; s < n; ++s) {
    std::vector<int> dist(n, -1);
    std::queue<int> q;
    dist[s] = 0;
    q.push(s);
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      for (int v : adj[u]) {
        if (dist[v] < 0) {
          dist[v] = dist[u] + 1;
          q.push(v);
        }
      }
    }
    for (int v = 0; v < n; ++v) diameter = std::max(diameter, dist[v]);
  }
  return std::max(diameter, 1);
}

std::vector<std::pair<int, int>> ring_edges(int n) {
  std::vector<std::pair<int, int>> edges;
  for (int i = 1; i <= n; ++i) edges.emplace_back(i, i % n + 1);
  return edges;
}

void check_doubly_stochastic(const Eigen::MatrixXd& w) {
  for (int i = 0; i < w.rows(); ++i) {
    CHECK(std::abs(w.row(i).sum() - 1.0) <= 1e-12);
    CHECK(std::abs(w.col(i).sum() - 1.0) <= 1e-12);
  }
  CHECK((w - w.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

}  // namespace

TEST_CASE("single node: connected, diameter 1") {
  auto topo = build_topology(1, {});
  CHECK(topo.connected);
  CHECK(topo.diameter == 1);
  CHECK(topo.neighbors[0] == std::vector<int>{0});
}

TEST_CASE("path of 4 nodes has diameter 3") {
  auto topo = build_topology(4, {{1, 2}, {2, 3}, {3, 4}});
  CHECK(topo.connected);
  CHECK(topo.diameter == 3);
}

TEST_CASE("6-ring diameter matches the BFS oracle") {
  auto edges = ring_edges(6);
  auto topo = build_topology(6, edges);
  CHECK(topo.connected);
  CHECK(topo.diameter == bfs_diameter(6, edges));
  CHECK(topo.diameter == 3);
}

TEST_CASE("path diameters k-1 for k = 2..8") {
  for (int k = 2; k <= 8; ++k) {
    std::vector<std::pair<int, int>> edges;
    for (int i = 1; i < k; ++i) edges.emplace_back(i, i + 1);
    auto topo = build_topology(k, edges);
    CHECK(topo.diameter == k - 1);
    CHECK(topo.diameter == bfs_diameter(k, edges));
  }
}

TEST_CASE("invalid edges are rejected") {
  CHECK_THROWS_AS(build_topology(3, {{1, 4}}), ConfigError);
  CHECK_THROWS_AS(build_topology(3, {{0, 1}}), ConfigError);
  CHECK_THROWS_AS(build_topology(3, {{2, 2}}), ConfigError);
  CHECK_THROWS_AS(build_topology(3, {{1, 2}, {2, 1}}), ConfigError);
  CHECK_THROWS_AS(build_topology(0, {}), ConfigError);
}

TEST_CASE("disconnected graph is flagged but usable") {
  auto topo = build_topology(4, {{1, 2}, {3, 4}});
  CHECK_FALSE(topo.connected);
  auto w = metropolis_weights(topo);
  check_doubly_stochastic(w);
}

TEST_CASE("metropolis weights: 2-node path") {
  auto topo = build_topology(2, {{1, 2}});
  auto w = metropolis_weights(topo);
  CHECK(w(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(w(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(w(1, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(w(1, 1) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("metropolis weights: 3-node path") {
  auto topo = build_topology(3, {{1, 2}, {2, 3}});
  auto w = metropolis_weights(topo);
  CHECK(w(0, 1) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(w(1, 2) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(w(0, 0) == doctest::Approx(2.0 / 3).epsilon(1e-15));
  CHECK(w(1, 1) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(w(2, 2) == doctest::Approx(2.0 / 3).epsilon(1e-15));
  check_doubly_stochastic(w);
}

TEST_CASE("metropolis weights: 6-ring is uniform thirds") {
  auto topo = build_topology(6, ring_edges(6));
  auto w = metropolis_weights(topo);
  check_doubly_stochastic(w);
  for (int i = 0; i < 6; ++i) {
    CHECK(w(i, i) == doctest::Approx(1.0 / 3).epsilon(1e-15));
    for (int j : topo.neighbors[i]) {
      if (j != i) CHECK(w(i, j) == doctest::Approx(1.0 / 3).epsilon(1e-15));
    }
  }
  // Sparsity matches the edge set.
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      const bool neighbor = std::find(topo.neighbors[i].begin(), topo.neighbors[i].end(),
                                      j) != topo.neighbors[i].end();
      CHECK((w(i, j) > 0.0) == neighbor);
    }
  }
}

TEST_CASE("metropolis weights on random connected graphs stay doubly stochastic") {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 9);
    std::vector<std::pair<int, int>> edges;
    for (int i = 2; i <= n; ++i) {  // random spanning tree first
      edges.emplace_back(1 + static_cast<int>(rng() % (i - 1)), i);
    }
    for (int extra = 0; extra < n / 2; ++extra) {
      int a = 1 + static_cast<int>(rng() % n);
      int b = 1 + static_cast<int>(rng() % n);
      if (a == b) continue;
      auto canon = std::minmax(a, b);
      if (std::find(edges.begin(), edges.end(),
                    std::make_pair(canon.first, canon.second)) == edges.end()) {
        edges.emplace_back(canon);
      }
    }
    auto topo = build_topology(n, edges);
    REQUIRE(topo.connected);
    check_doubly_stochastic(metropolis_weights(topo));
  }
}

TEST_CASE("weight_power_floor basics") {
  Eigen::MatrixXd one(1, 1);
  one << 1.0;
  CHECK(weight_power_floor(one, 5) == 1.0);

  Eigen::MatrixXd half(2, 2);
  half << 0.5, 0.5, 0.5, 0.5;
  CHECK(weight_power_floor(half, 2) == doctest::Approx(0.5).epsilon(1e-15));

  CHECK_THROWS_AS(weight_power_floor(one, 0), ConfigError);
}

TEST_CASE("6-ring: W^3 minimum entry matches the dense oracle and is positive") {
  auto topo = build_topology(6, ring_edges(6));
  auto w = metropolis_weights(topo);
  const double floor3 = weight_power_floor(w, 3);
  Eigen::MatrixXd oracle = w * w * w;
  CHECK(floor3 == doctest::Approx(oracle.minCoeff()).epsilon(1e-15));
  CHECK(floor3 > 0.0);
  // Path counting on the ring: the rarest 3-step displacement is +-3,
  // reachable two ways out of 27 equally weighted paths.
  CHECK(floor3 == doctest::Approx(2.0 / 27.0).epsilon(1e-12));
}

TEST_CASE("connected topologies: min entry of W^m positive for m >= D_G") {
  const std::vector<std::vector<std::pair<int, int>>> cases = {
      ring_edges(6),
      {{1, 2}, {2, 3}, {3, 4}},
      {{1, 2}, {1, 3}, {1, 4}, {4, 5}},
  };
  const std::vector<int> nodes = {6, 4, 5};
  for (std::size_t c = 0; c < cases.size(); ++c) {
    auto topo = build_topology(nodes[c], cases[c]);
    REQUIRE(topo.connected);
    auto w = metropolis_weights(topo);
    for (int m = topo.diameter; m <= topo.diameter + 3; ++m) {
      CHECK(weight_power_floor(w, m) > 0.0);
    }
  }
}
