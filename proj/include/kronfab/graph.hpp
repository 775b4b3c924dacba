#pragma once

#include <queue>
#include <random>
#include <set>

#include "kronfab/kronfun.hpp"

namespace kronfab {

/// Uniform double in (0,1) built from the full 64-bit output of mt19937_64;
/// bit-reproducible across platforms (std::uniform_real_distribution is not).
inline double uniform01(std::mt19937_64& gen) {
  return (static_cast<double>(gen() >> 11) + 0.5) * 0x1.0p-53;
}

inline Vector uniform_vector(Index n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = uniform01(gen);
  return v;
}

/// Undirected simple graph: no self loops, no duplicate edges.
struct Graph {
  Index n = 0;
  std::vector<std::pair<Index, Index>> edges;  // i < j

  SparseMatrix adjacency() const {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(2 * edges.size());
    for (const auto& [i, j] : edges) {
      trip.emplace_back(i, j, 1.0);
      trip.emplace_back(j, i, 1.0);
    }
    SparseMatrix a(n, n);
    a.setFromTriplets(trip.begin(), trip.end());
    a.makeCompressed();
    return a;
  }

  std::vector<Index> degrees() const {
    std::vector<Index> d(n, 0);
    for (const auto& [i, j] : edges) {
      ++d[i];
      ++d[j];
    }
    return d;
  }

  bool connected() const {
    if (n == 0) return true;
    std::vector<std::vector<Index>> adj(n);
    for (const auto& [i, j] : edges) {
      adj[i].push_back(j);
      adj[j].push_back(i);
    }
    std::vector<char> seen(n, 0);
    std::queue<Index> q;
    q.push(0);
    seen[0] = 1;
    Index count = 1;
    while (!q.empty()) {
      const Index v = q.front();
      q.pop();
      for (Index w : adj[v])
        if (!seen[w]) {
          seen[w] = 1;
          ++count;
          q.push(w);
        }
    }
    return count == n;
  }
};

/// Preferential-attachment growth: start from a complete graph on d+1 nodes,
/// then attach each new node with d edges to distinct existing nodes chosen
/// with probability proportional to current degree. Deterministic given the
/// seed; connected by construction.
inline Graph gen_pref_graph(Index n, Index d = 2, std::uint64_t seed = 0) {
  if (d < 1) throw std::invalid_argument("gen_pref_graph: d must be >= 1");
  if (n < d + 1)
    throw std::invalid_argument("gen_pref_graph: n must be at least d + 1 = " + std::to_string(d + 1));
  Graph g;
  g.n = n;
  std::mt19937_64 gen(seed);
  std::vector<Index> endpoint_pool;  // one entry per edge endpoint: degree-weighted sampling
  for (Index i = 0; i <= d; ++i)
    for (Index j = i + 1; j <= d; ++j) {
      g.edges.emplace_back(i, j);
      endpoint_pool.push_back(i);
      endpoint_pool.push_back(j);
    }
  std::set<Index> targets;
  for (Index v = d + 1; v < n; ++v) {
    targets.clear();
    while (static_cast<Index>(targets.size()) < d) {
      const auto pick = static_cast<std::size_t>(uniform01(gen) * endpoint_pool.size());
      targets.insert(endpoint_pool[std::min(pick, endpoint_pool.size() - 1)]);
    }
    for (Index t : targets) {
      g.edges.emplace_back(std::min(t, v), std::max(t, v));
      endpoint_pool.push_back(t);
      endpoint_pool.push_back(v);
    }
  }
  return g;
}

/// Total communicability of the Cartesian product G x G: exp(A) 1 with
/// A the Kronecker sum of the adjacency matrix with itself. The returned
/// rank-one factor gives any product node's score as a product of two entries.
inline FactoredVector total_communicability(const Graph& g, Index m,
                                            const StructuredOptions& opts = {.tol = 1e-10}) {
  const LinOp a = LinOp::sparse(g.adjacency());
  const Vector ones = Vector::Ones(g.n);
  return exp_structured(a, ones, a, ones, m, opts).approx;
}

}  // namespace kronfab
