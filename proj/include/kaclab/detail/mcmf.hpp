#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <queue>
#include <stdexcept>
#include <vector>

namespace kaclab::detail {

// Min-cost flow with real-valued supplies and capacities, solved by
// successive shortest paths with Dijkstra potentials. Costs must be
// nonnegative. Node potentials at termination are an optimal dual solution,
// which is what the metric code extracts as a witness.
class MinCostFlow {
public:
    explicit MinCostFlow(std::size_t n_nodes)
        : n_(n_nodes), supply_(n_nodes, 0.0), head_(n_nodes) {}

    void add_supply(std::size_t node, double amount) { supply_[node] += amount; }

    void add_edge(std::size_t from, std::size_t to, double capacity, double cost) {
        if (cost < 0.0) throw std::invalid_argument("MinCostFlow: negative cost");
        head_[from].push_back(edges_.size());
        edges_.push_back({to, capacity, cost, 0.0});
        head_[to].push_back(edges_.size());
        edges_.push_back({from, 0.0, -cost, 0.0});
    }

    // Returns the optimal cost. Throws if the supplies cannot be routed.
    double solve(double eps = 1e-12) {
        potential_.assign(n_, 0.0);
        double total_cost = 0.0;
        const double inf = std::numeric_limits<double>::infinity();

        while (true) {
            std::size_t source = n_;
            double max_excess = eps;
            for (std::size_t v = 0; v < n_; ++v) {
                if (supply_[v] > max_excess) { max_excess = supply_[v]; source = v; }
            }
            if (source == n_) break;

            // Dijkstra on reduced costs from the most loaded source.
            std::vector<double> dist(n_, inf);
            std::vector<int> prev_edge(n_, -1);
            std::vector<char> done(n_, 0);
            using Item = std::pair<double, std::size_t>;
            std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
            dist[source] = 0.0;
            heap.push({0.0, source});
            while (!heap.empty()) {
                auto [du, u] = heap.top();
                heap.pop();
                if (done[u]) continue;
                done[u] = 1;
                for (std::size_t e : head_[u]) {
                    const Edge& ed = edges_[e];
                    if (done[ed.to]) continue;
                    if (ed.capacity - ed.flow <= eps) continue;
                    // clamp: rounding in the potentials can push the reduced
                    // cost of a tree edge slightly negative, which would let a
                    // finalized node be re-labelled and corrupt the pred tree
                    const double rc =
                        std::max(0.0, ed.cost + potential_[u] - potential_[ed.to]);
                    if (du + rc < dist[ed.to] - 1e-15) {
                        dist[ed.to] = du + rc;
                        prev_edge[ed.to] = static_cast<int>(e);
                        heap.push({dist[ed.to], ed.to});
                    }
                }
            }

            // nearest reachable node with deficit
            std::size_t sink = n_;
            for (std::size_t v = 0; v < n_; ++v) {
                if (supply_[v] < -eps && dist[v] < inf &&
                    (sink == n_ || dist[v] < dist[sink]))
                    sink = v;
            }
            if (sink == n_)
                throw std::runtime_error("MinCostFlow: infeasible (no sink reachable)");

            for (std::size_t v = 0; v < n_; ++v)
                potential_[v] += std::min(dist[v], dist[sink]);

            double delta = std::min(supply_[source], -supply_[sink]);
            for (std::size_t v = sink; v != source;) {
                const Edge& ed = edges_[prev_edge[v]];
                delta = std::min(delta, ed.capacity - ed.flow);
                v = edges_[prev_edge[v] ^ 1].to;
            }
            for (std::size_t v = sink; v != source;) {
                Edge& ed = edges_[prev_edge[v]];
                ed.flow += delta;
                edges_[prev_edge[v] ^ 1].flow -= delta;
                total_cost += delta * ed.cost;
                v = edges_[prev_edge[v] ^ 1].to;
            }
            supply_[source] -= delta;
            supply_[sink] += delta;
        }
        return total_cost;
    }

    // Optimal dual value for a node (valid after solve()). Dual feasibility:
    // y_u - y_v <= cost(u,v) on every edge, with y = -potential.
    double dual(std::size_t node) const { return -potential_[node]; }

private:
    struct Edge {
        std::size_t to;
        double capacity;
        double cost;
        double flow;
    };
    std::size_t n_;
    std::vector<double> supply_;
    std::vector<std::vector<std::size_t>> head_;
    std::vector<Edge> edges_;
    std::vector<double> potential_;
};

// Exact linear assignment (Jonker-Volgenant shortest augmenting row paths)
// on a dense cost matrix, used as the fast path for balanced uniform optimal
// transport. Returns the minimal total cost.
double assignment_cost(const std::vector<double>& cost, std::size_t n);

} // namespace kaclab::detail
