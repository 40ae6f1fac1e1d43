#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "kaclab/geom.hpp"

namespace kaclab {

// Finite measure on R^d as (points, weights). Weights may be signed (outputs
// of the collision operator, differences of measures); probability clouds
// have nonnegative weights summing to 1.
struct WeightedPointCloud {
    int dim = 0;
    std::vector<double> points;   // flat, size n*dim
    std::vector<double> weights;  // size n

    std::size_t size() const { return weights.size(); }
    Span point(std::size_t i) const { return Span(points.data() + i * dim, dim); }

    void push_back(Span p, double w) {
        points.insert(points.end(), p.begin(), p.end());
        weights.push_back(w);
    }

    double total_weight() const {
        double s = 0.0;
        for (double w : weights) s += w;
        return s;
    }

    bool is_probability(double tol = 1e-12) const;

    // Merge exactly-equal points, summing weights. Drops zero-weight atoms.
    void deduplicate();
};

// Empirical probability cloud from N velocities in a flat array.
WeightedPointCloud empirical_cloud(int dim, const std::vector<double>& flat);

// CSV exchange format: d coordinate columns + weight column, with a header
// line "x0,...,x{d-1},w".
void save_cloud_csv(const WeightedPointCloud& cloud, const std::string& path);
WeightedPointCloud load_cloud_csv(const std::string& path);

} // namespace kaclab
