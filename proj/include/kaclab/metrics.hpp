#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "kaclab/cloud.hpp"
#include "kaclab/rng.hpp"

namespace kaclab {

// k-th moment weight <(1+|x|^2)^(k/2), mu>. Defined for measures only:
// signed input is rejected.
double lambda_k(const WeightedPointCloud& mu, double k);

// Correlation inequality Lambda_{k1} * Lambda_{k2} <= Lambda_{k1+k2}
// (with 1e-12 slack), for k1, k2 >= 2.
bool correlation_check(const WeightedPointCloud& mu, double k1, double k2);

// w_i -> w_i / (1 + |x_i|^2), so that W1(mu, nu) = W(reweight mu, reweight nu).
WeightedPointCloud reweight(const WeightedPointCloud& mu);

// Feasible dual point for the weighted metric: sample points x_i with values
// g_i of g = f/(1+|v|^2), |g_i| <= 1 and |g_i - g_j| <= |x_i - x_j|. Extends
// to all of R^d by clipped McShane extension, which stays inside the test
// class, so pairings against the extension are certified lower bounds.
struct DualWitness {
    int dim = 0;
    std::vector<double> points;  // flat, size m*dim
    std::vector<double> values;  // g_i

    std::size_t size() const { return values.size(); }
    Span point(std::size_t i) const { return Span(points.data() + i * dim, dim); }

    // ghat(v) = clip(min_i [g_i + |v - x_i|], -1, 1)
    double evaluate_ghat(Span v) const;
    // <(1+|v|^2) ghat, mu>
    double pair(const WeightedPointCloud& mu) const;
    bool feasible(double tol = 1e-9) const;
};

struct MetricResult {
    double value = 0.0;
    DualWitness witness;
};

// Exact value of sup_{f} <f, mu - nu> over 1-bounded 1-Lipschitz g = f/(1+|v|^2),
// solved as an LP on the union support (dual of a flat-metric flow problem).
// Accepts signed clouds. Throws if the union support exceeds the cap.
MetricResult wasserstein_lp(const WeightedPointCloud& mu,
                            const WeightedPointCloud& nu,
                            std::size_t support_cap = 2000);

// Exact Monge-Kantorovich-Wasserstein distance with ground cost |x - y|
// between probability clouds. Balanced uniform clouds of equal size go
// through a dense assignment solver; the general case through min-cost flow.
double w1_ot(const WeightedPointCloud& mu, const WeightedPointCloud& nu);

struct DyadicBound {
    double upper_value = 0.0;    // includes the remainder
    double remainder = 0.0;
    std::size_t cells_scanned = 0;
};

// Hierarchical dyadic upper bound on the weighted metric. Annuli A_j of the
// cubes B_j = (-2^j, 2^j]^d for j <= J, refined by translates of B_{j-l} for
// l = 2..L. Guaranteed >= wasserstein_lp value.
DyadicBound dyadic_upper_bound(const WeightedPointCloud& mu,
                               const WeightedPointCloud& nu, int J, int L);

// Certified lower bound: dual LP on a subsample of the union support,
// McShane-extended and paired against the full supports.
MetricResult wasserstein_lower_witness(const WeightedPointCloud& mu,
                                       const WeightedPointCloud& nu,
                                       std::size_t sample_size, Rng& rng);

// Constants used by the dyadic bound; exposed for the property tests.
double dyadic_scale_constant(int dim);      // c_d
double dyadic_remainder_constant(int dim);  // c_d'

// Dyadic partition cell enumeration for small l (testing / inspection):
// number of cells of P_{j,l}, counted by scanning the integer tiling.
std::size_t dyadic_cell_count(int dim, int j, int l);

// Smallest j in [0, J] with v in B_j = (-2^j, 2^j]^d; J+1 if outside B_J.
int dyadic_annulus(Span v, int J);

// Per-axis cell indices (1..2^l) of v within the tiling of B_j at level l.
void dyadic_cell(Span v, int j, int l, std::int64_t* idx);

} // namespace kaclab
