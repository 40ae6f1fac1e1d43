#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "kaclab/cloud.hpp"
#include "kaclab/geom.hpp"
#include "kaclab/rng.hpp"

namespace kaclab {

// N labelled velocities in R^d with cached invariant sums. The caches are
// maintained incrementally by the jump process and refreshed from scratch
// every CACHE_REFRESH_EVENTS events to bound floating drift.
struct ParticleState {
    int dim = 0;
    std::vector<double> velocities;  // flat, size n*dim
    bool on_sphere = false;

    std::size_t size() const { return dim ? velocities.size() / dim : 0; }
    Span velocity(std::size_t i) const {
        return Span(velocities.data() + i * dim, dim);
    }
    double* velocity_mut(std::size_t i) { return velocities.data() + i * dim; }

    Vec mean_velocity() const;
    double mean_energy() const;  // mean of |v_i|^2

    // Checks the S_N membership invariants (mean velocity 0, mean energy 1).
    bool check_sphere(double tol = 1e-9) const;
};

constexpr unsigned long CACHE_REFRESH_EVENTS = 1u << 16;

struct MaxwellianSpec {
    int dim = 3;  // per-coordinate variance 1/dim, so <|v|^2> = 1
};

// Elastic collision: v' = (v + v* + sigma|v - v*|)/2, v*' = (v + v* - sigma|v - v*|)/2.
// sigma must be a unit vector (checked to 1e-12).
void collide(Span v, Span v_star, Span sigma, double* v_prime, double* v_star_prime);

// Uniform direction on S^{d-1}.
Vec sample_sigma(int dim, Rng& rng);

Vec maxwellian_sample(const MaxwellianSpec& spec, Rng& rng);
double maxwellian_density(const MaxwellianSpec& spec, Span v);

// Center by the sample mean and rescale so that the mean energy is 1
// (exact S_N membership). Throws on degenerate input (zero sample variance).
ParticleState project_to_boltzmann_sphere(int dim, const std::vector<double>& raw);

// Monte Carlo estimate of the collision operator Q(mu, mu) applied to a
// discrete measure: exact in the pair integrals, approximate only in sigma.
// Uses antithetic pairs (sigma, -sigma); sigma_draws is the number of
// antithetic pairs per ordered pair of atoms.
WeightedPointCloud collision_operator_apply(const WeightedPointCloud& mu,
                                            int sigma_draws, Rng& rng);

// <f, Q(mu, mu)> without materializing the output cloud.
double collision_operator_pairing(const WeightedPointCloud& mu,
                                  const std::function<double(Span)>& f,
                                  int sigma_draws, Rng& rng);

} // namespace kaclab
