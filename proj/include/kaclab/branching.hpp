#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kaclab/cloud.hpp"
#include "kaclab/rng.hpp"

namespace kaclab {

// Signed branching population: each particle carries a velocity and a sign.
// Branching replaces (v, s) by {(v', s), (v*', s), (v*, -s)}, which conserves
// signed mass, momentum and energy exactly (v' + v*' - v* = v).
struct SignedParticleSystem {
    int dim = 0;
    std::vector<double> velocities;  // flat, size n*dim
    std::vector<int> signs;          // +1 / -1
    double time = 0.0;

    std::size_t size() const { return signs.size(); }
    Span velocity(std::size_t i) const { return Span(velocities.data() + i * dim, dim); }

    void push_back(Span v, int sign) {
        velocities.insert(velocities.end(), v.begin(), v.end());
        signs.push_back(sign);
    }

    // <f, Xi_t> over the signed empirical measure (unnormalised).
    double signed_sum(const std::function<double(Span)>& f) const;
    double signed_mass() const;
    // <1+|v|^2, |Xi_t|> over the total-variation measure.
    double abs_energy_mass() const;
};

// Piecewise-constant environment rho_t built from measure snapshots on a
// time grid. rho_t = clouds[i] for t in [times[i], times[i+1]).
struct Environment {
    int dim = 0;
    std::vector<double> times;
    std::vector<WeightedPointCloud> clouds;
    std::vector<double> lambda3_cache;

    std::size_t cell_at(double t) const;
    const WeightedPointCloud& at(double t) const { return clouds[cell_at(t)]; }
    // Integral of Lambda_3(rho_s) ds over [t0, t1] (piecewise-constant).
    double lambda3_integral(double t0, double t1) const;
    // z_t = 3 exp(8 int_0^t Lambda_3), the continuity envelope for f_st.
    double z_factor(double s, double t) const {
        return 3.0 * std::exp(8.0 * lambda3_integral(s, t));
    }

    // Fills the Lambda_3 cache and validates mass/energy normalization.
    void finalize(double tol = 1e-6);
};

Environment constant_environment(WeightedPointCloud rho);

// JSON header (grid times, d, cloud file names) + per-time CSV cloud files.
void save_environment(const Environment& env, const std::string& dir,
                      const std::string& name);
Environment load_environment(const std::string& json_path);

struct BranchConfig {
    std::size_t population_cap = 100000;
};

// Called on each branching event with the parent and the three replacement
// particles (signs: parent s -> {s, s, -s}).
using BranchObserver = std::function<void(Span parent, int sign, Span v_prime,
                                          Span v_star_prime, Span v_star)>;

struct BranchRunResult {
    unsigned long events = 0;
    bool truncated = false;  // hit the population cap; run must be discarded
};

// Evolve the system to t_end. Each particle branches at rate
// 2 * int |v - v*| rho_t(dv*); grid-cell boundaries resample the clocks.
BranchRunResult run_branching(SignedParticleSystem& sys, const Environment& env,
                              double t_end, Rng& rng, const BranchConfig& cfg = {},
                              const BranchObserver& on_event = nullptr);

struct FstEstimate {
    double estimate = 0.0;
    double se = 0.0;
    std::size_t n_trees = 0;
    double discard_fraction = 0.0;
    bool flagged = false;  // discard fraction above 1%
};

// Monte Carlo estimate of f_st(v0) = E <f, Xi_t> for trees started from a
// single +1 particle at v0 at time s.
FstEstimate estimate_fst(const std::function<double(Span)>& f, Span v0, double s,
                         double t, const Environment& env, std::size_t n_trees,
                         std::uint64_t seed, const BranchConfig& cfg = {});

// One-sided growth check: MC mean of <1+|v|^2, |Xi_t|> against the
// non-explosion envelope (1+|v0|^2) exp(8 int_0^t Lambda_3) + 3 SE.
struct GrowthCheck {
    double mc_mean = 0.0;
    double mc_se = 0.0;
    double bound = 0.0;
    bool ok = false;
};
GrowthCheck growth_bound_check(Span v0, double t, const Environment& env,
                               std::size_t n_trees, std::uint64_t seed,
                               const BranchConfig& cfg = {});

// Empirical sup norm and Lipschitz constant of ghat = f_st/(1+|v|^2) on a
// velocity mesh of (point, f_st estimate) records.
struct LipschitzProfile {
    double sup_norm = 0.0;
    double lipschitz_estimate = 0.0;
};
LipschitzProfile lipschitz_profile(const WeightedPointCloud& mesh_estimates);

// Poisson-initialized estimator of the flow derivative: Xi_0 is a Poisson
// random measure with +1 intensity theta_plus and -1 intensity theta_minus;
// returns the endpoint atoms of E(Xi_t) as a signed cloud (weights / n_runs).
struct FlowDerivativeResult {
    WeightedPointCloud xi_t;  // signed
    double discard_fraction = 0.0;
};
FlowDerivativeResult estimate_flow_derivative(const WeightedPointCloud& theta_plus,
                                              const WeightedPointCloud& theta_minus,
                                              const Environment& env, double t,
                                              std::size_t n_runs, std::uint64_t seed,
                                              const BranchConfig& cfg = {});

} // namespace kaclab
