#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kaclab/cloud.hpp"
#include "kaclab/kinetic.hpp"
#include "kaclab/rng.hpp"

namespace kaclab {

// A study's machine-readable outcome: JSON body plus a companion CSV table
// (one row per cell). Serialization is canonical so that identical
// (config, master seed) inputs produce byte-identical files.
struct StudyReport {
    std::string study;
    nlohmann::ordered_json parameters;
    nlohmann::ordered_json results;
    std::vector<std::string> table_header;
    std::vector<std::vector<double>> table;
    bool pass = true;
    std::vector<std::string> notes;

    nlohmann::ordered_json to_json() const;
    std::string json_text() const;
    // Writes <name>.json and <name>.csv under out_dir (atomic).
    void save(const std::string& out_dir, const std::string& name) const;
};

// Mean / SE / replica count for one study cell.
struct CellStat {
    double mean = 0.0;
    double se = 0.0;
    std::size_t n = 0;
};
CellStat summarize(const std::vector<double>& xs);

// OLS fit of y against x; ci_half = 2 * SE(slope).
struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    double ci_half = 0.0;
};
SlopeFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

// ---- initial data -------------------------------------------------------

// i.i.d. sample from mu0, centered and rescaled onto the Boltzmann sphere.
ParticleState chaotic_init(const std::function<Vec(Rng&)>& mu0_sampler,
                           std::size_t N, Rng& rng);

// Uniform Sigma on S^{d-1}; the 2^d coordinate reflections of Sigma each get
// N/2^d particles. Momentum 0 and energy 1 hold exactly. N % 2^d == 0.
ParticleState nonchaotic_init(std::size_t N, int d, Rng& rng);

// Exact sample of the uniform measure on the configuration sphere:
// i.i.d. standard Gaussians, centered, rescaled to mean energy 1.
ParticleState equilibrium_sample(std::size_t N, int d, Rng& rng);

// Radial Pareto velocity: uniform direction, radius with tail index alpha
// (moments finite strictly below alpha).
Vec pareto_radial_sample(int d, double alpha, Rng& rng);

WeightedPointCloud state_cloud(const ParticleState& state);

// ---- reference ensembles ------------------------------------------------

// Pooled empirical measure proxy for the limit flow: `runs` independent
// chaotic-init simulations at N = n_ref, pooled per grid time. Snapshots are
// cached as CSV in cache_dir keyed by (n_ref, runs, seed, t).
struct ReferenceSpec {
    std::size_t n_ref = 16384;
    std::size_t runs = 8;
    std::uint64_t seed = 7;
    std::string cache_dir;
};
std::vector<WeightedPointCloud> reference_ensemble(int dim, const ReferenceSpec& spec,
                                                   const std::vector<double>& times);

// Split-half noise floor: witness-LP distance between the pools of the first
// and second halves of the reference runs.
double reference_split_error(int dim, const ReferenceSpec& spec, double t,
                             std::size_t witness_sample);

// ---- studies ------------------------------------------------------------

struct ConvergenceConfig {
    int dim = 3;
    std::vector<std::size_t> N_list = {128, 256, 512, 1024, 2048};
    std::vector<double> t_grid = {1.0};
    std::size_t replicas = 200;
    ReferenceSpec reference;
    std::uint64_t seed = 1;
    int J = 8, L = 10;
    std::size_t witness_sample = 256;
    // dyadic upper bounds are sampled on this many replicas per cell
    std::size_t bracket_replicas = 2;
};

// Distance-to-flow decay in N at fixed times; fits the log-log slope.
StudyReport convergence_study(const ConvergenceConfig& cfg);

// max over the time grid of E[W] against its value at the first grid time.
StudyReport uniform_time_study(const ConvergenceConfig& cfg);

struct BaselineConfig {
    int dim = 3;
    std::vector<std::size_t> N_list = {128, 256, 512, 1024, 2048, 4096};
    std::vector<std::size_t> replicas_list = {64, 32, 16, 8, 4, 2};
    std::uint64_t seed = 1;
};

// E[W1] between a chaotic-init cloud and an independent Maxwellian sample of
// the same size; sampling rate N^{-1/d} for the initial data.
StudyReport baseline_rate_study(const BaselineConfig& cfg);

struct MomentConfig {
    int dim = 3;
    std::size_t N = 512;
    std::vector<double> t_grid = {0.02, 0.05, 0.1};
    std::size_t replicas = 8;
    double tail_index = 3.0;  // finite Lambda_q for q < 3, infinite Lambda_4 at t=0
    std::uint64_t seed = 1;
};

// Moment production from a heavy-tailed init; per-event jump-bound and
// correlation-inequality checks along the trajectories.
StudyReport moment_study(const MomentConfig& cfg);

struct RecurrenceConfig {
    std::size_t N = 4;
    int d = 3;
    unsigned long min_events = 10000000;
    std::size_t quantile_samples = 1000000;
    double occupation_target = 0.01;
    std::uint64_t seed = 1;
};

// Threshold calibration from exact equilibrium samples, then half-window
// occupation statistics of the high-f region along one long trajectory.
StudyReport recurrence_study(const RecurrenceConfig& cfg);

struct RelaxationConfig {
    std::size_t N = 256;
    int d = 3;
    std::vector<double> t_grid = {0.0, 0.5, 1.0, 2.0, 4.0, 8.0};
    std::size_t replicas = 64;
    std::size_t eq_samples = 20000;
    std::string init = "nonchaotic";  // or "equilibrium"
    std::uint64_t seed = 1;
};

// Panel of test-function means vs their equilibrium values; reports the decay
// of the max discrepancy and a fitted exponential rate (logged, not asserted).
StudyReport relaxation_study(const RelaxationConfig& cfg);

struct ChaosConfig {
    std::size_t N = 256;
    int dim = 3;
    double t = 1.0;
    std::size_t replicas = 1000;
    std::string init = "maxwellian";  // or "nonchaotic"
    std::uint64_t seed = 1;
};

// Two-marginal chaos diagnostic: W1 in R^{2d} between the (v1, v2) cloud
// across replicas and a product of independent one-particle clouds.
StudyReport chaos_diagnostic(const ChaosConfig& cfg);

} // namespace kaclab
