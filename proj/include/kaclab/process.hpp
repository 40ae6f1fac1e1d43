#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kaclab/kinetic.hpp"

namespace kaclab {

// Maintained row sums r_i = sum_j |v_i - v_j| for rate-proportional pair
// selection. total = (1/N) sum_i r_i = sum_{i<j} 2|v_i - v_j|/N.
struct PairRateIndex {
    std::vector<double> row_sums;
    double total = 0.0;
    unsigned long events_since_refresh = 0;

    void rebuild(const ParticleState& state);
};

double total_rate(const ParticleState& state);

struct CollisionEvent {
    double time = 0.0;
    int i = 0, j = 0;  // i < j
    Vec sigma;
};

struct Trajectory {
    int dim = 0;
    std::uint64_t seed = 0;
    std::vector<CollisionEvent> events;
};

// One Gillespie step: exponential waiting time at the total rate, pair
// selection proportional to |v_i - v_j|, uniform sigma, collision applied,
// index updated incrementally in O(N). Returns nullopt if the state is
// absorbing (total rate 0).
std::optional<CollisionEvent> step(ParticleState& state, PairRateIndex& index,
                                   double& time, Rng& rng);

// Called at each requested grid time with the left-limit state.
using GridObserver =
    std::function<void(std::size_t grid_index, double t, const ParticleState&)>;
// Called after each applied collision; old_vi/old_vj are the pre-collision
// velocities of the colliding pair.
using EventObserver = std::function<void(const CollisionEvent&, Span old_vi,
                                         Span old_vj, const ParticleState& post)>;

struct SimulateResult {
    unsigned long event_count = 0;
    double final_time = 0.0;
};

SimulateResult simulate(ParticleState& state, double t_fin,
                        const std::vector<double>& grid, Rng& rng,
                        const GridObserver& on_grid = nullptr,
                        const EventObserver& on_event = nullptr,
                        Trajectory* log = nullptr);

// Finite-difference estimate of the generator action (1/h) E[<f, mu_h> - <f, mu_0>],
// to be compared with <f, Q(mu_0)>. Returns (estimate, standard error).
std::pair<double, double> generator_drift(const ParticleState& state0,
                                          const std::function<double(Span)>& f,
                                          double h, int replicas,
                                          std::uint64_t master_seed);

// Event log CSV: event_index,time,i,j,sigma_0..sigma_{d-1}.
void save_trajectory_csv(const Trajectory& traj, const std::string& path);
Trajectory load_trajectory_csv(const std::string& path);

// Snapshot CSV: "N,d,time,seed" header block followed by N rows of d columns.
void save_snapshot_csv(const ParticleState& state, double time,
                       std::uint64_t seed, const std::string& path);
ParticleState load_snapshot_csv(const std::string& path, double* time = nullptr,
                                std::uint64_t* seed = nullptr);

} // namespace kaclab
