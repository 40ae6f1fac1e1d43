#include "kaclab/process.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace kaclab {

void PairRateIndex::rebuild(const ParticleState& state) {
    const std::size_t n = state.size();
    const double* flat = state.velocities.data();
    row_sums.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const Span vi = state.velocity(i);
        double r = 0.0;
        for (std::size_t j = 0; j < i; ++j) {
            const double dij = dist_flat(flat, j, vi);
            r += dij;
            row_sums[j] += dij;
        }
        row_sums[i] += r;
    }
    total = 0.0;
    for (double r : row_sums) total += r;
    total /= static_cast<double>(n);
    events_since_refresh = 0;
}

double total_rate(const ParticleState& state) {
    if (state.size() < 2) throw std::invalid_argument("total_rate: need N >= 2");
    PairRateIndex idx;
    idx.rebuild(state);
    return idx.total;
}

namespace {

// Selects the pair, samples sigma, applies the collision, and updates the
// index in O(N). The waiting time is the caller's business. old_vi/old_vj
// receive the pre-collision velocities of the pair.
CollisionEvent execute_event(ParticleState& state, PairRateIndex& index,
                             double time, Rng& rng, Vec& old_vi, Vec& old_vj) {
    const std::size_t n = state.size();
    const int d = state.dim;

    // particle i proportional to r_i
    const double row_total = index.total * static_cast<double>(n);
    const double u = rng.uniform01() * row_total;
    std::size_t i = n - 1;
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        acc += index.row_sums[k];
        if (u < acc) { i = k; break; }
    }
    // partner j proportional to |v_i - v_j| within row i
    const double* flat = state.velocities.data();
    const Span vi_pre = state.velocity(i);
    std::size_t j = i;
    const double u2 = rng.uniform01() * index.row_sums[i];
    acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (k == i) continue;
        acc += dist_flat(flat, k, vi_pre);
        if (u2 < acc) { j = k; break; }
    }
    if (j == i) {
        // ran off the end (floating slack in the row sum): take the last k != i
        j = (i == n - 1) ? n - 2 : n - 1;
    }

    CollisionEvent ev;
    ev.time = time;
    ev.i = static_cast<int>(std::min(i, j));
    ev.j = static_cast<int>(std::max(i, j));
    ev.sigma = sample_sigma(d, rng);

    const std::size_t a = ev.i, b = ev.j;
    old_vi.assign(state.velocity(a).begin(), state.velocity(a).end());
    old_vj.assign(state.velocity(b).begin(), state.velocity(b).end());
    Vec new_va(d), new_vb(d);
    collide(Span(old_vi), Span(old_vj), Span(ev.sigma), new_va.data(), new_vb.data());

    // Only rows a and b are rebuilt; every other row changes by the four
    // distance terms against the pair.
    double ra = 0.0, rb = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (k == a || k == b) continue;
        const Span vk = state.velocity(k);
        index.row_sums[k] += dist(vk, Span(new_va)) + dist(vk, Span(new_vb)) -
                             dist(vk, Span(old_vi)) - dist(vk, Span(old_vj));
        ra += dist(vk, Span(new_va));
        rb += dist(vk, Span(new_vb));
    }
    const double dab = dist(Span(new_va), Span(new_vb));
    index.row_sums[a] = ra + dab;
    index.row_sums[b] = rb + dab;

    double* pa = state.velocity_mut(a);
    double* pb = state.velocity_mut(b);
    for (int k = 0; k < d; ++k) { pa[k] = new_va[k]; pb[k] = new_vb[k]; }

    if (++index.events_since_refresh >= CACHE_REFRESH_EVENTS) {
        index.rebuild(state);
    } else {
        double t = 0.0;
        for (double r : index.row_sums) t += r;
        index.total = t / static_cast<double>(n);
    }
    return ev;
}

} // namespace

std::optional<CollisionEvent> step(ParticleState& state, PairRateIndex& index,
                                   double& time, Rng& rng) {
    if (index.total <= 0.0) return std::nullopt;
    time += rng.exponential(index.total);
    Vec old_vi, old_vj;
    return execute_event(state, index, time, rng, old_vi, old_vj);
}

SimulateResult simulate(ParticleState& state, double t_fin,
                        const std::vector<double>& grid, Rng& rng,
                        const GridObserver& on_grid, const EventObserver& on_event,
                        Trajectory* log) {
    if (t_fin < 0.0) throw std::invalid_argument("simulate: t_fin must be >= 0");
    PairRateIndex index;
    index.rebuild(state);
    double time = 0.0;
    std::size_t next_grid = 0;
    SimulateResult result;
    Vec old_vi, old_vj;
    if (log) log->dim = state.dim;

    while (true) {
        // peek the next event time before emitting grid observations, so grid
        // points coinciding with an event time see the left-limit state
        double next_event = (index.total > 0.0)
                                ? time + rng.exponential(index.total)
                                : t_fin + 1.0;
        while (next_grid < grid.size() &&
               grid[next_grid] <= std::min(next_event, t_fin)) {
            if (on_grid) on_grid(next_grid, grid[next_grid], state);
            ++next_grid;
        }
        if (next_event > t_fin) break;

        time = next_event;
        const CollisionEvent ev = execute_event(state, index, time, rng, old_vi, old_vj);
        ++result.event_count;
        if (log) log->events.push_back(ev);
        if (on_event) on_event(ev, Span(old_vi), Span(old_vj), state);
    }
    result.final_time = t_fin;
    return result;
}

std::pair<double, double> generator_drift(const ParticleState& state0,
                                          const std::function<double(Span)>& f,
                                          double h, int replicas,
                                          std::uint64_t master_seed) {
    if (replicas < 2) throw std::invalid_argument("generator_drift: need replicas >= 2");
    const std::size_t n = state0.size();
    double f0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) f0 += f(state0.velocity(i));
    f0 /= static_cast<double>(n);

    double sum = 0.0, sum_sq = 0.0;
    for (int r = 0; r < replicas; ++r) {
        ParticleState state = state0;
        Rng rng(derive_seed(master_seed, static_cast<std::uint64_t>(r), 0));
        simulate(state, h, {}, rng);
        double fh = 0.0;
        for (std::size_t i = 0; i < n; ++i) fh += f(state.velocity(i));
        fh /= static_cast<double>(n);
        const double x = (fh - f0) / h;
        sum += x;
        sum_sq += x * x;
    }
    const double mean = sum / replicas;
    const double var = std::max(0.0, sum_sq / replicas - mean * mean);
    const double se = std::sqrt(var / (replicas - 1));
    return {mean, se};
}

void save_trajectory_csv(const Trajectory& traj, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "event_index,time,i,j";
    for (int k = 0; k < traj.dim; ++k) out << ",sigma_" << k;
    out << "\n";
    char buf[32];
    for (std::size_t e = 0; e < traj.events.size(); ++e) {
        const auto& ev = traj.events[e];
        std::snprintf(buf, sizeof buf, "%.17g", ev.time);
        out << e << "," << buf << "," << ev.i << "," << ev.j;
        for (double s : ev.sigma) {
            std::snprintf(buf, sizeof buf, "%.17g", s);
            out << "," << buf;
        }
        out << "\n";
    }
}

Trajectory load_trajectory_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty trajectory file: " + path);
    int ncols = 1;
    for (char c : line)
        if (c == ',') ++ncols;
    Trajectory traj;
    traj.dim = ncols - 4;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string field;
        std::vector<double> vals;
        while (std::getline(row, field, ',')) vals.push_back(std::stod(field));
        CollisionEvent ev;
        ev.time = vals[1];
        ev.i = static_cast<int>(vals[2]);
        ev.j = static_cast<int>(vals[3]);
        ev.sigma.assign(vals.begin() + 4, vals.end());
        traj.events.push_back(std::move(ev));
    }
    return traj;
}

void save_snapshot_csv(const ParticleState& state, double time,
                       std::uint64_t seed, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", time);
    out << "N,d,time,seed\n"
        << state.size() << "," << state.dim << "," << buf << "," << seed << "\n";
    for (int k = 0; k < state.dim; ++k) out << (k ? ",v" : "v") << k;
    out << "\n";
    for (std::size_t i = 0; i < state.size(); ++i) {
        const Span v = state.velocity(i);
        for (int k = 0; k < state.dim; ++k) {
            std::snprintf(buf, sizeof buf, "%.17g", v[k]);
            out << (k ? "," : "") << buf;
        }
        out << "\n";
    }
}

ParticleState load_snapshot_csv(const std::string& path, double* time,
                                std::uint64_t* seed) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string line;
    std::getline(in, line);  // header names
    if (!std::getline(in, line)) throw std::runtime_error("bad snapshot file: " + path);
    std::stringstream hdr(line);
    std::string field;
    std::getline(hdr, field, ',');
    const std::size_t n = std::stoul(field);
    std::getline(hdr, field, ',');
    const int d = std::stoi(field);
    std::getline(hdr, field, ',');
    if (time) *time = std::stod(field);
    std::getline(hdr, field, ',');
    if (seed) *seed = std::stoull(field);
    std::getline(in, line);  // column names
    ParticleState state;
    state.dim = d;
    state.velocities.reserve(n * d);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream row(line);
        while (std::getline(row, field, ','))
            state.velocities.push_back(std::stod(field));
    }
    if (state.velocities.size() != n * static_cast<std::size_t>(d))
        throw std::runtime_error("snapshot row count mismatch: " + path);
    return state;
}

} // namespace kaclab
