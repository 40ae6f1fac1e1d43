#include "kaclab.h"

#include <cstring>
#include <filesystem>
#include <string>

#include "kaclab/branching.hpp"
#include "kaclab/cloud.hpp"
#include "kaclab/experiments.hpp"
#include "kaclab/io.hpp"
#include "kaclab/kinetic.hpp"
#include "kaclab/metrics.hpp"
#include "kaclab/process.hpp"
#include "kaclab/rng.hpp"

namespace fs = std::filesystem;

struct kaclab_rng {
    kaclab::Rng rng;
};
struct kaclab_state {
    kaclab::ParticleState state;
};
struct kaclab_cloud {
    kaclab::WeightedPointCloud cloud;
};

namespace {

thread_local std::string g_last_error;

template <typename Fn>
kaclab_status guarded(Fn&& fn, kaclab_status io_kind = KACLAB_ERR_RUNTIME) {
    try {
        fn();
        g_last_error.clear();
        return KACLAB_OK;
    } catch (const kaclab::ConfigError& e) {
        g_last_error = e.what();
        return KACLAB_ERR_CONFIG;
    } catch (const std::invalid_argument& e) {
        g_last_error = e.what();
        return KACLAB_ERR_INVALID_ARGUMENT;
    } catch (const fs::filesystem_error& e) {
        g_last_error = e.what();
        return KACLAB_ERR_IO;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return io_kind;
    }
}

kaclab_status fail_arg(const char* msg) {
    g_last_error = msg;
    return KACLAB_ERR_INVALID_ARGUMENT;
}

} // namespace

extern "C" {

const char* kaclab_last_error(void) { return g_last_error.c_str(); }

uint64_t kaclab_derive_seed(uint64_t master, uint64_t replica_index,
                            uint64_t stream_tag) {
    return kaclab::derive_seed(master, replica_index, stream_tag);
}

kaclab_status kaclab_rng_create(uint64_t seed, kaclab_rng** out) {
    if (!out) return fail_arg("rng_create: out is NULL");
    return guarded([&] { *out = new kaclab_rng{kaclab::Rng(seed)}; });
}

void kaclab_rng_destroy(kaclab_rng* rng) { delete rng; }

kaclab_status kaclab_state_create(const char* init_kind, size_t n, int d,
                                  kaclab_rng* rng, kaclab_state** out) {
    if (!init_kind || !rng || !out) return fail_arg("state_create: NULL argument");
    return guarded([&] {
        const std::string kind(init_kind);
        kaclab::ParticleState st;
        if (kind == "maxwellian") {
            st = kaclab::chaotic_init(
                [d](kaclab::Rng& r) {
                    return kaclab::maxwellian_sample(kaclab::MaxwellianSpec{d}, r);
                },
                n, rng->rng);
        } else if (kind == "pareto") {
            st = kaclab::chaotic_init(
                [d](kaclab::Rng& r) {
                    return kaclab::pareto_radial_sample(d, 3.0, r);
                },
                n, rng->rng);
        } else if (kind == "nonchaotic") {
            st = kaclab::nonchaotic_init(n, d, rng->rng);
        } else if (kind == "equilibrium") {
            st = kaclab::equilibrium_sample(n, d, rng->rng);
        } else {
            throw std::invalid_argument("state_create: unknown init kind '" +
                                        kind + "'");
        }
        *out = new kaclab_state{std::move(st)};
    });
}

kaclab_status kaclab_state_load_csv(const char* path, kaclab_state** out) {
    if (!path || !out) return fail_arg("state_load_csv: NULL argument");
    return guarded(
        [&] { *out = new kaclab_state{kaclab::load_snapshot_csv(path)}; },
        KACLAB_ERR_IO);
}

kaclab_status kaclab_state_save_csv(const kaclab_state* state, double time,
                                    uint64_t seed, const char* path) {
    if (!state || !path) return fail_arg("state_save_csv: NULL argument");
    return guarded([&] { kaclab::save_snapshot_csv(state->state, time, seed, path); },
                   KACLAB_ERR_IO);
}

size_t kaclab_state_size(const kaclab_state* state) {
    return state ? state->state.size() : 0;
}

int kaclab_state_dim(const kaclab_state* state) {
    return state ? state->state.dim : 0;
}

kaclab_status kaclab_state_velocities(const kaclab_state* state, double* buf,
                                      size_t len) {
    if (!state || !buf) return fail_arg("state_velocities: NULL argument");
    if (len < state->state.velocities.size())
        return fail_arg("state_velocities: buffer too small");
    std::memcpy(buf, state->state.velocities.data(),
                state->state.velocities.size() * sizeof(double));
    return KACLAB_OK;
}

void kaclab_state_destroy(kaclab_state* state) { delete state; }

kaclab_status kaclab_simulate(kaclab_state* state, double t_fin, kaclab_rng* rng,
                              const char* trajectory_csv,
                              unsigned long* events_out) {
    if (!state || !rng) return fail_arg("simulate: NULL argument");
    return guarded([&] {
        kaclab::Trajectory log;
        log.dim = state->state.dim;
        kaclab::Trajectory* logp = trajectory_csv ? &log : nullptr;
        const auto res = kaclab::simulate(state->state, t_fin, {}, rng->rng,
                                          nullptr, nullptr, logp);
        if (trajectory_csv) kaclab::save_trajectory_csv(log, trajectory_csv);
        if (events_out) *events_out = res.event_count;
    });
}

kaclab_status kaclab_cloud_load_csv(const char* path, kaclab_cloud** out) {
    if (!path || !out) return fail_arg("cloud_load_csv: NULL argument");
    return guarded([&] { *out = new kaclab_cloud{kaclab::load_cloud_csv(path)}; },
                   KACLAB_ERR_IO);
}

kaclab_status kaclab_cloud_save_csv(const kaclab_cloud* cloud, const char* path) {
    if (!cloud || !path) return fail_arg("cloud_save_csv: NULL argument");
    return guarded([&] { kaclab::save_cloud_csv(cloud->cloud, path); },
                   KACLAB_ERR_IO);
}

kaclab_status kaclab_cloud_from_state(const kaclab_state* state,
                                      kaclab_cloud** out) {
    if (!state || !out) return fail_arg("cloud_from_state: NULL argument");
    return guarded(
        [&] { *out = new kaclab_cloud{kaclab::state_cloud(state->state)}; });
}

size_t kaclab_cloud_size(const kaclab_cloud* cloud) {
    return cloud ? cloud->cloud.size() : 0;
}

int kaclab_cloud_dim(const kaclab_cloud* cloud) {
    return cloud ? cloud->cloud.dim : 0;
}

void kaclab_cloud_destroy(kaclab_cloud* cloud) { delete cloud; }

kaclab_status kaclab_lambda_k(const kaclab_cloud* mu, double k, double* value) {
    if (!mu || !value) return fail_arg("lambda_k: NULL argument");
    return guarded([&] { *value = kaclab::lambda_k(mu->cloud, k); });
}

kaclab_status kaclab_wasserstein_lp(const kaclab_cloud* mu,
                                    const kaclab_cloud* nu, size_t support_cap,
                                    double* value) {
    if (!mu || !nu || !value) return fail_arg("wasserstein_lp: NULL argument");
    return guarded([&] {
        *value = kaclab::wasserstein_lp(mu->cloud, nu->cloud, support_cap).value;
    });
}

kaclab_status kaclab_w1_ot(const kaclab_cloud* mu, const kaclab_cloud* nu,
                           double* value) {
    if (!mu || !nu || !value) return fail_arg("w1_ot: NULL argument");
    return guarded([&] { *value = kaclab::w1_ot(mu->cloud, nu->cloud); });
}

kaclab_status kaclab_dyadic_upper_bound(const kaclab_cloud* mu,
                                        const kaclab_cloud* nu, int J, int L,
                                        double* upper, double* remainder) {
    if (!mu || !nu || !upper) return fail_arg("dyadic_upper_bound: NULL argument");
    return guarded([&] {
        const auto b = kaclab::dyadic_upper_bound(mu->cloud, nu->cloud, J, L);
        *upper = b.upper_value;
        if (remainder) *remainder = b.remainder;
    });
}

kaclab_status kaclab_lower_witness(const kaclab_cloud* mu,
                                   const kaclab_cloud* nu, size_t sample_size,
                                   uint64_t seed, double* value) {
    if (!mu || !nu || !value) return fail_arg("lower_witness: NULL argument");
    return guarded([&] {
        kaclab::Rng rng(seed);
        *value = kaclab::wasserstein_lower_witness(mu->cloud, nu->cloud,
                                                   sample_size, rng)
                     .value;
    });
}

kaclab_status kaclab_growth_bound_check(const char* env_json, const double* v0,
                                        int d, double t, size_t n_trees,
                                        uint64_t seed, int* ok, double* mc_mean,
                                        double* bound) {
    if (!env_json || !v0 || !ok) return fail_arg("growth_bound_check: NULL argument");
    return guarded([&] {
        const kaclab::Environment env = kaclab::load_environment(env_json);
        const auto res = kaclab::growth_bound_check(
            kaclab::Span(v0, static_cast<std::size_t>(d)), t, env, n_trees, seed);
        *ok = res.ok ? 1 : 0;
        if (mc_mean) *mc_mean = res.mc_mean;
        if (bound) *bound = res.bound;
    });
}

kaclab_status kaclab_estimate_fst_tanh(const char* env_json, const double* v0,
                                       int d, double s, double t,
                                       size_t n_trees, uint64_t seed,
                                       double* estimate, double* se) {
    if (!env_json || !v0 || !estimate)
        return fail_arg("estimate_fst_tanh: NULL argument");
    return guarded([&] {
        const kaclab::Environment env = kaclab::load_environment(env_json);
        const auto f = [](kaclab::Span v) {
            return (1.0 + kaclab::norm2(v)) * std::tanh(v[0]);
        };
        const auto res = kaclab::estimate_fst(
            f, kaclab::Span(v0, static_cast<std::size_t>(d)), s, t, env, n_trees,
            seed);
        *estimate = res.estimate;
        if (se) *se = res.se;
    });
}

kaclab_status kaclab_run_study(const char* config_json, const char* out_dir,
                               const char* name) {
    if (!config_json || !out_dir || !name)
        return fail_arg("run_study: NULL argument");
    return guarded([&] {
        const kaclab::RunConfig cfg = kaclab::parse_config_text(config_json);
        kaclab::StudyReport rep;
        if (cfg.study == "convergence" || cfg.study == "uniform_time") {
            kaclab::ConvergenceConfig c;
            c.dim = cfg.d;
            c.N_list = cfg.N;
            c.t_grid = cfg.t_grid;
            c.replicas = cfg.replicas;
            c.reference.n_ref = cfg.n_ref;
            c.reference.runs = cfg.ref_runs;
            c.reference.seed = cfg.master_seed;
            c.reference.cache_dir = (fs::path(out_dir) / "ref_cache").string();
            c.seed = cfg.master_seed;
            c.J = cfg.J;
            c.L = cfg.L;
            c.witness_sample = cfg.witness_sample;
            rep = cfg.study == "convergence" ? kaclab::convergence_study(c)
                                             : kaclab::uniform_time_study(c);
        } else if (cfg.study == "baseline_rate") {
            kaclab::BaselineConfig c;
            c.dim = cfg.d;
            c.N_list = cfg.N;
            c.replicas_list.assign(cfg.N.size(), cfg.replicas);
            c.seed = cfg.master_seed;
            rep = kaclab::baseline_rate_study(c);
        } else if (cfg.study == "moments") {
            kaclab::MomentConfig c;
            c.dim = cfg.d;
            c.N = cfg.N.front();
            c.t_grid = cfg.t_grid;
            c.replicas = cfg.replicas;
            c.seed = cfg.master_seed;
            rep = kaclab::moment_study(c);
        } else if (cfg.study == "recurrence") {
            kaclab::RecurrenceConfig c;
            c.N = cfg.N.front();
            c.d = cfg.d;
            c.min_events = cfg.events;
            c.quantile_samples = cfg.quantile_samples;
            c.seed = cfg.master_seed;
            rep = kaclab::recurrence_study(c);
        } else if (cfg.study == "relaxation") {
            kaclab::RelaxationConfig c;
            c.N = cfg.N.front();
            c.d = cfg.d;
            c.t_grid = cfg.t_grid;
            c.replicas = cfg.replicas;
            c.init = cfg.init == "equilibrium" ? "equilibrium" : "nonchaotic";
            c.seed = cfg.master_seed;
            rep = kaclab::relaxation_study(c);
        } else if (cfg.study == "chaos") {
            kaclab::ChaosConfig c;
            c.N = cfg.N.front();
            c.dim = cfg.d;
            c.t = cfg.t_fin;
            c.replicas = cfg.replicas;
            c.init = cfg.init;
            c.seed = cfg.master_seed;
            rep = kaclab::chaos_diagnostic(c);
        } else {
            throw std::invalid_argument("run_study: study '" + cfg.study +
                                        "' is not a study kind");
        }
        rep.save(out_dir, name);
        kaclab::write_file_atomic(
            (fs::path(out_dir) / (std::string(name) + "_config.json")).string(),
            kaclab::emit_config(cfg));
    });
}

kaclab_status kaclab_run_simulate(const char* config_json, const char* out_dir) {
    if (!config_json || !out_dir) return fail_arg("run_simulate: NULL argument");
    return guarded([&] {
        const kaclab::RunConfig cfg = kaclab::parse_config_text(config_json);
        const std::uint64_t seed = kaclab::derive_seed(cfg.master_seed, 0, 42);
        kaclab_rng holder_rng{kaclab::Rng(seed)};
        kaclab_state* st = nullptr;
        if (kaclab_state_create(cfg.init.c_str(), cfg.N.front(), cfg.d,
                                &holder_rng, &st) != KACLAB_OK)
            throw std::runtime_error(g_last_error);
        kaclab_state holder{std::move(st->state)};
        kaclab::Rng rng = holder_rng.rng;
        kaclab_state_destroy(st);
        fs::create_directories(out_dir);
        kaclab::save_snapshot_csv(holder.state, 0.0, seed,
                                  (fs::path(out_dir) / "snapshot_init.csv").string());
        kaclab::Trajectory log;
        log.dim = cfg.d;
        log.seed = seed;
        std::vector<double> grid;
        for (double t : cfg.t_grid)
            if (t > 0.0 && t <= cfg.t_fin) grid.push_back(t);
        std::size_t snap = 0;
        kaclab::simulate(
            holder.state, cfg.t_fin, grid, rng,
            [&](std::size_t, double t, const kaclab::ParticleState& s) {
                kaclab::save_snapshot_csv(
                    s, t, seed,
                    (fs::path(out_dir) /
                     ("snapshot_" + std::to_string(snap++) + ".csv"))
                        .string());
            },
            nullptr, &log);
        kaclab::save_snapshot_csv(holder.state, cfg.t_fin, seed,
                                  (fs::path(out_dir) / "snapshot_final.csv").string());
        kaclab::save_trajectory_csv(log,
                                    (fs::path(out_dir) / "trajectory.csv").string());
    });
}

} // extern "C"
