#include "kaclab/branching.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "kaclab/kinetic.hpp"
#include "kaclab/metrics.hpp"

namespace fs = std::filesystem;

namespace kaclab {

double SignedParticleSystem::signed_sum(const std::function<double(Span)>& f) const {
    double s = 0.0;
    for (std::size_t i = 0; i < size(); ++i) s += signs[i] * f(velocity(i));
    return s;
}

double SignedParticleSystem::signed_mass() const {
    double s = 0.0;
    for (int sg : signs) s += sg;
    return s;
}

double SignedParticleSystem::abs_energy_mass() const {
    double s = 0.0;
    for (std::size_t i = 0; i < size(); ++i) s += 1.0 + norm2(velocity(i));
    return s;
}

std::size_t Environment::cell_at(double t) const {
    if (times.empty()) throw std::invalid_argument("environment: empty grid");
    if (t < times.front()) throw std::invalid_argument("environment: time before grid");
    // last cell covers [times.back(), inf)
    auto it = std::upper_bound(times.begin(), times.end(), t);
    return static_cast<std::size_t>(it - times.begin()) - 1;
}

double Environment::lambda3_integral(double t0, double t1) const {
    if (t1 < t0) throw std::invalid_argument("environment: t1 < t0");
    if (lambda3_cache.size() != clouds.size())
        throw std::logic_error("environment: finalize() not called");
    double acc = 0.0;
    std::size_t i0 = cell_at(t0), i1 = cell_at(t1);
    for (std::size_t i = i0; i <= i1; ++i) {
        const double lo = std::max(t0, times[i]);
        const double hi = (i + 1 < times.size()) ? std::min(t1, times[i + 1]) : t1;
        if (hi > lo) acc += lambda3_cache[i] * (hi - lo);
    }
    return acc;
}

void Environment::finalize(double tol) {
    if (times.size() != clouds.size() || times.empty())
        throw std::invalid_argument("environment: grid/cloud size mismatch");
    if (!std::is_sorted(times.begin(), times.end()))
        throw std::invalid_argument("environment: grid not sorted");
    lambda3_cache.clear();
    lambda3_cache.reserve(clouds.size());
    for (const auto& rho : clouds) {
        if (rho.dim != dim) throw std::invalid_argument("environment: dim mismatch");
        if (std::abs(rho.total_weight() - 1.0) > tol)
            throw std::invalid_argument("environment: cloud mass != 1");
        double energy = 0.0;
        for (std::size_t i = 0; i < rho.size(); ++i)
            energy += rho.weights[i] * norm2(rho.point(i));
        if (std::abs(energy - 1.0) > tol)
            throw std::invalid_argument("environment: cloud energy != 1");
        lambda3_cache.push_back(lambda_k(rho, 3.0));
    }
}

Environment constant_environment(WeightedPointCloud rho) {
    Environment env;
    env.dim = rho.dim;
    env.times = {0.0};
    env.clouds.push_back(std::move(rho));
    env.finalize();
    return env;
}

void save_environment(const Environment& env, const std::string& dir,
                      const std::string& name) {
    fs::create_directories(dir);
    nlohmann::json hdr;
    hdr["dim"] = env.dim;
    hdr["times"] = env.times;
    std::vector<std::string> files;
    for (std::size_t i = 0; i < env.clouds.size(); ++i) {
        std::string fname = name + "_" + std::to_string(i) + ".csv";
        save_cloud_csv(env.clouds[i], (fs::path(dir) / fname).string());
        files.push_back(fname);
    }
    hdr["clouds"] = files;
    std::ofstream out(fs::path(dir) / (name + ".json"));
    if (!out) throw std::runtime_error("save_environment: cannot open header");
    out << hdr.dump(2) << "\n";
}

Environment load_environment(const std::string& json_path) {
    std::ifstream in(json_path);
    if (!in) throw std::runtime_error("load_environment: cannot open " + json_path);
    nlohmann::json hdr = nlohmann::json::parse(in);
    Environment env;
    env.dim = hdr.at("dim").get<int>();
    env.times = hdr.at("times").get<std::vector<double>>();
    const fs::path base = fs::path(json_path).parent_path();
    for (const auto& f : hdr.at("clouds"))
        env.clouds.push_back(load_cloud_csv((base / f.get<std::string>()).string()));
    env.finalize();
    return env;
}

namespace {

// 2 * sum_k w_k |v - x_k|: the branching rate of a single particle in rho.
double particle_rate(Span v, const WeightedPointCloud& rho) {
    double s = 0.0;
    for (std::size_t k = 0; k < rho.size(); ++k)
        s += rho.weights[k] * dist(v, rho.point(k));
    return 2.0 * s;
}

} // namespace

BranchRunResult run_branching(SignedParticleSystem& sys, const Environment& env,
                              double t_end, Rng& rng, const BranchConfig& cfg,
                              const BranchObserver& on_event) {
    if (sys.dim != env.dim) throw std::invalid_argument("run_branching: dim mismatch");
    BranchRunResult res;

    std::size_t cell = env.cell_at(sys.time);
    const WeightedPointCloud* rho = &env.clouds[cell];
    std::vector<double> rates(sys.size());
    double total = 0.0;
    auto rebuild = [&]() {
        rates.resize(sys.size());
        total = 0.0;
        for (std::size_t i = 0; i < sys.size(); ++i) {
            rates[i] = particle_rate(sys.velocity(i), *rho);
            total += rates[i];
        }
    };
    rebuild();

    std::vector<double> vi(sys.dim), vstar(sys.dim), vp(sys.dim), vsp(sys.dim);

    while (sys.time < t_end) {
        const double cell_end =
            (cell + 1 < env.times.size()) ? std::min(env.times[cell + 1], t_end) : t_end;
        double wait = (total > 0.0) ? rng.exponential(total)
                                    : std::numeric_limits<double>::infinity();
        if (sys.time + wait >= cell_end) {
            // no event in this grid cell; clocks restart at the boundary
            sys.time = cell_end;
            if (sys.time >= t_end) break;
            ++cell;
            rho = &env.clouds[cell];
            rebuild();
            continue;
        }
        sys.time += wait;

        // pick the branching particle proportional to its rate
        double u = rng.uniform01() * total;
        std::size_t p = 0;
        for (; p + 1 < rates.size(); ++p) {
            u -= rates[p];
            if (u <= 0.0) break;
        }
        Span v = sys.velocity(p);
        std::copy(v.begin(), v.end(), vi.begin());

        // pick the environment partner proportional to w_k |v - x_k|
        double u2 = rng.uniform01() * (rates[p] / 2.0);
        std::size_t k = 0;
        for (; k + 1 < rho->size(); ++k) {
            u2 -= rho->weights[k] * dist(Span(vi), rho->point(k));
            if (u2 <= 0.0) break;
        }
        Span xk = rho->point(k);
        std::copy(xk.begin(), xk.end(), vstar.begin());

        const Vec sigma = sample_sigma(sys.dim, rng);
        collide(Span(vi), Span(vstar), Span(sigma), vp.data(), vsp.data());

        const int sign = sys.signs[p];
        if (on_event) on_event(Span(vi), sign, Span(vp), Span(vsp), Span(vstar));

        // replace parent by (v', s); append (v*', s) and (v*, -s)
        std::copy(vp.begin(), vp.end(), sys.velocities.begin() + p * sys.dim);
        sys.push_back(Span(vsp), sign);
        sys.push_back(Span(vstar), -sign);

        total -= rates[p];
        rates[p] = particle_rate(sys.velocity(p), *rho);
        rates.push_back(particle_rate(Span(vsp), *rho));
        rates.push_back(particle_rate(Span(vstar), *rho));
        total += rates[p] + rates[rates.size() - 2] + rates.back();
        ++res.events;

        if (sys.size() > cfg.population_cap) {
            res.truncated = true;
            return res;
        }
    }
    sys.time = t_end;
    return res;
}

FstEstimate estimate_fst(const std::function<double(Span)>& f, Span v0, double s,
                         double t, const Environment& env, std::size_t n_trees,
                         std::uint64_t seed, const BranchConfig& cfg) {
    if (t < s) throw std::invalid_argument("estimate_fst: t < s");
    FstEstimate out;
    double sum = 0.0, sum2 = 0.0;
    std::size_t kept = 0, discarded = 0;
    for (std::size_t r = 0; r < n_trees; ++r) {
        Rng rng(derive_seed(seed, r, 1));
        SignedParticleSystem sys;
        sys.dim = env.dim;
        sys.time = s;
        sys.push_back(v0, +1);
        if (run_branching(sys, env, t, rng, cfg).truncated) {
            ++discarded;
            continue;
        }
        const double x = sys.signed_sum(f);
        sum += x;
        sum2 += x * x;
        ++kept;
    }
    out.n_trees = kept;
    out.discard_fraction = n_trees ? double(discarded) / double(n_trees) : 0.0;
    out.flagged = out.discard_fraction > 0.01;
    if (kept > 0) out.estimate = sum / kept;
    if (kept > 1)
        out.se = std::sqrt(std::max(0.0, (sum2 - sum * sum / kept) / (kept - 1)) / kept);
    return out;
}

GrowthCheck growth_bound_check(Span v0, double t, const Environment& env,
                               std::size_t n_trees, std::uint64_t seed,
                               const BranchConfig& cfg) {
    GrowthCheck out;
    double sum = 0.0, sum2 = 0.0;
    std::size_t kept = 0;
    for (std::size_t r = 0; r < n_trees; ++r) {
        Rng rng(derive_seed(seed, r, 2));
        SignedParticleSystem sys;
        sys.dim = env.dim;
        sys.time = 0.0;
        sys.push_back(v0, +1);
        if (run_branching(sys, env, t, rng, cfg).truncated) continue;
        const double x = sys.abs_energy_mass();
        sum += x;
        sum2 += x * x;
        ++kept;
    }
    if (kept > 0) out.mc_mean = sum / kept;
    if (kept > 1)
        out.mc_se = std::sqrt(std::max(0.0, (sum2 - sum * sum / kept) / (kept - 1)) / kept);
    out.bound = (1.0 + norm2(v0)) * std::exp(8.0 * env.lambda3_integral(0.0, t));
    out.ok = kept > 0 && out.mc_mean <= out.bound + 3.0 * out.mc_se;
    return out;
}

LipschitzProfile lipschitz_profile(const WeightedPointCloud& mesh_estimates) {
    LipschitzProfile out;
    const auto& m = mesh_estimates;
    std::vector<double> ghat(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        ghat[i] = m.weights[i] / (1.0 + norm2(m.point(i)));
        out.sup_norm = std::max(out.sup_norm, std::abs(ghat[i]));
    }
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = i + 1; j < m.size(); ++j) {
            const double dd = dist(m.point(i), m.point(j));
            if (dd > 1e-12)
                out.lipschitz_estimate =
                    std::max(out.lipschitz_estimate, std::abs(ghat[i] - ghat[j]) / dd);
        }
    return out;
}

namespace {

// Knuth's method; intensities here are atom weights, typically O(1).
std::size_t poisson_draw(double mean, Rng& rng) {
    if (mean <= 0.0) return 0;
    const double limit = std::exp(-mean);
    double prod = rng.uniform_pos();
    std::size_t k = 0;
    while (prod > limit) {
        prod *= rng.uniform_pos();
        ++k;
    }
    return k;
}

} // namespace

FlowDerivativeResult estimate_flow_derivative(const WeightedPointCloud& theta_plus,
                                              const WeightedPointCloud& theta_minus,
                                              const Environment& env, double t,
                                              std::size_t n_runs, std::uint64_t seed,
                                              const BranchConfig& cfg) {
    if (theta_plus.dim != env.dim || theta_minus.dim != env.dim)
        throw std::invalid_argument("estimate_flow_derivative: dim mismatch");
    for (double w : theta_plus.weights)
        if (w < 0.0) throw std::invalid_argument("flow derivative: negative intensity");
    for (double w : theta_minus.weights)
        if (w < 0.0) throw std::invalid_argument("flow derivative: negative intensity");

    FlowDerivativeResult out;
    out.xi_t.dim = env.dim;
    std::size_t discarded = 0, kept = 0;

    for (std::size_t r = 0; r < n_runs; ++r) {
        Rng rng(derive_seed(seed, r, 3));
        SignedParticleSystem sys;
        sys.dim = env.dim;
        sys.time = 0.0;
        for (std::size_t i = 0; i < theta_plus.size(); ++i) {
            const std::size_t cnt = poisson_draw(theta_plus.weights[i], rng);
            for (std::size_t c = 0; c < cnt; ++c) sys.push_back(theta_plus.point(i), +1);
        }
        for (std::size_t i = 0; i < theta_minus.size(); ++i) {
            const std::size_t cnt = poisson_draw(theta_minus.weights[i], rng);
            for (std::size_t c = 0; c < cnt; ++c) sys.push_back(theta_minus.point(i), -1);
        }
        if (run_branching(sys, env, t, rng, cfg).truncated) {
            ++discarded;
            continue;
        }
        ++kept;
        for (std::size_t i = 0; i < sys.size(); ++i)
            out.xi_t.push_back(sys.velocity(i), double(sys.signs[i]));
    }
    out.discard_fraction = n_runs ? double(discarded) / double(n_runs) : 0.0;
    if (kept > 0)
        for (double& w : out.xi_t.weights) w /= double(kept);
    out.xi_t.deduplicate();
    return out;
}

} // namespace kaclab
