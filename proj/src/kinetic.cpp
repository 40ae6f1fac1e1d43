#include "kaclab/kinetic.hpp"

#include <cmath>

namespace kaclab {

Vec ParticleState::mean_velocity() const {
    Vec m(dim, 0.0);
    const std::size_t n = size();
    for (std::size_t i = 0; i < n; ++i) {
        const double* v = velocities.data() + i * dim;
        for (int k = 0; k < dim; ++k) m[k] += v[k];
    }
    for (int k = 0; k < dim; ++k) m[k] /= static_cast<double>(n);
    return m;
}

double ParticleState::mean_energy() const {
    double e = 0.0;
    const std::size_t n = size();
    for (std::size_t i = 0; i < n; ++i) e += norm2(velocity(i));
    return e / static_cast<double>(n);
}

bool ParticleState::check_sphere(double tol) const {
    const Vec m = mean_velocity();
    for (double c : m)
        if (std::abs(c) > tol) return false;
    return std::abs(mean_energy() - 1.0) <= tol;
}

void collide(Span v, Span v_star, Span sigma,
             double* v_prime, double* v_star_prime) {
    const std::size_t d = v.size();
    if (v_star.size() != d || sigma.size() != d)
        throw std::invalid_argument("collide: dimension mismatch");
    if (std::abs(norm(sigma) - 1.0) > 1e-12)
        throw std::invalid_argument("collide: sigma is not a unit vector");
    const double r = dist(v, v_star);
    for (std::size_t k = 0; k < d; ++k) {
        const double s = v[k] + v_star[k];
        v_prime[k] = 0.5 * (s + sigma[k] * r);
        v_star_prime[k] = 0.5 * (s - sigma[k] * r);
    }
}

Vec sample_sigma(int dim, Rng& rng) {
    if (dim < 2) throw std::invalid_argument("sample_sigma: dim must be >= 2");
    Vec sigma(dim);
    double n2;
    do {
        n2 = 0.0;
        for (int k = 0; k < dim; ++k) {
            sigma[k] = rng.normal();
            n2 += sigma[k] * sigma[k];
        }
    } while (n2 == 0.0);
    const double inv = 1.0 / std::sqrt(n2);
    for (int k = 0; k < dim; ++k) sigma[k] *= inv;
    return sigma;
}

Vec maxwellian_sample(const MaxwellianSpec& spec, Rng& rng) {
    Vec v(spec.dim);
    const double sd = 1.0 / std::sqrt(static_cast<double>(spec.dim));
    for (int k = 0; k < spec.dim; ++k) v[k] = sd * rng.normal();
    return v;
}

double maxwellian_density(const MaxwellianSpec& spec, Span v) {
    const double d = static_cast<double>(spec.dim);
    const double two_pi = 6.283185307179586476925286766559;
    return std::exp(-0.5 * d * norm2(v)) / std::pow(two_pi / d, 0.5 * d);
}

ParticleState project_to_boltzmann_sphere(int dim, const std::vector<double>& raw) {
    const std::size_t n = raw.size() / dim;
    if (n < 2) throw std::invalid_argument("project_to_boltzmann_sphere: need N >= 2");
    Vec mean(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (int k = 0; k < dim; ++k) mean[k] += raw[i * dim + k];
    for (int k = 0; k < dim; ++k) mean[k] /= static_cast<double>(n);
    double s = 0.0;  // sample variance of the centered velocities
    for (std::size_t i = 0; i < n; ++i)
        for (int k = 0; k < dim; ++k) {
            const double c = raw[i * dim + k] - mean[k];
            s += c * c;
        }
    s /= static_cast<double>(n);
    if (s <= 0.0)
        throw std::invalid_argument("project_to_boltzmann_sphere: degenerate sample (all velocities equal)");
    const double scale = 1.0 / std::sqrt(s);
    ParticleState state;
    state.dim = dim;
    state.velocities.resize(raw.size());
    for (std::size_t i = 0; i < n; ++i)
        for (int k = 0; k < dim; ++k)
            state.velocities[i * dim + k] = scale * (raw[i * dim + k] - mean[k]);
    state.on_sphere = true;
    return state;
}

WeightedPointCloud collision_operator_apply(const WeightedPointCloud& mu,
                                            int sigma_draws, Rng& rng) {
    if (mu.size() == 0) throw std::invalid_argument("collision_operator_apply: empty measure");
    const int d = mu.dim;
    WeightedPointCloud out;
    out.dim = d;
    std::vector<double> vp(d), vsp(d);
    const double inv_draws = 1.0 / (2.0 * static_cast<double>(sigma_draws));
    Vec neg_sigma(d);
    for (std::size_t i = 0; i < mu.size(); ++i) {
        for (std::size_t j = 0; j < mu.size(); ++j) {
            const Span vi = mu.point(i), vj = mu.point(j);
            const double r = dist(vi, vj);
            if (r == 0.0) continue;
            const double base = mu.weights[i] * mu.weights[j] * r;
            // loss terms are sigma-independent
            out.push_back(vi, -base);
            out.push_back(vj, -base);
            for (int m = 0; m < sigma_draws; ++m) {
                Vec sigma = sample_sigma(d, rng);
                collide(vi, vj, sigma, vp.data(), vsp.data());
                out.push_back(Span(vp), base * inv_draws);
                out.push_back(Span(vsp), base * inv_draws);
                for (int k = 0; k < d; ++k) neg_sigma[k] = -sigma[k];
                collide(vi, vj, neg_sigma, vp.data(), vsp.data());
                out.push_back(Span(vp), base * inv_draws);
                out.push_back(Span(vsp), base * inv_draws);
            }
        }
    }
    out.deduplicate();
    return out;
}

double collision_operator_pairing(const WeightedPointCloud& mu,
                                  const std::function<double(Span)>& f,
                                  int sigma_draws, Rng& rng) {
    if (mu.size() == 0) throw std::invalid_argument("collision_operator_pairing: empty measure");
    const int d = mu.dim;
    std::vector<double> vp(d), vsp(d);
    Vec neg_sigma(d);
    double total = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        for (std::size_t j = 0; j < mu.size(); ++j) {
            const Span vi = mu.point(i), vj = mu.point(j);
            const double r = dist(vi, vj);
            if (r == 0.0) continue;
            const double base = mu.weights[i] * mu.weights[j] * r;
            const double loss = f(vi) + f(vj);
            double gain = 0.0;
            for (int m = 0; m < sigma_draws; ++m) {
                Vec sigma = sample_sigma(d, rng);
                collide(vi, vj, sigma, vp.data(), vsp.data());
                gain += f(Span(vp)) + f(Span(vsp));
                for (int k = 0; k < d; ++k) neg_sigma[k] = -sigma[k];
                collide(vi, vj, neg_sigma, vp.data(), vsp.data());
                gain += f(Span(vp)) + f(Span(vsp));
            }
            total += base * (gain / (2.0 * sigma_draws) - loss);
        }
    }
    return total;
}

} // namespace kaclab
