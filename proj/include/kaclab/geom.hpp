#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace kaclab {

using Vec = std::vector<double>;   // one velocity, length d
using Span = std::span<const double>;

inline double dot(Span a, Span b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(Span a) { return dot(a, a); }
inline double norm(Span a) { return std::sqrt(norm2(a)); }

inline double dist(Span a, Span b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double t = a[i] - b[i];
        s += t * t;
    }
    return std::sqrt(s);
}

// Distance against a point stored in a flat array at offset k*d.
inline double dist_flat(const double* flat, std::size_t k, Span v) {
    double s = 0.0;
    const double* p = flat + k * v.size();
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double t = p[i] - v[i];
        s += t * t;
    }
    return std::sqrt(s);
}

inline bool all_finite(Span a) {
    for (double x : a)
        if (!std::isfinite(x)) return false;
    return true;
}

} // namespace kaclab
