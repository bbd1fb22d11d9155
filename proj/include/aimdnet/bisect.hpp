#ifndef AIMDNET_BISECT_HPP
#define AIMDNET_BISECT_HPP

#include <cmath>
#include <stdexcept>
#include <string>

namespace aimd {

// Bracketed bisection for monotone (non-decreasing) g with g(lo) <= 0 <= g(hi).
// The proofs behind the topology solvers guarantee exactly this one-sided
// monotone structure and nothing stronger, so bisection is used throughout
// instead of Newton. Interval endpoints are never evaluated, which lets
// callers pass lo = 0 when g is singular there (delta = 0 loss rates).
template <class F>
double bisect_increasing(F&& g, double lo, double hi, double tol, int max_iter = 200) {
    for (int i = 0; i < max_iter; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (hi - lo <= tol * (1.0 + std::abs(mid))) return mid;
        if (g(mid) < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

// Grow hi geometrically from hi0 until g(hi) >= 0. g is assumed negative
// below the root. Throws after max_doublings.
template <class F>
double expand_upper(F&& g, double hi0, int max_doublings, const std::string& what) {
    double hi = hi0 > 0.0 ? hi0 : 1.0;
    for (int i = 0; i < max_doublings; ++i) {
        if (g(hi) >= 0.0) return hi;
        hi *= 2.0;
    }
    throw std::runtime_error("failed to bracket root after " + std::to_string(max_doublings) +
                             " doublings: " + what);
}

// Convenience: solve g(x) = 0, g increasing, g < 0 on [0, root), starting
// the upper search at hi0.
template <class F>
double solve_increasing(F&& g, double hi0, double tol, const std::string& what,
                        int max_doublings = 64) {
    const double hi = expand_upper(g, hi0, max_doublings, what);
    return bisect_increasing(g, 0.0, hi, tol);
}

} // namespace aimd

#endif
