#ifndef AIMDNET_EQUILIBRIUM_HPP
#define AIMDNET_EQUILIBRIUM_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "aimdnet/model.hpp"

namespace aimd {

// c(r) = sqrt(2/pi) * prod_{n>=1} (1 - r^{2n}) / (1 - r^{2n-1}).
// Shape constant of the stationary AIMD mean: E[W] = sqrt(a/beta) * c(r).
// Product truncated once a factor deviates from 1 by less than 1e-15,
// giving relative accuracy well below 1e-12. Memoized per r.
double throughput_coefficient(double r);

// Same computation without the memo cache (used for timing checks).
double throughput_coefficient_uncached(double r);

// E[W] for the single flow with rho = a/beta: sqrt(rho) * c(r).
double stationary_mean(double r, double rho);

// Stationary density of the single AIMD flow at throughput w.
// Evaluated as rho^{-1/2} * H1(w / sqrt(rho)) where H1 is the unit-scale
// (rho = 1) series; the scale is pinned so that the mean of the density
// equals stationary_mean(r, rho). For r = 0 the closed half-Gaussian
// limit sqrt(2/(pi rho)) exp(-w^2/(2 rho)) is used.
double stationary_density(double r, double rho, double w);

// P(W <= w) via the term-wise erf integral of the density series.
double stationary_cdf(double r, double rho, double w);

// Inverse of the cdf (bisection). p in (0,1).
double stationary_quantile(double r, double rho, double p);

// Number of density evaluations whose alternating series cancelled to a
// tiny negative value and was clamped to zero.
std::uint64_t density_clamp_count();

struct StationaryLaw {
    double r;
    double rho;
    double density(double w) const { return stationary_density(r, rho, w); }
    double cdf(double w) const { return stationary_cdf(r, rho, w); }
    double mean() const { return stationary_mean(r, rho); }
};

// phi_k(u) = p_k c(r_k) sqrt(a_k / beta_k(u)); the expected weighted
// contribution of class k at node loads u. Non-increasing in every load.
double phi_class(const NetworkModel& m, int k, std::span<const double> u);

// u = A z.
std::vector<double> node_loads(const NetworkModel& m, std::span<const double> z);

// The load map Phi(z) = (phi_k(Az))_k. Antitone when beta is monotone.
std::vector<double> load_map(const NetworkModel& m, std::span<const double> z);

// max_j |u_j - sum_k A_jk phi_k(u)|; zero exactly at fixed points.
double residual(const NetworkModel& m, std::span<const double> u);

namespace detail {
// phi that returns +infinity instead of throwing when beta(u) = 0.
// Solver bisections rely on the sign convention this gives.
double phi_or_inf(const NetworkModel& m, int k, std::span<const double> u);
double phi_of_sum(const NetworkModel& m, int k, const RouteSumView& view, double s);
} // namespace detail

} // namespace aimd

#endif
