#include "aimdnet/equilibrium.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>

#include "aimdnet/bisect.hpp"

namespace aimd {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_r(double r) {
    if (!(r >= 0.0 && r < 1.0)) throw std::domain_error("r must lie in [0,1)");
}

void check_rho(double rho) {
    if (!(rho > 0.0) || !std::isfinite(rho)) throw std::domain_error("rho must be > 0");
}

std::atomic<std::uint64_t> g_clamp_count{0};

// Unit-scale density H1(x): the law of W / sqrt(a/beta).
//   H1(x) = pref * sum_{n>=0} c_n exp(-r^{-2n} x^2 / 2)
//   pref  = sqrt(2/pi) / prod_{n>=0} (1 - r^{2n+1})
//   c_0 = 1,  c_n = c_{n-1} * r^{-2} / (1 - r^{-2n})
// The c_n alternate in sign (1 - r^{-2n} < 0) and their magnitude decays
// like r^{n^2}, so the series terminates quickly. Magnitudes are tracked
// in log space because intermediate r^{-2n} can overflow long before the
// terms stop mattering.
double density_unit(double r, double x) {
    if (r == 0.0) return std::sqrt(2.0 / kPi) * std::exp(-0.5 * x * x);

    const double log_r = std::log(r);
    double log_prod = 0.0; // log prod (1 - r^{2n+1})
    for (int n = 0;; ++n) {
        const double f = std::pow(r, 2 * n + 1);
        if (f < 1e-15) break;
        log_prod += std::log1p(-f);
        if (n > 100000) break;
    }
    const double log_pref = 0.5 * std::log(2.0 / kPi) - log_prod;

    double sum = 0.0;
    double sum_abs = 0.0;
    double log_c = 0.0; // log |c_n|
    int sign = 1;
    for (int n = 0; n < 2000; ++n) {
        if (n > 0) {
            // |1 - r^{-2n}| = r^{-2n} - 1 = expm1(-2n log r)
            log_c += -2.0 * log_r - std::log(std::expm1(-2.0 * n * log_r));
            sign = -sign;
        }
        const double t = -2.0 * n * log_r; // log r^{-2n}
        const double gauss_exp =
            (t > 709.0) ? -std::numeric_limits<double>::infinity()
                        : -0.5 * std::exp(t) * x * x;
        const double log_term = log_c + gauss_exp;
        const double term = (log_term < -745.0) ? 0.0 : sign * std::exp(log_term);
        sum += term;
        sum_abs += std::abs(term);
        if (n >= 1 && std::abs(term) < 1e-14 * std::abs(sum)) break;
        if (term == 0.0 && n >= 2) break;
    }

    const double pref = std::exp(log_pref);
    double value = pref * sum;
    if (value < 0.0) {
        // cancellation floor of the alternating sum, scaled by the prefactor
        const double floor = std::max(1e-12, 32.0 * 2.2e-16 * pref * sum_abs);
        if (value > -floor) {
            g_clamp_count.fetch_add(1, std::memory_order_relaxed);
            value = 0.0;
        } else {
            throw std::runtime_error("density series cancellation failure at x=" +
                                     std::to_string(x));
        }
    }
    return value;
}

// Unit-scale cdf via the term-wise integral
//   int_0^x c_n exp(-r^{-2n} t^2/2) dt = c_n sqrt(pi/2) r^n erf(x r^{-n}/sqrt 2).
double cdf_unit(double r, double x) {
    if (x <= 0.0) return 0.0;
    if (r == 0.0) return std::erf(x / std::sqrt(2.0));

    const double log_r = std::log(r);
    double log_prod = 0.0;
    for (int n = 0;; ++n) {
        const double f = std::pow(r, 2 * n + 1);
        if (f < 1e-15) break;
        log_prod += std::log1p(-f);
    }

    double sum = 0.0;
    double log_c = 0.0;
    int sign = 1;
    for (int n = 0; n < 2000; ++n) {
        if (n > 0) {
            log_c += -2.0 * log_r - std::log(std::expm1(-2.0 * n * log_r));
            sign = -sign;
        }
        const double scaled = x * std::exp(std::min(-static_cast<double>(n) * log_r, 700.0));
        const double log_term = log_c + n * log_r; // |c_n| r^n
        const double term =
            (log_term < -745.0) ? 0.0 : sign * std::exp(log_term) * std::erf(scaled / std::sqrt(2.0));
        sum += term;
        if (n >= 1 && std::abs(term) < 1e-15 * std::abs(sum)) break;
        if (term == 0.0 && n >= 2) break;
    }
    double value = std::exp(-log_prod) * sum;
    if (value < 0.0) value = 0.0;
    if (value > 1.0) value = 1.0;
    return value;
}

} // namespace

double throughput_coefficient_uncached(double r) {
    check_r(r);
    double prod = 1.0;
    double r_odd = r; // r^{2n-1}
    for (int n = 1; n < 2000000; ++n) {
        const double r_even = r_odd * r; // r^{2n}
        const double factor = (1.0 - r_even) / (1.0 - r_odd);
        prod *= factor;
        if (std::abs(factor - 1.0) < 1e-15) break;
        r_odd = r_even * r;
    }
    return std::sqrt(2.0 / kPi) * prod;
}

double throughput_coefficient(double r) {
    check_r(r);
    static std::mutex mu;
    static std::map<double, double> cache;
    {
        std::lock_guard<std::mutex> lk(mu);
        auto it = cache.find(r);
        if (it != cache.end()) return it->second;
    }
    const double v = throughput_coefficient_uncached(r);
    std::lock_guard<std::mutex> lk(mu);
    cache.emplace(r, v);
    return v;
}

double stationary_mean(double r, double rho) {
    check_r(r);
    check_rho(rho);
    return std::sqrt(rho) * throughput_coefficient(r);
}

double stationary_density(double r, double rho, double w) {
    check_r(r);
    check_rho(rho);
    if (!(w >= 0.0)) throw std::domain_error("w must be >= 0");
    const double s = std::sqrt(rho);
    return density_unit(r, w / s) / s;
}

double stationary_cdf(double r, double rho, double w) {
    check_r(r);
    check_rho(rho);
    if (w < 0.0) return 0.0;
    return cdf_unit(r, w / std::sqrt(rho));
}

double stationary_quantile(double r, double rho, double p) {
    check_r(r);
    check_rho(rho);
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("p must lie in (0,1)");
    const double q = solve_increasing([&](double w) { return stationary_cdf(r, rho, w) - p; },
                                      std::sqrt(rho), 1e-12, "stationary quantile");
    return q;
}

std::uint64_t density_clamp_count() { return g_clamp_count.load(std::memory_order_relaxed); }

double phi_class(const NetworkModel& m, int k, std::span<const double> u) {
    const double beta = eval_beta(m, k, u);
    if (!(beta > 0.0))
        throw std::domain_error("beta_" + std::to_string(k) +
                                " is zero (delta = 0 at zero route load)");
    const double alpha = m.alpha.empty()
                             ? m.classes[k].p * throughput_coefficient(m.classes[k].r) *
                                   std::sqrt(m.classes[k].a)
                             : m.alpha[k];
    return alpha / std::sqrt(beta);
}

std::vector<double> node_loads(const NetworkModel& m, std::span<const double> z) {
    std::vector<double> u(m.num_nodes, 0.0);
    for (int j = 0; j < m.num_nodes; ++j) {
        double s = 0.0;
        for (int k = 0; k < m.num_classes; ++k) s += m.A(j, k) * z[k];
        u[j] = s;
    }
    return u;
}

std::vector<double> load_map(const NetworkModel& m, std::span<const double> z) {
    const std::vector<double> u = node_loads(m, z);
    std::vector<double> out(m.num_classes);
    for (int k = 0; k < m.num_classes; ++k) {
        try {
            out[k] = phi_class(m, k, u);
        } catch (const std::domain_error& e) {
            throw std::domain_error("load_map failed for class " + std::to_string(k) + ": " +
                                    e.what());
        }
    }
    return out;
}

double residual(const NetworkModel& m, std::span<const double> u) {
    double worst = 0.0;
    for (int j = 0; j < m.num_nodes; ++j) {
        double s = 0.0;
        for (int k = 0; k < m.num_classes; ++k)
            if (m.A(j, k) > 0.0) s += m.A(j, k) * phi_class(m, k, u);
        worst = std::max(worst, std::abs(u[j] - s));
    }
    return worst;
}

namespace detail {

double phi_or_inf(const NetworkModel& m, int k, std::span<const double> u) {
    const double beta = eval_beta(m, k, u);
    if (!(beta > 0.0)) return std::numeric_limits<double>::infinity();
    return m.alpha[k] / std::sqrt(beta);
}

double phi_of_sum(const NetworkModel& m, int k, const RouteSumView& view, double s) {
    const double beta = view(s);
    if (!(beta > 0.0)) return std::numeric_limits<double>::infinity();
    return m.alpha[k] / std::sqrt(beta);
}

} // namespace detail

} // namespace aimd
