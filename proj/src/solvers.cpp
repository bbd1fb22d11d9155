#include "aimdnet/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "aimdnet/bisect.hpp"
#include "aimdnet/equilibrium.hpp"
#include "aimdnet/rng.hpp"

namespace aimd {

namespace {

void ensure_finalized(const NetworkModel& m) {
    if (static_cast<int>(m.routes.size()) != m.num_classes ||
        static_cast<int>(m.alpha.size()) != m.num_classes)
        throw std::invalid_argument("model not finalized; build it through the factories");
}

double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

double max_row_sum(const NetworkModel& m) {
    double worst = 0.0;
    for (int j = 0; j < m.num_nodes; ++j) {
        double s = 0.0;
        for (int k = 0; k < m.num_classes; ++k) s += m.A(j, k);
        worst = std::max(worst, s);
    }
    return worst;
}

// Stopping tolerance in z-space such that the u-space residual still meets
// opts.tol after multiplication by A.
double z_tolerance(const NetworkModel& m, const SolverOptions& opts) {
    return opts.tol / std::max(1.0, max_row_sum(m));
}

void finish(const NetworkModel& m, FixedPointResult& r, const SolverOptions& opts) {
    r.u_star = node_loads(m, r.z_star);
    r.residual = residual(m, r.u_star);
    r.converged = r.converged && r.residual <= opts.tol;
}

bool all_deltas_positive(const NetworkModel& m) {
    return std::all_of(m.loss.begin(), m.loss.end(),
                       [](const LossRateSpec& s) { return s.delta > 0.0; });
}

std::string format_vector(const std::vector<double>& v) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
    os << "]";
    return os.str();
}

struct BracketOutcome {
    std::vector<double> even;
    std::vector<double> odd;
    std::vector<double> midpoint;
    int iterations = 0;
    bool collapsed = false;
};

// The alternating iteration behind both solve_bracket and solve_ring_full.
// map must be antitone; the even/odd subsequences are then monotone and
// sandwich every fixed point. Monotonicity is asserted at every step (a
// violation beyond floating-point slack means beta is not non-decreasing).
template <class Map>
BracketOutcome bracket_iterate(Map&& map, std::vector<double> start, double tol,
                               int max_iter) {
    auto check_leq = [](const std::vector<double>& a, const std::vector<double>& b,
                        const char* what) {
        for (size_t i = 0; i < a.size(); ++i) {
            const double slack = 1e-12 * (1.0 + std::abs(a[i]));
            if (a[i] > b[i] + slack)
                throw std::runtime_error(std::string("bracket iteration lost monotonicity (") +
                                         what + "); is every beta non-decreasing?");
        }
    };

    BracketOutcome out;
    out.even = start;
    std::vector<double> cur = std::move(start);
    for (int it = 1; it <= max_iter; ++it) {
        cur = map(cur);
        out.iterations = it;
        if (it % 2 == 1) {
            if (it > 1) check_leq(cur, out.odd, "odd iterates must descend");
            out.odd = cur;
            check_leq(out.even, out.odd, "even iterates must stay below odd");
        } else {
            check_leq(out.even, cur, "even iterates must ascend");
            out.even = cur;
            check_leq(out.even, out.odd, "even iterates must stay below odd");
            if (sup_diff(out.even, out.odd) < tol) {
                out.collapsed = true;
                break;
            }
        }
    }
    out.midpoint.resize(out.even.size());
    for (size_t i = 0; i < out.even.size(); ++i)
        out.midpoint[i] = 0.5 * (out.even[i] + (out.odd.empty() ? out.even[i] : out.odd[i]));
    return out;
}

} // namespace

FixedPointResult solve_bracket(const NetworkModel& m, const SolverOptions& opts,
                               const std::optional<std::vector<double>>& z0) {
    ensure_finalized(m);
    const int K = m.num_classes;

    std::vector<double> start(K, 0.0);
    if (z0) {
        if (static_cast<int>(z0->size()) != K)
            throw std::invalid_argument("z0 has wrong dimension");
        start = *z0;
    } else {
        const std::vector<double> zero_u(m.num_nodes, 0.0);
        for (int k = 0; k < K; ++k)
            if (!(eval_beta(m, k, zero_u) > 0.0))
                throw std::invalid_argument(
                    "solve_bracket requires beta_k(0) > 0 (delta_" + std::to_string(k) +
                    " = 0); use a topology solver or a validated start point");
    }

    auto phi = [&m](const std::vector<double>& z) { return load_map(m, z); };

    const auto f1 = phi(start);
    for (double v : f1)
        if (!std::isfinite(v)) throw std::runtime_error("Phi(z0) is not finite");
    if (z0) {
        const auto f2 = phi(f1);
        for (int k = 0; k < K; ++k)
            if (start[k] > f1[k] + 1e-12 || start[k] > f2[k] + 1e-12)
                throw std::invalid_argument(
                    "start point rejected: z0 <= Phi(z0) and z0 <= Phi(Phi(z0)) must hold");
    }

    const auto out = bracket_iterate(phi, start, z_tolerance(m, opts), opts.max_iter);

    FixedPointResult r;
    r.method = "bracket";
    r.z_star = out.midpoint;
    r.iterations = out.iterations;
    r.has_bracket = true;
    r.z_lower = out.even;
    r.z_upper = out.odd;
    r.unique_certified = out.collapsed;
    r.converged = out.collapsed;
    if (!out.collapsed)
        r.message = "bracket did not collapse below tol: possible multi-stability or slow "
                    "convergence";
    finish(m, r, opts);
    return r;
}

FixedPointResult solve_damped(const NetworkModel& m, std::vector<double> z_init,
                              const SolverOptions& opts) {
    ensure_finalized(m);
    if (static_cast<int>(z_init.size()) != m.num_classes)
        throw std::invalid_argument("z_init has wrong dimension");
    for (double v : z_init)
        if (!(v >= 0.0)) throw std::invalid_argument("z_init must be componentwise >= 0");
    const double theta = opts.damping;
    if (!(theta > 0.0 && theta <= 1.0))
        throw std::invalid_argument("damping must lie in (0, 1]");

    FixedPointResult r;
    r.method = "damped";
    std::vector<double> z = std::move(z_init);
    for (int it = 1; it <= opts.max_iter; ++it) {
        const auto fz = load_map(m, z);
        // u-space defect of the current iterate
        double defect = 0.0;
        for (int j = 0; j < m.num_nodes; ++j) {
            double s = 0.0;
            for (int k = 0; k < m.num_classes; ++k) s += m.A(j, k) * (z[k] - fz[k]);
            defect = std::max(defect, std::abs(s));
        }
        r.iterations = it;
        if (defect <= opts.tol) {
            r.converged = true;
            break;
        }
        for (int k = 0; k < m.num_classes; ++k)
            z[k] = (1.0 - theta) * z[k] + theta * fz[k];
    }
    r.z_star = z;
    if (!r.converged) r.message = "max_iter reached; last iterate attached";
    finish(m, r, opts);
    return r;
}

// --- tree ----------------------------------------------------------------

namespace {

class TreeSolver {
  public:
    TreeSolver(const NetworkModel& m, const SolverOptions& opts)
        : m_(m), opts_(opts), children_(m.num_nodes), memo_(m.num_nodes),
          u_(m.num_nodes, 0.0) {
        for (int n = 0; n < m.num_nodes; ++n) {
            const int p = m.tree_parent[n];
            if (p < 0)
                root_ = n;
            else
                children_[p].push_back(n);
        }
    }

    std::vector<double> solve() {
        u_[root_] = value(root_);
        // top-down: every other load is a function of its ancestors'
        std::vector<int> queue{root_};
        for (size_t i = 0; i < queue.size(); ++i) {
            const int n = queue[i];
            if (n != root_) u_[n] = value(n);
            for (int c : children_[n]) queue.push_back(c);
        }
        return u_;
    }

  private:
    // Load of `node` given its ancestors' loads (already in u_): the unique
    // root of x - phi_node(path, x) - sum of children values. Memoized per
    // ancestor prefix so repeated probes of an identical prefix reuse the
    // nested solves.
    double value(int node) {
        std::vector<double> prefix;
        for (int p = m_.tree_parent[node]; p >= 0; p = m_.tree_parent[p])
            prefix.push_back(u_[p]);
        auto& cache = memo_[node];
        if (auto it = cache.find(prefix); it != cache.end()) return it->second;

        auto g = [&](double x) {
            u_[node] = x;
            double rhs = detail::phi_or_inf(m_, node, u_);
            for (int c : children_[node]) rhs += value(c);
            return x - rhs;
        };
        double v;
        try {
            v = solve_increasing(g, 1.0, opts_.inner_tol,
                                 "tree node " + std::to_string(node));
        } catch (const std::runtime_error& e) {
            throw std::runtime_error("bisection bracket failure at node " +
                                     std::to_string(node) + ": " + e.what());
        }
        u_[node] = v;
        cache.emplace(std::move(prefix), v);
        return v;
    }

    const NetworkModel& m_;
    SolverOptions opts_;
    std::vector<std::vector<int>> children_;
    std::vector<std::map<std::vector<double>, double>> memo_;
    std::vector<double> u_;
    int root_ = 0;
};

} // namespace

FixedPointResult solve_tree(const NetworkModel& m, const SolverOptions& opts) {
    ensure_finalized(m);
    if (m.topology != Topology::Tree)
        throw std::invalid_argument("solve_tree requires a tree-tagged model");

    TreeSolver solver(m, opts);
    const std::vector<double> u = solver.solve();

    FixedPointResult r;
    r.method = "tree";
    r.z_star.resize(m.num_classes);
    for (int k = 0; k < m.num_classes; ++k) r.z_star[k] = phi_class(m, k, u);
    r.iterations = 1; // one leaf-to-root elimination plus the top-down pass
    r.converged = true;
    r.unique_certified = true;
    finish(m, r, opts);
    return r;
}

// --- linear --------------------------------------------------------------

FixedPointResult solve_linear(const NetworkModel& m, const SolverOptions& opts) {
    ensure_finalized(m);
    if (m.topology != Topology::Linear)
        throw std::invalid_argument("solve_linear requires a linear-tagged model");
    const int J = m.num_nodes;
    const double alpha0 = m.alpha[0];
    const double delta0 = m.loss[0].delta;

    std::vector<double> scratch(J, 0.0);
    // inverse of x - phi_j(x): continuous, strictly increasing, negative at
    // the lower end, so a plain upward bisection applies
    auto phibar_inv = [&](int node, double t) {
        auto g = [&](double x) {
            scratch[node] = x;
            return x - t - detail::phi_or_inf(m, node + 1, scratch);
        };
        const double hi =
            expand_upper(g, t + 1.0, 64, "phibar inverse at node " + std::to_string(node));
        return bisect_increasing(g, t, hi, opts.inner_tol);
    };

    std::vector<double> u(J, 0.0);
    auto loads_for = [&](double b) {
        const double t = alpha0 / std::sqrt(b);
        for (int j = 0; j < J; ++j) u[j] = phibar_inv(j, t);
        return u;
    };
    auto g_outer = [&](double b) { return b - eval_beta(m, 0, loads_for(b)); };

    const double hi = expand_upper(g_outer, std::max(1.0, 2.0 * delta0), 64,
                                   "beta_0 never dominates its own fixed point; "
                                   "check the class-0 loss specification");
    const double beta_star = bisect_increasing(g_outer, delta0, hi, opts.inner_tol);

    loads_for(beta_star);
    FixedPointResult r;
    r.method = "linear";
    r.z_star.resize(m.num_classes);
    r.z_star[0] = alpha0 / std::sqrt(beta_star);
    for (int k = 1; k <= J; ++k) r.z_star[k] = phi_class(m, k, u);
    r.iterations = 1;
    r.converged = true;
    r.unique_certified = true;
    finish(m, r, opts);
    return r;
}

// --- rings ---------------------------------------------------------------

namespace {

// Inner implicit solve for two-node ring classes: the unique x with
// x = phi_i(ym + x, x + yp). Works for any monotone two-argument beta;
// takes the route-sum shortcut when available.
double ring_inner_x(const NetworkModel& m, int pair_class,
                    const std::optional<RouteSumView>& view, double ym, double yp,
                    double inner_tol, std::vector<double>& scratch) {
    const int J = m.num_nodes;
    const int a = pair_class;
    const int b = (pair_class + 1) % J;
    auto g = [&](double x) {
        if (view) return x - detail::phi_of_sum(m, pair_class, *view, ym + 2.0 * x + yp);
        scratch[a] = ym + x;
        scratch[b] = x + yp;
        return x - detail::phi_or_inf(m, pair_class, scratch);
    };
    return solve_increasing(g, 1.0, inner_tol,
                            "ring inner solve, class " + std::to_string(pair_class));
}

struct OuterLoop {
    std::vector<double> y;
    int iterations = 0;
    bool converged = false;
    std::string message;
};

template <class Step>
OuterLoop ring_outer(int dim, Step&& step, const SolverOptions& opts, double tol) {
    OuterLoop out;
    out.y.assign(dim, 0.0);
    std::vector<double> next(dim);
    const double theta = opts.outer_damping;
    if (!(theta > 0.0 && theta <= 1.0))
        throw std::invalid_argument("outer_damping must lie in (0, 1]");
    for (int it = 1; it <= opts.max_iter; ++it) {
        step(out.y, next);
        if (theta < 1.0)
            for (int i = 0; i < dim; ++i)
                next[i] = (1.0 - theta) * out.y[i] + theta * next[i];
        const double gap = sup_diff(next, out.y);
        out.y.swap(next);
        out.iterations = it;
        if (gap < tol) {
            out.converged = true;
            break;
        }
        if (it == opts.max_iter) {
            out.message = "outer iteration did not converge; last iterates " +
                          format_vector(next) + " -> " + format_vector(out.y) +
                          " (violated precondition?)";
        }
    }
    return out;
}

} // namespace

FixedPointResult solve_ring_two(const NetworkModel& m, const SolverOptions& opts) {
    ensure_finalized(m);
    if (m.topology != Topology::RingTwo)
        throw std::invalid_argument("solve_ring_two requires a ring2-tagged model");
    const int J = m.num_nodes;

    std::vector<std::optional<RouteSumView>> views(J);
    for (int i = 0; i < J; ++i) views[i] = as_route_sum(m, i);
    std::vector<double> scratch(J, 0.0);

    auto step = [&](const std::vector<double>& y, std::vector<double>& next) {
        for (int i = 0; i < J; ++i)
            next[i] = ring_inner_x(m, i, views[i], y[(i + J - 1) % J], y[(i + 1) % J],
                                   opts.inner_tol, scratch);
    };
    const auto out = ring_outer(J, step, opts, z_tolerance(m, opts));

    FixedPointResult r;
    r.method = "ring2";
    r.z_star = out.y;
    r.iterations = out.iterations;
    r.converged = out.converged;
    r.message = out.message;
    r.unique_certified = out.converged && all_deltas_positive(m);
    finish(m, r, opts);
    return r;
}

FixedPointResult solve_ring_mixed(const NetworkModel& m, const SolverOptions& opts) {
    ensure_finalized(m);
    if (m.topology != Topology::RingMixed)
        throw std::invalid_argument("solve_ring_mixed requires a ring2+1-tagged model");
    const int J = m.num_nodes;

    std::vector<RouteSumView> pair_view(J), single_view(J);
    for (int i = 0; i < J; ++i) {
        auto pv = as_route_sum(m, i);
        auto sv = as_route_sum(m, J + i);
        if (!pv || !sv)
            throw std::invalid_argument(
                "solve_ring_mixed requires route-sum loss rates for every class; "
                "use the generic solver instead");
        pair_view[i] = *pv;
        single_view[i] = *sv;
    }

    // single-node classes eliminate first: x = phi_{0j}(x + t)
    auto x0 = [&](int i, double t) {
        auto g = [&](double x) {
            return x - detail::phi_of_sum(m, J + i, single_view[i], x + t);
        };
        return solve_increasing(g, 1.0, opts.inner_tol,
                                "single-node solve, class " + std::to_string(J + i));
    };

    auto step = [&](const std::vector<double>& y, std::vector<double>& next) {
        for (int i = 0; i < J; ++i) {
            const double ym = y[(i + J - 1) % J];
            const double yp = y[(i + 1) % J];
            // right side is non-increasing in x because 0 >= x0' >= -1
            auto g = [&](double x) {
                const double s = ym + 2.0 * x + yp + x0(i, ym + x) + x0((i + 1) % J, x + yp);
                return x - detail::phi_of_sum(m, i, pair_view[i], s);
            };
            next[i] = solve_increasing(g, 1.0, opts.inner_tol,
                                       "ring inner solve, class " + std::to_string(i));
        }
    };
    const auto out = ring_outer(J, step, opts, z_tolerance(m, opts));

    FixedPointResult r;
    r.method = "ring2+1";
    r.z_star.assign(m.num_classes, 0.0);
    for (int i = 0; i < J; ++i) r.z_star[i] = out.y[i];
    for (int i = 0; i < J; ++i)
        r.z_star[J + i] = x0(i, out.y[(i + J - 1) % J] + out.y[i]);
    r.iterations = out.iterations;
    r.converged = out.converged;
    r.message = out.message;
    r.unique_certified = out.converged && all_deltas_positive(m);
    finish(m, r, opts);
    return r;
}

FixedPointResult solve_ring_full(const NetworkModel& m, const SolverOptions& opts) {
    ensure_finalized(m);
    if (m.topology != Topology::RingFull)
        throw std::invalid_argument("solve_ring_full requires a ring2+full-tagged model");
    const int J = m.num_nodes;

    std::vector<RouteSumView> view(J + 1);
    for (int k = 0; k <= J; ++k) {
        auto v = as_route_sum(m, k);
        if (!v)
            throw std::invalid_argument(
                "solve_ring_full requires route-sum loss rates for every class; "
                "use the generic solver instead");
        view[k] = *v;
    }
    if (!all_deltas_positive(m))
        throw std::invalid_argument(
            "solve_ring_full starts the bracketing iteration at 0 and needs "
            "beta_k(0) > 0 for every class");

    // v = (y_0, y_1..y_J) in class order: v[0] is the complete route,
    // v[i+1] the pair (i, i+1 mod J)
    auto map = [&](const std::vector<double>& v) {
        std::vector<double> next(J + 1);
        double sum_y = 0.0;
        for (int i = 0; i < J; ++i) sum_y += v[i + 1];
        next[0] = detail::phi_of_sum(m, 0, view[0], J * v[0] + 2.0 * sum_y);
        for (int i = 0; i < J; ++i) {
            const double s = 2.0 * v[0] + v[(i + J - 1) % J + 1] + 2.0 * v[i + 1] +
                             v[(i + 1) % J + 1];
            next[i + 1] = detail::phi_of_sum(m, i + 1, view[i + 1], s);
        }
        return next;
    };

    const auto out = bracket_iterate(map, std::vector<double>(J + 1, 0.0),
                                     z_tolerance(m, opts), opts.max_iter);

    FixedPointResult r;
    r.method = "ring2+full";
    r.z_star = out.midpoint;
    r.iterations = out.iterations;
    r.has_bracket = true;
    r.z_lower = out.even;
    r.z_upper = out.odd;
    r.converged = out.collapsed;
    r.unique_certified = out.collapsed;
    if (!out.collapsed)
        r.message = "bracket did not collapse below tol: possible multi-stability or slow "
                    "convergence";
    finish(m, r, opts);
    return r;
}

FixedPointResult solve_specialized(const NetworkModel& m, const SolverOptions& opts) {
    switch (m.topology) {
        case Topology::Tree: return solve_tree(m, opts);
        case Topology::Linear: return solve_linear(m, opts);
        case Topology::RingTwo: return solve_ring_two(m, opts);
        case Topology::RingMixed: return solve_ring_mixed(m, opts);
        case Topology::RingFull: return solve_ring_full(m, opts);
        case Topology::Custom: break;
    }
    return solve_bracket(m, opts);
}

// --- multi-start scan ------------------------------------------------------

ScanReport scan_multistability(const NetworkModel& m, int n_starts, std::uint64_t seed,
                               const SolverOptions& opts) {
    ensure_finalized(m);
    if (n_starts < 1) throw std::invalid_argument("n_starts must be >= 1");
    const int K = m.num_classes;

    ScanReport report;
    report.results.resize(n_starts);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int s = 0; s < n_starts; ++s) {
        Xoshiro256 rng = derive_stream(seed, StreamTag::ScanStart, s);
        std::vector<double> z0(K);
        for (int k = 0; k < K; ++k) z0[k] = std::pow(10.0, -3.0 + 6.0 * rng.uniform01());
        try {
            report.results[s] = solve_damped(m, std::move(z0), opts);
        } catch (const std::exception& e) {
            report.results[s].method = "damped";
            report.results[s].converged = false;
            report.results[s].message = e.what();
        }
    }

    try {
        report.bracket = solve_bracket(m, opts);
    } catch (const std::exception& e) {
        FixedPointResult r;
        r.method = "bracket";
        r.converged = false;
        r.message = e.what();
        report.bracket = std::move(r);
    }

    auto rel_close = [](const std::vector<double>& a, const std::vector<double>& b) {
        for (size_t i = 0; i < a.size(); ++i) {
            const double scale = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
            if (std::abs(a[i] - b[i]) > 1e-6 * scale) return false;
        }
        return true;
    };
    auto add_to_cluster = [&](const std::vector<double>& z, int member) {
        for (auto& c : report.clusters)
            if (rel_close(c.z, z)) {
                c.member_starts.push_back(member);
                return;
            }
        report.clusters.push_back({z, {member}});
    };

    for (int s = 0; s < n_starts; ++s) {
        const auto& r = report.results[s];
        if (r.converged) {
            ++report.n_converged;
            add_to_cluster(r.z_star, s);
        } else {
            ++report.n_failed;
        }
    }
    if (report.bracket && report.bracket->converged) add_to_cluster(report.bracket->z_star, -1);
    return report;
}

// --- contraction estimate ---------------------------------------------------

double estimate_contraction(const NetworkModel& m, const ContractionGrid& grid,
                            const SolverOptions& opts) {
    ensure_finalized(m);
    if (m.topology != Topology::RingTwo)
        throw std::invalid_argument("estimate_contraction requires a ring2-tagged model");
    if (grid.points < 2 || !(grid.hi > grid.lo) || grid.lo < 0.0)
        throw std::invalid_argument("bad contraction grid");
    const int J = m.num_nodes;

    std::vector<std::optional<RouteSumView>> views(J);
    for (int i = 0; i < J; ++i) views[i] = as_route_sum(m, i);
    std::vector<double> scratch(J, 0.0);

    auto x_of = [&](int i, double ym, double yp) {
        return ring_inner_x(m, i, views[i], ym, yp, opts.inner_tol, scratch);
    };
    // one-sided at the domain edge, central elsewhere
    auto partial = [&](int i, double ym, double yp, bool first) {
        const double y = first ? ym : yp;
        const double h = 1e-5 * std::max(std::abs(y), 1.0);
        const double up = first ? x_of(i, ym + h, yp) : x_of(i, ym, yp + h);
        if (y - h < 0.0) {
            const double at = x_of(i, ym, yp);
            return (up - at) / h;
        }
        const double dn = first ? x_of(i, ym - h, yp) : x_of(i, ym, yp - h);
        return (up - dn) / (2.0 * h);
    };

    double worst = 0.0;
    for (int i = 0; i < J; ++i) {
        for (int a = 0; a < grid.points; ++a) {
            for (int b = 0; b < grid.points; ++b) {
                const double ym = grid.lo + (grid.hi - grid.lo) * a / (grid.points - 1);
                const double yp = grid.lo + (grid.hi - grid.lo) * b / (grid.points - 1);
                try {
                    const double sum = std::abs(partial(i, ym, yp, true)) +
                                       std::abs(partial(i, ym, yp, false));
                    worst = std::max(worst, sum);
                } catch (const std::exception& e) {
                    throw std::runtime_error(
                        "inner solve failed at grid point (" + std::to_string(ym) + ", " +
                        std::to_string(yp) + "), class " + std::to_string(i) + ": " + e.what());
                }
            }
        }
    }
    return worst;
}

} // namespace aimd
