#include "aimdnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "aimdnet/equilibrium.hpp"

namespace aimd {

const char* topology_name(Topology t) {
    switch (t) {
        case Topology::Custom: return "custom";
        case Topology::Tree: return "tree";
        case Topology::Linear: return "linear";
        case Topology::RingTwo: return "ring2";
        case Topology::RingMixed: return "ring2+1";
        case Topology::RingFull: return "ring2+full";
    }
    return "?";
}

void finalize_model(NetworkModel& m) {
    const int J = m.num_nodes;
    const int K = m.num_classes;
    if (static_cast<int>(m.alloc.size()) != J * K)
        throw std::invalid_argument("allocation matrix size does not match J*K");

    m.routes.assign(K, {});
    for (int k = 0; k < K; ++k) {
        auto& route = m.routes[k];
        if (m.topology == Topology::Tree && k < static_cast<int>(m.tree_parent.size())) {
            // root-to-leaf order along the path
            std::vector<int> up;
            for (int n = k; n >= 0; n = m.tree_parent[n]) up.push_back(n);
            route.assign(up.rbegin(), up.rend());
        } else if ((m.topology == Topology::RingTwo || m.topology == Topology::RingMixed ||
                    m.topology == Topology::RingFull)) {
            // increasing cyclic order starting at the lowest route node;
            // for the pair {J-1, 0} that means (J-1, 0).
            std::vector<int> nodes;
            for (int j = 0; j < J; ++j)
                if (m.A(j, k) > 0.0) nodes.push_back(j);
            if (nodes.size() == 2 && nodes.front() == 0 && nodes.back() == J - 1 && J > 2)
                route = {J - 1, 0};
            else
                route = nodes;
        } else {
            for (int j = 0; j < J; ++j)
                if (m.A(j, k) > 0.0) route.push_back(j);
        }
    }

    m.alpha.assign(K, 0.0);
    for (int k = 0; k < K; ++k) {
        const auto& c = m.classes[k];
        if (c.a > 0.0 && c.r >= 0.0 && c.r < 1.0 && c.p > 0.0)
            m.alpha[k] = c.p * throughput_coefficient(c.r) * std::sqrt(c.a);
    }
}

namespace {

void check_tag_pattern(const NetworkModel& m, std::vector<Violation>& out) {
    const int J = m.num_nodes;
    const int K = m.num_classes;
    auto bad = [&](const std::string& msg) {
        out.push_back({"topology_structure", msg, false, -1, -1});
    };
    auto expect = [&](int j, int k, double v) {
        if (m.A(j, k) != v)
            bad("A(" + std::to_string(j) + "," + std::to_string(k) + ") must be " +
                std::to_string(v) + " for " + topology_name(m.topology));
    };
    switch (m.topology) {
        case Topology::Custom:
            break;
        case Topology::Tree: {
            if (static_cast<int>(m.tree_parent.size()) != J || K != J) {
                bad("tree requires parent array of length J and K = J");
                break;
            }
            int roots = 0;
            for (int n = 0; n < J; ++n) {
                if (m.tree_parent[n] < 0) {
                    ++roots;
                    continue;
                }
                if (m.tree_parent[n] >= J) {
                    bad("tree parent index out of range");
                    return;
                }
            }
            if (roots != 1) {
                bad("tree must have exactly one root");
                break;
            }
            // acyclicity: walking up from any node must reach the root
            for (int n = 0; n < J; ++n) {
                int steps = 0, cur = n;
                while (cur >= 0 && ++steps <= J) cur = m.tree_parent[cur];
                if (steps > J) {
                    bad("tree parent array contains a cycle");
                    return;
                }
            }
            for (int k = 0; k < K; ++k) {
                std::vector<char> on_path(J, 0);
                for (int n = k; n >= 0; n = m.tree_parent[n]) on_path[n] = 1;
                for (int j = 0; j < J; ++j) expect(j, k, on_path[j] ? 1.0 : 0.0);
            }
            break;
        }
        case Topology::Linear: {
            if (K != J + 1) {
                bad("linear requires K = J + 1");
                break;
            }
            for (int j = 0; j < J; ++j) {
                expect(j, 0, 1.0);
                for (int k = 1; k <= J; ++k) expect(j, k, j == k - 1 ? 1.0 : 0.0);
            }
            break;
        }
        case Topology::RingTwo: {
            if (K != J || J < 3) {
                bad("ring2 requires K = J and J >= 3");
                break;
            }
            for (int k = 0; k < K; ++k)
                for (int j = 0; j < J; ++j)
                    expect(j, k, (j == k || j == (k + 1) % J) ? 1.0 : 0.0);
            break;
        }
        case Topology::RingMixed: {
            if (K != 2 * J || J < 3) {
                bad("ring2+1 requires K = 2J and J >= 3");
                break;
            }
            for (int i = 0; i < J; ++i)
                for (int j = 0; j < J; ++j) {
                    expect(j, i, (j == i || j == (i + 1) % J) ? 1.0 : 0.0);
                    expect(j, J + i, j == i ? 1.0 : 0.0);
                }
            break;
        }
        case Topology::RingFull: {
            if (K != J + 1 || J < 3) {
                bad("ring2+full requires K = J + 1 and J >= 3");
                break;
            }
            for (int j = 0; j < J; ++j) {
                expect(j, 0, 1.0);
                for (int k = 1; k <= J; ++k)
                    expect(j, k, (j == k - 1 || j == k % J) ? 1.0 : 0.0);
            }
            break;
        }
    }
}

} // namespace

std::vector<Violation> validate(const NetworkModel& m) {
    std::vector<Violation> out;
    const int J = m.num_nodes;
    const int K = m.num_classes;

    if (J <= 0 || K <= 0 || static_cast<int>(m.alloc.size()) != J * K ||
        static_cast<int>(m.classes.size()) != K || static_cast<int>(m.loss.size()) != K) {
        out.push_back({"shape_mismatch", "model arrays do not match J=" + std::to_string(J) +
                                             ", K=" + std::to_string(K),
                       false, -1, -1});
        return out;
    }

    for (int k = 0; k < K; ++k) {
        const auto& c = m.classes[k];
        if (!(c.a > 0.0) || !std::isfinite(c.a))
            out.push_back({"a_nonpositive", "a must be > 0", false, k, -1});
        if (!(c.r >= 0.0 && c.r < 1.0))
            out.push_back({"r_out_of_range", "r out of [0,1)", false, k, -1});
        if (!(c.p > 0.0) || !std::isfinite(c.p))
            out.push_back({"p_nonpositive", "p must be > 0", false, k, -1});
    }

    for (int j = 0; j < J; ++j)
        for (int k = 0; k < K; ++k) {
            const double a = m.A(j, k);
            if (!(a >= 0.0) || !std::isfinite(a)) {
                out.push_back({"alloc_negative", "allocation entries must be finite and >= 0",
                               false, -1, j});
                j = J; // one report is enough
                break;
            }
        }

    for (int k = 0; k < K; ++k) {
        bool used = false;
        for (int j = 0; j < J; ++j) used = used || m.A(j, k) > 0.0;
        if (!used)
            out.push_back({"class_route_empty", "every class must use at least one node",
                           false, k, -1});
    }

    for (int k = 0; k < K; ++k) {
        const auto& s = m.loss[k];
        if (!(s.delta >= 0.0) || !std::isfinite(s.delta))
            out.push_back({"delta_negative", "delta must be >= 0", false, k, -1});
        bool has_positive_term = false;
        if (s.kind == LossKind::Additive) {
            for (const auto& t : s.terms) {
                if (!(t.coeff >= 0.0) || !(t.exponent >= 0.0))
                    out.push_back({"loss_term_negative",
                                   "additive term coeff/exponent must be >= 0", false, k,
                                   t.node});
                if (t.node < 0 || t.node >= J) {
                    out.push_back({"loss_term_off_route", "loss term node out of range", false,
                                   k, t.node});
                    continue;
                }
                if (m.A(t.node, k) <= 0.0)
                    out.push_back({"loss_term_off_route", "loss term off route", false, k,
                                   t.node});
                has_positive_term = has_positive_term || t.coeff > 0.0;
            }
        } else if (s.kind == LossKind::RouteSum) {
            if (!(s.coeff >= 0.0) || !(s.exponent >= 0.0))
                out.push_back({"loss_term_negative", "route-sum coeff/exponent must be >= 0",
                               false, k, -1});
            has_positive_term = s.coeff > 0.0;
        }
        if (s.delta == 0.0) {
            if (!has_positive_term)
                out.push_back({"beta_identically_zero",
                               "delta = 0 with no positive loss terms makes beta vanish",
                               false, k, -1});
            else
                out.push_back({"delta_zero",
                               "delta = 0: the generic bracketing solver will reject this "
                               "class; topology solvers proceed",
                               true, k, -1});
        }
    }

    double psum = 0.0;
    for (const auto& c : m.classes) psum += c.p;
    if (std::abs(psum - 1.0) > 1e-9)
        out.push_back({"p_sum_not_one",
                       "class weights sum to " + std::to_string(psum) +
                           "; the load map is well defined for any positive weights",
                       true, -1, -1});

    check_tag_pattern(m, out);
    return out;
}

bool has_errors(const std::vector<Violation>& v) {
    return std::any_of(v.begin(), v.end(), [](const Violation& x) { return !x.warning; });
}

double eval_beta(const NetworkModel& m, int k, std::span<const double> u) {
    if (k < 0 || k >= m.num_classes) throw std::out_of_range("class index out of range");
    const auto& route = m.routes[k];
    for (int j : route)
        if (!(u[j] >= 0.0))
            throw std::domain_error("negative load at node " + std::to_string(j));
    const auto& s = m.loss[k];
    switch (s.kind) {
        case LossKind::Constant:
            return s.delta;
        case LossKind::Additive: {
            double b = s.delta;
            for (const auto& t : s.terms) b += t.coeff * std::pow(u[t.node], t.exponent);
            return b;
        }
        case LossKind::RouteSum: {
            double sum = 0.0;
            for (int j : route) sum += u[j];
            return s.delta + s.coeff * std::pow(sum, s.exponent);
        }
    }
    return s.delta;
}

const std::vector<int>& route_of(const NetworkModel& m, int k) {
    if (k < 0 || k >= m.num_classes) throw std::out_of_range("class index out of range");
    return m.routes[k];
}

double RouteSumView::operator()(double s) const {
    return delta + coeff * std::pow(s, exponent);
}

std::optional<RouteSumView> as_route_sum(const NetworkModel& m, int k) {
    const auto& s = m.loss[k];
    switch (s.kind) {
        case LossKind::Constant:
            return RouteSumView{s.delta, 0.0, 1.0};
        case LossKind::RouteSum:
            return RouteSumView{s.delta, s.coeff, s.exponent};
        case LossKind::Additive: {
            // delta + sum_l c * u_l equals delta + c * (sum u_l) only when
            // every exponent is 1 and the coefficients agree
            if (s.terms.empty()) return RouteSumView{s.delta, 0.0, 1.0};
            const double c0 = s.terms.front().coeff;
            for (const auto& t : s.terms)
                if (t.exponent != 1.0 || t.coeff != c0) return std::nullopt;
            if (s.terms.size() != m.routes[k].size()) return std::nullopt;
            return RouteSumView{s.delta, c0, 1.0};
        }
    }
    return std::nullopt;
}

// --- factories ----------------------------------------------------------

namespace {

NetworkModel assemble(int J, int K, Topology tag, std::vector<ClassParams> classes,
                      std::vector<LossRateSpec> loss) {
    if (static_cast<int>(classes.size()) != K)
        throw std::invalid_argument("expected " + std::to_string(K) + " class parameter sets");
    if (static_cast<int>(loss.size()) != K)
        throw std::invalid_argument("expected " + std::to_string(K) + " loss specs");
    NetworkModel m;
    m.num_nodes = J;
    m.num_classes = K;
    m.topology = tag;
    m.classes = std::move(classes);
    m.loss = std::move(loss);
    m.alloc.assign(static_cast<size_t>(J) * K, 0.0);
    return m;
}

} // namespace

NetworkModel make_custom(int num_nodes, std::vector<double> alloc,
                         std::vector<ClassParams> classes, std::vector<LossRateSpec> loss) {
    const int J = num_nodes;
    if (J <= 0 || alloc.size() % J != 0)
        throw std::invalid_argument("allocation matrix size must be a multiple of J");
    const int K = static_cast<int>(alloc.size()) / J;
    NetworkModel m = assemble(J, K, Topology::Custom, std::move(classes), std::move(loss));
    m.alloc = std::move(alloc);
    finalize_model(m);
    return m;
}

NetworkModel make_tree(const std::vector<int>& parent, std::vector<ClassParams> classes,
                       std::vector<LossRateSpec> loss) {
    const int J = static_cast<int>(parent.size());
    NetworkModel m = assemble(J, J, Topology::Tree, std::move(classes), std::move(loss));
    m.tree_parent = parent;
    for (int k = 0; k < J; ++k)
        for (int n = k; n >= 0; n = parent[n]) {
            if (n >= J) throw std::invalid_argument("tree parent index out of range");
            m.A(n, k) = 1.0;
        }
    finalize_model(m);
    return m;
}

NetworkModel make_linear(int num_nodes, std::vector<ClassParams> classes,
                         std::vector<LossRateSpec> loss) {
    const int J = num_nodes;
    NetworkModel m = assemble(J, J + 1, Topology::Linear, std::move(classes), std::move(loss));
    for (int j = 0; j < J; ++j) {
        m.A(j, 0) = 1.0;
        m.A(j, j + 1) = 1.0;
    }
    finalize_model(m);
    return m;
}

NetworkModel make_ring_two(int num_nodes, std::vector<ClassParams> classes,
                           std::vector<LossRateSpec> loss) {
    const int J = num_nodes;
    NetworkModel m = assemble(J, J, Topology::RingTwo, std::move(classes), std::move(loss));
    for (int i = 0; i < J; ++i) {
        m.A(i, i) = 1.0;
        m.A((i + 1) % J, i) = 1.0;
    }
    finalize_model(m);
    return m;
}

NetworkModel make_ring_mixed(int num_nodes, std::vector<ClassParams> classes,
                             std::vector<LossRateSpec> loss) {
    const int J = num_nodes;
    NetworkModel m =
        assemble(J, 2 * J, Topology::RingMixed, std::move(classes), std::move(loss));
    for (int i = 0; i < J; ++i) {
        m.A(i, i) = 1.0;
        m.A((i + 1) % J, i) = 1.0;
        m.A(i, J + i) = 1.0;
    }
    finalize_model(m);
    return m;
}

NetworkModel make_ring_full(int num_nodes, std::vector<ClassParams> classes,
                            std::vector<LossRateSpec> loss) {
    const int J = num_nodes;
    NetworkModel m =
        assemble(J, J + 1, Topology::RingFull, std::move(classes), std::move(loss));
    for (int j = 0; j < J; ++j) m.A(j, 0) = 1.0;
    for (int k = 1; k <= J; ++k) {
        m.A(k - 1, k) = 1.0;
        m.A(k % J, k) = 1.0;
    }
    finalize_model(m);
    return m;
}

} // namespace aimd
