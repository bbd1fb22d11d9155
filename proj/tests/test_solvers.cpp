#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "aimdnet/equilibrium.hpp"
#include "aimdnet/model.hpp"
#include "aimdnet/solvers.hpp"
#include "oracles.hpp"

using namespace aimd;

namespace {

std::vector<ClassParams> uniform_classes(int k, double a = 1.0, double r = 0.5,
                                         double p = 1.0) {
    return std::vector<ClassParams>(k, ClassParams{a, r, p, ""});
}
std::vector<LossRateSpec> uniform_route_sum(int k, double delta = 1.0, double coeff = 1.0,
                                            double exponent = 1.0) {
    return std::vector<LossRateSpec>(k, LossRateSpec::route_sum(delta, coeff, exponent));
}

NetworkModel single_node_linear_beta() {
    return make_custom(1, {1.0}, uniform_classes(1), uniform_route_sum(1));
}

double sup_gap(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

// u sqrt(1+u) = c(1/2), the single node/class fixed point
const double kUStarSingle = 0.9403263883694710;
// y^2 (1 + 4y) = c(1/2)^2, the symmetric ring2 J=3 reduction
const double kYRing3 = 0.6793531982942490;

} // namespace

TEST_CASE("bracket solver: constant beta converges in two map applications") {
    auto m = make_custom(2, {1.0, 0.0, 1.0, 1.0},
                         {{1.0, 0.5, 0.4, ""}, {2.0, 0.3, 0.6, ""}},
                         {LossRateSpec::constant(2.0), LossRateSpec::constant(0.5)});
    auto r = solve_bracket(m);
    CHECK(r.converged);
    CHECK(r.unique_certified);
    CHECK(r.iterations == 2);
    const double z0 = 0.4 * throughput_coefficient(0.5) * std::sqrt(1.0 / 2.0);
    const double z1 = 0.6 * throughput_coefficient(0.3) * std::sqrt(2.0 / 0.5);
    CHECK(r.z_star[0] == doctest::Approx(z0).epsilon(1e-12));
    CHECK(r.z_star[1] == doctest::Approx(z1).epsilon(1e-12));
    CHECK(r.residual < 1e-10);
}

TEST_CASE("bracket solver reproduces the scalar oracle on beta(u) = 1 + u") {
    auto m = single_node_linear_beta();
    auto r = solve_bracket(m);
    CHECK(r.converged);
    CHECK(r.unique_certified);

    const double c = throughput_coefficient(0.5);
    const double ustar =
        oracle::bisect([&](double u) { return u * u * (1.0 + u) - c * c; }, 0.0, 2.0);
    CHECK(ustar == doctest::Approx(kUStarSingle).epsilon(1e-12));
    CHECK(r.u_star[0] == doctest::Approx(ustar).epsilon(1e-9));
    CHECK(r.residual < 1e-10);
    CHECK(r.has_bracket);
    CHECK(r.z_lower[0] <= r.z_star[0]);
    CHECK(r.z_star[0] <= r.z_upper[0]);
}

TEST_CASE("bracket solver requires beta(0) > 0 and validates custom starts") {
    auto m = make_custom(1, {1.0}, uniform_classes(1), uniform_route_sum(1, 0.0));
    CHECK_THROWS_AS(solve_bracket(m), std::invalid_argument);

    auto ok = single_node_linear_beta();
    // z0 above the fixed point violates z0 <= Phi(z0)
    CHECK_THROWS_AS(solve_bracket(ok, {}, std::vector<double>{5.0}), std::invalid_argument);
    // a valid start below the fixed point works
    auto r = solve_bracket(ok, {}, std::vector<double>{0.1});
    CHECK(r.converged);
    CHECK(r.u_star[0] == doctest::Approx(kUStarSingle).epsilon(1e-9));
}

TEST_CASE("damped solver agrees with the bracket solver") {
    auto m = single_node_linear_beta();
    auto r = solve_damped(m, {10.0});
    CHECK(r.converged);
    CHECK(!r.unique_certified);
    CHECK(r.u_star[0] == doctest::Approx(kUStarSingle).epsilon(1e-9));

    SolverOptions undamped;
    undamped.damping = 1.0;
    undamped.max_iter = 200000;
    auto r1 = solve_damped(m, {10.0}, undamped);
    INFO("theta=1 iterations ", r1.iterations, " vs theta=0.5 ", r.iterations);
    if (r1.converged) CHECK(r1.u_star[0] == doctest::Approx(kUStarSingle).epsilon(1e-8));

    auto mc = make_custom(1, {1.0}, uniform_classes(1), {LossRateSpec::constant(2.0)});
    auto rc = solve_damped(mc, {7.0});
    auto rb = solve_bracket(mc);
    CHECK(sup_gap(rc.z_star, rb.z_star) < 1e-10);
}

TEST_CASE("tree solver: single node, symmetry, and agreement with the bracket") {
    // single-node tree is the same scalar equation as above
    auto m1 = make_tree({-1}, uniform_classes(1), uniform_route_sum(1));
    auto r1 = solve_tree(m1);
    CHECK(r1.converged);
    CHECK(r1.unique_certified);
    CHECK(r1.u_star[0] == doctest::Approx(kUStarSingle).epsilon(1e-9));

    // root with two identical leaves: leaf loads must match
    auto m2 = make_tree({-1, 0, 0}, uniform_classes(3, 1, 0.5, 1.0 / 3),
                        uniform_route_sum(3));
    auto r2 = solve_tree(m2);
    CHECK(r2.converged);
    CHECK(r2.u_star[1] == doctest::Approx(r2.u_star[2]).epsilon(1e-12));
    CHECK(r2.residual < 1e-10);

    // 3-level binary tree, additive-linear losses
    std::vector<int> parents{-1, 0, 0, 1, 1, 2, 2};
    std::vector<LossRateSpec> loss;
    NetworkModel shape = make_tree(parents, uniform_classes(7, 1, 0.5, 1.0 / 7),
                                   uniform_route_sum(7));
    for (int k = 0; k < 7; ++k) {
        std::vector<NodeLossTerm> terms;
        for (int j : route_of(shape, k)) terms.push_back({j, 1.0, 1.0});
        loss.push_back(LossRateSpec::additive(1.0, terms));
    }
    auto m3 = make_tree(parents, uniform_classes(7, 1, 0.5, 1.0 / 7), loss);
    auto rt = solve_tree(m3);
    auto rb = solve_bracket(m3);
    CHECK(rt.converged);
    CHECK(rb.converged);
    CHECK(sup_gap(rt.z_star, rb.z_star) < 1e-8);
    CHECK(sup_gap(rt.u_star, rb.u_star) < 1e-8);
    CHECK(rt.residual < 1e-10);

    CHECK_THROWS_AS(solve_tree(single_node_linear_beta(), {}), std::invalid_argument);
}

TEST_CASE("linear solver: constant case is additive and general case matches bracket") {
    // J = 1, both classes constant: u = z0 + z1 exactly
    auto m1 = make_linear(1, uniform_classes(2, 1, 0.5, 0.5),
                          {LossRateSpec::constant(2.0), LossRateSpec::constant(3.0)});
    auto r1 = solve_linear(m1);
    CHECK(r1.converged);
    CHECK(r1.u_star[0] == doctest::Approx(r1.z_star[0] + r1.z_star[1]).epsilon(1e-12));

    // J = 3 symmetric: beta_0 = 1 + u_1 + u_2 + u_3, beta_j = 1 + u_j
    auto m3 = make_linear(3, uniform_classes(4, 1, 0.5, 0.25), uniform_route_sum(4));
    auto rl = solve_linear(m3);
    auto rb = solve_bracket(m3);
    CHECK(rl.converged);
    CHECK(sup_gap(rl.z_star, rb.z_star) < 1e-8);
    CHECK(rl.residual < 1e-10);

    // J = 2 with class 2 growth doubled: its node carries more load
    auto classes = uniform_classes(3, 1, 0.5, 1.0 / 3);
    classes[2].a = 2.0;
    auto m2 = make_linear(2, classes, uniform_route_sum(3));
    auto r2 = solve_linear(m2);
    auto rb2 = solve_bracket(m2);
    CHECK(r2.u_star[1] > r2.u_star[0]);
    CHECK(sup_gap(r2.z_star, rb2.z_star) < 1e-8);
}

TEST_CASE("ring2 solver: symmetric oracle value and constant case") {
    const double c = throughput_coefficient(0.5);
    const double y = oracle::bisect(
        [&](double t) { return t * t * (1.0 + 4.0 * t) - c * c; }, 0.0, 2.0);
    CHECK(y == doctest::Approx(kYRing3).epsilon(1e-12));

    auto m = make_ring_two(3, uniform_classes(3), uniform_route_sum(3));
    auto r = solve_ring_two(m);
    CHECK(r.converged);
    CHECK(r.unique_certified);
    for (int j = 0; j < 3; ++j) {
        CHECK(r.z_star[j] == doctest::Approx(y).epsilon(1e-9));
        CHECK(r.u_star[j] == doctest::Approx(2.0 * y).epsilon(1e-9));
    }
    CHECK(r.residual < 1e-10);

    auto mc = make_ring_two(3, uniform_classes(3, 4.0, 0.5, 0.5),
                            std::vector<LossRateSpec>(3, LossRateSpec::constant(2.0)));
    auto rc = solve_ring_two(mc);
    const double expect = 0.5 * throughput_coefficient(0.5) * std::sqrt(4.0 / 2.0);
    for (int j = 0; j < 3; ++j) CHECK(rc.z_star[j] == doctest::Approx(expect).epsilon(1e-12));

    // asymmetric instance against the generic solver
    auto classes = uniform_classes(5);
    classes[2].a = 2.0;
    auto m5 = make_ring_two(5, classes, uniform_route_sum(5));
    auto rs = solve_ring_two(m5);
    auto rb = solve_bracket(m5);
    CHECK(sup_gap(rs.z_star, rb.z_star) < 1e-8);

    // additive two-argument form is accepted as well
    std::vector<LossRateSpec> additive;
    for (int i = 0; i < 3; ++i)
        additive.push_back(
            LossRateSpec::additive(1.0, {{i, 1.0, 1.0}, {(i + 1) % 3, 1.0, 1.0}}));
    auto ma = make_ring_two(3, uniform_classes(3), additive);
    auto ra = solve_ring_two(ma);
    CHECK(sup_gap(ra.z_star, r.z_star) < 1e-9);
}

TEST_CASE("ring2 rotation equivariance") {
    auto classes = uniform_classes(4);
    classes[0].a = 2.0;
    classes[1].r = 0.3;
    auto m = make_ring_two(4, classes, uniform_route_sum(4));
    auto r = solve_ring_two(m);

    std::vector<ClassParams> rotated(4);
    for (int i = 0; i < 4; ++i) rotated[i] = classes[(i + 1) % 4];
    auto mrot = make_ring_two(4, rotated, uniform_route_sum(4));
    auto rrot = solve_ring_two(mrot);
    for (int i = 0; i < 4; ++i)
        CHECK(rrot.z_star[i] == doctest::Approx(r.z_star[(i + 1) % 4]).epsilon(1e-9));
}

TEST_CASE("ring2+1 solver: symmetric nested oracle and limits") {
    const double c = throughput_coefficient(0.5);
    // y0(y) solves y0 = c / sqrt(1 + y0 + 2y); then y = c / sqrt(1 + 4y + 2 y0(y))
    auto y0_of = [&](double y) {
        return oracle::bisect(
            [&](double t) { return t - c / std::sqrt(1.0 + t + 2.0 * y); }, 0.0, 10.0);
    };
    const double y = oracle::bisect(
        [&](double t) { return t - c / std::sqrt(1.0 + 4.0 * t + 2.0 * y0_of(t)); }, 0.0,
        10.0);
    const double y0 = y0_of(y);
    CHECK(y == doctest::Approx(0.59206975958374154).epsilon(1e-10));
    CHECK(y0 == doctest::Approx(0.76298620727828594).epsilon(1e-10));

    auto m = make_ring_mixed(3, uniform_classes(6), uniform_route_sum(6));
    auto r = solve_ring_mixed(m);
    CHECK(r.converged);
    CHECK(r.unique_certified);
    for (int i = 0; i < 3; ++i) {
        CHECK(r.z_star[i] == doctest::Approx(y).epsilon(1e-9));
        CHECK(r.z_star[3 + i] == doctest::Approx(y0).epsilon(1e-9));
        CHECK(r.u_star[i] == doctest::Approx(y0 + 2.0 * y).epsilon(1e-9));
    }
    CHECK(r.residual < 1e-10);
    CHECK(sup_gap(r.z_star, solve_bracket(m).z_star) < 1e-8);

    // single-node classes starve as their base loss rate grows: the pair
    // system approaches the plain two-node ring
    auto loss = uniform_route_sum(6);
    for (int i = 3; i < 6; ++i) loss[i] = LossRateSpec::route_sum(1e6, 1.0, 1.0);
    auto mlim = make_ring_mixed(3, uniform_classes(6), loss);
    auto rlim = solve_ring_mixed(mlim);
    auto rtwo = solve_ring_two(make_ring_two(3, uniform_classes(3), uniform_route_sum(3)));
    for (int i = 0; i < 3; ++i) {
        CHECK(rlim.z_star[3 + i] < 2e-3);
        CHECK(std::abs(rlim.z_star[i] - rtwo.z_star[i]) < 1e-3);
    }

    // constant beta closes in closed form
    auto mc = make_ring_mixed(3, uniform_classes(6),
                              std::vector<LossRateSpec>(6, LossRateSpec::constant(4.0)));
    auto rc = solve_ring_mixed(mc);
    const double expect = throughput_coefficient(0.5) / 2.0;
    for (int k = 0; k < 6; ++k) CHECK(rc.z_star[k] == doctest::Approx(expect).epsilon(1e-12));

    // non-route-sum additive spec is rejected
    auto bad_loss = uniform_route_sum(6);
    bad_loss[0] = LossRateSpec::additive(1.0, {{0, 1.0, 1.0}, {1, 2.0, 1.0}});
    auto mbad = make_ring_mixed(3, uniform_classes(6), bad_loss);
    CHECK_THROWS_AS(solve_ring_mixed(mbad), std::invalid_argument);
}

TEST_CASE("ring2+full solver: symmetric 2-equation oracle and constant class 0") {
    const double c = throughput_coefficient(0.5);
    auto y0_of = [&](double y) {
        return oracle::bisect(
            [&](double t) { return t - c / std::sqrt(1.0 + 4.0 * t + 8.0 * y); }, 0.0, 10.0);
    };
    const double y = oracle::bisect(
        [&](double t) { return t - c / std::sqrt(1.0 + 4.0 * t + 2.0 * y0_of(t)); }, 0.0,
        10.0);
    const double y0 = y0_of(y);
    CHECK(y == doctest::Approx(0.62263753604244381).epsilon(1e-10));
    CHECK(y0 == doctest::Approx(0.46747031770027114).epsilon(1e-10));

    auto m = make_ring_full(4, uniform_classes(5), uniform_route_sum(5));
    auto r = solve_ring_full(m);
    CHECK(r.converged);
    CHECK(r.unique_certified);
    CHECK(r.z_star[0] == doctest::Approx(y0).epsilon(1e-9));
    for (int i = 1; i <= 4; ++i) CHECK(r.z_star[i] == doctest::Approx(y).epsilon(1e-9));
    CHECK(r.u_star[0] == doctest::Approx(y0 + 2.0 * y).epsilon(1e-9));
    CHECK(r.residual < 1e-10);
    CHECK(sup_gap(r.z_star, solve_bracket(m).z_star) < 1e-8);

    // constant complete-route class: the pair system is a ring2 instance
    // with the base loss rate shifted by the fixed y_0 contribution
    auto loss = uniform_route_sum(5);
    loss[0] = LossRateSpec::constant(4.0);
    auto mfix = make_ring_full(4, uniform_classes(5), loss);
    auto rfix = solve_ring_full(mfix);
    const double y0fix = throughput_coefficient(0.5) / 2.0;
    CHECK(rfix.z_star[0] == doctest::Approx(y0fix).epsilon(1e-10));
    auto shifted = make_ring_two(4, uniform_classes(4),
                                 uniform_route_sum(4, 1.0 + 2.0 * y0fix));
    auto rshift = solve_ring_two(shifted);
    for (int i = 0; i < 4; ++i)
        CHECK(rfix.z_star[i + 1] == doctest::Approx(rshift.z_star[i]).epsilon(1e-8));

    // all-constant closed form
    auto mc = make_ring_full(3, uniform_classes(4),
                             std::vector<LossRateSpec>(4, LossRateSpec::constant(1.0)));
    auto rc = solve_ring_full(mc);
    for (int k = 0; k < 4; ++k)
        CHECK(rc.z_star[k] == doctest::Approx(throughput_coefficient(0.5)).epsilon(1e-12));
}

TEST_CASE("u/z consistency both directions on solver outputs") {
    auto m = make_ring_two(4, uniform_classes(4), uniform_route_sum(4));
    auto r = solve_ring_two(m);
    // residual(A z) ~ 0 iff z ~ Phi(z)
    CHECK(residual(m, r.u_star) < 1e-10);
    auto fz = load_map(m, r.z_star);
    CHECK(sup_gap(fz, r.z_star) < 1e-10);
}

TEST_CASE("multi-start scan finds exactly one cluster on unique instances") {
    auto mc = make_custom(1, {1.0}, uniform_classes(1), {LossRateSpec::constant(2.0)});
    auto rep = scan_multistability(mc, 16, 7);
    CHECK(rep.clusters.size() == 1);
    CHECK(rep.n_converged == 16);

    auto ring = make_ring_two(3, uniform_classes(3), uniform_route_sum(3));
    auto rep2 = scan_multistability(ring, 32, 123);
    CHECK(rep2.clusters.size() == 1);
    auto rtwo = solve_ring_two(ring);
    CHECK(sup_gap(rep2.clusters[0].z, rtwo.z_star) < 1e-6);

    std::vector<int> parents{-1, 0, 0, 1, 1, 2, 2};
    auto tree = make_tree(parents, uniform_classes(7, 1, 0.5, 1.0 / 7),
                          uniform_route_sum(7));
    auto rep3 = scan_multistability(tree, 32, 99);
    CHECK(rep3.clusters.size() == 1);
    CHECK(rep3.bracket.has_value());
    CHECK(rep3.bracket->converged);
}

TEST_CASE("scan is deterministic in the seed") {
    auto ring = make_ring_two(3, uniform_classes(3), uniform_route_sum(3));
    auto a = scan_multistability(ring, 8, 5);
    auto b = scan_multistability(ring, 8, 5);
    REQUIRE(a.results.size() == b.results.size());
    for (size_t i = 0; i < a.results.size(); ++i) {
        REQUIRE(a.results[i].z_star.size() == b.results[i].z_star.size());
        for (size_t k = 0; k < a.results[i].z_star.size(); ++k)
            CHECK(a.results[i].z_star[k] == b.results[i].z_star[k]);
    }
}

TEST_CASE("contraction estimate: zero for constant beta, below one for route-sum") {
    auto mc = make_ring_two(3, uniform_classes(3),
                            std::vector<LossRateSpec>(3, LossRateSpec::constant(1.0)));
    CHECK(estimate_contraction(mc) == doctest::Approx(0.0).epsilon(1e-12));

    auto m = make_ring_two(3, uniform_classes(3), uniform_route_sum(3));
    const double est = estimate_contraction(m);
    CHECK(est >= 0.0);
    CHECK(est < 1.0);

    auto lin = make_linear(2, uniform_classes(3, 1, 0.5, 1.0 / 3), uniform_route_sum(3));
    CHECK_THROWS_AS(estimate_contraction(lin), std::invalid_argument);
}
