#ifndef AIMDNET_SOLVERS_HPP
#define AIMDNET_SOLVERS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "aimdnet/model.hpp"

namespace aimd {

struct SolverOptions {
    double tol = 1e-10;        // sup-norm stopping tolerance on z
    int max_iter = 10000;
    double damping = 0.5;      // Picard step for solve_damped
    double inner_tol = 1e-12;  // 1-D root finds
    double outer_damping = 1.0; // ring outer iteration (1 = plain map)
};

struct FixedPointResult {
    std::vector<double> z_star; // class rates
    std::vector<double> u_star; // node loads, always A * z_star
    double residual = 0.0;      // sup-norm fixed-point defect in u-space
    int iterations = 0;
    std::string method;
    bool converged = false;
    bool unique_certified = false;
    bool has_bracket = false;
    std::vector<double> z_lower; // even iterates limit (when bracketed)
    std::vector<double> z_upper; // odd iterates limit
    std::string message;
};

// Alternating iteration z <- Phi(z) from z = 0 (Phi antitone): even iterates
// ascend, odd iterates descend, and every fixed point lies between them.
// Stops when the even/odd gap drops below tol (unique_certified) or at
// max_iter, in which case the surviving bracket is returned as a report of
// possible multi-stability, not an error. Requires beta_k(0) > 0 for all k.
// A custom start must satisfy z0 <= Phi(z0) and z0 <= Phi(Phi(z0)).
FixedPointResult solve_bracket(const NetworkModel& m, const SolverOptions& opts = {},
                               const std::optional<std::vector<double>>& z0 = std::nullopt);

// Damped Picard iteration z <- (1-theta) z + theta Phi(z). Converges on the
// instances this artifact targets but certifies nothing about uniqueness.
FixedPointResult solve_damped(const NetworkModel& m, std::vector<double> z_init,
                              const SolverOptions& opts = {});

// Leaf-to-root elimination for tree models: each node's load solves a
// scalar equation given its ancestors' loads; the root equation closes the
// system and a top-down pass recovers every load. Unique by construction.
FixedPointResult solve_tree(const NetworkModel& m, const SolverOptions& opts = {});

// Linear network: inverts x - phi_j(x) per node, reduces to a scalar
// equation for beta_0 and solves it by bisection over a geometrically
// grown bracket.
FixedPointResult solve_linear(const NetworkModel& m, const SolverOptions& opts = {});

// Ring with two-node routes: outer iteration y <- T(y) where T_j solves the
// scalar implicit equation x = phi_j(y_{j-1} + x, x + y_{j+1}); T is a
// contraction for Lipschitz non-decreasing beta.
FixedPointResult solve_ring_two(const NetworkModel& m, const SolverOptions& opts = {});

// Ring with single-node and two-node routes (route-sum beta required):
// nested implicit solves x_{0j}(t) and x_j(y_{j-1}, y_{j+1}), then the same
// outer contraction iteration.
FixedPointResult solve_ring_mixed(const NetworkModel& m, const SolverOptions& opts = {});

// Ring with two-node routes plus the complete route (route-sum beta):
// bracketing iteration on the (J+1)-dimensional reduced system.
FixedPointResult solve_ring_full(const NetworkModel& m, const SolverOptions& opts = {});

// Dispatch on the topology tag; Custom falls back to solve_bracket.
FixedPointResult solve_specialized(const NetworkModel& m, const SolverOptions& opts = {});

struct ScanCluster {
    std::vector<double> z;           // representative
    std::vector<int> member_starts;  // indices into results (-1 = bracket run)
};

struct ScanReport {
    std::vector<FixedPointResult> results; // one per start, converged or not
    std::optional<FixedPointResult> bracket;
    std::vector<ScanCluster> clusters;     // distinct fixed points found
    int n_converged = 0;
    int n_failed = 0;
};

// Multi-start probe for additional equilibria: damped solves from n_starts
// points sampled log-uniformly in [1e-3, 1e3]^K (deterministic given seed),
// plus the bracketing solve; converged results are clustered at relative
// sup-distance 1e-6.
ScanReport scan_multistability(const NetworkModel& m, int n_starts, std::uint64_t seed,
                               const SolverOptions& opts = {});

struct ContractionGrid {
    double lo = 0.0;
    double hi = 5.0;
    int points = 8;
};

// Numerical estimate of the ring-two contraction constant: the maximum over
// a grid of neighbor values and over j of |dx_j/dy_{j-1}| + |dx_j/dy_{j+1}|,
// by central finite differences (relative step 1e-5) through the inner
// implicit solver. Conforming instances return a value < 1.
double estimate_contraction(const NetworkModel& m, const ContractionGrid& grid = {},
                            const SolverOptions& opts = {});

} // namespace aimd

#endif
