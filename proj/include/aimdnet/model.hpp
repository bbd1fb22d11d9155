#ifndef AIMDNET_MODEL_HPP
#define AIMDNET_MODEL_HPP

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace aimd {

// AIMD parameters of one connection class: throughput grows at rate a,
// is multiplied by r at each loss; p is the class population weight.
struct ClassParams {
    double a = 1.0;
    double r = 0.5;
    double p = 1.0;
    std::string label;
};

// Per-node loss contribution coeff * x^exponent for additive specs.
struct NodeLossTerm {
    int node = -1;
    double coeff = 1.0;
    double exponent = 1.0;
};

enum class LossKind { Constant, Additive, RouteSum };

// Loss-rate family for one class. The induced beta_k is continuous and
// non-decreasing in every node load as long as coefficients are >= 0.
//   Constant:  beta(u) = delta
//   Additive:  beta(u) = delta + sum over terms of coeff * u[node]^exponent
//   RouteSum:  beta(u) = delta + coeff * (sum of route-node loads)^exponent
struct LossRateSpec {
    LossKind kind = LossKind::Constant;
    double delta = 1.0;
    std::vector<NodeLossTerm> terms; // Additive only
    double coeff = 1.0;              // RouteSum only
    double exponent = 1.0;           // RouteSum only

    static LossRateSpec constant(double delta) {
        LossRateSpec s;
        s.kind = LossKind::Constant;
        s.delta = delta;
        return s;
    }
    static LossRateSpec route_sum(double delta, double coeff, double exponent) {
        LossRateSpec s;
        s.kind = LossKind::RouteSum;
        s.delta = delta;
        s.coeff = coeff;
        s.exponent = exponent;
        return s;
    }
    static LossRateSpec additive(double delta, std::vector<NodeLossTerm> terms) {
        LossRateSpec s;
        s.kind = LossKind::Additive;
        s.delta = delta;
        s.terms = std::move(terms);
        return s;
    }
};

enum class Topology { Custom, Tree, Linear, RingTwo, RingMixed, RingFull };

const char* topology_name(Topology t);

// Immutable network description: J nodes, K classes, allocation matrix A
// (row-major J x K), per-class AIMD parameters and loss-rate specs.
// Built through the make_* factories or the JSON loader, both of which
// call finalize_model(); treat instances as read-only afterwards.
struct NetworkModel {
    int num_nodes = 0;
    int num_classes = 0;
    std::vector<double> alloc;            // J*K, A(j,k) = alloc[j*K + k]
    std::vector<ClassParams> classes;
    std::vector<LossRateSpec> loss;
    Topology topology = Topology::Custom;
    std::vector<int> tree_parent;         // Tree: parent per node, -1 at root

    // filled by finalize_model()
    std::vector<std::vector<int>> routes; // per class, in topology order
    std::vector<double> alpha;            // p_k c(r_k) sqrt(a_k)

    double A(int j, int k) const { return alloc[static_cast<size_t>(j) * num_classes + k]; }
    double& A(int j, int k) { return alloc[static_cast<size_t>(j) * num_classes + k]; }
};

// Precomputes routes and the per-class throughput constants. Must be called
// after any manual construction; the factories and the config loader do it.
void finalize_model(NetworkModel& m);

struct Violation {
    std::string code;
    std::string message;
    bool warning = false;
    int class_index = -1;
    int node_index = -1;
};

// Returns every invariant violation; hard errors have warning = false.
// A model with no hard errors is accepted by all solvers and simulators.
std::vector<Violation> validate(const NetworkModel& m);
bool has_errors(const std::vector<Violation>& v);

// beta_k evaluated at the node-load vector u. Only route coordinates are
// read; they must be >= 0 (std::domain_error otherwise).
double eval_beta(const NetworkModel& m, int k, std::span<const double> u);

// Route of class k: nodes j with A(j,k) > 0, ordered root-to-leaf for
// trees and in increasing cyclic order for rings.
const std::vector<int>& route_of(const NetworkModel& m, int k);

// Route-sum view of a loss spec: beta(u) = delta + coeff * s^exponent with
// s the summed route load. Constant and RouteSum specs always reduce;
// Additive reduces iff all terms share exponent 1 and a common coefficient.
struct RouteSumView {
    double delta;
    double coeff;
    double exponent;
    double operator()(double s) const;
};
std::optional<RouteSumView> as_route_sum(const NetworkModel& m, int k);

// --- topology factories ------------------------------------------------
// Classes are indexed as the sections of the accompanying docs describe:
//   tree:      class k <-> node k, route = root..k
//   linear:    class 0 = all nodes, class j (1..J) = node j-1
//   ring2:     class i = nodes {i, i+1 mod J}
//   ring2+1:   classes 0..J-1 = pairs, classes J..2J-1 = single node j-J
//   ring2+full:class 0 = all nodes, classes 1..J = pair (k-1, k mod J)

NetworkModel make_custom(int num_nodes, std::vector<double> alloc,
                         std::vector<ClassParams> classes, std::vector<LossRateSpec> loss);

NetworkModel make_tree(const std::vector<int>& parent, std::vector<ClassParams> classes,
                       std::vector<LossRateSpec> loss);

NetworkModel make_linear(int num_nodes, std::vector<ClassParams> classes,
                         std::vector<LossRateSpec> loss);

NetworkModel make_ring_two(int num_nodes, std::vector<ClassParams> classes,
                           std::vector<LossRateSpec> loss);

NetworkModel make_ring_mixed(int num_nodes, std::vector<ClassParams> classes,
                             std::vector<LossRateSpec> loss);

NetworkModel make_ring_full(int num_nodes, std::vector<ClassParams> classes,
                            std::vector<LossRateSpec> loss);

} // namespace aimd

#endif
