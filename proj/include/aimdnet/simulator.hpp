#ifndef AIMDNET_SIMULATOR_HPP
#define AIMDNET_SIMULATOR_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "aimdnet/model.hpp"

namespace aimd {

struct SimOptions {
    double horizon = 1000.0;
    double warmup_fraction = 0.5; // statistics start at warmup_fraction * horizon
    std::uint64_t seed = 1;
    double window = 0.0;          // thinning lookahead; 0 = adaptive
    int particles_per_class = 1000;
    double sample_interval = 0.0; // path sampling step (single mode); 0 = auto
    int threads = 0;              // simulator parallelism; 0 = all cores, 1 = serial
    bool record_events = false;
    bool collect_samples = false; // keep sampled throughput values (single mode)
    int histogram_bins = 200;
    int batches = 32;             // batch-means segments for standard errors
    double w0 = 0.0;              // initial throughput of every particle
    bool scale_u_by_population = false; // finite mode: beta sees u / |N|
};

struct Event {
    double time;
    int class_index;
    int particle;
    double w_before;
    double w_after;
};

struct Histogram {
    double lo = 0.0;
    double hi = 1.0;              // grid frozen at the end of warmup
    std::vector<double> mass;     // time-weighted occupancy, sums to 1
};

struct SimulationSummary {
    std::string mode;             // single / particles / finite
    std::vector<double> u_bar;    // time-averaged node loads over the stats window
    std::vector<double> u_bar_se; // batch-means standard errors
    std::vector<double> class_means;
    std::vector<double> class_mean_se;
    std::vector<Histogram> histograms; // per class
    std::uint64_t event_count = 0;     // accepted losses
    std::uint64_t proposal_count = 0;  // thinning candidates
    double thinning_efficiency = 1.0;  // accepted / proposed among thinned classes
    double trend_zscore = 0.0;         // first-half vs second-half batch means
    std::vector<double> samples;       // when collect_samples
    std::vector<Event> events;         // when record_events
    std::vector<double> u_over_N;      // finite mode: u_bar / |N|
    std::vector<std::string> warnings;

    // reproducibility metadata
    double horizon = 0.0;
    double warmup_time = 0.0;
    std::uint64_t seed = 0;
    int particles_total = 0;
    std::uint64_t window_count = 0;
    double mean_window = 0.0;
};

// Exact simulation of one AIMD flow (growth a, constant loss-rate factor
// beta, decrease r) by inversion of the integrated rate: from state w, the
// next loss lands after tau = (-w + sqrt(w^2 + 2 a E / beta)) / a with E
// standard exponential. beta = 0 degenerates to the deterministic ramp.
SimulationSummary simulate_single(double a, double beta, double r, double w0,
                                  const SimOptions& opts);

// Mean-field particle system: particles_per_class particles per class, node
// loads estimated from p_k-weighted empirical class means. Losses are
// sampled by thinning over adaptive windows; loads are recomputed at window
// boundaries, where particle advancement synchronizes (and parallelizes).
SimulationSummary simulate_particles(const NetworkModel& m, const SimOptions& opts);

// Finite-population system with counts[k] class-k connections and raw-sum
// node loads. Events are processed in global time order with the load
// updated at every accepted loss, so the sampled law is exact.
SimulationSummary simulate_finite(const NetworkModel& m, const std::vector<int>& counts,
                                  const SimOptions& opts);

} // namespace aimd

#endif
