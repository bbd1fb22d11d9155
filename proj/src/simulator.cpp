#include "aimdnet/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>
#include <tuple>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "aimdnet/equilibrium.hpp"
#include "aimdnet/rng.hpp"

namespace aimd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Particle {
    double w = 0.0;
    double t_ref = 0.0;       // w is the throughput at t_ref
    Xoshiro256 rng;
    double pending = kInf;    // next exact loss time (constant-beta classes)
    double lambda = 0.0;      // thinning bound rate for the current window

    double win_integral = 0.0;   // int w dt over the current window (post-warmup)
    double w_max_seen = 0.0;
    std::vector<double> hist;    // time-in-bin, allocated once the grid exists
    std::uint64_t losses = 0;
    std::uint64_t proposals = 0;
    std::uint64_t thin_accepts = 0;
    bool bound_violated = false;
    std::vector<Event> log;
};

// next inversion time: beta (w tau + a tau^2 / 2) = E
double inversion_gap(double w, double a, double beta, double e) {
    if (beta <= 0.0) return kInf;
    return (-w + std::sqrt(w * w + 2.0 * a * e / beta)) / a;
}

class Engine {
  public:
    Engine(const NetworkModel& m, std::vector<int> counts, bool mean_field,
           const SimOptions& opts, std::string mode)
        : m_(m), opts_(opts), mode_(std::move(mode)), mean_field_(mean_field),
          counts_(std::move(counts)) {
        const auto violations = validate(m_);
        for (const auto& v : violations) {
            // a vanishing loss rate is fine for simulation (no losses occur);
            // it only breaks the fixed-point map
            if (!v.warning && v.code != "beta_identically_zero")
                throw std::invalid_argument("model rejected by simulator: " + v.code + " (" +
                                            v.message + ")");
            warnings_.push_back(v.code + ": " + v.message);
        }
        if (!(opts_.horizon > 0.0)) throw std::invalid_argument("horizon must be > 0");
        if (!(opts_.warmup_fraction >= 0.0 && opts_.warmup_fraction < 1.0))
            throw std::invalid_argument("warmup_fraction must lie in [0,1)");
        if (opts_.batches < 2) throw std::invalid_argument("batches must be >= 2");
        if (!(opts_.w0 >= 0.0)) throw std::invalid_argument("w0 must be >= 0");

        K_ = m_.num_classes;
        J_ = m_.num_nodes;
        if (static_cast<int>(counts_.size()) != K_)
            throw std::invalid_argument("counts must have one entry per class");
        for (int c : counts_)
            if (c < 1) throw std::invalid_argument("counts must be >= 1");

        total_ = 0;
        for (int c : counts_) total_ += c;
        beta_scale_ = (!mean_field_ && opts_.scale_u_by_population) ? 1.0 / total_ : 1.0;
        weight_.resize(K_);
        load_coeff_.resize(K_);
        const_beta_.resize(K_);
        for (int k = 0; k < K_; ++k) {
            weight_[k] = mean_field_ ? m_.classes[k].p / counts_[k] : 1.0;
            load_coeff_[k] = mean_field_ ? m_.classes[k].p : static_cast<double>(counts_[k]);
            const_beta_[k] = m_.loss[k].kind == LossKind::Constant;
        }
        growth_.assign(J_, 0.0);
        for (int j = 0; j < J_; ++j)
            for (int k = 0; k < K_; ++k)
                growth_[j] += m_.A(j, k) * weight_[k] * counts_[k] * m_.classes[k].a;
        for (int k = 0; k < K_; ++k)
            for (int n = 0; n < counts_[k]; ++n) flat_.push_back({k, n});

        if (mean_field_) {
            double psum = 0.0;
            for (const auto& c : m_.classes) psum += c.p;
            if (std::abs(psum - 1.0) > 1e-9)
                warnings_.push_back("class weights sum to " + std::to_string(psum) +
                                    "; mean-field scaling assumes limiting fractions");
        }
    }

    SimulationSummary run() {
        init_particles();
        warmup_t_ = opts_.warmup_fraction * opts_.horizon;
        batch_len_ = (opts_.horizon - warmup_t_) / opts_.batches;
        batch_int_.assign(K_, std::vector<double>(opts_.batches, 0.0));
        sample_next_ = warmup_t_ + sample_step();

        if (warmup_t_ == 0.0) freeze_grid_from_initial();

        refresh_sums(0.0);
        double t = 0.0;
        const double horizon = opts_.horizon;
        while (t < horizon * (1.0 - 1e-15)) {
            const std::vector<double> u = loads(t);
            for (double v : u)
                if (!(v < 1e12)) throw std::runtime_error("node load overflow in simulation");

            double dt = opts_.window > 0.0 ? opts_.window : adaptive_dt(u);
            double t_end = std::min(t + dt, horizon);
            t_end = std::min(t_end, next_edge(t));

            if (mean_field_)
                advance_window_mean_field(t, t_end, u);
            else
                advance_window_finite(t, t_end, u);

            refresh_sums(t_end);
            flush_window(t, t_end);
            if (t < warmup_t_ && t_end >= warmup_t_) freeze_grid_from_warmup();
            ++window_count_;
            t = t_end;
        }
        return finalize();
    }

  private:
    // --- setup ----------------------------------------------------------

    void init_particles() {
        parts_.resize(K_);
        for (int k = 0; k < K_; ++k) {
            parts_[k].resize(counts_[k]);
            for (int n = 0; n < counts_[k]; ++n) {
                Particle& p = parts_[k][n];
                p.w = opts_.w0;
                p.t_ref = 0.0;
                p.w_max_seen = opts_.w0;
                p.rng = particle_stream(opts_.seed, k, n);
                if (const_beta_[k])
                    p.pending = inversion_gap(p.w, m_.classes[k].a, m_.loss[k].delta,
                                              p.rng.exponential());
            }
        }
    }

    double sample_step() const {
        if (opts_.sample_interval > 0.0) return opts_.sample_interval;
        return std::max(opts_.horizon / 20000.0, 1e-6);
    }

    // --- load bookkeeping -------------------------------------------------

    // class sums S_k are valid at t_base_; between events every throughput
    // grows linearly, so advancing them is exact
    void refresh_sums(double t) {
        S_.assign(K_, 0.0);
        for (int k = 0; k < K_; ++k) {
            double s = 0.0;
            for (const Particle& p : parts_[k]) s += p.w + m_.classes[k].a * (t - p.t_ref);
            S_[k] = s;
        }
        t_base_ = t;
    }

    void advance_sums(double t) {
        if (t <= t_base_) return;
        for (int k = 0; k < K_; ++k) S_[k] += counts_[k] * m_.classes[k].a * (t - t_base_);
        t_base_ = t;
    }

    std::vector<double> loads(double t) const {
        std::vector<double> u(J_, 0.0);
        for (int j = 0; j < J_; ++j) {
            double s = 0.0;
            for (int k = 0; k < K_; ++k)
                s += m_.A(j, k) * weight_[k] * (S_[k] + counts_[k] * m_.classes[k].a * (t - t_base_));
            u[j] = s;
        }
        return u;
    }

    std::vector<double> beta_arg(const std::vector<double>& u) const {
        if (beta_scale_ == 1.0) return u;
        std::vector<double> v(u);
        for (double& x : v) x *= beta_scale_;
        return v;
    }

    // Window sizing keeps the thinning bound within a few percent of the
    // true rate: growth over the window stays below 5% of the typical
    // throughput scale of every class.
    double adaptive_dt(const std::vector<double>& u) const {
        const auto ub = beta_arg(u);
        double dt = kInf;
        for (int k = 0; k < K_; ++k) {
            if (const_beta_[k]) continue;
            const double a = m_.classes[k].a;
            const double beta = eval_beta(m_, k, ub);
            const double wbar = S_[k] / counts_[k];
            const double scale = beta > 0.0 ? std::sqrt(a / beta) : 0.0;
            dt = std::min(dt, 0.05 * std::max(wbar, scale) / a);
        }
        if (dt == kInf) return opts_.horizon; // inversion-only model: edges decide
        return std::max(dt, 1e-9 * opts_.horizon);
    }

    double next_edge(double t) const {
        const double eps = 1e-12 * opts_.horizon;
        if (t < warmup_t_ - eps) return warmup_t_;
        const int b = static_cast<int>((t - warmup_t_) / batch_len_ + 1e-9);
        return std::min(warmup_t_ + (b + 1) * batch_len_, opts_.horizon);
    }

    // --- per-particle dynamics -------------------------------------------

    void jump(Particle& p, int k, int n) {
        const double w_before = p.w;
        p.w *= m_.classes[k].r;
        ++p.losses;
        if (opts_.record_events) p.log.push_back({p.t_ref, k, n, w_before, p.w});
    }

    void schedule_inversion(Particle& p, int k) {
        p.pending = p.t_ref + inversion_gap(p.w, m_.classes[k].a, m_.loss[k].delta,
                                            p.rng.exponential());
    }

    // advance the particle to time s, accumulating time-weighted statistics
    void advance_segment(Particle& p, int k, double s) {
        if (s <= p.t_ref) return;
        const double a = m_.classes[k].a;
        const double lo = std::max(p.t_ref, warmup_t_);
        if (s > lo) {
            const double w_lo = p.w + a * (lo - p.t_ref);
            const double len = s - lo;
            p.win_integral += w_lo * len + 0.5 * a * len * len;
            if (!p.hist.empty()) add_occupancy(p, k, w_lo, w_lo + a * len);
            if (opts_.collect_samples) take_samples(p, k, lo, s);
        }
        p.w += a * (s - p.t_ref);
        p.t_ref = s;
        p.w_max_seen = std::max(p.w_max_seen, p.w);
    }

    void add_occupancy(Particle& p, int k, double w_lo, double w_hi) {
        if (w_hi <= w_lo) return;
        const double bw = grid_hi_[k] / opts_.histogram_bins;
        const double inv_rate = 1.0 / m_.classes[k].a;
        const int bins = opts_.histogram_bins;
        int i0 = std::min(static_cast<int>(w_lo / bw), bins - 1);
        int i1 = std::min(static_cast<int>(w_hi / bw), bins - 1);
        for (int i = i0; i <= i1; ++i) {
            const double blo = i * bw;
            const double bhi = (i == bins - 1) ? kInf : blo + bw; // top bin absorbs the tail
            const double ov = std::min(w_hi, bhi) - std::max(w_lo, blo);
            if (ov > 0.0) p.hist[i] += ov * inv_rate;
        }
    }

    void take_samples(Particle& p, int k, double lo, double hi) {
        // only meaningful when one particle owns the whole timeline
        if (total_ != 1) return;
        while (sample_next_ < hi) {
            if (sample_next_ >= lo)
                samples_.push_back(p.w + m_.classes[k].a * (sample_next_ - p.t_ref));
            sample_next_ += sample_step();
        }
    }

    // --- mean-field window --------------------------------------------------

    // Within a window the load vector is held at its window-start value and
    // every particle advances independently (their candidate streams are
    // private), so the loop parallelizes without changing a single draw.
    void advance_window_mean_field(double t0, double t1, const std::vector<double>& u) {
        const auto u_arg = beta_arg(u);
        std::vector<double> u_up(u_arg);
        for (int j = 0; j < J_; ++j) u_up[j] += growth_[j] * (t1 - t0) * beta_scale_;
        std::vector<double> beta_now(K_), beta_ub(K_);
        for (int k = 0; k < K_; ++k) {
            beta_now[k] = eval_beta(m_, k, u_arg);
            beta_ub[k] = eval_beta(m_, k, u_up);
        }

        const int threads = opts_.threads;
#ifdef _OPENMP
        if (threads != 1) {
            const int nt = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
            for (int idx = 0; idx < static_cast<int>(flat_.size()); ++idx) {
                const auto [k, n] = flat_[idx];
                advance_particle_mf(parts_[k][n], k, n, t0, t1, beta_now[k], beta_ub[k]);
            }
        } else
#endif
        {
            for (int k = 0; k < K_; ++k)
                for (int n = 0; n < counts_[k]; ++n)
                    advance_particle_mf(parts_[k][n], k, n, t0, t1, beta_now[k], beta_ub[k]);
        }
        for (const auto& row : parts_)
            for (const auto& p : row)
                if (p.bound_violated)
                    throw std::logic_error("thinning bound fell below the true rate");
    }

    void advance_particle_mf(Particle& p, int k, int n, double t0, double t1,
                             double beta_now, double beta_ub) {
        const double a = m_.classes[k].a;
        if (const_beta_[k]) {
            while (p.pending <= t1) {
                advance_segment(p, k, p.pending);
                jump(p, k, n);
                schedule_inversion(p, k);
            }
            advance_segment(p, k, t1);
            return;
        }
        const double lambda = (p.w + a * (t1 - t0)) * beta_ub;
        if (lambda > 0.0) {
            double s = t0 + p.rng.exponential() / lambda;
            while (s <= t1) {
                ++p.proposals;
                const double w_at = p.w + a * (s - p.t_ref);
                const double prob = w_at * beta_now / lambda;
                if (prob > 1.0 + 1e-9) {
                    p.bound_violated = true;
                    return;
                }
                if (p.rng.uniform01() < prob) {
                    advance_segment(p, k, s);
                    jump(p, k, n);
                    ++p.thin_accepts;
                }
                s += p.rng.exponential() / lambda;
            }
        }
        advance_segment(p, k, t1);
    }

    // --- finite window --------------------------------------------------------

    // Candidates from every particle are merged in global time order and the
    // exact load (all growth, all earlier losses) is used at each acceptance
    // test, so the finite-system law is sampled exactly.
    void advance_window_finite(double t0, double t1, const std::vector<double>& u) {
        std::vector<double> u_up(beta_arg(u));
        for (int j = 0; j < J_; ++j) u_up[j] += growth_[j] * (t1 - t0) * beta_scale_;

        using Cand = std::tuple<double, int, int>;
        std::priority_queue<Cand, std::vector<Cand>, std::greater<Cand>> queue;

        for (int k = 0; k < K_; ++k) {
            const double beta_ub = eval_beta(m_, k, u_up);
            for (int n = 0; n < counts_[k]; ++n) {
                Particle& p = parts_[k][n];
                if (const_beta_[k]) {
                    if (p.pending <= t1) queue.push({p.pending, k, n});
                } else {
                    p.lambda = (p.w + m_.classes[k].a * (t1 - t0)) * beta_ub;
                    if (p.lambda > 0.0) {
                        const double s = t0 + p.rng.exponential() / p.lambda;
                        if (s <= t1) queue.push({s, k, n});
                    }
                }
            }
        }

        while (!queue.empty()) {
            const auto [s, k, n] = queue.top();
            queue.pop();
            Particle& p = parts_[k][n];
            const double a = m_.classes[k].a;
            if (const_beta_[k]) {
                advance_sums(s);
                advance_segment(p, k, s);
                const double w_at = p.w;
                jump(p, k, n);
                S_[k] -= (1.0 - m_.classes[k].r) * w_at;
                schedule_inversion(p, k);
                if (p.pending <= t1) queue.push({p.pending, k, n});
            } else {
                ++p.proposals;
                advance_sums(s);
                const auto u_now = beta_arg(loads(s));
                const double beta = eval_beta(m_, k, u_now);
                const double w_at = p.w + a * (s - p.t_ref);
                const double prob = w_at * beta / p.lambda;
                if (prob > 1.0 + 1e-9)
                    throw std::logic_error("thinning bound fell below the true rate");
                if (p.rng.uniform01() < prob) {
                    advance_segment(p, k, s);
                    jump(p, k, n);
                    ++p.thin_accepts;
                    S_[k] -= (1.0 - m_.classes[k].r) * w_at;
                }
                const double next = s + p.rng.exponential() / p.lambda;
                if (next <= t1) queue.push({next, k, n});
            }
        }
        for (int k = 0; k < K_; ++k)
            for (int n = 0; n < counts_[k]; ++n) advance_segment(parts_[k][n], k, t1);
    }

    // --- statistics -------------------------------------------------------------

    void flush_window(double t0, double t1) {
        if (t1 <= warmup_t_) {
            for (auto& row : parts_)
                for (auto& p : row) p.win_integral = 0.0;
            return;
        }
        const double mid = 0.5 * (t0 + t1);
        int b = static_cast<int>((mid - warmup_t_) / batch_len_);
        b = std::clamp(b, 0, opts_.batches - 1);
        for (int k = 0; k < K_; ++k) {
            double sum = 0.0;
            for (auto& p : parts_[k]) {
                sum += p.win_integral;
                p.win_integral = 0.0;
            }
            batch_int_[k][b] += sum;
        }
    }

    void freeze_grid_from_warmup() {
        grid_hi_.assign(K_, 0.0);
        for (int k = 0; k < K_; ++k) {
            double mx = 0.0;
            for (const Particle& p : parts_[k]) mx = std::max(mx, p.w_max_seen);
            grid_hi_[k] = std::max(1.3 * mx, 1e-9);
            for (auto& p : parts_[k]) p.hist.assign(opts_.histogram_bins, 0.0);
        }
    }

    void freeze_grid_from_initial() {
        grid_hi_.assign(K_, 0.0);
        refresh_sums(0.0);
        const auto u = beta_arg(loads(0.0));
        for (int k = 0; k < K_; ++k) {
            const double beta = eval_beta(m_, k, u);
            const double scale = beta > 0.0 ? std::sqrt(m_.classes[k].a / beta) : 0.0;
            double hi = std::max(1.3 * opts_.w0, 8.0 * scale);
            const double reachable = opts_.w0 + m_.classes[k].a * opts_.horizon;
            hi = std::min(hi > 0.0 ? hi : reachable, reachable);
            grid_hi_[k] = std::max(hi, 1e-9);
            for (auto& p : parts_[k]) p.hist.assign(opts_.histogram_bins, 0.0);
        }
    }

    SimulationSummary finalize() {
        SimulationSummary s;
        s.mode = mode_;
        s.horizon = opts_.horizon;
        s.warmup_time = warmup_t_;
        s.seed = opts_.seed;
        s.particles_total = total_;
        s.window_count = window_count_;
        s.mean_window = window_count_ ? (opts_.horizon / window_count_) : 0.0;
        s.warnings = warnings_;
        s.samples = std::move(samples_);

        const double t_stat = opts_.horizon - warmup_t_;
        const int B = opts_.batches;

        s.class_means.resize(K_);
        s.class_mean_se.resize(K_);
        std::vector<std::vector<double>> batch_mean(K_, std::vector<double>(B));
        for (int k = 0; k < K_; ++k) {
            double tot = 0.0;
            for (int b = 0; b < B; ++b) {
                batch_mean[k][b] = batch_int_[k][b] / (counts_[k] * batch_len_);
                tot += batch_int_[k][b];
            }
            s.class_means[k] = tot / (counts_[k] * t_stat);
            double var = 0.0;
            for (int b = 0; b < B; ++b) {
                const double d = batch_mean[k][b] - s.class_means[k];
                var += d * d;
            }
            s.class_mean_se[k] = std::sqrt(var / (B - 1) / B);
        }

        s.u_bar.assign(J_, 0.0);
        s.u_bar_se.assign(J_, 0.0);
        for (int j = 0; j < J_; ++j) {
            double mean = 0.0;
            for (int k = 0; k < K_; ++k) mean += m_.A(j, k) * load_coeff_[k] * s.class_means[k];
            s.u_bar[j] = mean;
            double var = 0.0;
            for (int b = 0; b < B; ++b) {
                double ub = 0.0;
                for (int k = 0; k < K_; ++k)
                    ub += m_.A(j, k) * load_coeff_[k] * batch_mean[k][b];
                var += (ub - mean) * (ub - mean);
            }
            s.u_bar_se[j] = std::sqrt(var / (B - 1) / B);
        }
        if (!mean_field_) {
            s.u_over_N.resize(J_);
            for (int j = 0; j < J_; ++j) s.u_over_N[j] = s.u_bar[j] / total_;
        }

        // batch-means trend: first half against second half
        double worst_z = 0.0;
        for (int k = 0; k < K_; ++k) {
            const int h = B / 2;
            double m1 = 0.0, m2 = 0.0;
            for (int b = 0; b < h; ++b) m1 += batch_mean[k][b];
            for (int b = h; b < B; ++b) m2 += batch_mean[k][b];
            m1 /= h;
            m2 /= (B - h);
            double v1 = 0.0, v2 = 0.0;
            for (int b = 0; b < h; ++b) v1 += (batch_mean[k][b] - m1) * (batch_mean[k][b] - m1);
            for (int b = h; b < B; ++b) v2 += (batch_mean[k][b] - m2) * (batch_mean[k][b] - m2);
            const double se = std::sqrt(v1 / (h - 1) / h + v2 / (B - h - 1) / (B - h));
            if (se > 0.0) worst_z = std::max(worst_z, std::abs(m1 - m2) / se);
        }
        s.trend_zscore = worst_z;

        s.histograms.resize(K_);
        for (int k = 0; k < K_; ++k) {
            auto& h = s.histograms[k];
            h.lo = 0.0;
            h.hi = grid_hi_.empty() ? 0.0 : grid_hi_[k];
            h.mass.assign(opts_.histogram_bins, 0.0);
            for (const Particle& p : parts_[k])
                for (int i = 0; i < opts_.histogram_bins; ++i)
                    if (!p.hist.empty()) h.mass[i] += p.hist[i];
            const double norm = counts_[k] * t_stat;
            for (double& x : h.mass) x /= norm;
        }

        std::uint64_t losses = 0, proposals = 0, thin_accepts = 0;
        for (const auto& row : parts_)
            for (const auto& p : row) {
                losses += p.losses;
                proposals += p.proposals;
                thin_accepts += p.thin_accepts;
            }
        s.event_count = losses;
        s.proposal_count = proposals;
        s.thinning_efficiency =
            proposals ? static_cast<double>(thin_accepts) / proposals : 1.0;

        if (opts_.record_events) {
            for (auto& row : parts_)
                for (auto& p : row)
                    s.events.insert(s.events.end(), p.log.begin(), p.log.end());
            std::sort(s.events.begin(), s.events.end(), [](const Event& a, const Event& b) {
                return std::tie(a.time, a.class_index, a.particle) <
                       std::tie(b.time, b.class_index, b.particle);
            });
        }
        return s;
    }

    const NetworkModel& m_;
    SimOptions opts_;
    std::string mode_;
    bool mean_field_;
    std::vector<int> counts_;
    int K_ = 0, J_ = 0;
    int total_ = 0;
    double beta_scale_ = 1.0;
    std::vector<double> weight_;     // contribution of one particle to u
    std::vector<double> load_coeff_; // class mean -> u coefficient
    std::vector<char> const_beta_;
    std::vector<double> growth_;
    std::vector<std::vector<Particle>> parts_;
    std::vector<std::pair<int, int>> flat_;
    std::vector<double> S_;
    double t_base_ = 0.0;
    double warmup_t_ = 0.0, batch_len_ = 0.0;
    std::vector<std::vector<double>> batch_int_;
    std::vector<double> grid_hi_;
    std::vector<double> samples_;
    double sample_next_ = 0.0;
    std::uint64_t window_count_ = 0;
    std::vector<std::string> warnings_;
};

} // namespace

SimulationSummary simulate_single(double a, double beta, double r, double w0,
                                  const SimOptions& opts) {
    if (!(a > 0.0)) throw std::domain_error("a must be > 0");
    if (!(beta >= 0.0)) throw std::domain_error("beta must be >= 0");
    if (!(r >= 0.0 && r < 1.0)) throw std::domain_error("r must lie in [0,1)");
    if (!(w0 >= 0.0)) throw std::domain_error("w0 must be >= 0");

    NetworkModel m = make_custom(1, {1.0}, {{a, r, 1.0, "flow"}},
                                 {LossRateSpec::constant(beta)});
    SimOptions o = opts;
    o.collect_samples = true;
    o.w0 = w0;
    Engine engine(m, {1}, false, o, "single");
    return engine.run();
}

SimulationSummary simulate_particles(const NetworkModel& m, const SimOptions& opts) {
    if (opts.particles_per_class < 1)
        throw std::invalid_argument("particles_per_class must be >= 1");
    Engine engine(m, std::vector<int>(m.num_classes, opts.particles_per_class), true, opts,
                  "particles");
    return engine.run();
}

SimulationSummary simulate_finite(const NetworkModel& m, const std::vector<int>& counts,
                                  const SimOptions& opts) {
    Engine engine(m, counts, false, opts, "finite");
    return engine.run();
}

} // namespace aimd
