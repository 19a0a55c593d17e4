#include "qcd/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

#include "qcd/detectors.hpp"
#include "qcd/metrics.hpp"

namespace qcd {

double first_order_add(double alpha, double kl, double tail_d) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
    if (!(kl > 0.0)) throw std::invalid_argument("kl must be positive");
    if (!(tail_d >= 0.0)) throw std::invalid_argument("tail exponent must be non-negative");
    return std::fabs(std::log(alpha)) / (kl + tail_d);
}

namespace {

template <typename Fn>
void parallel_indexed(std::int64_t count, int threads, Fn&& fn) {
    int workers = threads;
    if (workers <= 0) {
        workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    }
    workers = static_cast<int>(std::min<std::int64_t>(workers, count));
    if (workers <= 1) {
        for (std::int64_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mutex;
    const std::int64_t chunk = (count + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const std::int64_t begin = w * chunk;
        const std::int64_t end = std::min(count, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&, begin, end] {
            try {
                for (std::int64_t i = begin; i < end; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

WalkOvershootStats stats_from_overshoots(const std::vector<double>& over) {
    std::vector<double> laplace(over.size());
    for (std::size_t i = 0; i < over.size(); ++i) laplace[i] = std::exp(-over[i]);
    const auto [kappa, kappa_se] = stats::mean_se(over);
    const auto [zeta, zeta_se] = stats::mean_se(laplace);
    return WalkOvershootStats{kappa, kappa_se, zeta, zeta_se};
}

}  // namespace

WalkOvershootStats overshoot_of_walk(const std::function<double(Xoshiro256pp&)>& increment,
                                     double threshold, std::int64_t crossings, std::uint64_t seed,
                                     int threads) {
    if (crossings < 2) throw std::invalid_argument("need at least two crossings");
    if (!(threshold > 0.0)) throw std::invalid_argument("threshold must be positive");
    std::vector<double> over(static_cast<std::size_t>(crossings));
    parallel_indexed(crossings, threads, [&](std::int64_t i) {
        Xoshiro256pp rng(derive_stream_seed(seed, static_cast<std::uint64_t>(i)));
        double s = 0.0;
        std::int64_t guard = 0;
        while (s < threshold) {
            s += increment(rng);
            if (++guard > (1LL << 34)) {
                throw std::runtime_error("random walk failed to cross the boundary");
            }
        }
        over[static_cast<std::size_t>(i)] = s - threshold;
    });
    return stats_from_overshoots(over);
}

OvershootEstimates estimate_overshoot(const DensityPair& model, double rho,
                                      std::int64_t num_crossings,
                                      std::span<const double> thresholds, std::uint64_t seed,
                                      int threads) {
    if (model.discrete()) {
        throw std::invalid_argument(
            "overshoot asymptotics assume non-lattice increments; discrete families are rejected");
    }
    if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("rho must lie in [0,1)");
    if (num_crossings < 100) throw std::invalid_argument("need at least 100 crossings");
    if (thresholds.size() < 2) {
        throw std::invalid_argument("need at least two boundaries for the stationarity check");
    }
    const double tail_d = -std::log1p(-rho);
    const double drift = model.kl_divergence(KlDirection::PostVsPre) + tail_d;
    if (!(drift > 0.0)) throw std::invalid_argument("walk drift must be positive");

    auto increment = [&model, tail_d](Xoshiro256pp& rng) {
        const double x = model.sample(Regime::Post, rng);
        return model.log_likelihood_ratio(x) + tail_d;
    };

    std::vector<double> sorted(thresholds.begin(), thresholds.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<WalkOvershootStats> per_threshold(sorted.size());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        per_threshold[i] = overshoot_of_walk(increment, sorted[i], num_crossings,
                                             derive_stream_seed(seed, i), threads);
    }

    const auto& top = per_threshold.back();
    const auto& prev = per_threshold[per_threshold.size() - 2];
    const double kappa_gap = std::fabs(top.kappa - prev.kappa);
    const double kappa_joint = std::hypot(top.kappa_se, prev.kappa_se);
    const double zeta_gap = std::fabs(top.zeta - prev.zeta);
    const double zeta_joint = std::hypot(top.zeta_se, prev.zeta_se);
    const bool stationary = kappa_gap <= 2.0 * kappa_joint && zeta_gap <= 2.0 * zeta_joint;

    // Correction-term mean: eta_n = log rho + sum_k log(1 + rho e^{-Z_k}),
    // Z the Shiryaev log-odds run on all-post-change data, accumulated until
    // the increments drop below 1e-6.
    const double log_rho = std::log(rho);
    std::vector<double> etas(static_cast<std::size_t>(num_crossings));
    const std::uint64_t eta_seed = derive_stream_seed(seed, 0xE7AULL + sorted.size());
    parallel_indexed(num_crossings, threads, [&](std::int64_t i) {
        Xoshiro256pp rng(derive_stream_seed(eta_seed, static_cast<std::uint64_t>(i)));
        double ell = -std::numeric_limits<double>::infinity();
        double eta = log_rho;
        for (std::int64_t n = 0; n < 1000000; ++n) {
            const double x = model.sample(Regime::Post, rng);
            ell = logaddexp(ell, log_rho) + tail_d + model.log_likelihood_ratio(x);
            const double inc = std::log1p(rho * std::exp(-ell));
            if (inc < 1e-6) break;
            eta += inc;
        }
        etas[static_cast<std::size_t>(i)] = eta;
    });
    const auto [eta_mean, eta_se] = stats::mean_se(etas);

    OvershootEstimates est{};
    est.kappa = top.kappa;
    est.kappa_se = top.kappa_se;
    est.zeta = top.zeta;
    est.zeta_se = top.zeta_se;
    est.eta_mean = eta_mean;
    est.eta_se = eta_se;
    est.stationary = stationary;
    est.crossings = num_crossings;
    return est;
}

double second_order_pfa(double b, const OvershootEstimates& est) {
    if (!(b >= 0.0)) throw std::invalid_argument("threshold must be non-negative");
    return est.zeta * std::exp(-b);
}

double second_order_add(double b, const OvershootEstimates& est, double kl, double tail_d) {
    if (!(kl + tail_d > 0.0)) throw std::invalid_argument("kl + tail exponent must be positive");
    return (b + est.kappa - est.eta_mean) / (tail_d + kl);
}

}  // namespace qcd
