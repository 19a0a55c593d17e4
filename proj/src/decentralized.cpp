#include "qcd/decentralized.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "qcd/detectors.hpp"
#include "qcd/errors.hpp"

namespace qcd {

const char* fusion_rule_name(FusionRule rule) {
    switch (rule) {
        case FusionRule::Min: return "min";
        case FusionRule::Max: return "max";
        case FusionRule::All: return "all";
        case FusionRule::Sum: return "sum";
    }
    return "?";
}

namespace {

struct Domain {
    double lo;
    double hi;
};

Domain search_domain(const DensityPair& model) {
    return std::visit(
        [](const auto& f) -> Domain {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, GaussianMeanShift>) {
                return {std::min(f.mu0, f.mu1) - 8.0 * f.sigma,
                        std::max(f.mu0, f.mu1) + 8.0 * f.sigma};
            } else if constexpr (std::is_same_v<T, BernoulliShift>) {
                return {0.0, 1.0};
            } else {
                return {0.0, 40.0 / std::min(f.lam0, f.lam1)};
            }
        },
        model.family());
}

// Quantile of f0, used for the equal-mass initial split.
double pre_quantile(const DensityPair& model, double q) {
    return std::visit(
        [q](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, GaussianMeanShift>) {
                return f.mu0 + f.sigma * normal_quantile(q);
            } else if constexpr (std::is_same_v<T, BernoulliShift>) {
                return q;  // any point in (0,1) separates the two atoms
            } else {
                return -std::log1p(-q) / f.lam0;
            }
        },
        model.family());
}

double cell_kl_term(double p1, double p0) {
    if (p1 <= 0.0) return 0.0;
    if (p0 <= 0.0) return std::numeric_limits<double>::infinity();
    return p1 * std::log(p1 / p0);
}

}  // namespace

namespace {

// Cell mass on (a, b]; taken from whichever tail keeps the subtraction
// well-conditioned.
double cell_mass(const DensityPair& model, Regime regime, double a, double b) {
    const bool has_lo = std::isfinite(a);
    const bool has_hi = std::isfinite(b);
    if (!has_lo) return model.cdf(regime, b);
    if (!has_hi) return model.survival(regime, a);
    const double mass = model.cdf(regime, a) <= 0.5
                            ? model.cdf(regime, b) - model.cdf(regime, a)
                            : model.survival(regime, a) - model.survival(regime, b);
    return std::max(mass, 0.0);
}

}  // namespace

QuantizedChannel make_quantized_channel(const DensityPair& model,
                                        const std::vector<double>& thresholds) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    QuantizedChannel ch;
    ch.thresholds = thresholds;
    const std::size_t cells = thresholds.size() + 1;
    ch.p0.resize(cells);
    ch.p1.resize(cells);
    ch.llr.resize(cells);
    for (std::size_t j = 0; j < cells; ++j) {
        const double lo = j == 0 ? -kInf : thresholds[j - 1];
        const double hi = j + 1 < cells ? thresholds[j] : kInf;
        ch.p0[j] = cell_mass(model, Regime::Pre, lo, hi);
        ch.p1[j] = cell_mass(model, Regime::Post, lo, hi);
        ch.llr[j] = (ch.p1[j] > 0.0 && ch.p0[j] > 0.0) ? std::log(ch.p1[j] / ch.p0[j]) : 0.0;
    }
    return ch;
}

double quantized_kl(const DensityPair& model, const std::vector<double>& thresholds) {
    const auto ch = make_quantized_channel(model, thresholds);
    double kl = 0.0;
    for (std::size_t j = 0; j < ch.p0.size(); ++j) kl += cell_kl_term(ch.p1[j], ch.p0[j]);
    return kl;
}

QuantizerDesign design_mlr_quantizer(const DensityPair& model, std::int64_t levels) {
    if (levels < 2) throw std::invalid_argument("quantizer needs at least 2 levels");
    const auto domain = search_domain(model);
    const std::int64_t cuts = levels - 1;

    std::vector<double> thresholds(static_cast<std::size_t>(cuts));
    for (std::int64_t j = 0; j < cuts; ++j) {
        thresholds[static_cast<std::size_t>(j)] =
            pre_quantile(model, static_cast<double>(j + 1) / static_cast<double>(levels));
    }
    const double initial_kl = quantized_kl(model, thresholds);

    constexpr int kGridPoints = 2048;
    constexpr int kRounds = 3;
    double best_kl = initial_kl;
    for (int round = 0; round < kRounds; ++round) {
        for (std::int64_t j = 0; j < cuts; ++j) {
            const std::size_t idx = static_cast<std::size_t>(j);
            const double lo = j == 0 ? domain.lo : thresholds[idx - 1];
            const double hi = j == cuts - 1 ? domain.hi : thresholds[idx + 1];
            double best_t = thresholds[idx];  // keeping the current cut is a candidate
            double best_here = best_kl;
            for (int g = 1; g < kGridPoints; ++g) {
                const double t = lo + (hi - lo) * static_cast<double>(g) /
                                          static_cast<double>(kGridPoints);
                thresholds[idx] = t;
                const double kl = quantized_kl(model, thresholds);
                if (kl > best_here) {
                    best_here = kl;
                    best_t = t;
                }
            }
            thresholds[idx] = best_t;
            best_kl = best_here;
        }
    }

    QuantizerDesign design;
    design.thresholds = thresholds;
    design.kl_quantized = best_kl;
    design.improved = best_kl > initial_kl;
    if (!design.improved) {
        // Coordinate ascent never loses to its start; equal means the initial
        // equal-mass split was already optimal on this grid.
        design.kl_quantized = initial_kl;
    }
    return design;
}

namespace {

// Per-sensor running statistic; the fusion rules need statistics that keep
// evolving past their own threshold, so the recursions are tracked directly.
struct SensorState {
    double cusum_w = 0.0;
    double log_odds = -std::numeric_limits<double>::infinity();
    std::int64_t first_crossing = 0;  // 0 = not yet crossed

    double statistic(LocalDetectorKind kind) const {
        return kind == LocalDetectorKind::Cusum ? cusum_w : log_odds;
    }
};

void validate_config(const SensorNetworkConfig& config) {
    if (config.num_sensors < 1) throw std::invalid_argument("need at least one sensor");
    if (static_cast<std::int64_t>(config.local_thresholds.size()) != config.num_sensors) {
        throw std::invalid_argument("one local threshold per sensor required");
    }
    for (double b : config.local_thresholds) {
        if (!std::isfinite(b)) throw std::invalid_argument("local thresholds must be finite");
    }
    if (config.local_detector == LocalDetectorKind::Shiryaev &&
        !(config.shiryaev_rho > 0.0 && config.shiryaev_rho < 1.0)) {
        throw std::invalid_argument("local Shiryaev sensors need rho in (0,1)");
    }
    if (config.fusion_rule == FusionRule::Sum &&
        config.local_detector != LocalDetectorKind::Cusum) {
        throw std::invalid_argument("the Sum rule adds CuSum statistics");
    }
    if (config.quantizer_levels && *config.quantizer_levels < 2) {
        throw std::invalid_argument("quantizer needs at least 2 levels");
    }
}

std::optional<QuantizedChannel> prepare_channel(const SensorNetworkConfig& config) {
    if (!config.quantizer_levels) return std::nullopt;
    return make_quantized_channel(
        config.per_sensor_model,
        design_mlr_quantizer(config.per_sensor_model, *config.quantizer_levels).thresholds);
}

FusionTrialOutcome run_fusion_trial_prepared(const SensorNetworkConfig& config,
                                             const std::optional<QuantizedChannel>& channel,
                                             const ChangePointLaw& change_law,
                                             std::int64_t horizon_cap, std::uint64_t base_seed,
                                             std::int64_t trial_index) {
    const std::uint64_t trial_seed = derive_stream_seed(base_seed, trial_index);
    Xoshiro256pp gamma_rng(derive_stream_seed(trial_seed, 0));
    const std::int64_t gamma = change_law.sample(gamma_rng);

    const auto L = static_cast<std::size_t>(config.num_sensors);
    std::vector<Xoshiro256pp> sensor_rng;
    sensor_rng.reserve(L);
    for (std::size_t l = 0; l < L; ++l) {
        sensor_rng.emplace_back(derive_stream_seed(trial_seed, 1 + l));
    }

    const double rho = config.shiryaev_rho;
    const double log_rho = rho > 0.0 ? std::log(rho) : 0.0;
    const double tail_d = rho > 0.0 ? -std::log1p(-rho) : 0.0;

    std::vector<SensorState> sensors(L);
    FusionTrialOutcome out{horizon_cap, true, gamma};
    for (std::int64_t n = 1; n <= horizon_cap; ++n) {
        const Regime regime =
            (gamma != ChangePointLaw::kNever && n >= gamma) ? Regime::Post : Regime::Pre;
        bool all_above = true;
        double stat_sum = 0.0;
        std::int64_t crossed = 0;
        for (std::size_t l = 0; l < L; ++l) {
            auto& s = sensors[l];
            const bool frozen =
                config.fusion_rule == FusionRule::Max && s.first_crossing != 0;
            if (!frozen) {
                const double x = config.per_sensor_model.sample(regime, sensor_rng[l]);
                double y;
                if (channel) {
                    const auto cell = static_cast<std::size_t>(
                        std::upper_bound(channel->thresholds.begin(), channel->thresholds.end(),
                                         x) -
                        channel->thresholds.begin());
                    y = channel->llr[cell];
                } else {
                    y = config.per_sensor_model.log_likelihood_ratio(x);
                }
                if (config.local_detector == LocalDetectorKind::Cusum) {
                    s.cusum_w = std::max(s.cusum_w + y, 0.0);
                } else {
                    s.log_odds =
                        detail::shiryaev_prior_update_log_odds(s.log_odds, log_rho, tail_d) + y;
                }
            }
            const double stat = s.statistic(config.local_detector);
            const double threshold = config.local_thresholds[l];
            if (stat >= threshold && s.first_crossing == 0) s.first_crossing = n;
            if (stat < threshold) all_above = false;
            if (s.first_crossing != 0) ++crossed;
            stat_sum += stat;
        }

        bool stop = false;
        switch (config.fusion_rule) {
            case FusionRule::Min:
                stop = crossed > 0;
                break;
            case FusionRule::Max:
                stop = crossed == config.num_sensors;
                break;
            case FusionRule::All:
                stop = all_above;
                break;
            case FusionRule::Sum:
                stop = stat_sum >= config.sum_threshold;
                break;
        }
        if (stop) {
            out.tau = n;
            out.capped = false;
            return out;
        }
    }
    return out;
}

}  // namespace

FusionTrialOutcome run_fusion_trial(const SensorNetworkConfig& config,
                                    const ChangePointLaw& change_law, std::int64_t horizon_cap,
                                    std::uint64_t base_seed, std::int64_t trial_index) {
    validate_config(config);
    const auto channel = prepare_channel(config);
    return run_fusion_trial_prepared(config, channel, change_law, horizon_cap, base_seed,
                                     trial_index);
}

std::vector<FusionTrialOutcome> run_fusion_trials(const SensorNetworkConfig& config,
                                                  const ChangePointLaw& change_law,
                                                  std::int64_t num_trials,
                                                  std::int64_t horizon_cap, std::uint64_t base_seed,
                                                  int threads) {
    validate_config(config);
    const auto channel = prepare_channel(config);
    if (num_trials < 1) throw std::invalid_argument("num_trials must be >= 1");
    int workers = threads;
    if (workers <= 0) {
        workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    }
    workers = static_cast<int>(std::min<std::int64_t>(workers, num_trials));
    std::vector<FusionTrialOutcome> outcomes(static_cast<std::size_t>(num_trials));
    auto work = [&](std::int64_t begin, std::int64_t end) {
        for (std::int64_t i = begin; i < end; ++i) {
            outcomes[static_cast<std::size_t>(i)] =
                run_fusion_trial_prepared(config, channel, change_law, horizon_cap, base_seed, i);
        }
    };
    if (workers == 1) {
        work(0, num_trials);
        return outcomes;
    }
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mutex;
    const std::int64_t chunk = (num_trials + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const std::int64_t begin = w * chunk;
        const std::int64_t end = std::min(num_trials, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&, begin, end] {
            try {
                work(begin, end);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
    return outcomes;
}

MetricEstimate fusion_far(const SensorNetworkConfig& config, std::int64_t num_trials,
                          std::int64_t horizon_cap, std::uint64_t base_seed, int threads) {
    const auto outcomes =
        run_fusion_trials(config, ChangePointLaw::never(), num_trials, horizon_cap, base_seed,
                          threads);
    std::int64_t capped = 0;
    std::vector<double> taus;
    taus.reserve(outcomes.size());
    for (const auto& o : outcomes) {
        capped += o.capped ? 1 : 0;
        taus.push_back(static_cast<double>(o.tau));
    }
    const double capped_fraction =
        static_cast<double>(capped) / static_cast<double>(outcomes.size());
    if (capped_fraction >= 0.001) {
        throw EstimationError(
            "capped fraction >= 0.1%: horizon cap truncates the false-alarm time");
    }
    const auto [mtfa, mtfa_se] = stats::mean_se(taus);
    return MetricEstimate{MetricKind::Far, 1.0 / mtfa, mtfa_se / (mtfa * mtfa), num_trials,
                          capped_fraction};
}

MetricEstimate fusion_worst_delay(const SensorNetworkConfig& config, std::int64_t num_trials,
                                  std::int64_t horizon_cap, std::uint64_t base_seed, int threads) {
    const auto outcomes = run_fusion_trials(config, ChangePointLaw::fixed(1), num_trials,
                                            horizon_cap, base_seed, threads);
    std::int64_t capped = 0;
    std::vector<double> delays;
    delays.reserve(outcomes.size());
    for (const auto& o : outcomes) {
        capped += o.capped ? 1 : 0;
        delays.push_back(static_cast<double>(o.tau - 1));
    }
    const auto [mean, se] = stats::mean_se(delays);
    return MetricEstimate{MetricKind::WaddCadd, mean, se, num_trials,
                          static_cast<double>(capped) / static_cast<double>(outcomes.size())};
}

std::pair<MetricEstimate, MetricEstimate> fusion_add_pfa(const SensorNetworkConfig& config,
                                                         double rho, std::int64_t num_trials,
                                                         std::int64_t horizon_cap,
                                                         std::uint64_t base_seed, int threads) {
    const auto outcomes = run_fusion_trials(config, ChangePointLaw::geometric(rho), num_trials,
                                            horizon_cap, base_seed, threads);
    std::int64_t capped = 0;
    std::int64_t false_alarms = 0;
    std::vector<double> delays;
    delays.reserve(outcomes.size());
    for (const auto& o : outcomes) {
        capped += o.capped ? 1 : 0;
        delays.push_back(static_cast<double>(std::max<std::int64_t>(o.tau - o.change_point, 0)));
        if (o.tau < o.change_point) ++false_alarms;
    }
    const double capped_fraction =
        static_cast<double>(capped) / static_cast<double>(outcomes.size());
    const auto [add, add_se] = stats::mean_se(delays);
    const auto [pfa, pfa_se] = stats::proportion_se(false_alarms, num_trials);
    return {MetricEstimate{MetricKind::Add, add, add_se, num_trials, capped_fraction},
            MetricEstimate{MetricKind::Pfa, pfa, pfa_se, num_trials, capped_fraction}};
}

std::vector<double> split_local_thresholds(FusionRule rule, double global_threshold,
                                           std::int64_t num_sensors) {
    if (num_sensors < 1) throw std::invalid_argument("need at least one sensor");
    const double per_sensor = rule == FusionRule::Min
                                  ? global_threshold + std::log(static_cast<double>(num_sensors))
                                  : global_threshold;
    return std::vector<double>(static_cast<std::size_t>(num_sensors), per_sensor);
}

}  // namespace qcd
