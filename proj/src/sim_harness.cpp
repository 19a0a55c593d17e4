#include "qcd/sim_harness.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "qcd/errors.hpp"
#include "qcd/rng.hpp"

namespace qcd {

namespace {

constexpr std::int64_t kNever = ChangePointLaw::kNever;

Regime regime_at(std::int64_t n, std::int64_t gamma) {
    return (gamma != kNever && n >= gamma) ? Regime::Post : Regime::Pre;
}

struct TrialContext {
    const TrialPlan& plan;
    Xoshiro256pp rng;
    std::unique_ptr<LlrStream> stream;
    std::int64_t gamma;

    double next_llr(std::int64_t n) {
        if (stream) return stream->next();
        const double x = plan.model->sample(regime_at(n, gamma), rng);
        return plan.model->log_likelihood_ratio(x);
    }

    double next_observation(std::int64_t n) {
        if (stream) {
            throw std::invalid_argument(
                "llr stream sources cannot drive observation-based detectors");
        }
        return plan.model->sample(regime_at(n, gamma), rng);
    }
};

// Shared trial loop. `take` decides whether step n consumes data, `advance`
// performs the detector update and returns true once stopped, `terminal`
// reads the statistic for the outcome record.
template <typename TakeFn, typename AdvanceFn, typename TerminalFn>
TrialOutcome drive_trial(TrialContext& ctx, TakeFn take, AdvanceFn advance, TerminalFn terminal) {
    TrialOutcome out{};
    out.change_point = ctx.gamma;
    std::int64_t used = 0;
    std::int64_t used_before_change = 0;
    for (std::int64_t n = 1; n <= ctx.plan.horizon_cap; ++n) {
        const bool taking = take(n);
        if (taking) {
            ++used;
            if (n <= ctx.gamma - 1) ++used_before_change;
        }
        const bool stopped = advance(n, taking);
        if (stopped) {
            out.tau = n;
            out.capped = false;
            out.observations_used = used;
            out.observations_before_change = used_before_change;
            out.terminal_statistic = terminal();
            return out;
        }
    }
    out.tau = ctx.plan.horizon_cap;
    out.capped = true;
    out.observations_used = used;
    out.observations_before_change = used_before_change;
    out.terminal_statistic = terminal();
    return out;
}

TrialOutcome run_one(const TrialPlan& plan, std::int64_t trial_index) {
    const std::uint64_t trial_seed = derive_stream_seed(plan.base_seed, trial_index);
    TrialContext ctx{plan, Xoshiro256pp(trial_seed), nullptr, 0};
    ctx.gamma = plan.change_law.sample(ctx.rng);
    if (plan.llr_source) {
        ctx.stream = plan.llr_source(derive_stream_seed(trial_seed, 0x5EED), ctx.gamma);
    } else if (!plan.model) {
        throw std::invalid_argument("trial plan needs an observation model or an llr source");
    }

    return std::visit(
        [&](const auto& spec) -> TrialOutcome {
            using T = std::decay_t<decltype(spec)>;
            if constexpr (std::is_same_v<T, ShiryaevSpec>) {
                auto det = ShiryaevLambdaDetector::from_log_odds_threshold(
                    spec.rho, spec.threshold_log_odds);
                return drive_trial(
                    ctx, [](std::int64_t) { return true; },
                    [&](std::int64_t n, bool) {
                        det.step(ctx.next_llr(n));
                        return det.stopped();
                    },
                    [&] { return det.posterior(); });
            } else if constexpr (std::is_same_v<T, CusumSpec>) {
                CusumDetector det(spec.threshold);
                return drive_trial(
                    ctx, [](std::int64_t) { return true; },
                    [&](std::int64_t n, bool) {
                        det.step(ctx.next_llr(n));
                        return det.stopped();
                    },
                    [&] { return det.w(); });
            } else if constexpr (std::is_same_v<T, SrSpec>) {
                SrDetector det(spec.threshold, spec.head_start);
                return drive_trial(
                    ctx, [](std::int64_t) { return true; },
                    [&](std::int64_t n, bool) {
                        det.step(ctx.next_llr(n));
                        return det.stopped();
                    },
                    [&] { return det.value(); });
            } else if constexpr (std::is_same_v<T, DeShiryaevSpec>) {
                DeShiryaevDetector det(spec.rho, spec.stop_threshold, spec.observe_threshold);
                return drive_trial(
                    ctx, [&](std::int64_t) { return det.take_next(); },
                    [&](std::int64_t n, bool taking) {
                        det.step(taking ? std::optional<double>(ctx.next_llr(n)) : std::nullopt);
                        return det.stopped();
                    },
                    [&] { return det.posterior(); });
            } else if constexpr (std::is_same_v<T, FractionalShiryaevSpec>) {
                FractionalShiryaevDetector det(spec.rho, spec.stop_threshold, spec.period);
                return drive_trial(
                    ctx, [&](std::int64_t) { return det.take_next(); },
                    [&](std::int64_t n, bool taking) {
                        det.step(taking ? std::optional<double>(ctx.next_llr(n)) : std::nullopt);
                        return det.stopped();
                    },
                    [&] { return det.posterior(); });
            } else if constexpr (std::is_same_v<T, GlrGaussianSpec>) {
                auto det = spec.theta_min > 0.0
                               ? GlrGaussianDetector::clamped_llr(spec.window, spec.threshold,
                                                                  spec.theta_min)
                               : GlrGaussianDetector(spec.window, spec.threshold);
                return drive_trial(
                    ctx, [](std::int64_t) { return true; },
                    [&](std::int64_t n, bool) {
                        det.step(ctx.next_observation(n));
                        return det.stopped();
                    },
                    [&] { return det.statistic(); });
            } else {
                static_assert(std::is_same_v<T, MixtureGaussianSpec>);
                MixtureGaussianDetector det(spec.window, spec.prior_mean, spec.prior_var,
                                            spec.threshold);
                return drive_trial(
                    ctx, [](std::int64_t) { return true; },
                    [&](std::int64_t n, bool) {
                        det.step(ctx.next_observation(n));
                        return det.stopped();
                    },
                    [&] { return det.log_statistic(); });
            }
        },
        plan.detector);
}

double capped_fraction_of(const std::vector<TrialOutcome>& outcomes) {
    std::int64_t capped = 0;
    for (const auto& o : outcomes) capped += o.capped ? 1 : 0;
    return static_cast<double>(capped) / static_cast<double>(outcomes.size());
}

void validate_plan(const TrialPlan& plan) {
    if (plan.num_trials < 1) throw std::invalid_argument("num_trials must be >= 1");
    if (plan.horizon_cap < 1) throw std::invalid_argument("horizon_cap must be >= 1");
}

}  // namespace

const char* detector_name(const DetectorSpec& spec) {
    return std::visit(
        [](const auto& s) -> const char* {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, ShiryaevSpec>) return "shiryaev";
            if constexpr (std::is_same_v<T, CusumSpec>) return "cusum";
            if constexpr (std::is_same_v<T, SrSpec>) return "sr";
            if constexpr (std::is_same_v<T, DeShiryaevSpec>) return "de_shiryaev";
            if constexpr (std::is_same_v<T, FractionalShiryaevSpec>) return "fractional_shiryaev";
            if constexpr (std::is_same_v<T, GlrGaussianSpec>) return "glr";
            if constexpr (std::is_same_v<T, MixtureGaussianSpec>) return "mixture";
        },
        spec);
}

TrialOutcome run_trial(const TrialPlan& plan, std::int64_t trial_index) {
    validate_plan(plan);
    return run_one(plan, trial_index);
}

std::vector<TrialOutcome> run_trials(const TrialPlan& plan, int threads) {
    validate_plan(plan);
    int workers = threads;
    if (workers <= 0) {
        workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    }
    workers = static_cast<int>(
        std::min<std::int64_t>(workers, plan.num_trials));

    std::vector<TrialOutcome> outcomes(static_cast<std::size_t>(plan.num_trials));
    if (workers == 1) {
        for (std::int64_t i = 0; i < plan.num_trials; ++i) outcomes[i] = run_one(plan, i);
        return outcomes;
    }
    // Static partition; each trial derives its own stream from its index, so
    // the outcome vector does not depend on the partitioning.
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    std::exception_ptr error;
    std::mutex error_mutex;
    const std::int64_t chunk = (plan.num_trials + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const std::int64_t begin = w * chunk;
        const std::int64_t end = std::min(plan.num_trials, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&, begin, end] {
            try {
                for (std::int64_t i = begin; i < end; ++i) outcomes[i] = run_one(plan, i);
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

std::pair<MetricEstimate, MetricEstimate> estimate_add_pfa(const TrialPlan& plan, int threads) {
    if (!plan.change_law.is_geometric()) {
        throw std::invalid_argument("ADD/PFA estimation requires a geometric change prior");
    }
    const auto outcomes = run_trials(plan, threads);
    const double capped = capped_fraction_of(outcomes);
    if (capped >= 1.0) throw EstimationError("every trial hit the horizon cap");

    std::vector<double> delays;
    delays.reserve(outcomes.size());
    std::int64_t false_alarms = 0;
    for (const auto& o : outcomes) {
        delays.push_back(static_cast<double>(std::max<std::int64_t>(o.tau - o.change_point, 0)));
        if (o.tau < o.change_point) ++false_alarms;
    }
    const auto [add, add_se] = stats::mean_se(delays);
    const auto [pfa, pfa_se] = stats::proportion_se(false_alarms, plan.num_trials);
    return {MetricEstimate{MetricKind::Add, add, add_se, plan.num_trials, capped},
            MetricEstimate{MetricKind::Pfa, pfa, pfa_se, plan.num_trials, capped}};
}

std::pair<MetricEstimate, MetricEstimate> estimate_far_and_mtfa(const TrialPlan& plan,
                                                                int threads) {
    if (!plan.change_law.is_never()) {
        throw std::invalid_argument("FAR estimation requires the Never change law");
    }
    const auto outcomes = run_trials(plan, threads);
    const double capped = capped_fraction_of(outcomes);
    if (capped >= 0.001) {
        throw EstimationError(
            "capped fraction >= 0.1%: horizon cap truncates the false-alarm time");
    }
    std::vector<double> taus;
    taus.reserve(outcomes.size());
    for (const auto& o : outcomes) taus.push_back(static_cast<double>(o.tau));
    const auto [mtfa, mtfa_se] = stats::mean_se(taus);
    const double far = 1.0 / mtfa;
    const double far_se = mtfa_se / (mtfa * mtfa);
    return {MetricEstimate{MetricKind::Far, far, far_se, plan.num_trials, capped},
            MetricEstimate{MetricKind::MeanTimeToFalseAlarm, mtfa, mtfa_se, plan.num_trials,
                           capped}};
}

MetricEstimate estimate_far(const TrialPlan& plan, int threads) {
    return estimate_far_and_mtfa(plan, threads).first;
}

MetricEstimate estimate_wadd_cadd(const TrialPlan& plan, int threads) {
    const bool eligible = std::visit(
        [](const auto& s) -> bool {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, CusumSpec>) return true;
            else if constexpr (std::is_same_v<T, SrSpec>) return s.head_start == 0.0;
            else return false;
        },
        plan.detector);
    if (!eligible) {
        throw std::invalid_argument(
            "worst-case delay via E_1[tau - 1] needs a zero-start CuSum or SR detector");
    }
    TrialPlan worst = plan;
    worst.change_law = ChangePointLaw::fixed(1);
    const auto outcomes = run_trials(worst, threads);
    const double capped = capped_fraction_of(outcomes);
    std::vector<double> delays;
    delays.reserve(outcomes.size());
    for (const auto& o : outcomes) delays.push_back(static_cast<double>(o.tau - 1));
    const auto [mean, se] = stats::mean_se(delays);
    return MetricEstimate{MetricKind::WaddCadd, mean, se, plan.num_trials, capped};
}

MetricEstimate estimate_cadd_lower_bound(const TrialPlan& plan, int threads) {
    static constexpr std::int64_t kGammaGrid[] = {1, 2, 5, 10, 20, 50, 100};
    MetricEstimate best{MetricKind::CaddLowerBound, -1.0, 0.0, plan.num_trials, 0.0};
    for (std::int64_t gamma : kGammaGrid) {
        TrialPlan at = plan;
        at.change_law = ChangePointLaw::fixed(gamma);
        const auto outcomes = run_trials(at, threads);
        std::vector<double> delays;
        delays.reserve(outcomes.size());
        std::int64_t capped = 0;
        for (const auto& o : outcomes) {
            capped += o.capped ? 1 : 0;
            if (o.tau >= gamma) delays.push_back(static_cast<double>(o.tau - gamma));
        }
        if (delays.empty()) continue;  // every run false-alarmed before gamma
        const auto [mean, se] = stats::mean_se(delays);
        if (mean > best.value) {
            best.value = mean;
            best.std_error = se;
            best.trials = static_cast<std::int64_t>(delays.size());
            best.capped_fraction =
                static_cast<double>(capped) / static_cast<double>(outcomes.size());
        }
    }
    if (best.value < 0.0) throw EstimationError("no trial survived to any grid change point");
    return best;
}

MetricEstimate estimate_ano(const TrialPlan& plan, int threads) {
    const bool eligible = std::holds_alternative<DeShiryaevSpec>(plan.detector) ||
                          std::holds_alternative<FractionalShiryaevSpec>(plan.detector);
    if (!eligible) {
        throw std::invalid_argument("ANO is defined for detectors with a take/skip log");
    }
    const auto outcomes = run_trials(plan, threads);
    const double capped = capped_fraction_of(outcomes);
    std::vector<double> counts;
    counts.reserve(outcomes.size());
    for (const auto& o : outcomes) {
        counts.push_back(static_cast<double>(o.observations_before_change));
    }
    const auto [mean, se] = stats::mean_se(counts);
    return MetricEstimate{MetricKind::Ano, mean, se, plan.num_trials, capped};
}

namespace {

// Bisection coordinate per detector: an additive scale on which thresholds
// behave like |log alpha|.
double threshold_to_u(const DetectorSpec& spec) {
    return std::visit(
        [](const auto& s) -> double {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, ShiryaevSpec>) return s.threshold_log_odds;
            else if constexpr (std::is_same_v<T, CusumSpec>) return s.threshold;
            else if constexpr (std::is_same_v<T, SrSpec>) return std::log(s.threshold);
            else if constexpr (std::is_same_v<T, DeShiryaevSpec>) return logit(s.stop_threshold);
            else if constexpr (std::is_same_v<T, FractionalShiryaevSpec>)
                return logit(s.stop_threshold);
            else if constexpr (std::is_same_v<T, GlrGaussianSpec>) return s.threshold;
            else return std::log(s.threshold);
        },
        spec);
}

DetectorSpec spec_with_u(DetectorSpec spec, double u) {
    std::visit(
        [u](auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, ShiryaevSpec>) s.threshold_log_odds = u;
            else if constexpr (std::is_same_v<T, CusumSpec>) s.threshold = u;
            else if constexpr (std::is_same_v<T, SrSpec>) s.threshold = std::exp(u);
            else if constexpr (std::is_same_v<T, DeShiryaevSpec>) s.stop_threshold = sigmoid(u);
            else if constexpr (std::is_same_v<T, FractionalShiryaevSpec>)
                s.stop_threshold = sigmoid(u);
            else if constexpr (std::is_same_v<T, GlrGaussianSpec>) s.threshold = u;
            else s.threshold = std::exp(u);
        },
        spec);
    return spec;
}

double natural_threshold(const DetectorSpec& spec) {
    return std::visit(
        [](const auto& s) -> double {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, ShiryaevSpec>) return s.threshold_log_odds;
            else if constexpr (std::is_same_v<T, DeShiryaevSpec>) return s.stop_threshold;
            else if constexpr (std::is_same_v<T, FractionalShiryaevSpec>) return s.stop_threshold;
            else return s.threshold;
        },
        spec);
}

std::optional<double> analytic_threshold(const DetectorSpec& spec, CalibrationTarget target) {
    const double alpha = target.alpha;
    if (target.kind == CalibrationTarget::Kind::PfaLeq) {
        if (std::holds_alternative<ShiryaevSpec>(spec)) {
            return std::log((1.0 - alpha) / alpha);  // log-odds of A = 1 - alpha
        }
        return std::nullopt;
    }
    if (std::holds_alternative<SrSpec>(spec)) return 1.0 / alpha;
    if (std::holds_alternative<CusumSpec>(spec)) return std::fabs(std::log(alpha));
    return std::nullopt;
}

double analytic_u(const DetectorSpec& spec, double analytic) {
    if (std::holds_alternative<SrSpec>(spec)) return std::log(analytic);
    return analytic;  // shiryaev log-odds and cusum thresholds are already additive
}

}  // namespace

CalibrationResult calibrate_threshold(const TrialPlan& plan, CalibrationTarget target,
                                      int threads) {
    if (!(target.alpha > 0.0 && target.alpha < 1.0)) {
        throw std::invalid_argument("calibration target alpha must lie in (0,1)");
    }
    if (target.kind == CalibrationTarget::Kind::PfaLeq && !plan.change_law.is_geometric()) {
        throw std::invalid_argument("PFA calibration requires a geometric change prior");
    }
    if (target.kind == CalibrationTarget::Kind::FarLeq && !plan.change_law.is_never()) {
        throw std::invalid_argument("FAR calibration requires the Never change law");
    }

    auto metric_at = [&](double u) -> MetricEstimate {
        TrialPlan probe = plan;
        probe.detector = spec_with_u(plan.detector, u);
        if (target.kind == CalibrationTarget::Kind::PfaLeq) {
            return estimate_add_pfa(probe, threads).second;
        }
        return estimate_far(probe, threads);
    };

    const double lo_band = 0.9 * target.alpha;
    const double hi_band = target.alpha;
    const auto analytic = analytic_threshold(plan.detector, target);

    constexpr double kUMin = -700.0;
    constexpr double kUMax = 700.0;

    double u = analytic ? analytic_u(plan.detector, *analytic) : threshold_to_u(plan.detector);
    MetricEstimate achieved = metric_at(u);

    auto done = [&](const MetricEstimate& m) {
        return m.value >= lo_band && m.value <= hi_band;
    };

    double lo = u, hi = u;
    bool bracketed = false;
    if (!done(achieved)) {
        double step = 1.0;
        if (achieved.value > hi_band) {
            lo = u;
            while (!bracketed) {
                hi = lo + step;
                if (hi > kUMax) throw CalibrationError("no threshold bracket below alpha");
                achieved = metric_at(hi);
                if (done(achieved)) {
                    u = hi;
                    bracketed = false;
                    break;
                }
                if (achieved.value <= hi_band) {
                    bracketed = true;
                    break;
                }
                lo = hi;
                step *= 2.0;
            }
        } else {
            hi = u;
            while (!bracketed) {
                lo = hi - step;
                if (lo < kUMin) throw CalibrationError("no threshold bracket above 0.9 alpha");
                achieved = metric_at(lo);
                if (done(achieved)) {
                    u = lo;
                    break;
                }
                if (achieved.value > hi_band) {
                    bracketed = true;
                    break;
                }
                hi = lo;
                step *= 2.0;
            }
        }
        // Same seed for every evaluation makes the empirical constraint
        // monotone in the threshold, so plain bisection terminates.
        if (bracketed) {
            bool hit = false;
            for (int it = 0; it < 200 && !hit; ++it) {
                const double mid = 0.5 * (lo + hi);
                achieved = metric_at(mid);
                u = mid;
                if (done(achieved)) {
                    hit = true;
                    break;
                }
                if (achieved.value > hi_band) lo = mid;
                else hi = mid;
                if (hi - lo < 1e-11) break;
            }
            if (!hit) {
                throw CalibrationError(
                    "bisection exhausted before reaching [0.9 alpha, alpha]; "
                    "increase num_trials");
            }
        }
    }

    CalibrationResult result;
    result.analytic_threshold = analytic;
    result.calibrated_threshold = natural_threshold(spec_with_u(plan.detector, u));
    result.achieved = achieved;
    return result;
}

namespace {

DetectorSpec spec_with_natural(DetectorSpec spec, double t) {
    std::visit(
        [t](auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, ShiryaevSpec>) s.threshold_log_odds = t;
            else if constexpr (std::is_same_v<T, DeShiryaevSpec>) s.stop_threshold = t;
            else if constexpr (std::is_same_v<T, FractionalShiryaevSpec>) s.stop_threshold = t;
            else s.threshold = t;
        },
        spec);
    return spec;
}

}  // namespace

TradeoffResult tradeoff_sweep(const TrialPlan& plan, std::span<const double> thresholds,
                              int threads) {
    if (thresholds.size() < 3) {
        throw std::invalid_argument("tradeoff sweep needs at least 3 grid points");
    }
    TradeoffResult result;
    result.rows.reserve(thresholds.size());
    const bool bayes = plan.change_law.is_geometric();
    for (double t : thresholds) {
        TrialPlan point = plan;
        point.detector = spec_with_natural(plan.detector, t);
        TradeoffRow row{};
        row.threshold = t;
        if (bayes) {
            auto [add, pfa] = estimate_add_pfa(point, threads);
            row.constraint = pfa;
            row.delay = add;
        } else {
            TrialPlan far_plan = point;
            far_plan.change_law = ChangePointLaw::never();
            row.constraint = estimate_far(far_plan, threads);
            row.delay = estimate_wadd_cadd(point, threads);
        }
        result.rows.push_back(row);
    }

    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (const auto& row : result.rows) {
        if (!(row.constraint.value > 0.0)) {
            throw EstimationError(
                "constraint metric estimated as zero; cannot regress against its log");
        }
        const double x = std::fabs(std::log(row.constraint.value));
        const double y = row.delay.value;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const auto n = static_cast<double>(result.rows.size());
    const double denom = sxx - sx * sx / n;
    if (denom <= 0.0) {
        throw EstimationError("degenerate threshold grid: constraint values coincide");
    }
    result.slope = (sxy - sx * sy / n) / denom;
    return result;
}

}  // namespace qcd
