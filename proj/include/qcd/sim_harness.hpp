#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "qcd/detectors.hpp"
#include "qcd/dist_models.hpp"
#include "qcd/metrics.hpp"

namespace qcd {

// Detector configurations the harness can run. Shiryaev thresholds are in
// log-odds of the stopping posterior; DE/fractional thresholds are posterior
// probabilities.
struct ShiryaevSpec {
    double rho;
    double threshold_log_odds;
};
struct CusumSpec {
    double threshold;
};
struct SrSpec {
    double threshold;
    double head_start = 0.0;
};
struct DeShiryaevSpec {
    double rho;
    double stop_threshold;
    double observe_threshold;
};
struct FractionalShiryaevSpec {
    double rho;
    double stop_threshold;
    std::int64_t period = 2;
};
struct GlrGaussianSpec {
    std::int64_t window;
    double threshold;
    double theta_min = 0.0;
};
struct MixtureGaussianSpec {
    std::int64_t window;
    double prior_mean;
    double prior_var;
    double threshold;
};

using DetectorSpec = std::variant<ShiryaevSpec, CusumSpec, SrSpec, DeShiryaevSpec,
                                  FractionalShiryaevSpec, GlrGaussianSpec, MixtureGaussianSpec>;

inline ShiryaevSpec shiryaev_from_prob_threshold(double rho, double a) {
    return ShiryaevSpec{rho, logit(a)};
}

const char* detector_name(const DetectorSpec& spec);

// Replacement observation source: yields the conditional llr sequence for one
// trial. Receives a per-trial stream seed and the realized change point.
using LlrStreamFactory =
    std::function<std::unique_ptr<LlrStream>(std::uint64_t stream_seed, std::int64_t change_point)>;

// Everything needed to run one batch of independent trials. A trial is fully
// determined by (base_seed, trial_index).
struct TrialPlan {
    std::optional<DensityPair> model;  // may be empty when llr_source is set
    ChangePointLaw change_law;
    DetectorSpec detector;
    std::int64_t num_trials = 10000;
    std::int64_t horizon_cap = 1000000;
    std::uint64_t base_seed = 1;
    LlrStreamFactory llr_source;  // optional
};

struct TrialOutcome {
    std::int64_t tau;           // stopping step >= 1; equals horizon_cap when capped
    bool capped;
    std::int64_t change_point;  // realized Gamma; ChangePointLaw::kNever if none
    std::int64_t observations_used;
    std::int64_t observations_before_change;  // taken in steps 1..min(tau, Gamma-1)
    double terminal_statistic;
};

TrialOutcome run_trial(const TrialPlan& plan, std::int64_t trial_index);

// Runs all trials; results are independent of the thread count.
std::vector<TrialOutcome> run_trials(const TrialPlan& plan, int threads = 1);

// E[(tau - Gamma)^+] and P(tau < Gamma) under a geometric change prior.
std::pair<MetricEstimate, MetricEstimate> estimate_add_pfa(const TrialPlan& plan, int threads = 1);

// FAR = 1 / E_inf[tau] under the Never law (delta-method standard error).
MetricEstimate estimate_far(const TrialPlan& plan, int threads = 1);
std::pair<MetricEstimate, MetricEstimate> estimate_far_and_mtfa(const TrialPlan& plan,
                                                                int threads = 1);

// Worst-case delay of CuSum/SR via E_1[tau - 1]; both worst-case delay
// metrics coincide with it for zero-start statistics. Rejects detectors with
// a head start and the data-efficient rules, where the identity fails.
MetricEstimate estimate_wadd_cadd(const TrialPlan& plan, int threads = 1);

// For detectors without that identity: max of E[tau - g | tau >= g] over the
// change-point grid g in {1, 2, 5, 10, 20, 50, 100}. A lower bound on the
// true supremum, and labeled as such (CADD_LB).
MetricEstimate estimate_cadd_lower_bound(const TrialPlan& plan, int threads = 1);

// Mean number of observations taken before min(tau, Gamma - 1).
MetricEstimate estimate_ano(const TrialPlan& plan, int threads = 1);

struct CalibrationTarget {
    enum class Kind { PfaLeq, FarLeq };
    Kind kind;
    double alpha;
};

struct CalibrationResult {
    std::optional<double> analytic_threshold;  // same scale as the detector spec
    double calibrated_threshold;
    MetricEstimate achieved;
};

// Bisection on the detector threshold until the constraint metric lands in
// [0.9 alpha, alpha]. Also reports the analytic threshold where one exists
// (Shiryaev log-odds log((1-a)/a), SR 1/a, CuSum |log a|).
CalibrationResult calibrate_threshold(const TrialPlan& plan, CalibrationTarget target,
                                      int threads = 1);

struct TradeoffRow {
    double threshold;
    MetricEstimate constraint;  // PFA (geometric prior) or FAR (minimax)
    MetricEstimate delay;       // ADD or WADD/CADD
};

struct TradeoffResult {
    std::vector<TradeoffRow> rows;
    double slope;  // least-squares slope of delay vs |log constraint|
};

// One simulation pair per threshold (>= 3 required). With a geometric change
// law the pair is (PFA, ADD); otherwise (FAR, WADD/CADD).
TradeoffResult tradeoff_sweep(const TrialPlan& plan, std::span<const double> thresholds,
                              int threads = 1);

}  // namespace qcd
