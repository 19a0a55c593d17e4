#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "qcd/dist_models.hpp"
#include "qcd/metrics.hpp"
#include "qcd/sim_harness.hpp"

namespace qcd {

enum class LocalDetectorKind { Cusum, Shiryaev };
enum class FusionRule { Min, Max, All, Sum };

const char* fusion_rule_name(FusionRule rule);

// L sensors observing i.i.d. streams, independent across sensors, all hit by
// the change at the same time. Each sensor runs its own detector statistic;
// the fusion center stops per the configured rule:
//   Min  first local crossing anywhere
//   Max  sensors freeze once crossed; stop when the last one has crossed
//   All  sensors keep running; stop when all statistics sit above their
//        thresholds simultaneously
//   Sum  sum of the (CuSum) statistics against sum_threshold
struct SensorNetworkConfig {
    std::int64_t num_sensors;
    DensityPair per_sensor_model;
    std::optional<std::int64_t> quantizer_levels;  // empty = raw llrs
    LocalDetectorKind local_detector;
    double shiryaev_rho = 0.0;              // local Shiryaev prior parameter
    std::vector<double> local_thresholds;   // CuSum b / Shiryaev log-odds, per sensor
    FusionRule fusion_rule;
    double sum_threshold = 0.0;
};

// Interval quantizer maximizing the K-L divergence of the induced discrete
// post/pre distributions. Monotone likelihood ratio families make interval
// cells optimal, so the search is over sorted cell boundaries: coordinate
// ascent, 3 rounds, 2048 grid points per boundary, from an equal-mass-under-
// f0 initial split. `improved` is false when the search could not beat the
// initial split.
struct QuantizerDesign {
    std::vector<double> thresholds;
    double kl_quantized;
    bool improved;
};

QuantizerDesign design_mlr_quantizer(const DensityPair& model, std::int64_t levels);

// Cell probabilities and llrs induced by interval thresholds.
struct QuantizedChannel {
    std::vector<double> thresholds;
    std::vector<double> p0;
    std::vector<double> p1;
    std::vector<double> llr;
};

QuantizedChannel make_quantized_channel(const DensityPair& model,
                                        const std::vector<double>& thresholds);

double quantized_kl(const DensityPair& model, const std::vector<double>& thresholds);

struct FusionTrialOutcome {
    std::int64_t tau;
    bool capped;
    std::int64_t change_point;
};

FusionTrialOutcome run_fusion_trial(const SensorNetworkConfig& config,
                                    const ChangePointLaw& change_law, std::int64_t horizon_cap,
                                    std::uint64_t base_seed, std::int64_t trial_index);

std::vector<FusionTrialOutcome> run_fusion_trials(const SensorNetworkConfig& config,
                                                  const ChangePointLaw& change_law,
                                                  std::int64_t num_trials,
                                                  std::int64_t horizon_cap, std::uint64_t base_seed,
                                                  int threads = 1);

// Metric wrappers matching the single-stream harness conventions.
MetricEstimate fusion_far(const SensorNetworkConfig& config, std::int64_t num_trials,
                          std::int64_t horizon_cap, std::uint64_t base_seed, int threads = 1);
MetricEstimate fusion_worst_delay(const SensorNetworkConfig& config, std::int64_t num_trials,
                                  std::int64_t horizon_cap, std::uint64_t base_seed,
                                  int threads = 1);
std::pair<MetricEstimate, MetricEstimate> fusion_add_pfa(const SensorNetworkConfig& config,
                                                         double rho, std::int64_t num_trials,
                                                         std::int64_t horizon_cap,
                                                         std::uint64_t base_seed, int threads = 1);

// Equal local thresholds for Max/All; Min gets the union-bound correction
// b + log L per sensor.
std::vector<double> split_local_thresholds(FusionRule rule, double global_threshold,
                                           std::int64_t num_sensors);

}  // namespace qcd
