// Command-line front end: parses experiment configs (or built-in presets),
// runs the Monte Carlo harness / asymptotic estimators / sensor-network
// simulator, and emits deterministic CSV tables.
//
// Exit codes: 0 ok, 2 config error, 3 runtime or estimation error.

#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qcd/asymptotics.hpp"
#include "qcd/config.hpp"
#include "qcd/csv.hpp"
#include "qcd/decentralized.hpp"
#include "qcd/detectors.hpp"
#include "qcd/dist_models.hpp"
#include "qcd/errors.hpp"
#include "qcd/metrics.hpp"
#include "qcd/sim_harness.hpp"

namespace {

using namespace qcd;

constexpr const char* kPresetTable2 = R"(
[model]
family = gaussian
mu0 = 0
mu1 = 1
sigma = 1

[change]
kind = geometric
rho = 0.01

[detector]
algorithm = shiryaev
thresholds = 1.386,2.197,4.595,6.906,11.512

[simulation]
trials = 200000
seed = 20260801

[output]
path = -
)";

constexpr const char* kPresetFig4 = R"(
[model]
family = gaussian
mu0 = 0
mu1 = 0.75
sigma = 1

[change]
kind = geometric
rho = 0.01

[detector]
algorithm = shiryaev
thresholds = 2.197,3.5,4.595,5.8,6.906

[simulation]
trials = 100000
seed = 20260802

[output]
path = -
)";

constexpr const char* kPresetFig6 = R"(
[model]
family = gaussian
mu0 = 0
mu1 = 0.75
sigma = 1

[change]
kind = never

[detector]
algorithm = cusum
thresholds = 4.8,6.4,7.9,9.4,10.9

[simulation]
trials = 2000
horizon_cap = 5000000
seed = 20260803

[output]
path = -
)";

struct CommonOptions {
    std::string config_path;
    std::string preset;
    std::vector<std::string> sets;
    std::int64_t trials = -1;
    std::int64_t seed = -1;
    int threads = 0;
    std::string output;
};

void add_common_options(CLI::App* cmd, CommonOptions& opts) {
    cmd->add_option("config", opts.config_path, "experiment config file");
    cmd->add_option("--preset", opts.preset, "built-in experiment: table2, fig4 or fig6");
    cmd->add_option("--set", opts.sets,
                    "override a config value, e.g. --set simulation.trials=500");
    cmd->add_option("--trials", opts.trials, "override [simulation] trials");
    cmd->add_option("--seed", opts.seed, "override [simulation] seed");
    cmd->add_option("--threads", opts.threads,
                    "worker threads (0 = all cores); results do not depend on it");
    cmd->add_option("--output", opts.output, "override [output] path ('-' = stdout)");
}

ExperimentConfig load_config(const CommonOptions& opts) {
    ExperimentConfig cfg;
    if (!opts.preset.empty() && !opts.config_path.empty()) {
        throw ConfigError("give either a config file or --preset, not both");
    }
    if (!opts.preset.empty()) {
        if (opts.preset == "table2") cfg = ExperimentConfig::parse_text(kPresetTable2);
        else if (opts.preset == "fig4") cfg = ExperimentConfig::parse_text(kPresetFig4);
        else if (opts.preset == "fig6") cfg = ExperimentConfig::parse_text(kPresetFig6);
        else throw ConfigError("unknown preset '" + opts.preset + "'");
    } else if (!opts.config_path.empty()) {
        cfg = ExperimentConfig::parse_file(opts.config_path);
    } else {
        throw ConfigError("a config file or --preset is required");
    }
    for (const auto& kv : opts.sets) {
        const auto eq = kv.find('=');
        const auto dot = kv.find('.');
        if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
            throw ConfigError("--set expects section.key=value, got '" + kv + "'");
        }
        cfg.set(kv.substr(0, dot), kv.substr(dot + 1, eq - dot - 1), kv.substr(eq + 1));
    }
    if (opts.trials >= 0) cfg.set("simulation", "trials", std::to_string(opts.trials));
    if (opts.seed >= 0) cfg.set("simulation", "seed", std::to_string(opts.seed));
    if (!opts.output.empty()) cfg.set("output", "path", opts.output);
    return cfg;
}

DensityPair build_model(const ExperimentConfig& cfg) {
    const std::string family = cfg.get_string("model", "family");
    try {
        if (family == "gaussian") {
            return DensityPair::gaussian_mean_shift(cfg.get_number("model", "mu0"),
                                                    cfg.get_number("model", "mu1"),
                                                    cfg.get_number("model", "sigma"));
        }
        if (family == "bernoulli") {
            return DensityPair::bernoulli(cfg.get_number("model", "p0"),
                                          cfg.get_number("model", "p1"));
        }
        if (family == "exponential") {
            return DensityPair::exponential_rate(cfg.get_number("model", "lam0"),
                                                 cfg.get_number("model", "lam1"));
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("[model] rejected: ") + e.what());
    }
    throw ConfigError("key 'family' in [model] must be gaussian, bernoulli or exponential");
}

ChangePointLaw build_change_law(const ExperimentConfig& cfg) {
    const std::string kind = cfg.get_string("change", "kind");
    try {
        if (kind == "geometric") return ChangePointLaw::geometric(cfg.get_number("change", "rho"));
        if (kind == "fixed") return ChangePointLaw::fixed(cfg.get_int("change", "gamma"));
        if (kind == "never") return ChangePointLaw::never();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("[change] rejected: ") + e.what());
    }
    throw ConfigError("key 'kind' in [change] must be geometric, fixed or never");
}

double detector_rho(const ExperimentConfig& cfg, const ChangePointLaw& law,
                    const char* section = "detector") {
    if (cfg.has(section, "rho")) return cfg.get_number(section, "rho");
    if (law.is_geometric()) return law.rho();
    throw ConfigError(std::string("missing required key 'rho' in [") + section + "]");
}

// Detector spec plus its threshold grid (single values become a one-element
// grid). Shiryaev thresholds are log-odds of the stopping posterior; the
// *_prob variants accept the posterior probability directly.
struct DetectorBuild {
    DetectorSpec spec;
    std::vector<double> thresholds;
};

DetectorBuild build_detector(const ExperimentConfig& cfg, const ChangePointLaw& law) {
    const std::string algorithm = cfg.get_string("detector", "algorithm");
    auto threshold_grid = [&cfg](const char* single, const char* list) {
        if (cfg.has("detector", list)) return cfg.get_number_list("detector", list);
        return std::vector<double>{cfg.get_number("detector", single)};
    };
    try {
        if (algorithm == "shiryaev") {
            std::vector<double> grid;
            if (cfg.has("detector", "thresholds_prob")) {
                for (double a : cfg.get_number_list("detector", "thresholds_prob")) {
                    grid.push_back(logit(a));
                }
            } else if (cfg.has("detector", "threshold_prob")) {
                grid.push_back(logit(cfg.get_number("detector", "threshold_prob")));
            } else {
                grid = threshold_grid("threshold", "thresholds");
            }
            return {ShiryaevSpec{detector_rho(cfg, law), grid.front()}, grid};
        }
        if (algorithm == "cusum") {
            auto grid = threshold_grid("threshold", "thresholds");
            return {CusumSpec{grid.front()}, grid};
        }
        if (algorithm == "sr") {
            auto grid = threshold_grid("threshold", "thresholds");
            return {SrSpec{grid.front(), cfg.get_number_or("detector", "head_start", 0.0)}, grid};
        }
        if (algorithm == "de_shiryaev") {
            const double stop = cfg.get_number("detector", "stop_threshold");
            return {DeShiryaevSpec{detector_rho(cfg, law), stop,
                                   cfg.get_number("detector", "observe_threshold")},
                    {stop}};
        }
        if (algorithm == "fractional_shiryaev") {
            const double stop = cfg.get_number("detector", "stop_threshold");
            return {FractionalShiryaevSpec{detector_rho(cfg, law), stop,
                                           cfg.get_int_or("detector", "period", 2)},
                    {stop}};
        }
        if (algorithm == "glr") {
            auto grid = threshold_grid("threshold", "thresholds");
            return {GlrGaussianSpec{cfg.get_int("detector", "window"), grid.front(),
                                    cfg.get_number_or("detector", "theta_min", 0.0)},
                    grid};
        }
        if (algorithm == "mixture") {
            auto grid = threshold_grid("threshold", "thresholds");
            return {MixtureGaussianSpec{cfg.get_int("detector", "window"),
                                        cfg.get_number("detector", "prior_mean"),
                                        cfg.get_number("detector", "prior_var"), grid.front()},
                    grid};
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("[detector] rejected: ") + e.what());
    }
    throw ConfigError("key 'algorithm' in [detector] names an unknown detector");
}

DetectorSpec spec_at_threshold(DetectorSpec spec, double t) {
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

struct SimulationSettings {
    std::int64_t trials;
    std::int64_t horizon_cap;
    std::uint64_t seed;
    int threads;
};

SimulationSettings build_simulation(const ExperimentConfig& cfg, int cli_threads) {
    SimulationSettings s{};
    s.trials = cfg.get_int_or("simulation", "trials", 100000);
    if (s.trials < 1) throw ConfigError("key 'trials' in [simulation] must be >= 1");
    s.horizon_cap = cfg.get_int_or("simulation", "horizon_cap", 1000000);
    if (s.horizon_cap < 1) throw ConfigError("key 'horizon_cap' in [simulation] must be >= 1");
    const std::int64_t seed = cfg.get_int_or("simulation", "seed", 1);
    if (seed < 0) throw ConfigError("key 'seed' in [simulation] must be >= 0");
    s.seed = static_cast<std::uint64_t>(seed);
    s.threads = static_cast<int>(cfg.get_int_or("simulation", "threads", 0));
    if (cli_threads > 0) s.threads = cli_threads;
    return s;
}

class OutputSink {
public:
    explicit OutputSink(const std::string& path) : path_(path) {
        if (path_ != "-") {
            file_.open(path_);
            if (!file_) throw ConfigError("cannot open output path '" + path_ + "'");
        }
    }

    std::ostream& stream() { return path_ == "-" ? std::cout : file_; }

private:
    std::string path_;
    std::ofstream file_;
};

void emit(CsvWriter& csv, const std::string& detector, const std::string& threshold,
          const MetricEstimate& m, std::uint64_t seed) {
    csv.row(detector, threshold, metric_name(m.kind), m.value, m.std_error, m.trials,
            m.capped_fraction, seed);
}

int cmd_simulate(const CommonOptions& opts) {
    const auto cfg = load_config(opts);
    const auto model = build_model(cfg);
    const auto law = build_change_law(cfg);
    const auto detector = build_detector(cfg, law);
    const auto sim = build_simulation(cfg, opts.threads);
    OutputSink sink(cfg.get_string_or("output", "path", "-"));
    cfg.consume_done();

    TrialPlan plan{model, law, detector.spec, sim.trials, sim.horizon_cap, sim.seed};
    CsvWriter csv(sink.stream());
    const std::string name = detector_name(detector.spec);
    for (double t : detector.thresholds) {
        plan.detector = spec_at_threshold(detector.spec, t);
        const std::string ts = format_number(t);
        if (law.is_geometric()) {
            const auto [add, pfa] = estimate_add_pfa(plan, sim.threads);
            emit(csv, name, ts, add, sim.seed);
            emit(csv, name, ts, pfa, sim.seed);
            if (std::holds_alternative<DeShiryaevSpec>(plan.detector) ||
                std::holds_alternative<FractionalShiryaevSpec>(plan.detector)) {
                emit(csv, name, ts, estimate_ano(plan, sim.threads), sim.seed);
            }
        } else if (law.is_never()) {
            const auto [far, mtfa] = estimate_far_and_mtfa(plan, sim.threads);
            emit(csv, name, ts, far, sim.seed);
            emit(csv, name, ts, mtfa, sim.seed);
        } else {
            const bool zero_start = std::visit(
                [](const auto& s) -> bool {
                    using T = std::decay_t<decltype(s)>;
                    if constexpr (std::is_same_v<T, CusumSpec>) return true;
                    else if constexpr (std::is_same_v<T, SrSpec>) return s.head_start == 0.0;
                    else return false;
                },
                plan.detector);
            if (zero_start) {
                emit(csv, name, ts, estimate_wadd_cadd(plan, sim.threads), sim.seed);
            } else {
                // No worst-case identity for this detector; report the
                // change-point-grid lower bound instead.
                emit(csv, name, ts, estimate_cadd_lower_bound(plan, sim.threads), sim.seed);
            }
        }
    }
    return 0;
}

int cmd_tradeoff(const CommonOptions& opts) {
    const auto cfg = load_config(opts);
    const auto model = build_model(cfg);
    const auto law = build_change_law(cfg);
    const auto detector = build_detector(cfg, law);
    const auto sim = build_simulation(cfg, opts.threads);
    OutputSink sink(cfg.get_string_or("output", "path", "-"));
    cfg.consume_done();
    if (detector.thresholds.size() < 3) {
        throw ConfigError("key 'thresholds' in [detector] needs at least 3 grid points");
    }

    TrialPlan plan{model, law, detector.spec, sim.trials, sim.horizon_cap, sim.seed};
    const auto result = tradeoff_sweep(plan, detector.thresholds, sim.threads);
    CsvWriter csv(sink.stream());
    const std::string name = detector_name(detector.spec);
    for (const auto& row : result.rows) {
        const std::string ts = format_number(row.threshold);
        emit(csv, name, ts, row.constraint, sim.seed);
        emit(csv, name, ts, row.delay, sim.seed);
    }
    csv.row(name, "-", "slope", result.slope, 0.0,
            static_cast<std::int64_t>(result.rows.size()), 0.0, sim.seed);
    return 0;
}

int cmd_overshoot(const CommonOptions& opts) {
    const auto cfg = load_config(opts);
    const auto model = build_model(cfg);
    const auto law = build_change_law(cfg);
    if (!law.is_geometric()) {
        throw ConfigError("key 'kind' in [change] must be geometric for overshoot analysis");
    }
    if (model.discrete()) {
        throw ConfigError(
            "key 'family' in [model] must be a continuous family for overshoot analysis");
    }
    std::vector<double> predict;
    if (cfg.has("overshoot", "predict")) {
        predict = cfg.get_number_list("overshoot", "predict");
    } else if (cfg.has("detector", "thresholds")) {
        predict = cfg.get_number_list("detector", "thresholds");
    } else {
        throw ConfigError("missing required key 'predict' in [overshoot]");
    }
    const auto crossings = cfg.get_int_or("overshoot", "crossings", 200000);
    const auto walk_thresholds = cfg.get_number_list_opt("overshoot", "walk_thresholds")
                                     .value_or(std::vector<double>{15.0, 25.0});
    const auto sim = build_simulation(cfg, opts.threads);
    // A shared config may carry detector keys for the other commands.
    cfg.consume_section("detector");
    OutputSink sink(cfg.get_string_or("output", "path", "-"));
    cfg.consume_done();

    const auto est =
        estimate_overshoot(model, law.rho(), crossings, walk_thresholds, sim.seed, sim.threads);
    const double kl = model.kl_divergence(KlDirection::PostVsPre);
    const double d = law.tail_exponent();

    CsvWriter csv(sink.stream());
    csv.row("shiryaev", "-", "kappa", est.kappa, est.kappa_se, est.crossings, 0.0, sim.seed);
    csv.row("shiryaev", "-", "zeta", est.zeta, est.zeta_se, est.crossings, 0.0, sim.seed);
    csv.row("shiryaev", "-", "eta_mean", est.eta_mean, est.eta_se, est.crossings, 0.0, sim.seed);
    csv.row("shiryaev", "-", "stationarity_check", est.stationary ? 1.0 : 0.0, 0.0, est.crossings,
            0.0, sim.seed);
    for (double b : predict) {
        const std::string ts = format_number(b);
        const double pfa_se = std::exp(-b) * est.zeta_se;
        const double add_se = std::hypot(est.kappa_se, est.eta_se) / (kl + d);
        csv.row("shiryaev", ts, "pfa_second_order", second_order_pfa(b, est), pfa_se,
                est.crossings, 0.0, sim.seed);
        csv.row("shiryaev", ts, "add_second_order", second_order_add(b, est, kl, d), add_se,
                est.crossings, 0.0, sim.seed);
        csv.row("shiryaev", ts, "add_first_order", b / (kl + d), 0.0, est.crossings, 0.0,
                sim.seed);
    }
    return 0;
}

int cmd_decentralized(const CommonOptions& opts) {
    const auto cfg = load_config(opts);
    const auto model = build_model(cfg);
    const auto law = build_change_law(cfg);
    const auto sim = build_simulation(cfg, opts.threads);

    SensorNetworkConfig net{
        0, model, std::nullopt, LocalDetectorKind::Cusum, 0.0, {}, FusionRule::Min, 0.0};
    net.num_sensors = cfg.get_int("decentralized", "sensors");
    const std::string local = cfg.get_string_or("decentralized", "local", "cusum");
    if (local == "cusum") {
        net.local_detector = LocalDetectorKind::Cusum;
    } else if (local == "shiryaev") {
        net.local_detector = LocalDetectorKind::Shiryaev;
        net.shiryaev_rho = detector_rho(cfg, law, "decentralized");
    } else {
        throw ConfigError("key 'local' in [decentralized] must be cusum or shiryaev");
    }
    if (cfg.has("decentralized", "quantizer_levels")) {
        net.quantizer_levels = cfg.get_int("decentralized", "quantizer_levels");
    }
    std::vector<std::string> rules;
    {
        std::istringstream in(cfg.get_string_or("decentralized", "fusion", "min,max,all"));
        std::string item;
        while (std::getline(in, item, ',')) rules.push_back(item);
    }
    const bool has_explicit_thresholds = cfg.has("decentralized", "local_thresholds");
    std::vector<double> explicit_thresholds;
    double global_threshold = 0.0;
    if (has_explicit_thresholds) {
        explicit_thresholds = cfg.get_number_list("decentralized", "local_thresholds");
    } else {
        global_threshold = cfg.get_number("decentralized", "local_threshold");
    }
    const double sum_threshold = cfg.get_number_or("decentralized", "sum_threshold", 0.0);
    OutputSink sink(cfg.get_string_or("output", "path", "-"));
    cfg.consume_done();

    CsvWriter csv(sink.stream());
    if (net.quantizer_levels) {
        const auto design = design_mlr_quantizer(model, *net.quantizer_levels);
        csv.row("quantizer", "-", "kl_quantized", design.kl_quantized, 0.0, 0, 0.0, sim.seed);
        csv.row("quantizer", "-", "kl_raw", model.kl_divergence(KlDirection::PostVsPre), 0.0, 0,
                0.0, sim.seed);
        if (!design.improved) {
            csv.row("quantizer", "-", "search_improved", 0.0, 0.0, 0, 0.0, sim.seed);
        }
    }
    for (const auto& rule_name : rules) {
        FusionRule rule;
        if (rule_name == "min") rule = FusionRule::Min;
        else if (rule_name == "max") rule = FusionRule::Max;
        else if (rule_name == "all") rule = FusionRule::All;
        else if (rule_name == "sum") rule = FusionRule::Sum;
        else throw ConfigError("key 'fusion' in [decentralized] names an unknown rule");
        net.fusion_rule = rule;
        net.sum_threshold = sum_threshold;
        net.local_thresholds =
            has_explicit_thresholds
                ? explicit_thresholds
                : split_local_thresholds(rule, global_threshold, net.num_sensors);
        const std::string name = std::string("fusion_") + fusion_rule_name(rule);
        const std::string ts = format_number(rule == FusionRule::Sum ? net.sum_threshold
                                                                     : net.local_thresholds[0]);
        if (law.is_geometric()) {
            const auto [add, pfa] =
                fusion_add_pfa(net, law.rho(), sim.trials, sim.horizon_cap, sim.seed, sim.threads);
            emit(csv, name, ts, add, sim.seed);
            emit(csv, name, ts, pfa, sim.seed);
        } else if (law.is_never()) {
            emit(csv, name, ts, fusion_far(net, sim.trials, sim.horizon_cap, sim.seed, sim.threads),
                 sim.seed);
        } else {
            emit(csv, name, ts,
                 fusion_worst_delay(net, sim.trials, sim.horizon_cap, sim.seed, sim.threads),
                 sim.seed);
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sequential quickest-change-detection toolkit"};
    app.require_subcommand(1);

    CommonOptions simulate_opts, tradeoff_opts, overshoot_opts, decentralized_opts;
    auto* simulate = app.add_subcommand("simulate", "run detector trials and emit metric rows");
    add_common_options(simulate, simulate_opts);
    auto* tradeoff = app.add_subcommand("tradeoff", "sweep thresholds and fit the delay slope");
    add_common_options(tradeoff, tradeoff_opts);
    auto* overshoot =
        app.add_subcommand("overshoot", "estimate overshoot constants and analytic predictions");
    add_common_options(overshoot, overshoot_opts);
    auto* decentralized =
        app.add_subcommand("decentralized", "simulate a sensor network with fusion rules");
    add_common_options(decentralized, decentralized_opts);

    try {
        app.parse(argc, argv);
        if (simulate->parsed()) return cmd_simulate(simulate_opts);
        if (tradeoff->parsed()) return cmd_tradeoff(tradeoff_opts);
        if (overshoot->parsed()) return cmd_overshoot(overshoot_opts);
        if (decentralized->parsed()) return cmd_decentralized(decentralized_opts);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const EstimationError& e) {
        std::cerr << "estimation error: " << e.what() << "\n";
        return 3;
    } catch (const CalibrationError& e) {
        std::cerr << "calibration error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
