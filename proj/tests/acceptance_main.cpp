// Acceptance suite: runs every headline criterion at its stated tolerance and
// prints one pass/fail line per criterion. Exits non-zero if any fail.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "qcd/asymptotics.hpp"
#include "qcd/decentralized.hpp"
#include "qcd/detectors.hpp"
#include "qcd/dist_models.hpp"
#include "qcd/quadrature.hpp"
#include "qcd/sim_harness.hpp"

using namespace qcd;

namespace {

int g_failures = 0;
std::vector<std::string> g_details;

void detail(const char* fmt, ...) {
    char buf[512];
    va_list args;
    va_start(args, fmt);
    std::vsnprintf(buf, sizeof(buf), fmt, args);
    va_end(args);
    g_details.emplace_back(buf);
}

void report(int index, const std::string& name, bool pass) {
    std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", index, name.c_str());
    for (const auto& line : g_details) std::printf("    %s\n", line.c_str());
    g_details.clear();
    if (!pass) ++g_failures;
    std::fflush(stdout);
}

int threads() { return 0; }  // all cores; results are thread-count independent

// ---------------------------------------------------------------------------
// 1. Simulated PFA/ADD of the Shiryaev rule on the Gaussian benchmark
//    (N(0,1) -> N(1,1), rho = 0.01) against the reference table.
// ---------------------------------------------------------------------------
void criterion1() {
    struct Row {
        double b;
        double pfa_ref;
        double add_ref;
        std::int64_t trials;
    };
    const std::vector<Row> rows{
        {1.386, 1.22e-1, 6.93, 400000},
        {2.197, 5.85e-2, 8.87, 400000},
        {4.595, 5.61e-3, 13.9, 600000},
        {6.906, 5.59e-4, 18.59, 1000000},  // >= 1e6 trials on the smallest PFA row
    };
    bool pass = true;
    for (const auto& row : rows) {
        TrialPlan plan{DensityPair::gaussian_mean_shift(0, 1, 1), ChangePointLaw::geometric(0.01),
                       ShiryaevSpec{0.01, row.b}, row.trials, 1000000, 0xACCE97};
        const auto [add, pfa] = estimate_add_pfa(plan, threads());
        const double z = (pfa.value - row.pfa_ref) / pfa.std_error;
        const double add_rel = add.value / row.add_ref - 1.0;
        const bool row_ok = std::fabs(z) <= 3.0 && std::fabs(add_rel) <= 0.05;
        pass = pass && row_ok;
        detail("b=%.3f: PFA %.4e vs %.4e (|z|=%.2f <= 3), ADD %.3f vs %.2f (%+.2f%% within 5%%)%s",
               row.b, pfa.value, row.pfa_ref, std::fabs(z), add.value, row.add_ref,
               100.0 * add_rel, row_ok ? "" : "  <-- out of tolerance");
    }
    detail("row b=11.512 (PFA ~ 5.6e-6) is out of desk-scale simulation reach by design;");
    detail("its analytic columns are covered by criterion 2.");
    report(1, "simulated PFA/ADD reproduce the Gaussian benchmark table", pass);
}

// ---------------------------------------------------------------------------
// 2. Second-order analytic PFA/ADD from Monte Carlo kappa, zeta, E1[eta]
//    reproduce the analysis columns within 10% relative.
// ---------------------------------------------------------------------------
void criterion2() {
    const auto model = DensityPair::gaussian_mean_shift(0, 1, 1);
    const double rho = 0.01;
    const double kl = model.kl_divergence(KlDirection::PostVsPre);
    const double d = -std::log1p(-rho);
    const std::vector<double> walk_bs{15.0, 25.0};
    const auto est = estimate_overshoot(model, rho, 200000, walk_bs, 0xACCE98, threads());
    detail("kappa=%.4f+-%.4f zeta=%.4f+-%.4f eta_mean=%.4f+-%.4f stationary=%d", est.kappa,
           est.kappa_se, est.zeta, est.zeta_se, est.eta_mean, est.eta_se,
           est.stationary ? 1 : 0);

    struct Row {
        double b;
        double pfa_ref;
        double add_ref;
    };
    const std::vector<Row> rows{{1.386, 1.39e-1, 10.31},
                                {2.197, 6.19e-2, 11.9},
                                {4.595, 5.63e-3, 16.6},
                                {6.906, 5.58e-4, 21.13},
                                {11.512, 5.58e-6, 30.16}};
    bool pass = est.stationary;
    for (const auto& row : rows) {
        const double pfa = second_order_pfa(row.b, est);
        const double add = second_order_add(row.b, est, kl, d);
        const double pfa_rel = pfa / row.pfa_ref - 1.0;
        const double add_rel = add / row.add_ref - 1.0;
        const bool row_ok = std::fabs(pfa_rel) <= 0.10 && std::fabs(add_rel) <= 0.10;
        pass = pass && row_ok;
        detail("b=%.3f: PFA %.3e vs %.2e (%+.1f%%), ADD %.2f vs %.2f (%+.1f%%)%s", row.b, pfa,
               row.pfa_ref, 100.0 * pfa_rel, add, row.add_ref, 100.0 * add_rel,
               row_ok ? "" : "  <-- out of tolerance");
    }
    report(2, "second-order analytic PFA/ADD within 10% of the analysis columns", pass);
}

// ---------------------------------------------------------------------------
// 3. Trade-off slopes: CuSum CADD vs |log FAR| near 1/D; Shiryaev ADD vs
//    |log PFA| near 1/(D + |log(1-rho)|). Both within 15%.
// ---------------------------------------------------------------------------
void criterion3() {
    const auto model = DensityPair::gaussian_mean_shift(0, 0.75, 1);
    const double kl = model.kl_divergence(KlDirection::PostVsPre);  // 0.28125
    bool pass = true;

    {
        TrialPlan plan{model, ChangePointLaw::never(), CusumSpec{7.0}, 2500, 5000000, 0xACCE99};
        const std::vector<double> grid{4.8, 6.4, 7.9, 9.4};  // measured FAR spans ~[1e-5, 1e-3]
        const auto sweep = tradeoff_sweep(plan, grid, threads());
        const double target = 1.0 / kl;
        const double rel = sweep.slope / target - 1.0;
        const bool ok = std::fabs(rel) <= 0.15;
        pass = pass && ok;
        for (const auto& row : sweep.rows) {
            detail("cusum b=%.1f: FAR=%.3e CADD=%.2f", row.threshold, row.constraint.value,
                   row.delay.value);
        }
        detail("cusum slope %.3f vs 1/D = %.3f (%+.1f%% within 15%%)%s", sweep.slope, target,
               100.0 * rel, ok ? "" : "  <-- out of tolerance");
    }
    {
        TrialPlan plan{model, ChangePointLaw::geometric(0.01), ShiryaevSpec{0.01, 4.0}, 200000,
                       1000000, 0xACCE9A};
        const std::vector<double> grid{2.197, 3.4, 4.595, 5.75, 6.906};
        const auto sweep = tradeoff_sweep(plan, grid, threads());
        const double d = -std::log1p(-0.01);
        const double target = 1.0 / (kl + d);
        const double rel = sweep.slope / target - 1.0;
        const bool ok = std::fabs(rel) <= 0.15;
        pass = pass && ok;
        detail("shiryaev slope %.3f vs 1/(D+d) = %.3f (%+.1f%% within 15%%)%s", sweep.slope,
               target, 100.0 * rel, ok ? "" : "  <-- out of tolerance");
    }
    report(3, "trade-off slopes match first-order theory within 15%", pass);
}

// ---------------------------------------------------------------------------
// 4. Analytic threshold guarantees at alpha in {1e-2, 1e-3}: Shiryaev PFA
//    with A = 1-alpha, SR FAR with B = 1/alpha, CuSum FAR with b = |log a|.
// ---------------------------------------------------------------------------
void criterion4() {
    const auto model = DensityPair::gaussian_mean_shift(0, 1, 1);
    bool pass = true;
    for (double alpha : {1e-2, 1e-3}) {
        {
            TrialPlan plan{model, ChangePointLaw::geometric(0.01),
                           shiryaev_from_prob_threshold(0.01, 1.0 - alpha),
                           alpha < 5e-3 ? 600000 : 300000, 1000000, 0xACCE9B};
            const auto pfa = estimate_add_pfa(plan, threads()).second;
            const bool ok = pfa.value <= alpha + 3.0 * pfa.std_error;
            pass = pass && ok;
            detail("shiryaev A=1-%.0e: PFA=%.3e <= %.0e (+3 SE)%s", alpha, pfa.value, alpha,
                   ok ? "" : "  <-- violated");
        }
        {
            TrialPlan plan{model, ChangePointLaw::never(), SrSpec{1.0 / alpha}, 20000, 2000000,
                           0xACCE9C};
            const auto far = estimate_far(plan, threads());
            const bool ok = far.value <= alpha + 3.0 * far.std_error;
            pass = pass && ok;
            detail("sr B=%.0f: FAR=%.3e <= %.0e (+3 SE)%s", 1.0 / alpha, far.value, alpha,
                   ok ? "" : "  <-- violated");
        }
        {
            TrialPlan plan{model, ChangePointLaw::never(),
                           CusumSpec{std::fabs(std::log(alpha))}, 20000, 2000000, 0xACCE9D};
            const auto far = estimate_far(plan, threads());
            const bool ok = far.value <= alpha + 3.0 * far.std_error;
            pass = pass && ok;
            detail("cusum b=|log %.0e|: FAR=%.3e <= %.0e (+3 SE)%s", alpha, far.value, alpha,
                   ok ? "" : "  <-- violated");
        }
    }
    report(4, "analytic thresholds keep PFA/FAR below alpha", pass);
}

// ---------------------------------------------------------------------------
// 5. Property suites, together in under a minute.
// ---------------------------------------------------------------------------
bool prop_three_form_equality() {
    Xoshiro256pp rng(41);
    const double rho = 0.05, a_prob = 0.97;
    const double a_odds = a_prob / (1.0 - a_prob);
    for (int path = 0; path < 10000; ++path) {
        ShiryaevDetector p_form(rho, a_prob);
        ShiryaevLambdaDetector l_form(rho, a_odds);
        ShiryaevRDetector r_form(rho, a_odds / rho);
        int tau_p = 0, tau_l = 0, tau_r = 0;
        for (int n = 1; n <= 3000 && !(tau_p && tau_l && tau_r); ++n) {
            const double y = 0.25 + rng.next_normal();
            if (!tau_p) {
                p_form.step(y);
                if (p_form.stopped()) tau_p = n;
            }
            if (!tau_l) {
                l_form.step(y);
                if (l_form.stopped()) tau_l = n;
            }
            if (!tau_r) {
                r_form.step(y);
                if (r_form.stopped()) tau_r = n;
            }
        }
        if (!(tau_p && tau_p == tau_l && tau_p == tau_r)) return false;
    }
    return true;
}

bool prop_wc_crossing_equality() {
    Xoshiro256pp rng(42);
    const double b = 3.0;
    for (int path = 0; path < 10000; ++path) {
        CusumDetector det(1e18);
        int tau_w = 0, tau_c = 0;
        for (int n = 1; n <= 3000 && !(tau_w && tau_c); ++n) {
            const double y = 0.2 + rng.next_normal();
            det.step(y);
            if (det.w() < 0.0 || det.w() < det.c()) return false;
            if (!tau_w && det.w() >= b) tau_w = n;
            if (!tau_c && det.c() >= b) tau_c = n;
        }
        if (tau_w == 0 || tau_w != tau_c) return false;
    }
    return true;
}

bool prop_generalized_cusum_brute_force() {
    Xoshiro256pp rng(43);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> ys(200);
        for (auto& y : ys) y = 0.1 + rng.next_normal();
        CusumDetector det(1e18);
        std::vector<double> prefix{0.0};
        for (std::size_t n = 1; n <= ys.size(); ++n) {
            det.step(ys[n - 1]);
            prefix.push_back(prefix.back() + ys[n - 1]);
            double brute = -1e300;
            for (std::size_t k = 1; k <= n; ++k) {
                brute = std::max(brute, prefix[n] - prefix[k - 1]);
            }
            if (std::fabs(det.c() - brute) > 1e-9 * std::max(1.0, std::fabs(brute))) return false;
        }
    }
    return true;
}

bool prop_sr_martingale() {
    const double mu = 0.1;
    const int paths = 100000;
    const std::vector<int> checkpoints{10, 50, 200};
    std::vector<double> sums(checkpoints.size(), 0.0), sq(checkpoints.size(), 0.0);
    for (int p = 0; p < paths; ++p) {
        Xoshiro256pp rng(derive_stream_seed(44, p));
        SrDetector det(1e300);
        std::size_t next = 0;
        for (int n = 1; n <= 200; ++n) {
            det.step(mu * rng.next_normal() - 0.5 * mu * mu);
            if (next < checkpoints.size() && n == checkpoints[next]) {
                const double v = det.value() - n;
                sums[next] += v;
                sq[next] += v * v;
                ++next;
            }
        }
    }
    for (std::size_t c = 0; c < checkpoints.size(); ++c) {
        const double mean = sums[c] / paths;
        const double se = std::sqrt((sq[c] / paths - mean * mean) / paths);
        if (std::fabs(mean) > 5.0 * se) return false;
    }
    return true;
}

bool prop_de_b0_equals_shiryaev() {
    Xoshiro256pp rng(45);
    for (int rep = 0; rep < 200; ++rep) {
        DeShiryaevDetector de(0.01, 0.95, 0.0);
        ShiryaevDetector plain(0.01, 0.95);
        for (int n = 1; n <= 500; ++n) {
            const double y = 0.1 + rng.next_normal();
            if (!de.take_next()) return false;
            de.step(y);
            plain.step(y);
            if (std::fabs(de.posterior() - plain.posterior()) >
                1e-9 * std::max(1.0, plain.posterior())) {
                return false;
            }
            if (de.stopped() != plain.stopped()) return false;
            if (de.stopped()) break;
        }
    }
    return true;
}

bool prop_kl_quadrature() {
    std::vector<DensityPair> pairs;
    for (double mu1 : {0.25, 0.75, 1.0, 2.0}) {
        pairs.push_back(DensityPair::gaussian_mean_shift(0, mu1, 1.0));
    }
    pairs.push_back(DensityPair::gaussian_mean_shift(-1.0, 0.5, 2.0));
    for (double l1 : {0.5, 2.0, 5.0}) pairs.push_back(DensityPair::exponential_rate(1.0, l1));
    for (double p1 : {0.1, 0.45, 0.8}) pairs.push_back(DensityPair::bernoulli(0.3, p1));
    for (const auto& pair : pairs) {
        if (std::fabs(pair.kl_divergence(KlDirection::PostVsPre) - kl_quadrature_oracle(pair)) >
            1e-6) {
            return false;
        }
    }
    return true;
}

bool prop_quantizer_data_processing() {
    const auto model = DensityPair::gaussian_mean_shift(0, 1, 1);
    const double raw = model.kl_divergence(KlDirection::PostVsPre);
    double last = 0.0;
    for (std::int64_t levels : {2, 4, 8, 16}) {
        const auto design = design_mlr_quantizer(model, levels);
        if (design.kl_quantized > raw) return false;
        if (design.kl_quantized < last - 1e-9) return false;
        last = design.kl_quantized;
    }
    return true;
}

bool prop_fusion_ordering() {
    SensorNetworkConfig base{2,
                             DensityPair::gaussian_mean_shift(0, 1, 1),
                             std::nullopt,
                             LocalDetectorKind::Cusum,
                             0.0,
                             {3.0, 3.0},
                             FusionRule::Min,
                             0.0};
    auto max_cfg = base;
    max_cfg.fusion_rule = FusionRule::Max;
    auto all_cfg = base;
    all_cfg.fusion_rule = FusionRule::All;
    const auto law = ChangePointLaw::geometric(0.02);
    const auto mins = run_fusion_trials(base, law, 300, 200000, 46, threads());
    const auto maxs = run_fusion_trials(max_cfg, law, 300, 200000, 46, threads());
    const auto alls = run_fusion_trials(all_cfg, law, 300, 200000, 46, threads());
    for (std::size_t i = 0; i < mins.size(); ++i) {
        if (mins[i].tau > maxs[i].tau || mins[i].tau > alls[i].tau) return false;
    }
    return true;
}

void criterion5() {
    const auto start = std::chrono::steady_clock::now();
    struct Prop {
        const char* name;
        bool (*fn)();
    };
    const std::vector<Prop> props{
        {"three-form Shiryaev stopping equality (1e4 paths)", prop_three_form_equality},
        {"CuSum W/C crossing-time equality (1e4 paths)", prop_wc_crossing_equality},
        {"generalized CuSum equals brute-force max (length 200)",
         prop_generalized_cusum_brute_force},
        {"SR martingale mean within CI (n = 10/50/200)", prop_sr_martingale},
        {"DE-Shiryaev B=0 identical to Shiryaev pathwise", prop_de_b0_equals_shiryaev},
        {"KL closed forms vs quadrature <= 1e-6", prop_kl_quadrature},
        {"quantizer data-processing inequality", prop_quantizer_data_processing},
        {"fusion ordering tau_min <= min(tau_max, tau_all)", prop_fusion_ordering},
    };
    bool pass = true;
    for (const auto& prop : props) {
        const bool ok = prop.fn();
        pass = pass && ok;
        detail("%s: %s", prop.name, ok ? "ok" : "FAILED");
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < 60.0;
    pass = pass && in_time;
    detail("suite runtime %.1f s (< 60 s required)", secs);
    report(5, "property suites all hold in under a minute", pass);
}

// ---------------------------------------------------------------------------
// 6. Data-efficient Shiryaev at ~50% observation budget: delay within 15% of
//    the same-PFA Shiryaev rule and strictly better than fractional sampling
//    at equal budget.
// ---------------------------------------------------------------------------
void criterion6() {
    const auto model = DensityPair::gaussian_mean_shift(0, 0.75, 1);
    const double rho = 0.01;
    const double stop_a = 0.995;
    const double ano_target = 0.5 / rho;  // 50% of the mean time to change

    // Tune B for ANO ~= 50 (statistically monotone decreasing in B).
    auto ano_at = [&](double b_obs) {
        TrialPlan plan{model, ChangePointLaw::geometric(rho), DeShiryaevSpec{rho, stop_a, b_obs},
                       40000, 1000000, 0xACCEA0};
        return estimate_ano(plan, threads()).value;
    };
    double lo = 0.001, hi = 0.6;
    double b_obs = 0.05;
    for (int it = 0; it < 24; ++it) {
        b_obs = 0.5 * (lo + hi);
        const double ano = ano_at(b_obs);
        if (std::fabs(ano - ano_target) <= 2.0) break;
        if (ano > ano_target) lo = b_obs;
        else hi = b_obs;
    }

    TrialPlan de_plan{model, ChangePointLaw::geometric(rho), DeShiryaevSpec{rho, stop_a, b_obs},
                      300000, 1000000, 0xACCEA1};
    const auto [de_add, de_pfa] = estimate_add_pfa(de_plan, threads());
    const auto de_ano = estimate_ano(de_plan, threads());
    detail("DE rule: B=%.4f ANO=%.1f (target %.0f) PFA=%.3e ADD=%.2f", b_obs, de_ano.value,
           ano_target, de_pfa.value, de_add.value);
    const bool pfa_moderate = de_pfa.value >= 1e-3 && de_pfa.value <= 1e-2;

    // Shiryaev at the same PFA (calibrated against the measured DE value).
    TrialPlan sh_plan{model, ChangePointLaw::geometric(rho), ShiryaevSpec{rho, logit(stop_a)},
                      100000, 1000000, 0xACCEA1};
    const auto sh_cal =
        calibrate_threshold(sh_plan, {CalibrationTarget::Kind::PfaLeq, de_pfa.value}, threads());
    sh_plan.detector = ShiryaevSpec{rho, sh_cal.calibrated_threshold};
    sh_plan.num_trials = 300000;
    const auto [sh_add, sh_pfa] = estimate_add_pfa(sh_plan, threads());
    const double add_rel = de_add.value / sh_add.value - 1.0;
    detail("same-PFA Shiryaev: b=%.3f PFA=%.3e ADD=%.2f; DE delay %+.1f%% (within 15%%)",
           sh_cal.calibrated_threshold, sh_pfa.value, sh_add.value, 100.0 * add_rel);
    const bool near_full_rate = std::fabs(add_rel) <= 0.15;

    // Fractional sampling at the same duty cycle (every other slot), matched
    // to the same PFA.
    TrialPlan fr_plan{model, ChangePointLaw::geometric(rho),
                      FractionalShiryaevSpec{rho, stop_a, 2}, 100000, 1000000, 0xACCEA1};
    const auto fr_cal =
        calibrate_threshold(fr_plan, {CalibrationTarget::Kind::PfaLeq, de_pfa.value}, threads());
    fr_plan.detector = FractionalShiryaevSpec{rho, fr_cal.calibrated_threshold, 2};
    fr_plan.num_trials = 300000;
    const auto [fr_add, fr_pfa] = estimate_add_pfa(fr_plan, threads());
    const auto fr_ano = estimate_ano(fr_plan, threads());
    const double gap_se = std::hypot(fr_add.std_error, de_add.std_error);
    const bool equal_budget = std::fabs(fr_ano.value - de_ano.value) <= 0.25 * de_ano.value;
    const bool strictly_better = fr_add.value - de_add.value > 3.0 * gap_se;
    detail("fractional sampling: A=%.4f PFA=%.3e ADD=%.2f ANO=%.1f; DE better by %.1f%% (>3 SE)",
           fr_cal.calibrated_threshold, fr_pfa.value, fr_add.value, fr_ano.value,
           100.0 * (fr_add.value / de_add.value - 1.0));

    const bool pass = pfa_moderate && near_full_rate && equal_budget && strictly_better;
    if (!pfa_moderate) detail("PFA left the moderate range [1e-3, 1e-2]");
    if (!equal_budget) detail("observation budgets diverged");
    report(6, "half-budget DE rule stays near the full-rate delay and beats fractional sampling",
           pass);
}

}  // namespace

int main() {
    const auto start = std::chrono::steady_clock::now();
    criterion1();
    criterion2();
    criterion3();
    criterion4();
    criterion5();
    criterion6();
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%d/6 criteria passed in %.1f s\n", 6 - g_failures, secs);
    return g_failures == 0 ? 0 : 1;
}
