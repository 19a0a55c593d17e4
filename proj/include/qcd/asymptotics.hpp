#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "qcd/dist_models.hpp"
#include "qcd/rng.hpp"

namespace qcd {

// Limit quantities of the overshoot distribution R(x) of the post-change
// random walk sum(Y_k + |log(1-rho)|) at a large boundary, plus the mean of
// the slowly-changing correction term of the Shiryaev log statistic.
struct OvershootEstimates {
    double kappa;      // mean overshoot, integral x dR(x)
    double kappa_se;
    double zeta;       // Laplace transform at 1, integral e^{-x} dR(x)
    double zeta_se;
    double eta_mean;   // E_1 of the a.s. limit of the correction sequence
    double eta_se;
    bool stationary;   // estimates at the two largest boundaries agree (2 joint SE)
    std::int64_t crossings;
};

// First-order delay approximation |log alpha| / (kl + d); d = 0 recovers the
// minimax slope.
double first_order_add(double alpha, double kl, double tail_d);

struct WalkOvershootStats {
    double kappa;
    double kappa_se;
    double zeta;
    double zeta_se;
};

// Mean overshoot and its Laplace transform of a random walk with the given
// increment sampler, at first crossing (weak) of `threshold`. One independent
// stream per crossing; deterministic in (seed, crossings).
WalkOvershootStats overshoot_of_walk(const std::function<double(Xoshiro256pp&)>& increment,
                                     double threshold, std::int64_t crossings, std::uint64_t seed,
                                     int threads = 1);

// Monte Carlo estimates of kappa, zeta (from direct overshoot simulation at
// the supplied boundaries; reported values come from the largest) and of the
// correction-term mean (Shiryaev log statistic under a change at time 1,
// accumulated until successive increments fall below 1e-6). Rejects discrete
// (lattice) families and non-positive drift.
OvershootEstimates estimate_overshoot(const DensityPair& model, double rho,
                                      std::int64_t num_crossings, std::span<const double> thresholds,
                                      std::uint64_t seed, int threads = 1);

// PFA ~ zeta e^{-b} at log-scale threshold b.
double second_order_pfa(double b, const OvershootEstimates& est);

// E_1[tau] ~ (b + kappa - E_1[eta]) / (tail_d + kl).
double second_order_add(double b, const OvershootEstimates& est, double kl, double tail_d);

}  // namespace qcd
