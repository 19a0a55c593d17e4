#pragma once

#include <cstdint>
#include <variant>

#include "qcd/rng.hpp"

namespace qcd {

enum class Regime { Pre, Post };
enum class KlDirection { PostVsPre, PreVsPost };

struct GaussianMeanShift {
    double mu0;
    double mu1;
    double sigma;
};

struct BernoulliShift {
    double p0;
    double p1;
};

struct ExponentialRateShift {
    double lam0;
    double lam1;
};

// Pre-/post-change observation distributions f0, f1 from one scalar family.
// Construction enforces distinct parameters, so 0 < D(f1||f0) < infinity.
// Immutable after construction; safe to share across threads.
class DensityPair {
public:
    using Family = std::variant<GaussianMeanShift, BernoulliShift, ExponentialRateShift>;

    static DensityPair gaussian_mean_shift(double mu0, double mu1, double sigma);
    static DensityPair bernoulli(double p0, double p1);
    static DensityPair exponential_rate(double lam0, double lam1);

    // log f1(x) - log f0(x), closed form per family. Rejects non-finite x.
    double log_likelihood_ratio(double x) const;

    // Closed-form K-L divergence; strictly positive for every valid pair.
    double kl_divergence(KlDirection direction) const;

    // One draw from f0 (Pre) or f1 (Post).
    double sample(Regime regime, Xoshiro256pp& rng) const;

    double cdf(Regime regime, double x) const;

    // Upper tail probability, computed directly so far-tail masses keep their
    // precision instead of cancelling against 1.
    double survival(Regime regime, double x) const;

    // True when the observation support is a finite set (Bernoulli).
    bool discrete() const;

    const Family& family() const { return family_; }

private:
    explicit DensityPair(Family family) : family_(family) {}

    Family family_;
};

// Independent check of the closed forms: numeric integration (or exact
// summation for discrete families) of f1 log(f1/f0), absolute error 1e-9.
// Gaussian support is truncated at +-12 sigma around both means, where the
// discarded tail mass is below 1e-30.
double kl_quadrature_oracle(const DensityPair& pair);

// Law of the change point Gamma: geometric(rho) on {1,2,...}, a fixed time,
// or no change at all.
class ChangePointLaw {
public:
    static constexpr std::int64_t kNever = INT64_MAX;

    static ChangePointLaw geometric(double rho);
    static ChangePointLaw fixed(std::int64_t gamma);
    static ChangePointLaw never();

    // Gamma >= 1, or kNever.
    std::int64_t sample(Xoshiro256pp& rng) const;

    bool is_geometric() const { return kind_ == Kind::Geometric; }
    bool is_fixed() const { return kind_ == Kind::Fixed; }
    bool is_never() const { return kind_ == Kind::Never; }

    // Geometric parameter; zero for Fixed/Never.
    double rho() const { return rho_; }

    // Tail exponent d = |log(1-rho)| of the prior; zero for Fixed/Never.
    double tail_exponent() const;

    std::int64_t fixed_gamma() const { return gamma_; }

private:
    enum class Kind { Geometric, Fixed, Never };

    ChangePointLaw(Kind kind, double rho, std::int64_t gamma)
        : kind_(kind), rho_(rho), gamma_(gamma) {}

    Kind kind_;
    double rho_ = 0.0;
    std::int64_t gamma_ = kNever;
};

}  // namespace qcd
