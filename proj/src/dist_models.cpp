#include "qcd/dist_models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qcd/quadrature.hpp"

namespace qcd {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

bool finite(double v) { return std::isfinite(v); }

double gaussian_log_pdf(double x, double mu, double sigma) {
    const double z = (x - mu) / sigma;
    return -0.5 * z * z - std::log(sigma) - 0.918938533204672742;  // log(sqrt(2*pi))
}

}  // namespace

DensityPair DensityPair::gaussian_mean_shift(double mu0, double mu1, double sigma) {
    require(finite(mu0) && finite(mu1) && finite(sigma), "gaussian parameters must be finite");
    require(sigma > 0.0, "sigma must be positive");
    require(mu0 != mu1, "pre and post means must differ");
    return DensityPair(GaussianMeanShift{mu0, mu1, sigma});
}

DensityPair DensityPair::bernoulli(double p0, double p1) {
    require(finite(p0) && finite(p1), "bernoulli parameters must be finite");
    require(p0 > 0.0 && p0 < 1.0 && p1 > 0.0 && p1 < 1.0,
            "bernoulli probabilities must lie strictly inside (0,1)");
    require(p0 != p1, "pre and post success probabilities must differ");
    return DensityPair(BernoulliShift{p0, p1});
}

DensityPair DensityPair::exponential_rate(double lam0, double lam1) {
    require(finite(lam0) && finite(lam1), "exponential rates must be finite");
    require(lam0 > 0.0 && lam1 > 0.0, "exponential rates must be positive");
    require(lam0 != lam1, "pre and post rates must differ");
    return DensityPair(ExponentialRateShift{lam0, lam1});
}

double DensityPair::log_likelihood_ratio(double x) const {
    if (!finite(x)) throw std::invalid_argument("observation must be finite");
    return std::visit(
        [x](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, GaussianMeanShift>) {
                return (x * (f.mu1 - f.mu0) - 0.5 * (f.mu1 * f.mu1 - f.mu0 * f.mu0)) /
                       (f.sigma * f.sigma);
            } else if constexpr (std::is_same_v<T, BernoulliShift>) {
                return x >= 0.5 ? std::log(f.p1 / f.p0)
                                : std::log((1.0 - f.p1) / (1.0 - f.p0));
            } else {
                return std::log(f.lam1 / f.lam0) - (f.lam1 - f.lam0) * x;
            }
        },
        family_);
}

double DensityPair::kl_divergence(KlDirection direction) const {
    const bool post_vs_pre = direction == KlDirection::PostVsPre;
    return std::visit(
        [post_vs_pre](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, GaussianMeanShift>) {
                const double dm = f.mu1 - f.mu0;
                return 0.5 * dm * dm / (f.sigma * f.sigma);
            } else if constexpr (std::is_same_v<T, BernoulliShift>) {
                const double a = post_vs_pre ? f.p1 : f.p0;
                const double b = post_vs_pre ? f.p0 : f.p1;
                return a * std::log(a / b) + (1.0 - a) * std::log((1.0 - a) / (1.0 - b));
            } else {
                const double a = post_vs_pre ? f.lam1 : f.lam0;
                const double b = post_vs_pre ? f.lam0 : f.lam1;
                return std::log(a / b) + b / a - 1.0;
            }
        },
        family_);
}

double DensityPair::sample(Regime regime, Xoshiro256pp& rng) const {
    const bool post = regime == Regime::Post;
    return std::visit(
        [post, &rng](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, GaussianMeanShift>) {
                return (post ? f.mu1 : f.mu0) + f.sigma * rng.next_normal();
            } else if constexpr (std::is_same_v<T, BernoulliShift>) {
                return rng.next_unit_open() < (post ? f.p1 : f.p0) ? 1.0 : 0.0;
            } else {
                const double lam = post ? f.lam1 : f.lam0;
                return -std::log(rng.next_unit_open()) / lam;
            }
        },
        family_);
}

double DensityPair::cdf(Regime regime, double x) const {
    const bool post = regime == Regime::Post;
    return std::visit(
        [post, x](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, GaussianMeanShift>) {
                return normal_cdf((x - (post ? f.mu1 : f.mu0)) / f.sigma);
            } else if constexpr (std::is_same_v<T, BernoulliShift>) {
                const double p = post ? f.p1 : f.p0;
                if (x < 0.0) return 0.0;
                if (x < 1.0) return 1.0 - p;
                return 1.0;
            } else {
                const double lam = post ? f.lam1 : f.lam0;
                return x <= 0.0 ? 0.0 : -std::expm1(-lam * x);
            }
        },
        family_);
}

double DensityPair::survival(Regime regime, double x) const {
    const bool post = regime == Regime::Post;
    return std::visit(
        [post, x](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, GaussianMeanShift>) {
                return normal_cdf(-(x - (post ? f.mu1 : f.mu0)) / f.sigma);
            } else if constexpr (std::is_same_v<T, BernoulliShift>) {
                const double p = post ? f.p1 : f.p0;
                if (x < 0.0) return 1.0;
                if (x < 1.0) return p;
                return 0.0;
            } else {
                const double lam = post ? f.lam1 : f.lam0;
                return x <= 0.0 ? 1.0 : std::exp(-lam * x);
            }
        },
        family_);
}

bool DensityPair::discrete() const {
    return std::holds_alternative<BernoulliShift>(family_);
}

double kl_quadrature_oracle(const DensityPair& pair) {
    return std::visit(
        [&pair](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, BernoulliShift>) {
                return f.p1 * std::log(f.p1 / f.p0) +
                       (1.0 - f.p1) * std::log((1.0 - f.p1) / (1.0 - f.p0));
            } else if constexpr (std::is_same_v<T, GaussianMeanShift>) {
                const double lo = std::min(f.mu0, f.mu1) - 12.0 * f.sigma;
                const double hi = std::max(f.mu0, f.mu1) + 12.0 * f.sigma;
                auto integrand = [&](double x) {
                    const double lt = gaussian_log_pdf(x, f.mu1, f.sigma);
                    return std::exp(lt) * pair.log_likelihood_ratio(x);
                };
                return adaptive_simpson(integrand, lo, hi, 1e-10);
            } else {
                // Integrand decays like exp(-lam1 x); 72/lam1 leaves tail mass
                // below 1e-31.
                const double hi = 72.0 / f.lam1;
                auto integrand = [&](double x) {
                    return f.lam1 * std::exp(-f.lam1 * x) * pair.log_likelihood_ratio(x);
                };
                return adaptive_simpson(integrand, 0.0, hi, 1e-10);
            }
        },
        pair.family());
}

ChangePointLaw ChangePointLaw::geometric(double rho) {
    if (!(rho > 0.0 && rho < 1.0)) {
        throw std::invalid_argument("geometric prior requires rho in (0,1)");
    }
    return ChangePointLaw(Kind::Geometric, rho, kNever);
}

ChangePointLaw ChangePointLaw::fixed(std::int64_t gamma) {
    if (gamma < 1) throw std::invalid_argument("fixed change point must be >= 1");
    return ChangePointLaw(Kind::Fixed, 0.0, gamma);
}

ChangePointLaw ChangePointLaw::never() { return ChangePointLaw(Kind::Never, 0.0, kNever); }

std::int64_t ChangePointLaw::sample(Xoshiro256pp& rng) const {
    switch (kind_) {
        case Kind::Fixed:
            return gamma_;
        case Kind::Never:
            return kNever;
        case Kind::Geometric:
            break;
    }
    // Inverse transform of P(Gamma > n) = (1-rho)^n.
    const double u = rng.next_unit_open();
    const double g = 1.0 + std::floor(std::log(u) / std::log1p(-rho_));
    if (g >= static_cast<double>(kNever)) return kNever;
    return static_cast<std::int64_t>(g);
}

double ChangePointLaw::tail_exponent() const {
    return kind_ == Kind::Geometric ? -std::log1p(-rho_) : 0.0;
}

}  // namespace qcd
