#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace qcd {

inline double logaddexp(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double hi = a > b ? a : b;
    const double lo = a > b ? b : a;
    return hi + std::log1p(std::exp(lo - hi));
}

inline double logit(double p) {
    if (p <= 0.0) return -std::numeric_limits<double>::infinity();
    if (p >= 1.0) return std::numeric_limits<double>::infinity();
    return std::log(p) - std::log1p(-p);
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

namespace detail {

inline void require_finite_llr(double llr) {
    if (!std::isfinite(llr)) throw std::invalid_argument("log-likelihood ratio must be finite");
}

inline void require_running(bool stopped) {
    if (stopped) throw std::logic_error("detector already stopped");
}

// Log-odds update shared by the Shiryaev-family recursions: first the prior
// reweighting p~ = p + (1-p) rho, expressed on log-odds as
// logaddexp(ell, log rho) + |log(1-rho)|, then the Bayes update adds the llr.
inline double shiryaev_prior_update_log_odds(double ell, double log_rho, double tail_d) {
    return logaddexp(ell, log_rho) + tail_d;
}

}  // namespace detail

// Posterior probability p_n that the change has occurred by time n, under a
// geometric(rho) prior. Stops at the first n with p_n >= A. The recursion is
// carried in linear probability space and falls back to log-odds arithmetic
// when the reweighted posterior gets close to 1.
class ShiryaevDetector {
public:
    ShiryaevDetector(double rho, double threshold_a, double initial_posterior = 0.0)
        : rho_(rho), threshold_a_(threshold_a), p_(initial_posterior) {
        if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("rho must lie in [0,1)");
        if (!(threshold_a > 0.0 && threshold_a < 1.0)) {
            throw std::invalid_argument("threshold A must lie in (0,1)");
        }
        if (!(p_ >= 0.0 && p_ <= 1.0)) throw std::invalid_argument("posterior must lie in [0,1]");
        stopped_ = p_ >= threshold_a_;
    }

    void step(double llr) {
        detail::require_running(stopped_);
        detail::require_finite_llr(llr);
        const double q_tilde = (1.0 - p_) * (1.0 - rho_);  // 1 - p~
        const double p_tilde = 1.0 - q_tilde;
        if (p_tilde < 0.999999995) {
            const double t = p_tilde * std::exp(llr);
            p_ = t / (t + q_tilde);
        } else {
            // p~ near 1: log-odds space keeps the update exact.
            const double ell = std::log(p_tilde) - std::log(q_tilde) + llr;
            p_ = sigmoid(ell);
        }
        ++n_;
        stopped_ = p_ >= threshold_a_;
    }

    double posterior() const { return p_; }
    bool stopped() const { return stopped_; }
    std::int64_t steps() const { return n_; }

private:
    double rho_;
    double threshold_a_;
    double p_;
    bool stopped_ = false;
    std::int64_t n_ = 0;
};

// Posterior odds Lambda_n = p_n / (1-p_n), tracked in log domain, with the
// recursion Lambda' = (Lambda + rho) L / (1-rho) and Lambda_0 = 0. Stops at
// Lambda_n >= a, which for a = A/(1-A) fires at the same sample as the
// posterior form.
class ShiryaevLambdaDetector {
public:
    ShiryaevLambdaDetector(double rho, double threshold_a_odds, double initial_odds = 0.0)
        : log_rho_(std::log(rho)),
          tail_d_(-std::log1p(-rho)),
          log_threshold_(std::log(threshold_a_odds)),
          log_lambda_(initial_odds > 0.0 ? std::log(initial_odds)
                                         : -std::numeric_limits<double>::infinity()) {
        if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("rho must lie in [0,1)");
        if (!(threshold_a_odds > 0.0)) throw std::invalid_argument("odds threshold must be positive");
        if (!(initial_odds >= 0.0)) throw std::invalid_argument("odds must be non-negative");
        stopped_ = log_lambda_ >= log_threshold_;
    }

    static ShiryaevLambdaDetector from_log_odds_threshold(double rho, double b) {
        ShiryaevLambdaDetector det(rho, 1.0);
        det.log_threshold_ = b;
        det.stopped_ = det.log_lambda_ >= b;
        return det;
    }

    void step(double llr) {
        detail::require_running(stopped_);
        detail::require_finite_llr(llr);
        log_lambda_ = detail::shiryaev_prior_update_log_odds(log_lambda_, log_rho_, tail_d_) + llr;
        ++n_;
        stopped_ = log_lambda_ >= log_threshold_;
    }

    double log_lambda() const { return log_lambda_; }
    double lambda() const { return std::exp(log_lambda_); }
    double posterior() const { return sigmoid(log_lambda_); }
    bool stopped() const { return stopped_; }
    std::int64_t steps() const { return n_; }

private:
    double log_rho_;
    double tail_d_;
    double log_threshold_;
    double log_lambda_;
    bool stopped_ = false;
    std::int64_t n_ = 0;
};

// Prior-scaled odds R_{n,rho} = Lambda_n / rho with the recursion
// R' = (1 + R) L / (1-rho), R_0 = 0; stops at R >= a/rho. Tracked linearly
// with a switch to log arithmetic beyond 1e100.
class ShiryaevRDetector {
public:
    ShiryaevRDetector(double rho, double threshold, double initial_value = 0.0)
        : rho_(rho), threshold_(threshold), log_threshold_(std::log(threshold)),
          r_(initial_value) {
        if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("rho must lie in (0,1)");
        if (!(threshold > 0.0)) throw std::invalid_argument("threshold must be positive");
        if (!(initial_value >= 0.0)) throw std::invalid_argument("initial value must be >= 0");
        stopped_ = r_ >= threshold_;
    }

    void step(double llr) {
        detail::require_running(stopped_);
        detail::require_finite_llr(llr);
        const double d = -std::log1p(-rho_);
        if (!log_mode_) {
            const double log_next = std::log1p(r_) + d + llr;
            if (log_next > kLogGuard) {
                log_mode_ = true;
                log_r_ = log_next;
            } else {
                r_ = (1.0 + r_) * std::exp(llr) / (1.0 - rho_);
            }
        } else {
            log_r_ = logaddexp(0.0, log_r_) + d + llr;
        }
        ++n_;
        stopped_ = log_mode_ ? log_r_ >= log_threshold_ : r_ >= threshold_;
    }

    double value() const { return log_mode_ ? std::exp(log_r_) : r_; }
    double log_value() const { return log_mode_ ? log_r_ : std::log(r_); }
    bool stopped() const { return stopped_; }
    std::int64_t steps() const { return n_; }

private:
    static constexpr double kLogGuard = 230.25850929940457;  // log(1e100)

    double rho_;
    double threshold_;
    double log_threshold_;
    double r_;
    double log_r_ = -std::numeric_limits<double>::infinity();
    bool log_mode_ = false;
    bool stopped_ = false;
    std::int64_t n_ = 0;
};

// Page's CuSum. Both equivalent statistics are advanced:
//   W' = (W + y)^+        (non-negative form, drives the stop decision)
//   C' = (C)^+ + y        (may go negative; crosses any b > 0 with W)
class CusumDetector {
public:
    explicit CusumDetector(double threshold) : threshold_(threshold) {
        if (!(threshold > 0.0)) throw std::invalid_argument("CuSum threshold must be positive");
    }

    void step(double llr) {
        detail::require_running(stopped_);
        detail::require_finite_llr(llr);
        w_ = std::max(w_ + llr, 0.0);
        c_ = std::max(c_, 0.0) + llr;
        ++n_;
        stopped_ = w_ >= threshold_;
    }

    double w() const { return w_; }
    double c() const { return c_; }
    double threshold() const { return threshold_; }
    bool stopped() const { return stopped_; }
    std::int64_t steps() const { return n_; }

private:
    double threshold_;
    double w_ = 0.0;
    double c_ = 0.0;
    bool stopped_ = false;
    std::int64_t n_ = 0;
};

// Shiryaev-Roberts statistic R' = (1 + R) L with head start R_0 = r >= 0
// (r = 0 gives the plain SR rule). Linear arithmetic with a log-domain
// fallback once the statistic exceeds 1e100.
class SrDetector {
public:
    explicit SrDetector(double threshold, double head_start = 0.0)
        : threshold_(threshold),
          log_threshold_(std::log(threshold)),
          r_(head_start),
          head_start_value_(head_start) {
        if (!(threshold > 0.0)) throw std::invalid_argument("SR threshold must be positive");
        if (!(head_start >= 0.0)) throw std::invalid_argument("head start must be non-negative");
        stopped_ = r_ >= threshold_;
    }

    void step(double llr) {
        detail::require_running(stopped_);
        detail::require_finite_llr(llr);
        if (!log_mode_) {
            const double log_next = std::log1p(r_) + llr;
            if (log_next > kLogGuard) {
                log_mode_ = true;
                log_r_ = log_next;
            } else {
                r_ = (1.0 + r_) * std::exp(llr);
            }
        } else {
            log_r_ = logaddexp(0.0, log_r_) + llr;
        }
        ++n_;
        stopped_ = log_mode_ ? log_r_ >= log_threshold_ : r_ >= threshold_;
    }

    double value() const { return log_mode_ ? std::exp(log_r_) : r_; }
    double head_start() const { return head_start_value_; }
    bool stopped() const { return stopped_; }
    std::int64_t steps() const { return n_; }

private:
    static constexpr double kLogGuard = 230.25850929940457;

    double threshold_;
    double log_threshold_;
    double r_;
    double head_start_value_ = 0.0;
    double log_r_ = -std::numeric_limits<double>::infinity();
    bool log_mode_ = false;
    bool stopped_ = false;
    std::int64_t n_ = 0;
};

// Window-limited GLR detector for a mean shift away from 0 on unit-variance
// Gaussian observations. Candidate change points k keep the cumulative sums
// S_k; candidates older than n - window are evicted (strict FIFO).
//
// Two scorings of a candidate (j = n - k observations, T = S_n - S_k):
//   z-scale       |T| / sqrt(j)                        (default)
//   clamped LLR   theta* T - j theta*^2 / 2,  theta* = sign(T) max(|T|/j, theta_min)
// The clamped form realizes the |theta| >= theta_min restriction of the
// supremum for this family.
class GlrGaussianDetector {
public:
    GlrGaussianDetector(std::int64_t window, double threshold)
        : window_(window), threshold_(threshold) {
        validate();
    }

    static GlrGaussianDetector clamped_llr(std::int64_t window, double threshold,
                                           double theta_min) {
        GlrGaussianDetector det(window, threshold);
        if (!(theta_min > 0.0)) throw std::invalid_argument("theta_min must be positive");
        det.theta_min_ = theta_min;
        return det;
    }

    void step(double x) {
        detail::require_running(stopped_);
        if (!std::isfinite(x)) throw std::invalid_argument("observation must be finite");
        const double s_n = cum_ + x;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < sums_.size(); ++i) {
            const auto j = static_cast<double>(n_ + 1 - (oldest_k_ + static_cast<std::int64_t>(i)));
            const double diff = s_n - sums_[i];
            best = std::max(best, score(diff, j));
        }
        statistic_ = best;
        cum_ = s_n;
        ++n_;
        sums_.push_back(s_n);
        if (static_cast<std::int64_t>(sums_.size()) > window_) {
            sums_.pop_front();
            ++oldest_k_;
        }
        stopped_ = statistic_ >= threshold_;
    }

    double statistic() const { return statistic_; }
    bool stopped() const { return stopped_; }
    std::int64_t steps() const { return n_; }

private:
    void validate() const {
        if (window_ < 1) throw std::invalid_argument("window capacity must be >= 1");
        if (!(threshold_ > 0.0)) throw std::invalid_argument("threshold must be positive");
    }

    double score(double diff, double j) const {
        if (theta_min_ == 0.0) return std::fabs(diff) / std::sqrt(j);
        const double mle = diff / j;
        const double theta = std::copysign(std::max(std::fabs(mle), theta_min_), diff);
        return theta * diff - 0.5 * j * theta * theta;
    }

    std::int64_t window_;
    double threshold_;
    double theta_min_ = 0.0;
    std::deque<double> sums_{0.0};  // S_k for k in [oldest_k_, n]
    std::int64_t oldest_k_ = 0;
    double cum_ = 0.0;
    double statistic_ = 0.0;
    bool stopped_ = false;
    std::int64_t n_ = 0;
};

// Window size heuristic for the GLR/mixture detectors: three times the
// first-order delay at false alarm rate alpha.
inline std::int64_t default_glr_window(double alpha, double kl) {
    if (!(alpha > 0.0 && alpha < 1.0) || !(kl > 0.0)) {
        throw std::invalid_argument("window heuristic needs alpha in (0,1) and kl > 0");
    }
    return static_cast<std::int64_t>(std::ceil(3.0 * std::fabs(std::log(alpha)) / kl));
}

// Window-limited mixture detector: the likelihood ratio against a candidate
// change point is integrated over a Gaussian prior G = N(prior_mean,
// prior_var) on the post-change mean. The integral has a conjugate closed
// form; everything is carried in log domain. Stops when the largest candidate
// integral reaches `threshold` (typically 1/alpha).
class MixtureGaussianDetector {
public:
    MixtureGaussianDetector(std::int64_t window, double prior_mean, double prior_var,
                            double threshold, double mu0 = 0.0, double sigma = 1.0)
        : window_(window),
          prior_mean_(prior_mean),
          prior_var_(prior_var),
          log_threshold_(std::log(threshold)),
          mu0_(mu0),
          sigma2_(sigma * sigma) {
        if (window < 1) throw std::invalid_argument("window capacity must be >= 1");
        if (!(prior_var > 0.0)) throw std::invalid_argument("prior variance must be positive");
        if (!(threshold > 0.0)) throw std::invalid_argument("threshold must be positive");
        if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
    }

    void step(double x) {
        detail::require_running(stopped_);
        if (!std::isfinite(x)) throw std::invalid_argument("observation must be finite");
        const double t_n = cum_ + (x - mu0_);
        const double mbar = prior_mean_ - mu0_;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < sums_.size(); ++i) {
            const auto j = static_cast<double>(n_ + 1 - (oldest_k_ + static_cast<std::int64_t>(i)));
            const double t = t_n - sums_[i];
            const double a = t / sigma2_;
            const double b = j / sigma2_;
            const double beta = b + 1.0 / prior_var_;
            const double gamma = a + mbar / prior_var_;
            const double log_integral = -0.5 * std::log(prior_var_ * beta) +
                                        gamma * gamma / (2.0 * beta) -
                                        mbar * mbar / (2.0 * prior_var_);
            best = std::max(best, log_integral);
        }
        log_statistic_ = best;
        cum_ = t_n;
        ++n_;
        sums_.push_back(t_n);
        if (static_cast<std::int64_t>(sums_.size()) > window_) {
            sums_.pop_front();
            ++oldest_k_;
        }
        stopped_ = log_statistic_ >= log_threshold_;
    }

    double log_statistic() const { return log_statistic_; }
    double statistic() const { return std::exp(log_statistic_); }
    bool stopped() const { return stopped_; }
    std::int64_t steps() const { return n_; }

private:
    std::int64_t window_;
    double prior_mean_;
    double prior_var_;
    double log_threshold_;
    double mu0_;
    double sigma2_;
    std::deque<double> sums_{0.0};
    std::int64_t oldest_k_ = 0;
    double cum_ = 0.0;
    double log_statistic_ = -std::numeric_limits<double>::infinity();
    bool stopped_ = false;
    std::int64_t n_ = 0;
};

// Data-efficient Shiryaev rule with two thresholds B <= A. While the
// posterior sits below B the next observation is skipped and the posterior
// advances by the prior-only map p <- p + (1-p) rho; otherwise the full Bayes
// update runs. Stops at p >= A. B = 0 takes every observation and reproduces
// the Shiryaev trajectory exactly.
class DeShiryaevDetector {
public:
    DeShiryaevDetector(double rho, double threshold_a, double threshold_b)
        : log_rho_(std::log(rho)),
          tail_d_(-std::log1p(-rho)),
          stop_log_odds_(logit(threshold_a)),
          observe_log_odds_(logit(threshold_b)) {
        if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("rho must lie in (0,1)");
        if (!(threshold_a > 0.0 && threshold_a < 1.0)) {
            throw std::invalid_argument("stop threshold A must lie in (0,1)");
        }
        if (!(threshold_b >= 0.0 && threshold_b <= 1.0)) {
            throw std::invalid_argument("observation threshold B must lie in [0,1]");
        }
        take_next_ = log_odds_ >= observe_log_odds_;
    }

    // llr present iff take_next() was set before this call.
    void step(std::optional<double> llr) {
        detail::require_running(stopped_);
        if (llr.has_value() != take_next_) {
            throw std::logic_error("observation presence does not match the take/skip decision");
        }
        log_odds_ = detail::shiryaev_prior_update_log_odds(log_odds_, log_rho_, tail_d_);
        if (llr) {
            detail::require_finite_llr(*llr);
            log_odds_ += *llr;
            ++observations_used_;
        }
        ++n_;
        take_next_ = log_odds_ >= observe_log_odds_;
        stopped_ = log_odds_ >= stop_log_odds_;
    }

    bool take_next() const { return take_next_; }
    double posterior() const { return sigmoid(log_odds_); }
    double log_odds() const { return log_odds_; }
    std::int64_t observations_used() const { return observations_used_; }
    bool stopped() const { return stopped_; }
    std::int64_t steps() const { return n_; }

private:
    double log_rho_;
    double tail_d_;
    double stop_log_odds_;
    double observe_log_odds_;
    double log_odds_ = -std::numeric_limits<double>::infinity();
    bool take_next_ = false;
    bool stopped_ = false;
    std::int64_t observations_used_ = 0;
    std::int64_t n_ = 0;
};

// Fractional-sampling baseline: the Shiryaev rule run on a fixed duty cycle
// (every `period`-th slot observed, the rest advanced by the prior-only map).
// The skip schedule is decided ahead of time, not from the data.
class FractionalShiryaevDetector {
public:
    FractionalShiryaevDetector(double rho, double threshold_a, std::int64_t period)
        : log_rho_(std::log(rho)),
          tail_d_(-std::log1p(-rho)),
          stop_log_odds_(logit(threshold_a)),
          period_(period) {
        if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("rho must lie in (0,1)");
        if (!(threshold_a > 0.0 && threshold_a < 1.0)) {
            throw std::invalid_argument("stop threshold A must lie in (0,1)");
        }
        if (period < 1) throw std::invalid_argument("period must be >= 1");
    }

    bool take_next() const { return (n_ + 1) % period_ == 0; }

    void step(std::optional<double> llr) {
        detail::require_running(stopped_);
        if (llr.has_value() != take_next()) {
            throw std::logic_error("observation presence does not match the sampling schedule");
        }
        log_odds_ = detail::shiryaev_prior_update_log_odds(log_odds_, log_rho_, tail_d_);
        if (llr) {
            detail::require_finite_llr(*llr);
            log_odds_ += *llr;
            ++observations_used_;
        }
        ++n_;
        stopped_ = log_odds_ >= stop_log_odds_;
    }

    double posterior() const { return sigmoid(log_odds_); }
    std::int64_t observations_used() const { return observations_used_; }
    bool stopped() const { return stopped_; }
    std::int64_t steps() const { return n_; }

private:
    double log_rho_;
    double tail_d_;
    double stop_log_odds_;
    std::int64_t period_;
    double log_odds_ = -std::numeric_limits<double>::infinity();
    bool stopped_ = false;
    std::int64_t observations_used_ = 0;
    std::int64_t n_ = 0;
};

// Source of conditional log-likelihood ratios Y_i for the generalized CuSum;
// lets non-i.i.d. models plug into the same recursion.
class LlrStream {
public:
    virtual ~LlrStream() = default;
    virtual double next() = 0;
};

class ConstantLlrStream final : public LlrStream {
public:
    explicit ConstantLlrStream(double value) : value_(value) {}
    double next() override { return value_; }

private:
    double value_;
};

class VectorLlrStream final : public LlrStream {
public:
    explicit VectorLlrStream(std::vector<double> values) : values_(std::move(values)) {}
    double next() override {
        if (pos_ >= values_.size()) throw std::out_of_range("llr stream exhausted");
        return values_[pos_++];
    }

private:
    std::vector<double> values_;
    std::size_t pos_ = 0;
};

// Generalized CuSum step: identical recursion, with the i.i.d. llr replaced
// by the stream's conditional llr.
inline void generalized_cusum_step(CusumDetector& detector, LlrStream& stream) {
    detector.step(stream.next());
}

}  // namespace qcd
