#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace qcd {

enum class MetricKind { Add, Pfa, Far, WaddCadd, CaddLowerBound, Ano, MeanTimeToFalseAlarm };

inline const char* metric_name(MetricKind kind) {
    switch (kind) {
        case MetricKind::Add: return "ADD";
        case MetricKind::Pfa: return "PFA";
        case MetricKind::Far: return "FAR";
        case MetricKind::WaddCadd: return "WADD_CADD";
        case MetricKind::CaddLowerBound: return "CADD_LB";
        case MetricKind::Ano: return "ANO";
        case MetricKind::MeanTimeToFalseAlarm: return "MTFA";
    }
    return "?";
}

// Monte Carlo point estimate with its standard error. capped_fraction is the
// share of trials that hit the horizon cap before stopping.
struct MetricEstimate {
    MetricKind kind;
    double value;
    double std_error;
    std::int64_t trials;
    double capped_fraction;
};

namespace stats {

// Sample mean and standard error of the mean.
inline std::pair<double, double> mean_se(const std::vector<double>& v) {
    const auto n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : v) {
        const double d = x - mean;
        ss += d * d;
    }
    const double var = v.size() > 1 ? ss / (n - 1.0) : 0.0;
    return {mean, std::sqrt(var / n)};
}

inline std::pair<double, double> proportion_se(std::int64_t hits, std::int64_t n) {
    const double p = static_cast<double>(hits) / static_cast<double>(n);
    return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(n))};
}

}  // namespace stats

}  // namespace qcd
