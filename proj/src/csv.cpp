#include "qcd/csv.hpp"

#include <charconv>
#include <cmath>

namespace qcd {

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == 0.0) return "0";
    char buf[64];
    const double mag = std::fabs(v);
    const auto fmt = mag < 1e-3 ? std::chars_format::scientific : std::chars_format::general;
    // Shortest round-trip representation: locale-free and byte-stable.
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, fmt);
    return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(std::ostream& out) : out_(out) {
    out_ << "detector,threshold,metric,value,std_error,trials,capped_fraction,seed\n";
}

void CsvWriter::row(const std::string& detector, const std::string& threshold,
                    const std::string& metric, double value, double std_error,
                    std::int64_t trials, double capped_fraction, std::uint64_t seed) {
    out_ << detector << ',' << threshold << ',' << metric << ',' << format_number(value) << ','
         << format_number(std_error) << ',' << trials << ',' << format_number(capped_fraction)
         << ',' << seed << '\n';
}

}  // namespace qcd
