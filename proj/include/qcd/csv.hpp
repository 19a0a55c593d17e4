#pragma once

#include <cstdint>
#include <ostream>
#include <string>

namespace qcd {

// Locale-independent number formatting for CSV output: '.' decimal point
// always, scientific notation for magnitudes below 1e-3, at most 9
// significant digits.
std::string format_number(double v);

// Fixed 8-column metric table. The threshold column takes "-" for rows that
// are not tied to a threshold (slope footer, overshoot constants).
class CsvWriter {
public:
    explicit CsvWriter(std::ostream& out);

    void row(const std::string& detector, const std::string& threshold, const std::string& metric,
             double value, double std_error, std::int64_t trials, double capped_fraction,
             std::uint64_t seed);

private:
    std::ostream& out_;
};

}  // namespace qcd
