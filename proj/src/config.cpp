#include "qcd/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace qcd {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

double parse_double(const std::string& section, const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' in [" + section + "] is not a number: '" + v + "'");
    }
}

}  // namespace

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str());
}

ExperimentConfig ExperimentConfig::parse_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto comment = line.find_first_of("#;");
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError("malformed section header at line " + std::to_string(lineno));
            }
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) {
                throw ConfigError("empty section name at line " + std::to_string(lineno));
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("expected key=value at line " + std::to_string(lineno));
        }
        if (section.empty()) {
            throw ConfigError("key outside any [section] at line " + std::to_string(lineno));
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("empty key at line " + std::to_string(lineno));
        cfg.set(section, key, value);
    }
    return cfg;
}

void ExperimentConfig::set(const std::string& section, const std::string& key,
                           const std::string& value) {
    values_[{section, key}] = value;
    consumed_[{section, key}] = false;
}

const std::string* ExperimentConfig::find(const std::string& section,
                                          const std::string& key) const {
    const auto it = values_.find({section, key});
    if (it == values_.end()) return nullptr;
    consumed_[{section, key}] = true;
    return &it->second;
}

bool ExperimentConfig::has(const std::string& section, const std::string& key) const {
    return find(section, key) != nullptr;
}

std::string ExperimentConfig::get_string(const std::string& section, const std::string& key) const {
    const auto* v = find(section, key);
    if (!v) throw ConfigError("missing required key '" + key + "' in [" + section + "]");
    return *v;
}

std::string ExperimentConfig::get_string_or(const std::string& section, const std::string& key,
                                            const std::string& fallback) const {
    const auto* v = find(section, key);
    return v ? *v : fallback;
}

double ExperimentConfig::get_number(const std::string& section, const std::string& key) const {
    return parse_double(section, key, get_string(section, key));
}

double ExperimentConfig::get_number_or(const std::string& section, const std::string& key,
                                       double fallback) const {
    const auto* v = find(section, key);
    return v ? parse_double(section, key, *v) : fallback;
}

std::int64_t ExperimentConfig::get_int(const std::string& section, const std::string& key) const {
    const double x = get_number(section, key);
    if (std::floor(x) != x || std::fabs(x) > 9.2e18) {
        throw ConfigError("key '" + key + "' in [" + section + "] must be an integer");
    }
    return static_cast<std::int64_t>(x);
}

std::int64_t ExperimentConfig::get_int_or(const std::string& section, const std::string& key,
                                          std::int64_t fallback) const {
    return find(section, key) ? get_int(section, key) : fallback;
}

std::vector<double> ExperimentConfig::get_number_list(const std::string& section,
                                                      const std::string& key) const {
    const std::string raw = get_string(section, key);
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= raw.size()) {
        const auto comma = raw.find(',', start);
        const std::string item =
            trim(comma == std::string::npos ? raw.substr(start) : raw.substr(start, comma - start));
        if (!item.empty()) out.push_back(parse_double(section, key, item));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (out.empty()) {
        throw ConfigError("key '" + key + "' in [" + section + "] holds an empty list");
    }
    return out;
}

std::optional<std::vector<double>> ExperimentConfig::get_number_list_opt(
    const std::string& section, const std::string& key) const {
    if (!find(section, key)) return std::nullopt;
    return get_number_list(section, key);
}

void ExperimentConfig::consume_section(const std::string& section) const {
    for (auto& [key, used] : consumed_) {
        if (key.first == section) used = true;
    }
}

void ExperimentConfig::consume_done() const {
    for (const auto& [key, used] : consumed_) {
        if (!used) {
            throw ConfigError("unknown key '" + key.second + "' in [" + key.first + "]");
        }
    }
}

}  // namespace qcd
