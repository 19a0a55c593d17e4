#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace qcd {

// Invalid, unknown or missing configuration input; the message names the
// offending section/key.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Sectioned key=value text:
//   [section]
//   key = value        # comment
// Keys are consumed through typed getters; consume_done() rejects any key
// that was never read, naming it.
class ExperimentConfig {
public:
    static ExperimentConfig parse_file(const std::string& path);
    static ExperimentConfig parse_text(const std::string& text);

    void set(const std::string& section, const std::string& key, const std::string& value);

    bool has(const std::string& section, const std::string& key) const;

    std::string get_string(const std::string& section, const std::string& key) const;
    std::string get_string_or(const std::string& section, const std::string& key,
                              const std::string& fallback) const;
    double get_number(const std::string& section, const std::string& key) const;
    double get_number_or(const std::string& section, const std::string& key,
                         double fallback) const;
    std::int64_t get_int(const std::string& section, const std::string& key) const;
    std::int64_t get_int_or(const std::string& section, const std::string& key,
                            std::int64_t fallback) const;
    std::vector<double> get_number_list(const std::string& section, const std::string& key) const;
    std::optional<std::vector<double>> get_number_list_opt(const std::string& section,
                                                           const std::string& key) const;

    // Accepts every key of a section (for commands sharing a config whose
    // other sections they do not read).
    void consume_section(const std::string& section) const;

    // Throws naming the first key that was present but never consumed.
    void consume_done() const;

private:
    using Key = std::pair<std::string, std::string>;

    const std::string* find(const std::string& section, const std::string& key) const;

    std::map<Key, std::string> values_;
    mutable std::map<Key, bool> consumed_;
};

}  // namespace qcd
