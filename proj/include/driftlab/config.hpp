#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "driftlab/environment.hpp"
#include "driftlab/functional.hpp"

namespace driftlab {

/*!
 * Experiment configuration. Text form:
 *
 *   [experiment]
 *   name = pde_einstein
 *   seed = 1
 *
 *   [environment]
 *   kind = periodic
 *   ...
 *
 * Keys come from a fixed schema; unknown sections or keys are errors. The
 * canonical text lists sections and keys in schema order with shortest
 * round-trip numbers, so format(parse(format(c))) == format(c) byte for byte.
 */
enum class ValueType { Int, Real, Bool, Text, RealList };

using ConfigValue = std::variant<std::int64_t, double, bool, std::string, std::vector<double>>;

struct ConfigKey {
    std::string section;
    std::string key;
    ValueType type;
    std::string help;
};

// Every accepted key, in canonical order.
const std::vector<ConfigKey>& config_schema();

class ExperimentConfig {
  public:
    static ExperimentConfig parse(const std::string& text);
    static ExperimentConfig parse_json(const std::string& text);
    // Dispatches on the first non-blank character ('{' means JSON).
    static ExperimentConfig parse_any(const std::string& text);
    static ExperimentConfig load(const std::string& path);

    std::string format() const;
    // Same content as a JSON object of sections; parse_json reads it back.
    std::string to_json() const;
    // FNV-1a 64 of the canonical text, 16 hex digits.
    std::string hash() const;

    bool has(const std::string& section, const std::string& key) const;
    void set(const std::string& section, const std::string& key, const ConfigValue& value);
    // Sets from text using the schema type.
    void set_text(const std::string& section, const std::string& key, const std::string& text);
    void erase(const std::string& section, const std::string& key);

    std::int64_t get_int(const std::string& section, const std::string& key, std::int64_t fallback) const;
    double get_real(const std::string& section, const std::string& key, double fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    std::string get_text(const std::string& section, const std::string& key, const std::string& fallback) const;
    std::vector<double> get_list(const std::string& section, const std::string& key,
                                 const std::vector<double>& fallback) const;

    std::string experiment() const { return get_text("experiment", "name", ""); }
    std::uint64_t seed() const { return std::uint64_t(get_int("experiment", "seed", 1)); }
    std::string output_dir() const { return get_text("experiment", "output_dir", "out"); }

    // Overlays every key set in `other`.
    void merge(const ExperimentConfig& other);

    bool operator==(const ExperimentConfig&) const = default;

  private:
    std::map<std::pair<std::string, std::string>, ConfigValue> values_;
};

// Environment and functional described by the [environment] / [functional] sections.
Environment build_environment(const ExperimentConfig& cfg);
FunctionalSpec build_functional(const ExperimentConfig& cfg, const Environment& env);

std::string format_real(double v);
std::uint64_t fnv1a64(const std::string& bytes);

} // namespace driftlab
