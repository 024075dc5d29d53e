#include "driftlab/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "driftlab/error.hpp"

namespace driftlab {

namespace {

const ConfigKey* find_key(const std::string& section, const std::string& key)
{
    for (const auto& k : config_schema())
        if (k.section == section && k.key == key)
            return &k;
    return nullptr;
}

bool known_section(const std::string& s)
{
    for (const auto& k : config_schema())
        if (k.section == s)
            return true;
    return false;
}

std::string trim(const std::string& s)
{
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_real(const std::string& text, const std::string& where)
{
    std::string t = trim(text);
    double v = 0.0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || p != t.data() + t.size() || !std::isfinite(v))
        fail(ErrorCode::ConfigError, where + ": expected a finite number, got '" + text + "'");
    return v;
}

std::int64_t parse_int(const std::string& text, const std::string& where)
{
    std::string t = trim(text);
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || p != t.data() + t.size())
        fail(ErrorCode::ConfigError, where + ": expected an integer, got '" + text + "'");
    return v;
}

ConfigValue parse_value(const ConfigKey& k, const std::string& text)
{
    const std::string where = k.section + "." + k.key;
    switch (k.type) {
    case ValueType::Int: return parse_int(text, where);
    case ValueType::Real: return parse_real(text, where);
    case ValueType::Bool: {
        std::string t = trim(text);
        if (t == "true")
            return true;
        if (t == "false")
            return false;
        fail(ErrorCode::ConfigError, where + ": expected true or false");
    }
    case ValueType::Text: {
        std::string t = trim(text);
        if (t.empty())
            fail(ErrorCode::ConfigError, where + ": empty value");
        return t;
    }
    case ValueType::RealList: {
        std::vector<double> out;
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ','))
            out.push_back(parse_real(item, where));
        if (out.empty())
            fail(ErrorCode::ConfigError, where + ": empty list");
        return out;
    }
    }
    fail(ErrorCode::ConfigError, where + ": unsupported type");
}

std::string format_value(const ConfigValue& v)
{
    struct Visitor {
        std::string operator()(std::int64_t i) const { return std::to_string(i); }
        std::string operator()(double d) const { return format_real(d); }
        std::string operator()(bool b) const { return b ? "true" : "false"; }
        std::string operator()(const std::string& s) const { return s; }
        std::string operator()(const std::vector<double>& l) const
        {
            std::string out;
            for (std::size_t i = 0; i < l.size(); ++i)
                out += (i ? ", " : "") + format_real(l[i]);
            return out;
        }
    };
    return std::visit(Visitor{}, v);
}

bool type_matches(ValueType t, const ConfigValue& v)
{
    switch (t) {
    case ValueType::Int: return std::holds_alternative<std::int64_t>(v);
    case ValueType::Real: return std::holds_alternative<double>(v);
    case ValueType::Bool: return std::holds_alternative<bool>(v);
    case ValueType::Text: return std::holds_alternative<std::string>(v);
    case ValueType::RealList: return std::holds_alternative<std::vector<double>>(v);
    }
    return false;
}

} // namespace

std::string format_real(double v)
{
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, p);
}

std::uint64_t fnv1a64(const std::string& bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

const std::vector<ConfigKey>& config_schema()
{
    static const std::vector<ConfigKey> schema = {
        {"experiment", "name", ValueType::Text, "registered experiment"},
        {"experiment", "seed", ValueType::Int, "master seed"},
        {"experiment", "output_dir", ValueType::Text, "artifact directory"},
        {"environment", "kind", ValueType::Text, "constant | periodic | random_bumps"},
        {"environment", "dim", ValueType::Int, "1 or 2"},
        {"environment", "a11", ValueType::Text, "trig series (a number for constant)"},
        {"environment", "a12", ValueType::Text, "trig series (a number for constant)"},
        {"environment", "a22", ValueType::Text, "trig series (a number for constant)"},
        {"environment", "reciprocal", ValueType::Bool, "diagonal entries are 1/series"},
        {"environment", "intensity", ValueType::Real, "bumps per unit volume"},
        {"environment", "bump_radius", ValueType::Real, "bump support radius"},
        {"environment", "amplitude", ValueType::Real, "bump strength"},
        {"environment", "base", ValueType::Real, "background multiple of the identity"},
        {"environment", "max_per_cell", ValueType::Int, "Poisson count truncation"},
        {"environment", "seed", ValueType::Int, "realization seed"},
        {"functional", "kind", ValueType::Text, "zero | drift"},
        {"run", "lambda", ValueType::Real, "forcing"},
        {"run", "lambda_grid", ValueType::RealList, "forcing grid"},
        {"run", "alpha_grid", ValueType::RealList, "scaling-limit ratios lambda^2/eps^2"},
        {"run", "eps_grid", ValueType::RealList, "scaling parameters"},
        {"run", "horizon", ValueType::Real, "time horizon"},
        {"run", "horizon_grid", ValueType::RealList, "time horizons"},
        {"run", "n_paths", ValueType::Int, "paths per estimate"},
        {"run", "n_cycles", ValueType::Int, "regeneration cycles per estimate"},
        {"run", "companion_paths", ValueType::Int, "paths of the unforced companion run"},
        {"run", "step", ValueType::Real, "time step"},
        {"run", "richardson", ValueType::Bool, "extrapolate Monte Carlo averages from step and step/2"},
        {"run", "pairing_scheme", ValueType::Text, "integrator for the corrector pairing: metropolis or euler"},
        {"run", "grid_n", ValueType::Int, "cells per side"},
        {"run", "grid_n_list", ValueType::RealList, "grid sizes for convergence studies"},
        {"run", "lambda_fd", ValueType::Real, "central-difference forcing"},
        {"run", "coupling_scale", ValueType::Real, "scale of the coupling balls"},
        {"run", "censor_blocks", ValueType::Real, "certification window in lambda^-2 units"},
        {"run", "max_steps_per_path", ValueType::Int, "step budget per path"},
    };
    return schema;
}

ExperimentConfig ExperimentConfig::parse(const std::string& text)
{
    ExperimentConfig cfg;
    std::stringstream ss(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#')
            continue;
        const std::string at = "line " + std::to_string(lineno);
        if (t.front() == '[') {
            if (t.back() != ']')
                fail(ErrorCode::ConfigError, at + ": malformed section header");
            section = trim(t.substr(1, t.size() - 2));
            if (!known_section(section))
                fail(ErrorCode::ConfigError, at + ": unknown section [" + section + "]");
            continue;
        }
        auto eq = t.find('=');
        if (eq == std::string::npos)
            fail(ErrorCode::ConfigError, at + ": expected key = value");
        if (section.empty())
            fail(ErrorCode::ConfigError, at + ": key outside a section");
        std::string key = trim(t.substr(0, eq));
        const ConfigKey* k = find_key(section, key);
        if (!k)
            fail(ErrorCode::ConfigError, at + ": unknown key " + section + "." + key);
        if (cfg.has(section, key))
            fail(ErrorCode::ConfigError, at + ": duplicate key " + section + "." + key);
        cfg.values_[{section, key}] = parse_value(*k, t.substr(eq + 1));
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::parse_json(const std::string& text)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ConfigError, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object())
        fail(ErrorCode::ConfigError, "JSON config must be an object of sections");
    ExperimentConfig cfg;
    for (auto& [section, body] : j.items()) {
        if (!known_section(section))
            fail(ErrorCode::ConfigError, "unknown section " + section);
        if (!body.is_object())
            fail(ErrorCode::ConfigError, "section " + section + " must be an object");
        for (auto& [key, v] : body.items()) {
            const ConfigKey* k = find_key(section, key);
            if (!k)
                fail(ErrorCode::ConfigError, "unknown key " + section + "." + key);
            const std::string where = section + "." + key;
            switch (k->type) {
            case ValueType::Int:
                if (!v.is_number_integer())
                    fail(ErrorCode::ConfigError, where + ": expected an integer");
                cfg.values_[{section, key}] = v.get<std::int64_t>();
                break;
            case ValueType::Real:
                if (!v.is_number())
                    fail(ErrorCode::ConfigError, where + ": expected a number");
                cfg.values_[{section, key}] = v.get<double>();
                break;
            case ValueType::Bool:
                if (!v.is_boolean())
                    fail(ErrorCode::ConfigError, where + ": expected a boolean");
                cfg.values_[{section, key}] = v.get<bool>();
                break;
            case ValueType::Text:
                if (v.is_string())
                    cfg.values_[{section, key}] = parse_value(*k, v.get<std::string>());
                else if (v.is_number())
                    cfg.values_[{section, key}] = format_real(v.get<double>());
                else
                    fail(ErrorCode::ConfigError, where + ": expected a string");
                break;
            case ValueType::RealList: {
                if (!v.is_array() || v.empty())
                    fail(ErrorCode::ConfigError, where + ": expected a non-empty array");
                std::vector<double> l;
                for (auto& e : v) {
                    if (!e.is_number())
                        fail(ErrorCode::ConfigError, where + ": expected numbers");
                    l.push_back(e.get<double>());
                }
                cfg.values_[{section, key}] = l;
                break;
            }
            }
        }
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::parse_any(const std::string& text)
{
    auto p = text.find_first_not_of(" \t\r\n");
    if (p != std::string::npos && text[p] == '{')
        return parse_json(text);
    return parse(text);
}

ExperimentConfig ExperimentConfig::load(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(ErrorCode::ConfigError, "cannot read config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_any(ss.str());
}

std::string ExperimentConfig::to_json() const
{
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& k : config_schema()) {
        auto it = values_.find({k.section, k.key});
        if (it == values_.end())
            continue;
        std::visit([&](const auto& v) { j[k.section][k.key] = v; }, it->second);
    }
    return j.dump(2);
}

std::string ExperimentConfig::format() const
{
    std::string out, section;
    for (const auto& k : config_schema()) {
        auto it = values_.find({k.section, k.key});
        if (it == values_.end())
            continue;
        if (k.section != section) {
            if (!out.empty())
                out += "\n";
            out += "[" + k.section + "]\n";
            section = k.section;
        }
        out += k.key + " = " + format_value(it->second) + "\n";
    }
    return out;
}

std::string ExperimentConfig::hash() const
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(format())));
    return buf;
}

bool ExperimentConfig::has(const std::string& section, const std::string& key) const
{
    return values_.count({section, key}) > 0;
}

void ExperimentConfig::set(const std::string& section, const std::string& key, const ConfigValue& value)
{
    const ConfigKey* k = find_key(section, key);
    if (!k)
        fail(ErrorCode::ConfigError, "unknown key " + section + "." + key);
    if (!type_matches(k->type, value))
        fail(ErrorCode::ConfigError, section + "." + key + ": wrong value type");
    values_[{section, key}] = value;
}

void ExperimentConfig::set_text(const std::string& section, const std::string& key, const std::string& text)
{
    const ConfigKey* k = find_key(section, key);
    if (!k)
        fail(ErrorCode::ConfigError, "unknown key " + section + "." + key);
    values_[{section, key}] = parse_value(*k, text);
}

void ExperimentConfig::erase(const std::string& section, const std::string& key)
{
    values_.erase({section, key});
}

std::int64_t ExperimentConfig::get_int(const std::string& s, const std::string& k, std::int64_t fb) const
{
    auto it = values_.find({s, k});
    return it == values_.end() ? fb : std::get<std::int64_t>(it->second);
}

double ExperimentConfig::get_real(const std::string& s, const std::string& k, double fb) const
{
    auto it = values_.find({s, k});
    return it == values_.end() ? fb : std::get<double>(it->second);
}

bool ExperimentConfig::get_bool(const std::string& s, const std::string& k, bool fb) const
{
    auto it = values_.find({s, k});
    return it == values_.end() ? fb : std::get<bool>(it->second);
}

std::string ExperimentConfig::get_text(const std::string& s, const std::string& k, const std::string& fb) const
{
    auto it = values_.find({s, k});
    return it == values_.end() ? fb : std::get<std::string>(it->second);
}

std::vector<double> ExperimentConfig::get_list(const std::string& s, const std::string& k,
                                               const std::vector<double>& fb) const
{
    auto it = values_.find({s, k});
    return it == values_.end() ? fb : std::get<std::vector<double>>(it->second);
}

void ExperimentConfig::merge(const ExperimentConfig& other)
{
    for (const auto& [k, v] : other.values_)
        values_[k] = v;
}

Environment build_environment(const ExperimentConfig& cfg)
{
    const std::string kind = cfg.get_text("environment", "kind", "periodic");
    const int dim = int(cfg.get_int("environment", "dim", 1));
    auto series = [&](const char* key, const std::string& fb) {
        try {
            return TrigSeries::parse(cfg.get_text("environment", key, fb));
        } catch (const Error& e) {
            fail(ErrorCode::ConfigError, std::string("environment.") + key + ": " + e.what());
        }
    };
    if (kind == "constant") {
        Vec zero{0.0, 0.0};
        double a11 = series("a11", "1").value(zero);
        double a12 = dim == 2 ? series("a12", "0").value(zero) : 0.0;
        double a22 = dim == 2 ? series("a22", "1").value(zero) : 0.0;
        return Environment::constant(dim, Mat2{a11, a12, a12, a22});
    }
    if (kind == "periodic") {
        PeriodicParams p;
        p.reciprocal = cfg.get_bool("environment", "reciprocal", false);
        p.a11 = series("a11", "2 + 1*sin(1)");
        if (dim == 2) {
            p.a22 = series("a22", "2 + 1*sin(0,1)");
            p.a12 = series("a12", "");
        }
        return Environment::periodic(dim, p);
    }
    if (kind == "random_bumps") {
        BumpParams b;
        b.intensity = cfg.get_real("environment", "intensity", b.intensity);
        b.bump_radius = cfg.get_real("environment", "bump_radius", b.bump_radius);
        b.amplitude = cfg.get_real("environment", "amplitude", b.amplitude);
        b.base = cfg.get_real("environment", "base", b.base);
        b.max_per_cell = int(cfg.get_int("environment", "max_per_cell", b.max_per_cell));
        return Environment::random_bumps(dim, b, std::uint64_t(cfg.get_int("environment", "seed", 1)));
    }
    fail(ErrorCode::ConfigError, "environment.kind must be constant, periodic or random_bumps");
}

FunctionalSpec build_functional(const ExperimentConfig& cfg, const Environment& env)
{
    const std::string kind = cfg.get_text("functional", "kind", "drift");
    if (kind == "drift")
        return make_functional(env, FunctionalKind::DriftComponent);
    if (kind == "zero")
        return make_functional(env, FunctionalKind::Zero);
    fail(ErrorCode::ConfigError, "functional.kind must be drift or zero");
}

} // namespace driftlab
