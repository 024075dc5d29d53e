#include "driftlab/ledger.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>

#include "json.hpp"

#include "driftlab/error.hpp"

namespace driftlab {

namespace fs = std::filesystem;

namespace {

// JSON has no NaN; absent references become null.
nlohmann::ordered_json number(double v)
{
    return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

void write_file(const fs::path& p, const std::string& content, std::ios::openmode mode = std::ios::trunc)
{
    std::ofstream out(p, std::ios::binary | std::ios::out | mode);
    if (!out)
        fail(ErrorCode::ConfigError, "cannot write " + p.string());
    out << content;
    if (!out)
        fail(ErrorCode::ConfigError, "write failed for " + p.string());
}

// CSV fields here never contain quotes, but metric names may contain commas.
std::string csv_field(const std::string& s)
{
    return s.find_first_of(",\"\n") == std::string::npos ? s : "\"" + s + "\"";
}

} // namespace

std::string results_json(const ExperimentConfig& cfg, const ExperimentResult& r)
{
    using J = nlohmann::ordered_json;
    J params = J::parse(cfg.to_json());
    J metrics = J::array();
    for (const auto& m : r.metrics) {
        metrics.push_back(J{{"name", m.name},
                            {"params", params.value("run", J::object())},
                            {"value", number(m.value)},
                            {"se", number(m.se)},
                            {"n", m.n},
                            {"seed", cfg.seed()},
                            {"runtime_s", r.runtime_s},
                            {"reference", number(m.reference)},
                            {"criterion", m.criterion},
                            {"pass", m.pass}});
    }
    J j{{"experiment", r.experiment},
        {"config_hash", cfg.hash()},
        {"seed", cfg.seed()},
        {"passed", r.passed()},
        {"runtime_s", r.runtime_s},
        {"config", params},
        {"metrics", metrics}};
    return j.dump(2) + "\n";
}

std::string ledger_rows(const ExperimentConfig& cfg, const ExperimentResult& r, const std::string& timestamp)
{
    std::ostringstream os;
    const std::string hash = cfg.hash();
    for (const auto& m : r.metrics)
        os << timestamp << ',' << r.experiment << ',' << hash << ',' << csv_field(m.name) << ','
           << format_real(m.value) << ',' << format_real(m.se) << ',' << (m.pass ? "pass" : "fail") << '\n';
    return os.str();
}

std::string utc_timestamp()
{
    std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_run(const ExperimentConfig& cfg, const ExperimentResult& r)
{
    // Appends from concurrent runs in one process go through here one at a time.
    static std::mutex ledger_mutex;
    std::lock_guard lock(ledger_mutex);

    const fs::path dir = cfg.output_dir();
    std::error_code ec;
    fs::create_directories(dir / "plots", ec);
    if (ec)
        fail(ErrorCode::ConfigError, "cannot create " + dir.string() + ": " + ec.message());

    write_file(dir / "results.json", results_json(cfg, r));
    for (const auto& a : r.files)
        write_file(dir / a.filename, a.content);

    const fs::path ledger = dir / "ledger.csv";
    bool fresh = !fs::exists(ledger) || fs::file_size(ledger) == 0;
    write_file(ledger, (fresh ? std::string(kLedgerHeader) : "") + ledger_rows(cfg, r, utc_timestamp()),
               std::ios::app);

    std::ostringstream plot;
    plot << "# gnuplot script; run from " << dir.string() << " with: gnuplot plots/" << r.experiment << ".script\n"
         << "set terminal pngcairo size 900,600\n"
         << "set output 'plots/" << r.experiment << ".png'\n"
         << "set title '" << r.experiment << "'\n"
         << r.plot_script;
    write_file(dir / "plots" / (r.experiment + ".script"), plot.str());
}

} // namespace driftlab
