#pragma once

#include <string>

#include "driftlab/config.hpp"
#include "driftlab/experiments.hpp"

namespace driftlab {

// results.json body: experiment, config hash, effective config, pass flag and one object per metric.
std::string results_json(const ExperimentConfig& cfg, const ExperimentResult& r);

// Rows for ledger.csv (no header), one per metric, stamped with `timestamp`.
std::string ledger_rows(const ExperimentConfig& cfg, const ExperimentResult& r, const std::string& timestamp);

inline constexpr const char* kLedgerHeader = "timestamp,experiment,config_hash,metric,value,se,pass\n";

// UTC time as 2026-01-31T12:00:00Z.
std::string utc_timestamp();

/*!
 * Writes everything for one run under cfg.output_dir():
 *   results.json        overwritten
 *   ledger.csv          appended; header written when the file is new
 *   <artifact>.csv      overwritten
 *   plots/<name>.script gnuplot, run from the output directory
 */
void write_run(const ExperimentConfig& cfg, const ExperimentResult& r);

} // namespace driftlab
