#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dirm/inference.hpp"
#include "dirm/model.hpp"
#include "dirm/simgen.hpp"

namespace dirm::io {

// Every file carries a header row; indices are 1-based on disk and 0-based
// in memory. Reals are written with 17 significant digits.

inline constexpr const char* kResponsesFile = "responses.csv";
inline constexpr const char* kLapsesFile = "lapses.csv";
inline constexpr const char* kGroupsFile = "groups.csv";
inline constexpr const char* kTruthFile = "truth.csv";

std::string format_real(double v);

/// responses: individual,day,test,item,response,difficulty
/// lapses:    individual,day,lapse_days
/// groups:    individual,group
Dataset read_dataset(const std::filesystem::path& responses, const std::filesystem::path& lapses,
                     const std::filesystem::path& groups);
Dataset read_dataset_dir(const std::filesystem::path& dir);
void write_dataset_dir(const std::filesystem::path& dir, const Dataset& data);

/// quantity,individual,day,test,item,value. Fit quantities (theta, growth,
/// *_sd) plus the realized day_effect, test_effect and item_deviation.
void write_truth(const std::filesystem::path& path, const Dataset& data, const SimTruth& truth);
/// Rows whose quantity a fit also records; effect rows are skipped.
std::vector<TruthRow> read_truth(const std::filesystem::path& path);

/// quantity,individual,day,iteration,value
void write_traces(const std::filesystem::path& path, const ChainOutput& chain);

struct Trace {
  std::vector<SeriesKey> keys;
  std::vector<std::vector<double>> draws;  // per key
};
Trace read_traces(const std::filesystem::path& path);

/// quantity,individual,day,q025,median,q975
void write_summaries(const std::filesystem::path& path, std::span<const SummaryRow> rows);
std::vector<SummaryRow> read_summaries(const std::filesystem::path& path);

/// individual,day,q025,median,q975,relaxed
void write_online(const std::filesystem::path& path, const OnlineResult& result);

/// individual,day,theta,saturated
void write_raw_scores(const std::filesystem::path& path,
                      const std::vector<std::vector<RawScoreEstimate>>& scores);

/// scope,individual,quantity,covered,total,fraction
void write_coverage(const std::filesystem::path& path, const CoverageReport& report);

}  // namespace dirm::io
