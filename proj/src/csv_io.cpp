#include "dirm/csv_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "dirm/error.hpp"

namespace dirm::io {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

// Reads a headered CSV and hands each row to `row` as named columns.
class CsvReader {
 public:
  CsvReader(const fs::path& path, std::vector<std::string> required) : path_(path), in_(path) {
    if (!in_) throw IoError("cannot open " + path.string());
    std::string header;
    if (!std::getline(in_, header)) throw IoError(path.string() + ": empty file, header required");
    const auto names = split(header);
    for (const auto& name : required) {
      auto it = std::find(names.begin(), names.end(), name);
      if (it == names.end()) {
        throw ConfigError(path.string() + ": missing column '" + name + "'");
      }
      columns_[name] = static_cast<std::size_t>(it - names.begin());
    }
    width_ = names.size();
  }

  bool next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (trim(line).empty()) continue;
      fields_ = split(line);
      if (fields_.size() != width_) fail("expected " + std::to_string(width_) + " fields");
      return true;
    }
    return false;
  }

  const std::string& text(const std::string& column) const { return fields_[columns_.at(column)]; }

  double real(const std::string& column) const {
    const std::string& s = text(column);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) fail("bad number '" + s + "' in " + column);
    return v;
  }

  std::size_t index(const std::string& column) const {
    const std::size_t v = count(column);
    if (v == 0) fail(column + " must be >= 1");
    return v - 1;
  }

  std::size_t count(const std::string& column) const {
    const std::string& s = text(column);
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) fail("bad integer '" + s + "' in " + column);
    return v;
  }

  std::optional<std::size_t> optional_count(const std::string& column) const {
    if (text(column).empty()) return std::nullopt;
    return count(column);
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError(path_.string() + ":" + std::to_string(line_no_ + 1) + ": " + what);
  }

 private:
  fs::path path_;
  std::ifstream in_;
  std::map<std::string, std::size_t> columns_;
  std::size_t width_ = 0;
  std::size_t line_no_ = 0;
  std::vector<std::string> fields_;
};

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::string opt_index(const std::optional<std::size_t>& v) {
  return v ? std::to_string(*v + 1) : std::string{};
}

std::string opt_day(const std::optional<std::size_t>& v) {
  return v ? std::to_string(*v) : std::string{};
}

SeriesKey read_key(const CsvReader& r) {
  SeriesKey key;
  key.quantity = quantity_from_name(r.text("quantity"));
  if (auto i = r.optional_count("individual")) {
    if (*i == 0) r.fail("individual must be >= 1");
    key.individual = *i - 1;
  }
  key.day = r.optional_count("day");
  return key;
}

}  // namespace

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Dataset read_dataset(const fs::path& responses, const fs::path& lapses, const fs::path& groups) {
  std::vector<ResponseRecord> rs;
  {
    CsvReader r(responses, {"individual", "day", "test", "item", "response", "difficulty"});
    while (r.next()) {
      const std::size_t x = r.count("response");
      if (x > 1) r.fail("response must be 0 or 1");
      rs.push_back({r.index("individual"), r.index("day"), r.index("test"), r.index("item"),
                    static_cast<int>(x), r.real("difficulty")});
    }
  }
  std::vector<LapseRecord> ls;
  {
    CsvReader r(lapses, {"individual", "day", "lapse_days"});
    while (r.next()) ls.push_back({r.index("individual"), r.index("day"), r.real("lapse_days")});
  }
  std::vector<GroupRecord> gs;
  {
    CsvReader r(groups, {"individual", "group"});
    while (r.next()) gs.push_back({r.index("individual"), r.index("group")});
  }
  return Dataset::from_records(rs, ls, gs);
}

Dataset read_dataset_dir(const fs::path& dir) {
  return read_dataset(dir / kResponsesFile, dir / kLapsesFile, dir / kGroupsFile);
}

void write_dataset_dir(const fs::path& dir, const Dataset& data) {
  fs::create_directories(dir);
  {
    auto out = open_out(dir / kResponsesFile);
    out << "individual,day,test,item,response,difficulty\n";
    for (const auto& r : data.response_records()) {
      out << r.individual + 1 << ',' << r.day + 1 << ',' << r.test + 1 << ',' << r.item + 1 << ','
          << r.response << ',' << format_real(r.difficulty) << '\n';
    }
  }
  {
    auto out = open_out(dir / kLapsesFile);
    out << "individual,day,lapse_days\n";
    for (const auto& l : data.lapse_records()) {
      out << l.individual + 1 << ',' << l.day + 1 << ',' << format_real(l.lapse_days) << '\n';
    }
  }
  {
    auto out = open_out(dir / kGroupsFile);
    out << "individual,group\n";
    for (const auto& g : data.group_records()) out << g.individual + 1 << ',' << g.group + 1 << '\n';
  }
}

void write_truth(const fs::path& path, const Dataset& data, const SimTruth& truth) {
  auto out = open_out(path);
  out << "quantity,individual,day,test,item,value\n";
  for (const auto& row : truth_rows(data, truth)) {
    out << quantity_name(row.key.quantity) << ',' << opt_index(row.key.individual) << ','
        << opt_day(row.key.day) << ",,," << format_real(row.value) << '\n';
  }
  for (std::size_t i = 0; i < data.num_individuals(); ++i) {
    const IndexRange dr = data.days(i);
    for (std::size_t d = dr.begin; d < dr.end; ++d) {
      const std::size_t t = d - dr.begin + 1;
      out << "day_effect," << i + 1 << ',' << t << ",,," << format_real(truth.day_effect[d]) << '\n';
      const IndexRange tr = data.tests(d);
      for (std::size_t s = tr.begin; s < tr.end; ++s) {
        out << "test_effect," << i + 1 << ',' << t << ',' << s - tr.begin + 1 << ",,"
            << format_real(truth.test_effect[s]) << '\n';
        const IndexRange ir = data.items(s);
        for (std::size_t l = ir.begin; l < ir.end; ++l) {
          out << "item_deviation," << i + 1 << ',' << t << ',' << s - tr.begin + 1 << ','
              << l - ir.begin + 1 << ',' << format_real(truth.item_deviation[l]) << '\n';
        }
      }
    }
  }
}

std::vector<TruthRow> read_truth(const fs::path& path) {
  CsvReader r(path, {"quantity", "individual", "day", "value"});
  std::vector<TruthRow> rows;
  while (r.next()) {
    const std::string& q = r.text("quantity");
    if (q == "day_effect" || q == "test_effect" || q == "item_deviation") continue;
    rows.push_back({read_key(r), r.real("value")});
  }
  return rows;
}

void write_traces(const fs::path& path, const ChainOutput& chain) {
  auto out = open_out(path);
  out << "quantity,individual,day,iteration,value\n";
  for (std::size_t k = 0; k < chain.keys.size(); ++k) {
    const SeriesKey& key = chain.keys[k];
    const std::string prefix = std::string(quantity_name(key.quantity)) + ',' +
                               opt_index(key.individual) + ',' + opt_day(key.day) + ',';
    const auto series = chain.series(k);
    for (std::size_t d = 0; d < series.size(); ++d) {
      out << prefix << chain.iterations[d] << ',' << format_real(series[d]) << '\n';
    }
  }
}

Trace read_traces(const fs::path& path) {
  CsvReader r(path, {"quantity", "individual", "day", "iteration", "value"});
  Trace trace;
  std::map<SeriesKey, std::size_t> slot;
  while (r.next()) {
    const SeriesKey key = read_key(r);
    auto [it, inserted] = slot.emplace(key, trace.keys.size());
    if (inserted) {
      trace.keys.push_back(key);
      trace.draws.emplace_back();
    }
    trace.draws[it->second].push_back(r.real("value"));
  }
  return trace;
}

void write_summaries(const fs::path& path, std::span<const SummaryRow> rows) {
  auto out = open_out(path);
  out << "quantity,individual,day,q025,median,q975\n";
  for (const auto& row : rows) {
    out << quantity_name(row.key.quantity) << ',' << opt_index(row.key.individual) << ','
        << opt_day(row.key.day) << ',' << format_real(row.q025) << ',' << format_real(row.median)
        << ',' << format_real(row.q975) << '\n';
  }
}

std::vector<SummaryRow> read_summaries(const fs::path& path) {
  CsvReader r(path, {"quantity", "individual", "day", "q025", "median", "q975"});
  std::vector<SummaryRow> rows;
  while (r.next()) rows.push_back({read_key(r), r.real("q025"), r.real("median"), r.real("q975")});
  return rows;
}

void write_online(const fs::path& path, const OnlineResult& result) {
  auto out = open_out(path);
  out << "individual,day,q025,median,q975,relaxed\n";
  for (std::size_t i = 0; i < result.trajectories.size(); ++i) {
    for (const auto& e : result.trajectories[i]) {
      out << i + 1 << ',' << e.day << ',' << format_real(e.q025) << ',' << format_real(e.median)
          << ',' << format_real(e.q975) << ',' << (e.relaxed ? 1 : 0) << '\n';
    }
  }
}

void write_raw_scores(const fs::path& path,
                      const std::vector<std::vector<RawScoreEstimate>>& scores) {
  auto out = open_out(path);
  out << "individual,day,theta,saturated\n";
  for (std::size_t i = 0; i < scores.size(); ++i) {
    for (std::size_t t = 0; t < scores[i].size(); ++t) {
      out << i + 1 << ',' << t + 1 << ',' << format_real(scores[i][t].theta) << ','
          << (scores[i][t].saturated ? 1 : 0) << '\n';
    }
  }
}

void write_coverage(const fs::path& path, const CoverageReport& report) {
  auto out = open_out(path);
  out << "scope,individual,quantity,covered,fraction\n";
  for (std::size_t i = 0; i < report.theta_per_individual.size(); ++i) {
    out << "individual," << i + 1 << ",theta,," << format_real(report.theta_per_individual[i])
        << '\n';
  }
  out << "overall,,theta,," << format_real(report.theta_overall) << '\n';
  for (const auto& [key, hit] : report.parameter_hits) {
    out << "parameter," << opt_index(key.individual) << ',' << quantity_name(key.quantity) << ','
        << (hit ? 1 : 0) << ",\n";
  }
  out << "overall,,parameters,," << format_real(report.parameter_fraction) << '\n';
}

}  // namespace dirm::io
