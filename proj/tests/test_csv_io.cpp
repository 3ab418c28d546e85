#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dirm/csv_io.hpp"
#include "dirm/error.hpp"
#include "dirm/inference.hpp"
#include "dirm/simgen.hpp"

using namespace dirm;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dirm_csv_io_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("dataset round-trip preserves the checksum and bytes") {
  SimConfig sim = SimConfig::scaled(3, 5, 2, 3);
  sim.seed = 2;
  const auto [data, truth] = simulate_dataset(sim);
  const fs::path dir = scratch("roundtrip");
  io::write_dataset_dir(dir / "a", data);
  const Dataset back = io::read_dataset_dir(dir / "a");
  CHECK(back.checksum() == data.checksum());
  CHECK(back.difficulty(3) == data.difficulty(3));  // 17 significant digits
  io::write_dataset_dir(dir / "b", back);
  for (const char* f : {io::kResponsesFile, io::kLapsesFile, io::kGroupsFile}) {
    CHECK(read_file(dir / "a" / f) == read_file(dir / "b" / f));
  }
}

TEST_CASE("truth rows survive a write and read") {
  SimConfig sim = SimConfig::scaled(2, 4, 2, 2);
  const auto [data, truth] = simulate_dataset(sim);
  const fs::path dir = scratch("truth");
  io::write_truth(dir / "truth.csv", data, truth);
  const auto rows = io::read_truth(dir / "truth.csv");
  const auto expected = truth_rows(data, truth);
  REQUIRE(rows.size() == expected.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    CHECK(rows[k].key == expected[k].key);
    CHECK(rows[k].value == expected[k].value);
  }
  const std::string text = read_file(dir / "truth.csv");
  CHECK(text.find("item_deviation,1,1,1,1,") != std::string::npos);
}

TEST_CASE("traces reproduce the chain summaries exactly") {
  SimConfig sim = SimConfig::scaled(2, 4, 2, 3);
  const auto [data, truth] = simulate_dataset(sim);
  SamplerConfig cfg;
  cfg.n_iterations = 60;
  cfg.burn_in = 20;
  cfg.thin = 1;
  cfg.threads = 1;
  const ChainOutput chain = fit(data, sim.model_constants(), cfg);
  const fs::path dir = scratch("traces");
  io::write_traces(dir / "traces.csv", chain);
  io::write_summaries(dir / "summary.csv", chain.summaries);
  const io::Trace trace = io::read_traces(dir / "traces.csv");
  REQUIRE(trace.keys == chain.keys);
  for (std::size_t k = 0; k < trace.keys.size(); ++k) {
    const SummaryRow r = summarize_series(trace.keys[k], trace.draws[k]);
    CHECK(r.q025 == chain.summaries[k].q025);
    CHECK(r.median == chain.summaries[k].median);
    CHECK(r.q975 == chain.summaries[k].q975);
  }
  const auto rows = io::read_summaries(dir / "summary.csv");
  REQUIRE(rows.size() == chain.summaries.size());
  CHECK(rows.back().key.quantity == Quantity::drift_sd);
  CHECK_FALSE(rows.back().key.individual.has_value());
  CHECK(rows.back().median == chain.summaries.back().median);
}

TEST_CASE("tolerant parsing: column order, CRLF, blank lines") {
  const fs::path dir = scratch("tolerant");
  write_file(dir / "responses.csv",
             "day,individual,item,test,difficulty,response\r\n"
             "1,1,1,1,0.5,1\r\n1,1,2,1,0.5,0\r\n\r\n2,1,1,1,-0.25,1\r\n");
  write_file(dir / "lapses.csv", "individual,day,lapse_days\n1,1,3\n1,2,4.5\n");
  write_file(dir / "groups.csv", "individual,group\n1,1\n");
  const Dataset d = io::read_dataset_dir(dir);
  CHECK(d.num_items_total() == 3);
  CHECK(d.difficulty(1) == -0.25);
  CHECK(d.lapse(1) == 4.5);
}

TEST_CASE("malformed inputs") {
  const fs::path dir = scratch("bad");
  write_file(dir / "lapses.csv", "individual,day,lapse_days\n1,1,3\n");
  write_file(dir / "groups.csv", "individual,group\n1,1\n");
  SUBCASE("missing column") {
    write_file(dir / "responses.csv", "individual,day,test,item,response\n1,1,1,1,1\n");
    CHECK_THROWS_AS(io::read_dataset_dir(dir), ConfigError);
  }
  SUBCASE("bad number") {
    write_file(dir / "responses.csv", "individual,day,test,item,response,difficulty\n1,1,1,1,1,abc\n");
    CHECK_THROWS_AS(io::read_dataset_dir(dir), ConfigError);
  }
  SUBCASE("zero index") {
    write_file(dir / "responses.csv", "individual,day,test,item,response,difficulty\n0,1,1,1,1,0\n");
    CHECK_THROWS_AS(io::read_dataset_dir(dir), ConfigError);
  }
  SUBCASE("response outside 0/1") {
    write_file(dir / "responses.csv", "individual,day,test,item,response,difficulty\n1,1,1,1,3,0\n");
    CHECK_THROWS_AS(io::read_dataset_dir(dir), ConfigError);
  }
  SUBCASE("ragged row") {
    write_file(dir / "responses.csv", "individual,day,test,item,response,difficulty\n1,1,1,1,1\n");
    CHECK_THROWS_AS(io::read_dataset_dir(dir), ConfigError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(io::read_dataset_dir(dir / "nowhere"), IoError);
  }
}

TEST_CASE("real formatting uses 17 significant digits") {
  CHECK(io::format_real(0.1) == "0.10000000000000001");
  CHECK(io::format_real(2.0) == "2");
  CHECK(std::stod(io::format_real(1.0 / 3.0)) == 1.0 / 3.0);
}
