#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "cavspdc/config.hpp"
#include "cavspdc/io.hpp"
#include "cavspdc/pipeline.hpp"

namespace fs = std::filesystem;
using namespace cavspdc;

namespace {

const fs::path small_device = fs::path(CAVSPDC_SOURCE_DIR) / "tests" / "data" / "small_device.json";

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "cavspdc_pipeline_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

int cli(const std::string& args) {
  const std::string cmd = std::string("\"") + CAVSPDC_CLI + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_doc(const fs::path& dir, const io::Json& doc) {
  const auto p = dir / "device.json";
  std::ofstream out(p);
  out << doc.dump(2);
  return p;
}

}  // namespace

TEST(Pipeline, WritesEveryArtifactDeterministically) {
  const auto cfg = load_config(small_device);
  const auto a = scratch("det_a"), b = scratch("det_b");
  const auto ra = run_pipeline(cfg, a);
  run_pipeline(cfg, b);
  for (const char* name : {artifact::spectrum, artifact::resonances, artifact::jsa, artifact::jsa_csv, artifact::report_json, artifact::report_text}) {
    ASSERT_TRUE(fs::exists(a / name)) << name;
    EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
  }
  const auto& r = ra.report;
  EXPECT_GT(r.island_count, 4u);
  EXPECT_EQ(r.island_count, r.islands.size());
  EXPECT_NEAR(r.external_to_internal, 0.052, 1e-10);
  EXPECT_TRUE(r.K.has_value());
  EXPECT_FALSE(r.phase_trusted);
  for (const auto& isl : r.islands) {
    EXPECT_GT(isl.purity, 0.5);
    EXPECT_LE(isl.purity, 1.0 + 1e-12);
  }
}

TEST(Pipeline, ThreadCountDoesNotChangeTheGrid) {
  auto doc = io::read_json(small_device);
  doc["grids"]["threads"] = 1;
  const auto one = jsa_stage(parse_config(doc), 128, Provenance::cavity_j);
  doc["grids"]["threads"] = 3;
  const auto three = jsa_stage(parse_config(doc), 128, Provenance::cavity_j);
  EXPECT_EQ(one.values, three.values);
}

TEST(Pipeline, InternalGridIsExternalOverKappa) {
  const auto cfg = load_config(small_device);
  const auto ext = jsa_stage(cfg, 96, Provenance::cavity_j);
  const auto in = jsa_stage(cfg, 96, Provenance::cavity_internal_j);
  const double kappa = std::sqrt(0.052);
  for (std::size_t k = 0; k < ext.values.size(); k += 37) {
    if (std::abs(in.values[k]) > 0.0) EXPECT_NEAR(std::abs(ext.values[k] / in.values[k]), kappa, 1e-12);
  }
}

TEST(Pipeline, ZeroNonlinearityGivesZeroRatesAndWarning) {
  auto doc = io::read_json(small_device);
  doc["nonlinear"]["chi2_pm_per_V"] = 0.0;
  const auto cfg = parse_config(doc);
  const auto r = run_pipeline(cfg, scratch("zero")).report;
  EXPECT_EQ(r.total_pgr_internal, 0.0);
  EXPECT_EQ(r.total_pgr_external, 0.0);
  EXPECT_FALSE(r.K.has_value());
  bool zero_warning = false;
  for (const auto& w : r.warnings) zero_warning |= w.rfind("ZeroGrid", 0) == 0;
  EXPECT_TRUE(zero_warning);
}

TEST(Pipeline, StageNameInErrors) {
  const auto cfg = load_config(small_device);
  io::Spectrum flat;
  flat.omega = {1.0, 2.0};
  flat.power = {1.0};
  try {
    fit_resonances(cfg, flat);
    FAIL() << "mismatched spectrum accepted";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("stage 'fit'"), std::string::npos) << e.what();
  }
}

TEST(Pipeline, SweepTableHasRequestedColumns) {
  const auto cfg = load_config(small_device);
  const auto spec = parse_sweep(io::Json{{"parameter", "couplers.signal_kappa2"}, {"values", {0.02, 0.1}}, {"outputs", {"fraction_outcoupled", "PGR_relative"}}});
  const auto rows = run_sweep(cfg, spec);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_LT(rows[0].outputs[0], rows[1].outputs[0]);
  const auto t = sweep_table(spec, rows);
  EXPECT_EQ(t.header, (std::vector<std::string>{"couplers.signal_kappa2", "fraction_outcoupled", "PGR_relative"}));
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  const std::string out = " --out \"" + dir.string() + "\"";
  EXPECT_EQ(cli("spectrum --config \"" + small_device.string() + "\"" + out), 0);
  EXPECT_EQ(cli("fit --config \"" + small_device.string() + "\"" + out), 0);
  EXPECT_TRUE(fs::exists(dir / artifact::resonances));

  // Usage and validation problems map to 2.
  EXPECT_EQ(cli("frobnicate"), 2);
  EXPECT_EQ(cli("spectrum --config /nonexistent/device.json" + out), 2);
  auto doc = io::read_json(small_device);
  doc["pump"]["energy_pJ"] = -1.0;
  EXPECT_EQ(cli("spectrum --config \"" + write_doc(dir, doc).string() + "\"" + out), 2);
  {
    std::ofstream bad(dir / "broken.json");
    bad << "{";
  }
  EXPECT_EQ(cli("spectrum --config \"" + (dir / "broken.json").string() + "\"" + out), 2);

  // Missing artifacts are an I/O failure.
  EXPECT_EQ(cli("report --out \"" + (dir / "empty").string() + "\""), 4);
}
