#include "bayesmech/cli/config.hpp"
#include "bayesmech/cli/presets.hpp"
#include "bayesmech/cli/runner.hpp"
#include "bayesmech/hash.hpp"
#include "bayesmech/linalg.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace {

namespace fs = std::filesystem;
using namespace bayesmech;
using namespace bayesmech::cli;
using nlohmann::json;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bayesmech_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json preset_json(const std::string& name) {
  const auto text = find_preset(name);
  EXPECT_TRUE(text.has_value()) << name;
  return json::parse(*text);
}

bool has_path(const std::vector<Diagnostic>& ds, const std::string& path) {
  for (const auto& d : ds) {
    if (d.path == path) return true;
  }
  return false;
}

TEST(Presets, ShippedSetIsComplete) {
  for (const char* name : {"example-blanket", "example-syncmap", "syncmap-empirical",
                           "syncmap-violation", "solenoidal-stationarity", "descent-6d",
                           "descent-6d-conservative", "descent-3d", "active-inference",
                           "control-trace", "nonlinear-transitions", "pid-chain", "ou-chain"}) {
    EXPECT_TRUE(find_preset(name).has_value()) << name;
  }
  EXPECT_FALSE(find_preset("no-such-preset").has_value());
}

TEST(Presets, EmbeddedTextMatchesFiles) {
  for (const auto& p : presets()) {
    const fs::path file = fs::path(BAYESMECH_PRESET_DIR) / (std::string(p.name) + ".json");
    EXPECT_EQ(slurp(file), std::string(p.text)) << p.name;
  }
}

TEST(Presets, EveryPresetValidatesWithoutErrors) {
  for (const auto& p : presets()) {
    const auto ds = validate_text(std::string(p.text));
    EXPECT_FALSE(has_errors(ds)) << p.name << ": " << to_json(ds).dump();
  }
}

TEST(Presets, ParseSerializeRoundTripIsIdentity) {
  for (const auto& p : presets()) {
    const auto first = parse_config_text(std::string(p.text));
    ASSERT_TRUE(first.config) << p.name;
    const json doc = serialize(*first.config);
    EXPECT_EQ(doc, json::parse(p.text)) << p.name;
    const auto second = parse_config(doc);
    ASSERT_TRUE(second.config) << p.name;
    EXPECT_EQ(*second.config, *first.config) << p.name;
    EXPECT_EQ(validate(*second.config).size(), validate(*first.config).size()) << p.name;
  }
}

TEST(Validate, ValidConfigGivesNoDiagnostics) {
  EXPECT_TRUE(validate_text(*find_preset("example-blanket")).empty());
  EXPECT_TRUE(validate_text(*find_preset("solenoidal-stationarity")).empty());
}

TEST(Validate, UnknownKeysAreRejectedWithTheirPath) {
  json doc = preset_json("solenoidal-stationarity");
  doc["dynamics"]["friction"] = 1.0;
  doc["colour"] = "blue";
  const auto r = parse_config(doc);
  EXPECT_FALSE(r.config);
  EXPECT_TRUE(has_path(r.diagnostics, "dynamics.friction"));
  EXPECT_TRUE(has_path(r.diagnostics, "colour"));
}

TEST(Validate, MalformedTextIsReported) {
  const auto ds = validate_text("{ \"experiment\": ");
  ASSERT_FALSE(ds.empty());
  EXPECT_TRUE(has_errors(ds));
}

TEST(Validate, NonAntisymmetricQNamesTheEntryPair) {
  json doc = preset_json("solenoidal-stationarity");
  doc["dynamics"]["q"] = json::parse("[[0, 0.7, 1], [0.2, 0, 0], [-1, 0, 0]]");
  const auto ds = validate_text(doc.dump());
  ASSERT_TRUE(has_errors(ds));
  bool named = false;
  for (const auto& d : ds) {
    if (d.message.find("Q(0,1)") != std::string::npos &&
        d.message.find("Q(1,0)") != std::string::npos) {
      named = true;
    }
  }
  EXPECT_TRUE(named) << to_json(ds).dump();
}

TEST(Validate, StabilityGuardIsAWarningAtTheDriftNorm) {
  json doc = preset_json("solenoidal-stationarity");
  // ‖B‖₂ of the stationarity model, computed independently of the config layer.
  Matrix b(3, 3);
  b << 1, 1.5, 2, 0.5, 1, 0.5, -2, -0.5, 1;
  const double norm = Eigen::JacobiSVD<Matrix>(b).singularValues()(0);

  doc["run"]["dt"] = 2.05 / norm;
  auto ds = validate_text(doc.dump());
  EXPECT_FALSE(has_errors(ds));
  ASSERT_EQ(ds.size(), 1u) << to_json(ds).dump();
  EXPECT_EQ(ds[0].severity, Diagnostic::Severity::warning);

  doc["run"]["dt"] = 1.95 / norm;
  EXPECT_TRUE(validate_text(doc.dump()).empty());
}

TEST(Validate, SemanticErrorsCarryFieldPaths) {
  json doc = preset_json("example-blanket");
  doc["model"]["precision"] = json::parse("[[2, 1, 0], [1, 2, 1], [0, 1, -2]]");
  EXPECT_TRUE(has_errors(validate_text(doc.dump())));

  doc = preset_json("active-inference");
  doc["model"]["partition"]["active"] = 2;
  EXPECT_TRUE(has_path(validate_text(doc.dump()), "model.partition"));

  doc = preset_json("descent-3d");
  doc["experiment"] = "free-energy";
  EXPECT_TRUE(has_path(validate_text(doc.dump()), "experiment"));

  doc = preset_json("descent-3d");
  doc["run"].erase("clamp");
  EXPECT_TRUE(has_errors(validate_text(doc.dump())));

  doc = preset_json("descent-3d");
  doc["model"]["precision"] = json::parse("[[2, 1, 0], [1, 2, 0], [0, 0, 2]]");
  EXPECT_TRUE(has_errors(validate_text(doc.dump()))) << "descent needs a synchronisation map";
}

TEST(Run, BlanketCheckReportsTheConditionalPrecisions) {
  const auto dir = scratch("blanket");
  const auto out = run_config_text(*find_preset("example-blanket"), dir);
  ASSERT_EQ(out.exit_code, kExitOk) << out.report.dump();
  const json report = json::parse(slurp(dir / "report.json"));
  const auto eta_b = report["marginal_precision"]["eta_b"].get<Rows>();
  const Rows want{{2, 1}, {1, 1.5}};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(eta_b[i][j], want[i][j], 1e-12);
  EXPECT_TRUE(report["has_blanket"].get<bool>());
}

TEST(Run, StationarityPrintsTheDriftAndResidual) {
  const auto dir = scratch("stationarity");
  json doc = preset_json("solenoidal-stationarity");
  doc["run"]["n_traj"] = 200;
  doc["run"]["n_steps"] = 50;
  const auto out = run_config_text(doc.dump(), dir);
  ASSERT_EQ(out.exit_code, kExitOk) << out.report.dump();
  const auto drift = out.report["drift"].get<Rows>();
  const Rows want{{-1, -1.5, -2}, {-0.5, -1, -0.5}, {2, 0.5, -1}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(drift[i][j], want[i][j], 1e-12);
  EXPECT_LE(out.report["lyapunov_residual"].get<double>(), 1e-12);
  EXPECT_TRUE(fs::exists(dir / "covariance_track.csv"));
}

TEST(Run, ManifestListsEveryFileWithItsChecksum) {
  const auto dir = scratch("manifest");
  json doc = preset_json("descent-3d");
  doc["run"]["n_traj"] = 50;
  doc["run"]["n_steps"] = 100;
  doc["run"]["n_samples"] = 2000;
  doc["run"]["ensemble_format"] = "binary";
  const auto out = run_config_text(doc.dump(), dir);
  ASSERT_EQ(out.exit_code, kExitOk) << out.report.dump();
  const json m = json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(m["status"], "complete");
  EXPECT_EQ(m["seed"], 13);
  EXPECT_EQ(m["git_describe"], git_describe());
  EXPECT_EQ(m["config"], doc);
  EXPECT_FALSE(fs::exists(dir / "manifest.json.tmp"));
  std::set<std::string> listed;
  for (const auto& f : m["files"]) {
    const std::string name = f["path"];
    listed.insert(name);
    EXPECT_EQ(f["sha256"], sha256_file((dir / name).string())) << name;
    EXPECT_EQ(f["bytes"].get<std::uintmax_t>(), fs::file_size(dir / name)) << name;
  }
  for (const char* name : {"free_energy.csv", "prediction_error.csv", "sample_path.csv",
                           "per_trajectory_F.csv", "report.json", "ensemble.bin", "ensemble.json"}) {
    EXPECT_TRUE(listed.count(name)) << name;
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name != "manifest.json") {
      EXPECT_TRUE(listed.count(name)) << name;
    }
  }
}

TEST(Run, FixedSeedDescentIsByteIdentical) {
  json doc = preset_json("descent-6d");
  doc["run"]["n_traj"] = 40;
  doc["run"]["n_steps"] = 100;
  doc["run"]["n_samples"] = 1000;
  const auto a = scratch("repeat_a");
  const auto b = scratch("repeat_b");
  ASSERT_EQ(run_config_text(doc.dump(), a).exit_code, kExitOk);
  ASSERT_EQ(run_config_text(doc.dump(), b).exit_code, kExitOk);
  for (const char* name : {"free_energy.csv", "prediction_error.csv", "sample_path.csv",
                           "report.json", "manifest.json"}) {
    EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
  }
}

TEST(Run, InvalidConfigWritesAnErrorReport) {
  const auto dir = scratch("invalid");
  json doc = preset_json("solenoidal-stationarity");
  doc["dynamics"]["q"][0][1] = 0.5;
  const auto out = run_config_text(doc.dump(), dir);
  EXPECT_EQ(out.exit_code, kExitConfigInvalid);
  const json err = json::parse(slurp(dir / "error.json"));
  EXPECT_EQ(err["error"], "ConfigInvalid");
  bool has_q_path = false;
  for (const auto& d : err["diagnostics"]) {
    if (d["path"].get<std::string>().rfind("dynamics.q", 0) == 0) has_q_path = true;
  }
  EXPECT_TRUE(has_q_path) << err.dump();
  EXPECT_FALSE(fs::exists(dir / "report.json"));
}

TEST(Run, UnparseableConfigWritesAnErrorReport) {
  const auto dir = scratch("unparseable");
  const auto out = run_config_text("not json", dir);
  EXPECT_EQ(out.exit_code, kExitConfigInvalid);
  EXPECT_TRUE(fs::exists(dir / "error.json"));
}

TEST(Run, ChainAutocovarianceWritesAnalyticColumns) {
  const auto dir = scratch("chain");
  json doc = preset_json("ou-chain");
  doc["run"]["n_steps"] = 2000;
  doc["run"]["n_traj"] = 10;
  doc["run"]["n_groups"] = 10;
  const auto out = run_config_text(doc.dump(), dir);
  ASSERT_EQ(out.exit_code, kExitOk) << out.report.dump();
  const std::string csv = slurp(dir / "autocovariance.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "lag,c_0_0,se_0_0,analytic_0_0");
}

TEST(Tool, SubcommandsAndExitCodes) {
  const std::string tool = BAYESMECH_TOOL_PATH;
  const auto dir = scratch("tool");
  fs::create_directories(dir);
  const std::string listing = (dir / "list.txt").string();
  ASSERT_EQ(std::system((tool + " presets list > " + listing).c_str()), 0);
  EXPECT_NE(slurp(listing).find("pid-chain\n"), std::string::npos);

  const fs::path cfg = dir / "blanket.json";
  ASSERT_EQ(std::system((tool + " presets dump example-blanket > " + cfg.string()).c_str()), 0);
  EXPECT_EQ(slurp(cfg), *find_preset("example-blanket"));
  EXPECT_EQ(std::system((tool + " validate " + cfg.string() + " > /dev/null").c_str()), 0);
  const fs::path run_dir = dir / "run";
  EXPECT_EQ(std::system((tool + " run " + cfg.string() + " --output-dir " + run_dir.string() +
                         " > /dev/null")
                            .c_str()),
            0);
  EXPECT_TRUE(fs::exists(run_dir / "manifest.json"));

  std::ofstream(dir / "bad.json") << "{\"schema_version\": 1}";
  const int rc = std::system((tool + " validate " + (dir / "bad.json").string() + " 2> /dev/null").c_str());
  EXPECT_EQ(WEXITSTATUS(rc), kExitConfigInvalid);
}

}  // namespace
