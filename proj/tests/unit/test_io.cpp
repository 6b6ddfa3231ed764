#include "bayesmech/csv.hpp"
#include "bayesmech/dynamics.hpp"
#include "bayesmech/ensemble_io.hpp"
#include "bayesmech/hash.hpp"

#include "unit/models.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace bayesmech;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("bayesmech_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

TrajectoryEnsemble small_ensemble() {
  const auto diff = build_diffusion(models::example_model(), models::solenoidal_q(), Matrix::Identity(3, 3));
  return integrate(diff, sample(models::example_model(), 3, 1), 0.01, 20, 7, {.record_stride = 5});
}

}  // namespace

TEST(Csv, NumbersRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) {
    EXPECT_EQ(std::stod(csv::number(v)), v);
  }
  EXPECT_EQ(csv::number(0.5), "0.5");
}

TEST(Hash, KnownDigest) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  Sha256 h;
  h.update("a");
  h.update("bc");
  EXPECT_EQ(h.hex_digest(), sha256_hex("abc"));
}

TEST(EnsembleIo, CsvLayout) {
  const auto ens = small_ensemble();
  std::ostringstream os;
  write_ensemble_csv(os, ens);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "traj_id,step,t,x_0,x_1,x_2");
  std::getline(is, line);
  EXPECT_EQ(line.substr(0, 6), "0,0,0,");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows + 1, ens.n_traj * ens.n_records);
}

TEST(EnsembleIo, RoundTripBothFormats) {
  const auto dir = scratch_dir("ensemble");
  const auto ens = small_ensemble();
  for (auto fmt : {EnsembleFormat::csv, EnsembleFormat::binary}) {
    const auto stem = dir / (fmt == EnsembleFormat::csv ? "e_csv" : "e_bin");
    save_ensemble(ens, stem, fmt);
    const auto back = load_ensemble(stem);
    EXPECT_EQ(back.data, ens.data);
    EXPECT_EQ(back.steps, ens.steps);
    EXPECT_EQ(back.dt, ens.dt);
    EXPECT_EQ(back.seed, ens.seed);
    EXPECT_EQ(back.model_fingerprint, ens.model_fingerprint);
  }
  std::ifstream in(dir / "e_csv.json");
  const auto meta = nlohmann::json::parse(in);
  EXPECT_EQ(meta.at("model_fingerprint"), ens.model_fingerprint);
  EXPECT_EQ(meta.at("seed"), 7);
}

TEST(Fingerprint, ChangesWithModel) {
  const auto m = models::example_model();
  const auto a = build_diffusion(m, models::solenoidal_q(), Matrix::Identity(3, 3));
  const auto b = build_diffusion(m, Matrix::Zero(3, 3), Matrix::Identity(3, 3));
  const auto c = build_diffusion(m, models::solenoidal_q(), Matrix::Identity(3, 3));
  EXPECT_NE(a.fingerprint(), b.fingerprint());
  EXPECT_EQ(a.fingerprint(), c.fingerprint());
  EXPECT_EQ(a.fingerprint().size(), 64u);
}
