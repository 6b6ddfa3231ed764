#include "bayesmech/ensemble_io.hpp"

#include "bayesmech/csv.hpp"
#include "bayesmech/error.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

namespace bayesmech {

namespace {

constexpr char kBinaryMagic[8] = {'B', 'M', 'E', 'N', 'S', '1', '\0', '\0'};

std::filesystem::path with_ext(const std::filesystem::path& stem, const char* ext) {
  auto p = stem;
  p += ext;
  return p;
}

}  // namespace

void write_ensemble_csv(std::ostream& out, const TrajectoryEnsemble& ens) {
  out << "traj_id,step,t";
  for (Index j = 0; j < ens.dims; ++j) out << ",x_" << j;
  out << '\n';
  for (Index i = 0; i < ens.n_traj; ++i) {
    for (Index k = 0; k < ens.n_records; ++k) {
      out << i << ',' << ens.steps[static_cast<std::size_t>(k)] << ',' << csv::number(ens.time(k));
      const auto x = ens.state(i, k);
      for (Index j = 0; j < ens.dims; ++j) csv::field(out, x(j));
      out << '\n';
    }
  }
}

nlohmann::json ensemble_sidecar(const TrajectoryEnsemble& ens, EnsembleFormat format) {
  return {{"model_fingerprint", ens.model_fingerprint},
          {"dt", ens.dt},
          {"seed", ens.seed},
          {"n_traj", ens.n_traj},
          {"n_records", ens.n_records},
          {"dims", ens.dims},
          {"steps", ens.steps},
          {"format", format == EnsembleFormat::csv ? "csv" : "binary"},
          {"warnings", ens.warnings}};
}

void save_ensemble(const TrajectoryEnsemble& ens, const std::filesystem::path& stem,
                   EnsembleFormat format) {
  if (format == EnsembleFormat::csv) {
    std::ofstream out(with_ext(stem, ".csv"));
    write_ensemble_csv(out, ens);
    if (!out) fail(ErrorCode::io_failure, "cannot write " + with_ext(stem, ".csv").string());
  } else {
    std::ofstream out(with_ext(stem, ".bin"), std::ios::binary);
    out.write(kBinaryMagic, sizeof kBinaryMagic);
    out.write(reinterpret_cast<const char*>(ens.data.data()),
              static_cast<std::streamsize>(ens.data.size() * sizeof(double)));
    if (!out) fail(ErrorCode::io_failure, "cannot write " + with_ext(stem, ".bin").string());
  }
  std::ofstream side(with_ext(stem, ".json"));
  side << ensemble_sidecar(ens, format).dump(2) << '\n';
  if (!side) fail(ErrorCode::io_failure, "cannot write " + with_ext(stem, ".json").string());
}

TrajectoryEnsemble load_ensemble(const std::filesystem::path& stem) {
  std::ifstream side_in(with_ext(stem, ".json"));
  if (!side_in) fail(ErrorCode::io_failure, "missing sidecar " + with_ext(stem, ".json").string());
  const auto side = nlohmann::json::parse(side_in);

  TrajectoryEnsemble ens;
  ens.model_fingerprint = side.at("model_fingerprint").get<std::string>();
  ens.dt = side.at("dt").get<double>();
  ens.seed = side.at("seed").get<std::uint64_t>();
  ens.n_traj = side.at("n_traj").get<Index>();
  ens.n_records = side.at("n_records").get<Index>();
  ens.dims = side.at("dims").get<Index>();
  ens.steps = side.at("steps").get<std::vector<Index>>();
  ens.warnings = side.value("warnings", std::vector<std::string>{});
  const auto total = static_cast<std::size_t>(ens.n_traj * ens.n_records * ens.dims);
  ens.data.assign(total, 0.0);

  if (side.at("format").get<std::string>() == "binary") {
    std::ifstream in(with_ext(stem, ".bin"), std::ios::binary);
    char magic[sizeof kBinaryMagic];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kBinaryMagic, sizeof magic) != 0) {
      fail(ErrorCode::io_failure, "not an ensemble binary file");
    }
    in.read(reinterpret_cast<char*>(ens.data.data()),
            static_cast<std::streamsize>(total * sizeof(double)));
    if (!in) fail(ErrorCode::io_failure, "truncated ensemble binary file");
    return ens;
  }

  std::ifstream in(with_ext(stem, ".csv"));
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::io_failure, "empty ensemble CSV");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    const Index traj = std::stoll(cell);
    std::getline(ss, cell, ',');
    std::getline(ss, cell, ',');
    const Index record = static_cast<Index>(rows % static_cast<std::size_t>(ens.n_records));
    auto x = ens.state(traj, record);
    for (Index j = 0; j < ens.dims; ++j) {
      if (!std::getline(ss, cell, ',')) fail(ErrorCode::io_failure, "short ensemble CSV row");
      x(j) = std::stod(cell);
    }
    ++rows;
  }
  if (rows != static_cast<std::size_t>(ens.n_traj * ens.n_records)) {
    fail(ErrorCode::io_failure, "ensemble CSV row count does not match its sidecar");
  }
  return ens;
}

}  // namespace bayesmech
