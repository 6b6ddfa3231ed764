#pragma once

#include "bayesmech/dynamics.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>

namespace bayesmech {

enum class EnsembleFormat { csv, binary };

/// CSV rows: traj_id,step,t,x_0..x_{d-1}.
void write_ensemble_csv(std::ostream& out, const TrajectoryEnsemble& ensemble);

/// Sidecar metadata: fingerprint, dt, seed, shape, recorded steps, format.
nlohmann::json ensemble_sidecar(const TrajectoryEnsemble& ensemble, EnsembleFormat format);

/// Writes `<stem>.csv` or `<stem>.bin` plus `<stem>.json`.
void save_ensemble(const TrajectoryEnsemble& ensemble, const std::filesystem::path& stem,
                   EnsembleFormat format);
TrajectoryEnsemble load_ensemble(const std::filesystem::path& stem);

}  // namespace bayesmech
