#include "bayesmech/control.hpp"

#include "bayesmech/csv.hpp"
#include "bayesmech/error.hpp"

#include <cmath>
#include <ostream>

namespace bayesmech {

ControlModel split_blanket(const PrecisionModel& model, Index dims_sensory, Index dims_active) {
  if (dims_sensory < 1 || dims_active < 1 ||
      dims_sensory + dims_active != model.partition().dims_blanket()) {
    fail(ErrorCode::bad_split, "sensory + active dimensions must equal the blanket dimension");
  }
  ControlModel out(model.with_split(dims_sensory, dims_active));
  const Block bm[] = {Block::blanket, Block::internal};
  out.k_matrix_ = marginal_precision(out.model_, bm);
  out.active_gain_ = conditional(out.model_, Block::active, Block::sensory).mean_map;
  return out;
}

Vector expected_active(const ControlModel& control, const Vector& sensory) {
  if (sensory.size() != control.active_gain().cols()) {
    fail(ErrorCode::dimension_mismatch, "sensory state has the wrong dimension");
  }
  return control.active_gain() * sensory;
}

double control_cost(const ControlModel& control, const Vector& sensory, const Vector& active,
                    const Vector& internal) {
  const auto& part = control.model().partition();
  if (sensory.size() != part.size(Block::sensory) || active.size() != part.size(Block::active) ||
      internal.size() != part.dims_internal()) {
    fail(ErrorCode::dimension_mismatch, "(s, a, mu) do not match the partition");
  }
  Vector z(sensory.size() + active.size() + internal.size());
  z << sensory, active, internal;
  return z.dot(control.k_matrix() * z);
}

ControlOptimum argmin_control(const ControlModel& control, const Vector& sensory) {
  const auto& part = control.model().partition();
  const Index ns = part.size(Block::sensory);
  if (sensory.size() != ns) {
    fail(ErrorCode::dimension_mismatch, "sensory state has the wrong dimension");
  }
  const Index na = part.size(Block::active);
  const Index nm = part.dims_internal();
  const Index ny = na + nm;
  const Matrix& k = control.k_matrix();
  // Stationarity of the quadratic in y = (a, μ): K_yy y = −K_ys s.
  const Vector y = k.block(ns, ns, ny, ny).llt().solve(-k.block(ns, 0, ny, ns) * sensory);
  ControlOptimum out{y.head(na), y.tail(nm)};

  const Vector a_ref = expected_active(control, sensory);
  const Vector mu_ref =
      conditional(control.model(), Block::internal, Block::sensory).mean_map * sensory;
  const double scale = 1.0 + a_ref.norm() + mu_ref.norm();
  if ((out.active - a_ref).norm() > 1e-8 * scale || (out.internal - mu_ref).norm() > 1e-8 * scale) {
    fail(ErrorCode::internal_consistency, "control minimiser disagrees with conditional means");
  }
  return out;
}

Index IntegratorChain::dims() const {
  Index d = 0;
  for (const auto& l : levels) d += l.self_coupling.rows();
  return d;
}

Index IntegratorChain::level_offset(Index level) const {
  Index off = 0;
  for (Index i = 0; i < level; ++i) off += levels[static_cast<std::size_t>(i)].self_coupling.rows();
  return off;
}

Matrix IntegratorChain::stacked_drift() const {
  const Index d = dims();
  Matrix b = Matrix::Zero(d, d);
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const auto& l = levels[i];
    const Index off = level_offset(static_cast<Index>(i));
    const Index n = l.self_coupling.rows();
    b.block(off, off, n, n) = l.self_coupling;
    if (i + 1 < levels.size()) {
      b.block(off, off + n, n, l.next_coupling.cols()) = l.next_coupling;
    }
  }
  return b;
}

Matrix IntegratorChain::stacked_noise() const {
  Index m = 0;
  for (const auto& l : levels) m += l.noise.cols();
  Matrix s = Matrix::Zero(dims(), m);
  Index col = 0;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const auto& l = levels[i];
    s.block(level_offset(static_cast<Index>(i)), col, l.noise.rows(), l.noise.cols()) = l.noise;
    col += l.noise.cols();
  }
  return s;
}

Matrix IntegratorChain::stacked_output() const {
  Matrix f = Matrix::Zero(output_map.rows(), dims());
  f.leftCols(output_map.cols()) = output_map;
  return f;
}

ChainSystem build_chain(std::vector<ChainLevel> levels, const Matrix& output_map) {
  if (levels.empty()) fail(ErrorCode::dimension_mismatch, "a chain needs at least one level");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const auto& l = levels[i];
    const Index n = l.self_coupling.rows();
    const std::string where = "level " + std::to_string(i);
    if (n < 1 || l.self_coupling.cols() != n) {
      fail(ErrorCode::dimension_mismatch, where + ": self coupling must be square and non-empty");
    }
    if (l.noise.rows() != n) fail(ErrorCode::dimension_mismatch, where + ": noise has wrong rows");
    if (i + 1 < levels.size()) {
      const Index next = levels[i + 1].self_coupling.rows();
      if (l.next_coupling.rows() != n || l.next_coupling.cols() != next) {
        fail(ErrorCode::dimension_mismatch, where + ": forward coupling has the wrong shape");
      }
    } else if (l.next_coupling.size() != 0) {
      fail(ErrorCode::dimension_mismatch, "the last level has no forward coupling");
    }
  }
  IntegratorChain chain{std::move(levels), output_map};
  if (output_map.cols() != chain.levels.front().self_coupling.rows()) {
    fail(ErrorCode::dimension_mismatch, "output map must act on the first level");
  }
  const Matrix drift = chain.stacked_drift();
  if (!is_hurwitz(drift)) {
    fail(ErrorCode::unstable_chain, "stacked chain drift is not Hurwitz");
  }
  auto diffusion = linear_diffusion_from_drift(drift, chain.stacked_noise());
  return {std::move(chain), std::move(diffusion)};
}

Matrix analytic_autocovariance(const ChainSystem& system, double lag) {
  const Matrix f = system.chain.stacked_output();
  const Matrix& b = system.diffusion.drift_matrix();
  return f * system.diffusion.covariance() * expm(b.transpose() * std::abs(lag)) * f.transpose();
}

AutocovarianceEstimate autocovariance(const TrajectoryEnsemble& ens, const Matrix& observation,
                                      std::span<const double> lags,
                                      const AutocovarianceOptions& options) {
  if (observation.cols() != ens.dims) {
    fail(ErrorCode::dimension_mismatch, "observation map does not match the ensemble");
  }
  if (ens.n_records < 2) fail(ErrorCode::lag_too_large, "ensemble has a single record");
  const Index spacing = ens.steps[1] - ens.steps[0];
  Index records = ens.n_records;
  if (ens.steps.back() - ens.steps[static_cast<std::size_t>(records - 2)] != spacing) --records;
  const double record_dt = static_cast<double>(spacing) * ens.dt;
  const Index start = options.burn_in_records;

  std::vector<Index> lag_idx;
  for (double lag : lags) {
    const double r = lag / record_dt;
    const double k = std::round(r);
    if (lag < 0.0 || std::abs(r - k) > 1e-6) {
      fail(ErrorCode::dimension_mismatch, "lag is not a non-negative multiple of the record spacing");
    }
    if (start + static_cast<Index>(k) >= records) {
      fail(ErrorCode::lag_too_large, "lag exceeds the recorded trajectory length");
    }
    lag_idx.push_back(static_cast<Index>(k));
  }

  const Index p = observation.rows();
  const Index windows =
      std::max<Index>(1, (options.n_groups + ens.n_traj - 1) / std::max<Index>(1, ens.n_traj));
  const Index units = ens.n_traj * windows;
  const Index groups = std::max<Index>(2, std::min(options.n_groups, units));
  const Index span_len = records - start;

  // Observations y = H x for every trajectory and record.
  std::vector<Matrix> obs(static_cast<std::size_t>(ens.n_traj));
  for (Index i = 0; i < ens.n_traj; ++i) {
    obs[static_cast<std::size_t>(i)] = observation * ens.path(i).topRows(records).transpose();
  }

  AutocovarianceEstimate out;
  out.lags.assign(lags.begin(), lags.end());
  for (Index lag : lag_idx) {
    std::vector<Matrix> sums(static_cast<std::size_t>(groups), Matrix::Zero(p, p));
    std::vector<double> counts(static_cast<std::size_t>(groups), 0.0);
    for (Index i = 0; i < ens.n_traj; ++i) {
      const Matrix& y = obs[static_cast<std::size_t>(i)];
      for (Index w = 0; w < windows; ++w) {
        const Index unit = i * windows + w;
        const auto g = static_cast<std::size_t>(unit * groups / units);
        const Index t0 = start + w * span_len / windows;
        const Index t1 = std::min(start + (w + 1) * span_len / windows, records - lag);
        if (t1 <= t0) continue;
        sums[g].noalias() += y.middleCols(t0, t1 - t0) * y.middleCols(t0 + lag, t1 - t0).transpose();
        counts[g] += static_cast<double>(t1 - t0);
      }
    }
    Matrix total = Matrix::Zero(p, p);
    double n_total = 0.0;
    for (Index g = 0; g < groups; ++g) {
      total += sums[static_cast<std::size_t>(g)];
      n_total += counts[static_cast<std::size_t>(g)];
    }
    if (n_total <= 0.0) fail(ErrorCode::lag_too_large, "no sample pairs at this lag");
    const Matrix estimate = total / n_total;

    std::vector<Matrix> loo;
    for (Index g = 0; g < groups; ++g) {
      const double n = n_total - counts[static_cast<std::size_t>(g)];
      if (counts[static_cast<std::size_t>(g)] <= 0.0 || n <= 0.0) continue;
      loo.push_back((total - sums[static_cast<std::size_t>(g)]) / n);
    }
    Matrix se = Matrix::Zero(p, p);
    if (loo.size() >= 2) {
      Matrix mean = Matrix::Zero(p, p);
      for (const auto& m : loo) mean += m;
      mean /= static_cast<double>(loo.size());
      Matrix acc = Matrix::Zero(p, p);
      for (const auto& m : loo) acc += (m - mean).cwiseAbs2();
      const double gg = static_cast<double>(loo.size());
      se = ((gg - 1.0) / gg * acc).cwiseSqrt();
    }
    out.values.push_back(estimate);
    out.standard_errors.push_back(se);
  }
  return out;
}

AutocovarianceEstimate autocovariance(const TrajectoryEnsemble& ens, std::span<const Index> coords,
                                      std::span<const double> lags,
                                      const AutocovarianceOptions& options) {
  Matrix h = Matrix::Zero(static_cast<Index>(coords.size()), ens.dims);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (coords[i] < 0 || coords[i] >= ens.dims) {
      fail(ErrorCode::dimension_mismatch, "coordinate out of range");
    }
    h(static_cast<Index>(i), coords[i]) = 1.0;
  }
  return autocovariance(ens, h, lags, options);
}

void write_autocovariance_csv(std::ostream& out, const AutocovarianceEstimate& est,
                              const std::vector<Matrix>* analytic) {
  const Index p = est.values.empty() ? 0 : est.values.front().rows();
  out << "lag";
  for (const char* name : {"c", "se", "analytic"}) {
    if (std::string_view(name) == "analytic" && !analytic) continue;
    for (Index i = 0; i < p; ++i) {
      for (Index j = 0; j < p; ++j) out << ',' << name << '_' << i << '_' << j;
    }
  }
  out << '\n';
  for (std::size_t k = 0; k < est.lags.size(); ++k) {
    out << csv::number(est.lags[k]);
    for (Index i = 0; i < p; ++i)
      for (Index j = 0; j < p; ++j) csv::field(out, est.values[k](i, j));
    for (Index i = 0; i < p; ++i)
      for (Index j = 0; j < p; ++j) csv::field(out, est.standard_errors[k](i, j));
    if (analytic) {
      for (Index i = 0; i < p; ++i)
        for (Index j = 0; j < p; ++j) csv::field(out, (*analytic)[k](i, j));
    }
    out << '\n';
  }
}

}  // namespace bayesmech
