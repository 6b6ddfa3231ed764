#include "bayesmech/dynamics.hpp"

#include "bayesmech/error.hpp"
#include "bayesmech/hash.hpp"
#include "bayesmech/random.hpp"

#include <boost/random/normal_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <string>

namespace bayesmech {

namespace {

constexpr double kStructureTol = 1e-12;

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

void require_antisymmetric(const Matrix& q, std::string_view where) {
  if (q.rows() != q.cols()) fail(ErrorCode::dimension_mismatch, "Q must be square");
  const double viol = max_abs(q + q.transpose());
  if (viol > kStructureTol * std::max(1.0, max_abs(q))) {
    std::ostringstream msg;
    msg << "Q is not antisymmetric" << where << " (max |Q + Q^T| = " << viol << ")";
    fail(ErrorCode::not_antisymmetric, msg.str());
  }
}

void append_matrix(std::string& buf, const Matrix& m) {
  const Index dims[2] = {m.rows(), m.cols()};
  buf.append(reinterpret_cast<const char*>(dims), sizeof dims);
  buf.append(reinterpret_cast<const char*>(m.data()),
             static_cast<std::size_t>(m.size()) * sizeof(double));
}

// Central differences of a matrix field's divergence, (∇·M)_i = Σ_j ∂_j M_ij.
Vector finite_difference_divergence(const MatrixField& field, const Vector& x) {
  const Index d = x.size();
  Vector out = Vector::Zero(d);
  Vector xp = x, xm = x;
  for (Index j = 0; j < d; ++j) {
    const double h = 1e-5 * (1.0 + std::abs(x(j)));
    xp(j) = x(j) + h;
    xm(j) = x(j) - h;
    out += (field(xp).col(j) - field(xm).col(j)) / (2.0 * h);
    xp(j) = xm(j) = x(j);
  }
  return out;
}

}  // namespace

void DiffusionModel::finalize(std::string_view descriptor) {
  deterministic_ = constant_noise() && (noise_.size() == 0 || max_abs(noise_) == 0.0);
  std::string buf(descriptor);
  buf += mode_ == DiffusionMode::linear ? "|linear" : "|state_dependent";
  append_matrix(buf, precision_);
  append_matrix(buf, noise_);
  append_matrix(buf, q_);
  fingerprint_ = sha256_hex(buf);
}

const Matrix& DiffusionModel::drift_matrix() const {
  if (mode_ != DiffusionMode::linear) {
    fail(ErrorCode::linear_mode_required, "drift matrix exists only in linear mode");
  }
  return drift_matrix_;
}

Matrix DiffusionModel::noise_at(const Vector& x) const {
  if (fields_ && fields_->noise) return fields_->noise(x);
  return noise_;
}

Matrix DiffusionModel::gamma_at(const Vector& x) const {
  if (fields_ && fields_->noise) {
    const Matrix s = fields_->noise(x);
    return 0.5 * s * s.transpose();
  }
  return gamma_;
}

Matrix DiffusionModel::q_at(const Vector& x) const {
  if (fields_) return fields_->q(x);
  return q_;
}

Vector DiffusionModel::divergence_gamma(const Vector& x) const {
  if (!fields_ || !fields_->noise) return Vector::Zero(dims());
  if (fields_->divergence_gamma) return fields_->divergence_gamma(x);
  return finite_difference_divergence([this](const Vector& y) { return gamma_at(y); }, x);
}

Vector DiffusionModel::divergence_q(const Vector& x) const {
  if (!fields_) return Vector::Zero(dims());
  if (fields_->divergence_q) return fields_->divergence_q(x);
  return finite_difference_divergence(fields_->q, x);
}

void DiffusionModel::drift_into(const Vector& x, Vector& out) const {
  if (mode_ == DiffusionMode::linear) {
    out.noalias() = drift_matrix_ * x;
    return;
  }
  if (radial_) {
    out.noalias() = -gamma_precision_ * x;
    out.noalias() -= (1.0 + x.squaredNorm()) * (q_precision_ * x);
    out.noalias() += 2.0 * (q_ * x);
    return;
  }
  const Vector grad_log_p = -precision_ * x;
  out.noalias() = (gamma_at(x) + q_at(x)) * grad_log_p;
  out += divergence_gamma(x) + divergence_q(x);
}

Vector DiffusionModel::drift(const Vector& x) const {
  if (x.size() != dims()) fail(ErrorCode::dimension_mismatch, "state has the wrong dimension");
  Vector out(dims());
  drift_into(x, out);
  return out;
}

DiffusionModel build_diffusion(const PrecisionModel& model, const Matrix& q,
                               const Matrix& noise_operator, const std::optional<Matrix>& gamma) {
  const Index d = model.dims();
  if (q.rows() != d || q.cols() != d || noise_operator.rows() != d) {
    fail(ErrorCode::dimension_mismatch, "Q must be d x d and the noise operator d x m");
  }
  require_antisymmetric(q, "");
  DiffusionModel out;
  out.mode_ = DiffusionMode::linear;
  out.precision_ = model.precision();
  out.covariance_ = model.covariance();
  out.steady_state_ = model;
  out.noise_ = noise_operator;
  out.gamma_ = 0.5 * noise_operator * noise_operator.transpose();
  if (gamma) {
    if (gamma->rows() != d || gamma->cols() != d) {
      fail(ErrorCode::dimension_mismatch, "Gamma must be d x d");
    }
    if (max_abs(*gamma - out.gamma_) > kStructureTol * std::max(1.0, max_abs(out.gamma_))) {
      fail(ErrorCode::gamma_inconsistent, "Gamma differs from noise * noise^T / 2");
    }
  }
  out.q_ = q;
  out.drift_matrix_ = -(out.gamma_ + q) * out.precision_;
  out.finalize("build_diffusion");
  return out;
}

DiffusionModel build_state_dependent_diffusion(const PrecisionModel& model,
                                               StateDependentFields fields,
                                               const Matrix& noise_operator) {
  const Index d = model.dims();
  if (!fields.q) fail(ErrorCode::dimension_mismatch, "state-dependent diffusion needs a Q field");
  if (noise_operator.rows() != d) {
    fail(ErrorCode::dimension_mismatch, "noise operator must have d rows");
  }
  // Spot-check antisymmetry at the origin and along each axis.
  for (Index j = -1; j < d; ++j) {
    Vector x = Vector::Zero(d);
    if (j >= 0) x(j) = 1.0;
    const Matrix qx = fields.q(x);
    if (qx.rows() != d || qx.cols() != d) {
      fail(ErrorCode::dimension_mismatch, "Q field must return d x d matrices");
    }
    require_antisymmetric(qx, j < 0 ? " at the origin" : " along an axis");
  }
  DiffusionModel out;
  out.mode_ = DiffusionMode::state_dependent;
  out.precision_ = model.precision();
  out.covariance_ = model.covariance();
  out.steady_state_ = model;
  out.noise_ = noise_operator;
  out.q_ = fields.q(Vector::Zero(d));
  const std::string name = fields.name;
  out.fields_ = std::make_shared<const StateDependentFields>(std::move(fields));
  out.gamma_ = 0.5 * noise_operator * noise_operator.transpose();
  if (out.fields_->noise) out.gamma_ = out.gamma_at(Vector::Zero(d));
  out.finalize("state_dependent:" + name);
  return out;
}

DiffusionModel build_radial_solenoidal_diffusion(const PrecisionModel& model, const Matrix& q0,
                                                 const Matrix& noise_operator) {
  const Index d = model.dims();
  if (q0.rows() != d || q0.cols() != d || noise_operator.rows() != d) {
    fail(ErrorCode::dimension_mismatch, "Q0 must be d x d and the noise operator d x m");
  }
  require_antisymmetric(q0, "");
  StateDependentFields fields;
  fields.name = "radial_solenoidal";
  fields.q = [q0](const Vector& x) -> Matrix { return q0 * (1.0 + x.squaredNorm()); };
  fields.divergence_q = [q0](const Vector& x) -> Vector { return 2.0 * q0 * x; };
  DiffusionModel out = build_state_dependent_diffusion(model, std::move(fields), noise_operator);
  out.radial_ = true;
  out.gamma_precision_ = out.gamma_ * out.precision_;
  out.q_precision_ = q0 * out.precision_;
  return out;
}

DiffusionModel linear_diffusion_from_drift(const Matrix& drift, const Matrix& noise_operator) {
  const Index d = drift.rows();
  if (drift.cols() != d || noise_operator.rows() != d) {
    fail(ErrorCode::dimension_mismatch, "drift must be d x d and the noise operator d x m");
  }
  if (!is_hurwitz(drift)) {
    fail(ErrorCode::unstable_chain, "drift has an eigenvalue with non-negative real part");
  }
  const Matrix noise_cov = noise_operator * noise_operator.transpose();
  const Matrix cov = symmetrize(solve_lyapunov(drift, noise_cov));
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) {
    fail(ErrorCode::not_positive_definite,
         "stationary covariance is singular; the noise does not reach every coordinate");
  }
  DiffusionModel out;
  out.mode_ = DiffusionMode::linear;
  out.covariance_ = cov;
  out.precision_ = symmetrize(llt.solve(Matrix::Identity(d, d)));
  out.noise_ = noise_operator;
  out.gamma_ = 0.5 * noise_cov;
  const Matrix q = -(drift * cov + out.gamma_);
  out.q_ = 0.5 * (q - q.transpose());
  out.drift_matrix_ = drift;
  out.finalize("from_drift");
  return out;
}

HelmholtzSplit helmholtz_split(const DiffusionModel& diffusion) {
  if (diffusion.mode() == DiffusionMode::linear) {
    const Matrix rev = -diffusion.gamma() * diffusion.precision();
    const Matrix irrev = -diffusion.q() * diffusion.precision();
    return {[rev](const Vector& x) -> Vector { return rev * x; },
            [irrev](const Vector& x) -> Vector { return irrev * x; }};
  }
  return {[diffusion](const Vector& x) -> Vector {
            return -diffusion.gamma_at(x) * (diffusion.precision() * x) +
                   diffusion.divergence_gamma(x);
          },
          [diffusion](const Vector& x) -> Vector {
            return -diffusion.q_at(x) * (diffusion.precision() * x) + diffusion.divergence_q(x);
          }};
}

double lyapunov_residual(const Matrix& drift, const Matrix& covariance, const Matrix& gamma) {
  const double num =
      (drift * covariance + covariance * drift.transpose() + 2.0 * gamma).norm();
  const double den = gamma.norm();
  return den > 0.0 ? num / den : num;
}

double stationarity_residual(const DiffusionModel& diffusion) {
  return lyapunov_residual(diffusion.drift_matrix(), diffusion.covariance(), diffusion.gamma());
}

VectorField time_reversal_drift(const DiffusionModel& diffusion) {
  const Matrix reversed =
      -diffusion.drift_matrix() - 2.0 * diffusion.gamma() * diffusion.precision();
  return [reversed](const Vector& x) -> Vector { return reversed * x; };
}

Matrix TrajectoryEnsemble::states_at(Index record) const {
  Matrix out(n_traj, dims);
  for (Index i = 0; i < n_traj; ++i) out.row(i) = state(i, record).transpose();
  return out;
}

Matrix TrajectoryEnsemble::path(Index traj) const {
  Matrix out(n_records, dims);
  for (Index k = 0; k < n_records; ++k) out.row(k) = state(traj, k).transpose();
  return out;
}

TrajectoryEnsemble integrate(const DiffusionModel& diffusion, const Matrix& x0, double dt,
                             Index n_steps, std::uint64_t seed, const IntegrateOptions& options) {
  const Index d = diffusion.dims();
  if (x0.rows() < 1 || x0.cols() != d) {
    fail(ErrorCode::dimension_mismatch, "initial states must be n_traj x d with n_traj >= 1");
  }
  if (!(dt > 0.0) || !std::isfinite(dt)) fail(ErrorCode::dimension_mismatch, "dt must be positive");
  if (n_steps < 1) fail(ErrorCode::dimension_mismatch, "need at least one step");
  if (options.record_stride < 1) fail(ErrorCode::dimension_mismatch, "record stride must be >= 1");
  if (!x0.allFinite()) fail(ErrorCode::non_finite, "initial states are not finite");

  TrajectoryEnsemble ens;
  ens.n_traj = x0.rows();
  ens.dims = d;
  ens.dt = dt;
  ens.seed = seed;
  ens.model_fingerprint = diffusion.fingerprint();
  for (Index k = 0; k <= n_steps; k += options.record_stride) ens.steps.push_back(k);
  if (ens.steps.back() != n_steps) ens.steps.push_back(n_steps);
  ens.n_records = static_cast<Index>(ens.steps.size());
  ens.data.resize(static_cast<std::size_t>(ens.n_traj * ens.n_records * d));

  if (diffusion.mode() == DiffusionMode::linear) {
    const double norm2 = Eigen::JacobiSVD<Matrix>(diffusion.drift_matrix()).singularValues()(0);
    if (dt * norm2 >= 2.0) {
      std::ostringstream msg;
      msg << "dt * |B|_2 = " << dt * norm2 << " >= 2; Euler-Maruyama may be unstable";
      ens.warnings.push_back(msg.str());
    }
  }

  const bool deterministic = diffusion.deterministic();
  const bool constant_noise = diffusion.constant_noise();
  const Index m = diffusion.noise_dims();
  const double sqrt_dt = std::sqrt(dt);
  // Linear mode with constant noise: one step is x ↦ (I + dt B) x + √dt ς z.
  const bool affine_step = !deterministic && constant_noise && diffusion.mode() == DiffusionMode::linear;
  Matrix step_map, step_noise;
  if (affine_step) {
    step_map = Matrix::Identity(d, d) + dt * diffusion.drift_matrix();
    step_noise = sqrt_dt * diffusion.noise_operator();
  }

  parallel_ranges(static_cast<std::size_t>(ens.n_traj), [&](std::size_t begin, std::size_t end) {
    Vector x(d), f(d), k1(d), k2(d), k3(d), k4(d), tmp(d), z(m);
    Matrix noise = diffusion.noise_operator();
    for (std::size_t tr = begin; tr < end; ++tr) {
      const auto traj = static_cast<Index>(tr);
      auto rng = make_rng(seed, tr);
      boost::random::normal_distribution<double> normal;
      x = x0.row(traj).transpose();
      Index next_record = 0;
      ens.state(traj, next_record++) = x;
      for (Index step = 1; step <= n_steps; ++step) {
        if (deterministic) {
          diffusion.drift_into(x, k1);
          tmp = x + 0.5 * dt * k1;
          diffusion.drift_into(tmp, k2);
          tmp = x + 0.5 * dt * k2;
          diffusion.drift_into(tmp, k3);
          tmp = x + dt * k3;
          diffusion.drift_into(tmp, k4);
          x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        } else if (affine_step) {
          for (Index j = 0; j < m; ++j) z(j) = normal(rng);
          f.noalias() = step_map * x;
          f.noalias() += step_noise * z;
          x.swap(f);
        } else {
          diffusion.drift_into(x, f);
          for (Index j = 0; j < m; ++j) z(j) = normal(rng);
          if (!constant_noise) noise = diffusion.noise_at(x);
          x += dt * f;
          x.noalias() += sqrt_dt * (noise * z);
        }
        if (!x.allFinite()) {
          fail(ErrorCode::non_finite, "trajectory " + std::to_string(traj) +
                                          " became non-finite at step " + std::to_string(step));
        }
        if (next_record < ens.n_records && ens.steps[static_cast<std::size_t>(next_record)] == step) {
          ens.state(traj, next_record++) = x;
        }
      }
    }
  });
  return ens;
}

Matrix sample_conditional_initial(const PrecisionModel& model, Block clamped, const Vector& value,
                                  Index n, std::uint64_t seed) {
  if (clamped != Block::blanket && clamped != Block::sensory) {
    fail(ErrorCode::bad_block, "only the blanket or its sensory part can be clamped");
  }
  const auto& part = model.partition();
  const auto c_idx = part.indices(clamped);
  if (value.size() != static_cast<Index>(c_idx.size())) {
    fail(ErrorCode::dimension_mismatch, "clamped value has the wrong dimension");
  }
  if (!value.allFinite()) fail(ErrorCode::non_finite, "clamped value is not finite");
  std::set<Index> clamped_set(c_idx.begin(), c_idx.end());
  std::vector<Index> o_idx;
  for (Index i = 0; i < model.dims(); ++i) {
    if (!clamped_set.count(i)) o_idx.push_back(i);
  }
  const Matrix& cov = model.covariance();
  const Matrix s_cc = select(cov, c_idx, c_idx);
  const Matrix s_co = select(cov, c_idx, o_idx);
  Eigen::LLT<Matrix> llt(s_cc);
  const Vector mean = s_co.transpose() * llt.solve(value);
  const Matrix cond_cov = symmetrize(select(cov, o_idx, o_idx) - s_co.transpose() * llt.solve(s_co));
  const Matrix draws = sample_gaussian(cond_cov, n, seed);

  Matrix out(n, model.dims());
  for (std::size_t j = 0; j < c_idx.size(); ++j) out.col(c_idx[j]).setConstant(value(static_cast<Index>(j)));
  for (std::size_t j = 0; j < o_idx.size(); ++j) {
    out.col(o_idx[j]) = draws.col(static_cast<Index>(j)).array() + mean(static_cast<Index>(j));
  }
  return out;
}

}  // namespace bayesmech
