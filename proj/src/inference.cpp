#include "bayesmech/inference.hpp"

#include "bayesmech/csv.hpp"
#include "bayesmech/error.hpp"
#include "bayesmech/random.hpp"

#include <cmath>
#include <numbers>
#include <ostream>

namespace bayesmech {

namespace {

constexpr std::uint64_t kInitialStateStream = 0x1A17;
constexpr std::uint64_t kPathStream = 0x9A7B;

void require_dims(const Vector& v, Index n, const char* what) {
  if (v.size() != n) {
    fail(ErrorCode::dimension_mismatch, std::string(what) + " has the wrong dimension");
  }
}

double mean_of(const Vector& v) { return v.mean(); }

double standard_error(const Vector& v) {
  const double n = static_cast<double>(v.size());
  if (v.size() < 2) return 0.0;
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / (n - 1.0) / n);
}

}  // namespace

std::string_view to_string(Averaging averaging) noexcept {
  return averaging == Averaging::per_trajectory ? "per_trajectory" : "conditional_mean";
}

FreeEnergyEvaluator FreeEnergyEvaluator::create(const PrecisionModel& model, double kernel_tol) {
  if (!model.has_blanket()) {
    fail(ErrorCode::blanket_required, "free energy needs a Markov blanket");
  }
  FreeEnergyEvaluator ev(model);
  ev.sync_ = build_sync_map(model, kernel_tol);
  if (!ev.sync_.exists) {
    fail(ErrorCode::sync_map_missing,
         "no synchronisation map: ker Pi_mu_b is not contained in ker Pi_eta_b");
  }
  const Block bm[] = {Block::blanket, Block::internal};
  ev.k_matrix_ = marginal_precision(model, bm);
  ev.external_map_ = conditional(model, Block::external, Block::blanket).mean_map;
  ev.internal_map_ = conditional(model, Block::internal, Block::blanket).mean_map;
  ev.external_precision_ = model.precision_block(Block::external, Block::external);
  return ev;
}

FreeEnergyTerms free_energy_terms(const FreeEnergyEvaluator& ev, const Vector& blanket,
                                  const Vector& internal) {
  const auto& part = ev.model().partition();
  require_dims(blanket, part.dims_blanket(), "blanket state");
  require_dims(internal, part.dims_internal(), "internal state");
  const Vector error = ev.sync().matrix * internal - ev.external_map() * blanket;
  Vector z(blanket.size() + internal.size());
  z << blanket, internal;
  FreeEnergyTerms t;
  t.kl = 0.5 * error.dot(ev.external_precision() * error);
  t.neg_log_joint = 0.5 * z.dot(ev.k_matrix() * z);
  t.total = t.kl + t.neg_log_joint;
  return t;
}

double free_energy(const FreeEnergyEvaluator& ev, const Vector& blanket, const Vector& internal) {
  return free_energy_terms(ev, blanket, internal).total;
}

double kl_to_posterior(const FreeEnergyEvaluator& ev, const Vector& blanket,
                       const Vector& internal) {
  return free_energy_terms(ev, blanket, internal).kl;
}

double energy_minus_entropy(const FreeEnergyEvaluator& ev, const Vector& blanket,
                            const Vector& internal) {
  const auto& model = ev.model();
  const auto& part = model.partition();
  require_dims(blanket, part.dims_blanket(), "blanket state");
  require_dims(internal, part.dims_internal(), "internal state");
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  const auto d = static_cast<double>(model.dims());
  const auto de = static_cast<double>(part.dims_external());

  // q_μ(η) = N(σ(μ), Π_η⁻¹), with b and μ held at their values.
  Vector mean(model.dims());
  mean << ev.sync().matrix * internal, blanket, internal;
  const double log_det_precision = 2.0 * Eigen::LLT<Matrix>(model.precision())
                                             .matrixLLT().diagonal().array().log().sum();
  const double log_det_external = 2.0 * Eigen::LLT<Matrix>(ev.external_precision())
                                            .matrixLLT().diagonal().array().log().sum();
  const double energy = 0.5 * mean.dot(model.precision() * mean) + 0.5 * de +
                        0.5 * (d * log_2pi - log_det_precision);
  const double entropy = 0.5 * (de * (1.0 + log_2pi) - log_det_external);
  return energy - entropy;
}

Vector prediction_error(const FreeEnergyEvaluator& ev, const Vector& external,
                        const Vector& internal) {
  const auto& part = ev.model().partition();
  require_dims(external, part.dims_external(), "external state");
  require_dims(internal, part.dims_internal(), "internal state");
  return ev.external_precision() * (external - ev.sync().matrix * internal);
}

Vector minimize_free_energy(const FreeEnergyEvaluator& ev, const Vector& blanket) {
  const auto& part = ev.model().partition();
  require_dims(blanket, part.dims_blanket(), "blanket state");
  const Vector closed = ev.internal_map() * blanket;

  // Normal equations of the quadratic in μ.
  const Index nb = part.dims_blanket();
  const Index nm = part.dims_internal();
  const Matrix& sigma = ev.sync().matrix;
  const Matrix& k = ev.k_matrix();
  const Matrix hessian = sigma.transpose() * ev.external_precision() * sigma +
                         k.block(nb, nb, nm, nm);
  const Vector rhs = sigma.transpose() * ev.external_precision() * (ev.external_map() * blanket) -
                     k.block(nb, 0, nm, nb) * blanket;
  const Vector solved = hessian.ldlt().solve(rhs);
  if ((solved - closed).norm() > 1e-8 * (1.0 + closed.norm())) {
    fail(ErrorCode::internal_consistency,
         "free-energy minimiser disagrees with the conditional mean");
  }
  return closed;
}

FreeEnergyReport free_energy_report(const FreeEnergyEvaluator& ev,
                                    const TrajectoryEnsemble& ens, Averaging averaging,
                                    bool keep_per_trajectory) {
  const auto& part = ev.model().partition();
  if (ens.dims != part.total()) {
    fail(ErrorCode::dimension_mismatch, "ensemble does not match the model");
  }
  const Index ne = part.dims_external();
  const Index nb = part.dims_blanket();
  const Index nm = part.dims_internal();
  const Index b0 = part.offset(Block::blanket);
  const Index m0 = part.offset(Block::internal);

  FreeEnergyReport rep;
  rep.n_traj = ens.n_traj;
  rep.n_records = ens.n_records;
  rep.dims_external = ne;
  rep.warnings = ens.warnings;
  rep.mean_F.resize(ens.n_records);
  rep.se_F.resize(ens.n_records);
  rep.prediction_errors.resize(static_cast<std::size_t>(ens.n_traj * ens.n_records * ne));
  for (Index k = 0; k < ens.n_records; ++k) rep.times.push_back(ens.time(k));
  Matrix per_traj(ens.n_traj, ens.n_records);

  auto effective_internal = [&](const Vector& b, const Vector& mu) -> Vector {
    return averaging == Averaging::conditional_mean ? Vector(ev.internal_map() * b) : mu;
  };

  parallel_ranges(static_cast<std::size_t>(ens.n_records), [&](std::size_t begin, std::size_t end) {
    for (std::size_t kk = begin; kk < end; ++kk) {
      const auto k = static_cast<Index>(kk);
      for (Index i = 0; i < ens.n_traj; ++i) {
        const auto x = ens.state(i, k);
        const Vector b = x.segment(b0, nb);
        const Vector mu = effective_internal(b, x.segment(m0, nm));
        per_traj(i, k) = free_energy(ev, b, mu);
        const Vector xi = prediction_error(ev, x.segment(0, ne), mu);
        std::copy(xi.data(), xi.data() + ne,
                  rep.prediction_errors.begin() + (i * ens.n_records + k) * ne);
      }
      rep.mean_F(k) = mean_of(per_traj.col(k));
      rep.se_F(k) = standard_error(per_traj.col(k));
    }
  });

  rep.sample_path = ens.path(0);
  rep.sample_expected_external.resize(ens.n_records, ne);
  rep.sample_prediction.resize(ens.n_records, ne);
  for (Index k = 0; k < ens.n_records; ++k) {
    const Vector x = rep.sample_path.row(k).transpose();
    const Vector b = x.segment(b0, nb);
    rep.sample_expected_external.row(k) = (ev.external_map() * b).transpose();
    rep.sample_prediction.row(k) =
        (ev.sync().matrix * effective_internal(b, x.segment(m0, nm))).transpose();
  }
  if (keep_per_trajectory) rep.per_traj_F = std::move(per_traj);
  return rep;
}

TrajectoryEnsemble descent_ensemble(const DiffusionModel& diffusion, const DescentSpec& spec) {
  if (!diffusion.steady_state()) {
    fail(ErrorCode::blanket_required, "descent experiment needs a partitioned steady state");
  }
  const Matrix x0 = sample_conditional_initial(*diffusion.steady_state(), spec.clamped,
                                               spec.clamp_value, spec.n_traj,
                                               derive_seed(spec.seed, kInitialStateStream));
  return integrate(diffusion, x0, spec.dt, spec.n_steps, derive_seed(spec.seed, kPathStream),
                   {spec.record_stride});
}

FreeEnergyReport descent_experiment(const DiffusionModel& diffusion, const DescentSpec& spec) {
  if (!diffusion.steady_state()) {
    fail(ErrorCode::blanket_required, "descent experiment needs a partitioned steady state");
  }
  const auto ev = FreeEnergyEvaluator::create(*diffusion.steady_state());
  return free_energy_report(ev, descent_ensemble(diffusion, spec), spec.averaging,
                            spec.keep_per_trajectory);
}

Baseline steady_state_baseline(const FreeEnergyEvaluator& ev, Averaging averaging, Index n,
                               std::uint64_t seed) {
  const auto& part = ev.model().partition();
  const Matrix draws = sample(ev.model(), n, seed);
  const Index b0 = part.offset(Block::blanket);
  const Index m0 = part.offset(Block::internal);
  Vector f(n);
  for (Index i = 0; i < n; ++i) {
    const Vector b = draws.row(i).segment(b0, part.dims_blanket()).transpose();
    const Vector mu = averaging == Averaging::conditional_mean
                          ? Vector(ev.internal_map() * b)
                          : Vector(draws.row(i).segment(m0, part.dims_internal()).transpose());
    f(i) = free_energy(ev, b, mu);
  }
  return {mean_of(f), standard_error(f)};
}

void write_free_energy_csv(std::ostream& out, const FreeEnergyReport& rep) {
  out << "t,mean_F,se_F\n";
  for (Index k = 0; k < rep.n_records; ++k) {
    out << csv::number(rep.times[static_cast<std::size_t>(k)]);
    csv::field(out, rep.mean_F(k));
    csv::field(out, rep.se_F(k));
    out << '\n';
  }
}

void write_per_trajectory_csv(std::ostream& out, const FreeEnergyReport& rep) {
  if (!rep.per_traj_F) fail(ErrorCode::internal_consistency, "per-trajectory F was not kept");
  const Matrix& f = *rep.per_traj_F;
  out << 't';
  for (Index i = 0; i < f.rows(); ++i) out << ",F_" << i;
  out << '\n';
  for (Index k = 0; k < rep.n_records; ++k) {
    out << csv::number(rep.times[static_cast<std::size_t>(k)]);
    for (Index i = 0; i < f.rows(); ++i) csv::field(out, f(i, k));
    out << '\n';
  }
}

void write_prediction_error_csv(std::ostream& out, const FreeEnergyReport& rep) {
  out << "traj_id,t";
  for (Index j = 0; j < rep.dims_external; ++j) out << ",xi_" << j;
  out << '\n';
  for (Index i = 0; i < rep.n_traj; ++i) {
    for (Index k = 0; k < rep.n_records; ++k) {
      out << i << ',' << csv::number(rep.times[static_cast<std::size_t>(k)]);
      const auto xi = rep.xi(i, k);
      for (Index j = 0; j < rep.dims_external; ++j) csv::field(out, xi(j));
      out << '\n';
    }
  }
}

void write_sample_path_csv(std::ostream& out, const FreeEnergyReport& rep) {
  out << 't';
  for (Index j = 0; j < rep.sample_path.cols(); ++j) out << ",x_" << j;
  for (Index j = 0; j < rep.dims_external; ++j) out << ",eta_expected_" << j;
  for (Index j = 0; j < rep.dims_external; ++j) out << ",prediction_" << j;
  out << '\n';
  for (Index k = 0; k < rep.n_records; ++k) {
    out << csv::number(rep.times[static_cast<std::size_t>(k)]);
    for (Index j = 0; j < rep.sample_path.cols(); ++j) csv::field(out, rep.sample_path(k, j));
    for (Index j = 0; j < rep.dims_external; ++j) csv::field(out, rep.sample_expected_external(k, j));
    for (Index j = 0; j < rep.dims_external; ++j) csv::field(out, rep.sample_prediction(k, j));
    out << '\n';
  }
}

}  // namespace bayesmech
