#include "bayesmech/cli/runner.hpp"

#include "bayesmech/control.hpp"
#include "bayesmech/csv.hpp"
#include "bayesmech/dynamics.hpp"
#include "bayesmech/ensemble_io.hpp"
#include "bayesmech/error.hpp"
#include "bayesmech/hash.hpp"
#include "bayesmech/inference.hpp"
#include "bayesmech/random.hpp"
#include "bayesmech/stats.hpp"
#include "bayesmech/sync_map.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#ifndef BAYESMECH_GIT_DESCRIBE
#define BAYESMECH_GIT_DESCRIBE "unknown"
#endif

namespace bayesmech::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kSampleStream = 0x5A3B;
constexpr std::uint64_t kBaselineStream = 0xBA5E;
constexpr std::uint64_t kInitialStream = 0x1D17;
constexpr std::uint64_t kPathStream = 0x9A7C;

json matrix_json(const Matrix& m) { return to_rows(m); }

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

void fsync_path(const fs::path& path) {
  const int fd = ::open(path.c_str(), O_RDONLY);
  if (fd < 0) fail(ErrorCode::io_failure, "cannot reopen " + path.string() + " for fsync");
  const int rc = ::fsync(fd);
  ::close(fd);
  if (rc != 0) fail(ErrorCode::io_failure, "fsync failed for " + path.string());
}

void write_text(const fs::path& path, const std::string& content, bool sync) {
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::io_failure, "cannot open " + path.string() + " for writing");
    out << content;
    out.flush();
    if (!out) fail(ErrorCode::io_failure, "write failed for " + path.string());
  }
  if (sync) fsync_path(path);
}

// Writes data files and remembers their checksums for the manifest.
class Artifacts {
 public:
  explicit Artifacts(fs::path dir) : dir_(std::move(dir)) {}

  void csv(const std::string& name, const std::function<void(std::ostream&)>& body) {
    std::ostringstream os;
    body(os);
    add(name, os.str(), "csv");
  }

  void json_file(const std::string& name, const json& doc) { add(name, doc.dump(2) + "\n", "json"); }

  void external(const std::string& name, const std::string& kind) {
    const fs::path p = dir_ / name;
    files_.push_back({{"path", name},
                      {"kind", kind},
                      {"bytes", fs::file_size(p)},
                      {"sha256", sha256_file(p.string())}});
  }

  const json& files() const { return files_; }
  const fs::path& dir() const { return dir_; }

 private:
  void add(const std::string& name, const std::string& content, const std::string& kind) {
    write_text(dir_ / name, content, false);
    json entry{{"path", name}, {"kind", kind}, {"bytes", content.size()}, {"sha256", sha256_hex(content)}};
    if (kind == "csv") entry["columns"] = content.substr(0, content.find('\n'));
    files_.push_back(std::move(entry));
  }

  fs::path dir_;
  json files_ = json::array();
};

struct Context {
  Context(const ExperimentConfig& c, Artifacts& a) : config(c), out(a) {}

  const ExperimentConfig& config;
  Artifacts& out;
  json report = json::object();
  json model_echo;
  std::vector<std::string> warnings;
  std::uint64_t seed = 0;
};

Index lag_records(double t, double record_dt, const std::string& what) {
  const double r = t / record_dt;
  if (std::abs(r - std::round(r)) > 1e-6) {
    fail(ErrorCode::config_invalid, what + " is not a multiple of dt * record_stride");
  }
  return static_cast<Index>(std::round(r));
}

PrecisionModel build_config_model(Context& ctx) {
  const auto& spec = *ctx.config.model;
  const auto model = build_model(resolve_precision(spec), resolve_partition(spec));
  const auto& part = model.partition();
  json partition{{"external", part.dims_external()},
                 {"blanket", part.dims_blanket()},
                 {"internal", part.dims_internal()}};
  if (part.split()) {
    partition["sensory"] = part.split()->dims_sensory;
    partition["active"] = part.split()->dims_active;
  }
  ctx.model_echo = {{"partition", partition},
                    {"precision", matrix_json(model.precision())},
                    {"covariance", matrix_json(model.covariance())},
                    {"has_blanket", model.has_blanket()}};
  if (model.has_blanket()) {
    const auto sync = build_sync_map(model);
    ctx.model_echo["sync_map"] = {{"matrix", matrix_json(sync.matrix)}, {"exists", sync.exists}};
  }
  return model;
}

Matrix noise_operator(const DynamicsSpec& dyn, Index d) {
  if (dyn.noise) return to_matrix(*dyn.noise);
  return dyn.noise_scale.value_or(0.0) * Matrix::Identity(d, d);
}

DiffusionModel build_config_diffusion(Context& ctx, const PrecisionModel& model) {
  const auto& dyn = *ctx.config.dynamics;
  const Index d = model.dims();
  const Matrix q = dyn.q ? to_matrix(*dyn.q) : Matrix::Zero(d, d);
  const Matrix noise = noise_operator(dyn, d);
  std::optional<Matrix> gamma;
  if (dyn.gamma) gamma = to_matrix(*dyn.gamma);
  auto diff = dyn.mode == "radial_solenoidal" ? build_radial_solenoidal_diffusion(model, q, noise)
                                              : build_diffusion(model, q, noise, gamma);
  ctx.model_echo["dynamics"] = {{"mode", dyn.mode},
                                {"q", matrix_json(diff.q())},
                                {"noise", matrix_json(diff.noise_operator())},
                                {"gamma", matrix_json(diff.gamma())},
                                {"fingerprint", diff.fingerprint()}};
  if (diff.mode() == DiffusionMode::linear) {
    ctx.model_echo["dynamics"]["drift"] = matrix_json(diff.drift_matrix());
  }
  return diff;
}

void maybe_save_ensemble(Context& ctx, const TrajectoryEnsemble& ens) {
  const std::string fmt = ctx.config.run.ensemble_format.value_or("none");
  if (fmt == "none") return;
  const auto format = fmt == "csv" ? EnsembleFormat::csv : EnsembleFormat::binary;
  save_ensemble(ens, ctx.out.dir() / "ensemble", format);
  ctx.out.external(format == EnsembleFormat::csv ? "ensemble.csv" : "ensemble.bin", fmt);
  ctx.out.external("ensemble.json", "json");
}

void add_warnings(Context& ctx, const std::vector<std::string>& w) {
  ctx.warnings.insert(ctx.warnings.end(), w.begin(), w.end());
}

// Experiments.

void blanket_check(Context& ctx) {
  const auto model = build_config_model(ctx);
  const Block eb[] = {Block::external, Block::blanket};
  const Block bm[] = {Block::blanket, Block::internal};
  const Block em[] = {Block::external, Block::internal};
  json& r = ctx.report;
  r["has_blanket"] = model.has_blanket();
  r["blanket_violation"] = model.blanket_violation();
  r["blanket_tolerance"] = model.blanket_tolerance();
  r["inverse_residual"] = model.inverse_residual();
  r["precision"] = matrix_json(model.precision());
  r["covariance"] = matrix_json(model.covariance());
  r["marginal_precision"] = {{"eta_b", matrix_json(marginal_precision(model, eb))},
                             {"b_mu", matrix_json(marginal_precision(model, bm))},
                             {"eta_mu", matrix_json(marginal_precision(model, em))}};
  json cond = json::object();
  for (Block t : {Block::external, Block::internal}) {
    const auto c = conditional(model, t, Block::blanket);
    cond[std::string(to_string(t)) + "|b"] = {{"mean_map", matrix_json(c.mean_map)},
                                              {"precision", matrix_json(c.precision)}};
  }
  r["conditionals"] = cond;
}

void syncmap(Context& ctx) {
  const auto model = build_config_model(ctx);
  const auto s = build_sync_map(model);
  json& r = ctx.report;
  r["exists"] = s.exists;
  r["sigma"] = matrix_json(s.matrix);
  r["sigma_precision_form"] = matrix_json(s.precision_form);
  r["form_disagreement"] = s.form_disagreement;
  r["residual_kernel"] = s.residual_kernel;
  r["residual_kernel_covariance"] = s.residual_kernel_covariance;
  r["rank_internal_blanket"] = s.rank_internal_blanket;
  r["rank_external_blanket"] = s.rank_external_blanket;
  if (model.partition().dims_blanket() == 1) {
    const double sd = std::sqrt(model.covariance_block(Block::blanket, Block::blanket)(0, 0));
    ctx.out.csv("syncmap_curve.csv", [&](std::ostream& os) {
      const Index ne = model.partition().dims_external();
      os << "b";
      for (Index j = 0; j < ne; ++j) os << ",eta_expected_" << j;
      for (Index j = 0; j < ne; ++j) os << ",sigma_mu_expected_" << j;
      os << '\n';
      for (int k = -30; k <= 30; ++k) {
        const Vector b = Vector::Constant(1, 0.1 * k * sd);
        const auto e = expected_states(model, b);
        const Vector pred = s.matrix * e.internal;
        os << csv::number(b(0));
        for (Index j = 0; j < ne; ++j) csv::field(os, e.external(j));
        for (Index j = 0; j < ne; ++j) csv::field(os, pred(j));
        os << '\n';
      }
    });
  }
}

void syncmap_empirical(Context& ctx) {
  const auto model = build_config_model(ctx);
  const auto s = build_sync_map(model);
  const auto& run = ctx.config.run;
  const Index n = run.n_samples.value_or(1'000'000);
  const Matrix x = sample(model, n, derive_seed(ctx.seed, kSampleStream));
  SyncCheckOptions opt;
  if (run.n_bins) opt.n_bins = *run.n_bins;
  if (run.min_count) opt.min_count = *run.min_count;
  const auto check = empirical_sync_check(x, model.partition(), s, opt);
  ctx.out.csv("syncmap_empirical.csv", [&](std::ostream& os) { write_sync_csv(os, check); });
  json& r = ctx.report;
  r["exists"] = s.exists;
  r["sigma"] = matrix_json(s.matrix);
  r["n_samples"] = n;
  r["bins_kept"] = check.bins.size();
  r["dropped_bin_centers"] = check.dropped_centers;
  r["max_abs_mismatch"] = check.max_abs_mismatch;
  r["max_standardized_mismatch"] = check.max_standardized_mismatch;
}

void covariance_track(Context& ctx, const TrajectoryEnsemble& ens, const Matrix& target) {
  Vector rel(ens.n_records);
  ctx.out.csv("covariance_track.csv", [&](std::ostream& os) {
    os << "t,rel_frobenius_error";
    for (Index i = 0; i < ens.dims; ++i)
      for (Index j = 0; j < ens.dims; ++j) os << ",c_" << i << '_' << j;
    os << '\n';
    for (Index k = 0; k < ens.n_records; ++k) {
      const Matrix x = ens.states_at(k);
      const Eigen::RowVectorXd mean = x.colwise().mean();
      const Matrix c = (x.rowwise() - mean).transpose() * (x.rowwise() - mean) /
                       static_cast<double>(std::max<Index>(1, x.rows() - 1));
      rel(k) = (c - target).norm() / target.norm();
      os << csv::number(ens.time(k));
      csv::field(os, rel(k));
      for (Index i = 0; i < ens.dims; ++i)
        for (Index j = 0; j < ens.dims; ++j) csv::field(os, c(i, j));
      os << '\n';
    }
  });
  ctx.report["final_covariance_rel_error"] = rel(ens.n_records - 1);
  ctx.report["max_covariance_rel_error"] = rel.maxCoeff();
}

void stationarity(Context& ctx) {
  const auto model = build_config_model(ctx);
  const auto diff = build_config_diffusion(ctx, model);
  const auto& run = ctx.config.run;
  json& r = ctx.report;
  r["mode"] = ctx.config.dynamics->mode;
  if (diff.mode() == DiffusionMode::linear) {
    r["drift"] = matrix_json(diff.drift_matrix());
    r["lyapunov_residual"] = stationarity_residual(diff);
    const Matrix qpq = model.precision() * diff.q() * model.precision();
    r["solenoidal_asymmetry"] = (qpq + qpq.transpose()).norm();
  }
  const auto split = helmholtz_split(diff);
  json parts = json::array();
  for (Index j = 0; j < model.dims(); ++j) {
    const Vector x = Vector::Unit(model.dims(), j);
    json p{{"x", vector_json(x)},
           {"reversible", vector_json(split.reversible(x))},
           {"irreversible", vector_json(split.irreversible(x))}};
    if (diff.mode() == DiffusionMode::linear) p["time_reversed"] = vector_json(time_reversal_drift(diff)(x));
    parts.push_back(p);
  }
  r["helmholtz_at_unit_vectors"] = parts;

  const Index n_traj = run.n_traj.value_or(0);
  if (n_traj == 0) return;
  const Matrix x0 = sample(model, n_traj, derive_seed(ctx.seed, kInitialStream));
  const auto ens = integrate(diff, x0, *run.dt, *run.n_steps, derive_seed(ctx.seed, kPathStream),
                             {run.record_stride.value_or(1)});
  add_warnings(ctx, ens.warnings);
  covariance_track(ctx, ens, model.covariance());
  maybe_save_ensemble(ctx, ens);

  const auto& part = model.partition();
  const Index b0 = part.offset(Block::blanket);
  const Index nb = part.dims_blanket();
  if (nb == 1 && model.has_blanket()) {
    const auto s = build_sync_map(model);
    SyncCheckOptions opt;
    opt.min_count = std::min<Index>(opt.min_count, std::max<Index>(10, n_traj / 200));
    if (run.n_bins) opt.n_bins = *run.n_bins;
    if (run.min_count) opt.min_count = *run.min_count;
    const auto check = empirical_sync_check(ens.states_at(ens.n_records - 1), part, s, opt);
    ctx.out.csv("syncmap_trajectory.csv", [&](std::ostream& os) { write_sync_csv(os, check); });
    r["trajectory_sync_max_abs_mismatch"] = check.max_abs_mismatch;
  }

  if (run.times) {
    const double record_dt = *run.dt * static_cast<double>(run.record_stride.value_or(1));
    const Index k1 = lag_records((*run.times)[0], record_dt, "run.times[0]");
    const Index k2 = lag_records((*run.times)[1], record_dt, "run.times[1]");
    if (k2 >= ens.n_records) fail(ErrorCode::config_invalid, "run.times exceed the simulated span");
    Matrix joint(n_traj, 2 * nb);
    for (Index i = 0; i < n_traj; ++i) {
      joint.row(i).head(nb) = ens.state(i, k1).segment(b0, nb).transpose();
      joint.row(i).tail(nb) = ens.state(i, k2).segment(b0, nb).transpose();
    }
    ctx.out.csv("transitions.csv", [&](std::ostream& os) {
      os << "traj_id";
      for (Index j = 0; j < nb; ++j) os << ",b_t1_" << j;
      for (Index j = 0; j < nb; ++j) os << ",b_t2_" << j;
      os << '\n';
      for (Index i = 0; i < n_traj; ++i) {
        os << i;
        for (Index j = 0; j < 2 * nb; ++j) csv::field(os, joint(i, j));
        os << '\n';
      }
    });
    json marg = json::array();
    for (Index j = 0; j < 2 * nb; ++j) {
      const auto jb = stats::jarque_bera(joint.col(j));
      marg.push_back({{"column", j}, {"jarque_bera", jb.statistic}, {"p_value", jb.p_value}});
    }
    const auto mt = stats::mardia(joint);
    r["transition"] = {{"t1", ens.time(k1)},
                       {"t2", ens.time(k2)},
                       {"marginal_tests", marg},
                       {"mardia_skewness", mt.skewness.statistic},
                       {"mardia_skewness_p", mt.skewness.p_value},
                       {"mardia_kurtosis", mt.kurtosis.statistic},
                       {"mardia_kurtosis_p", mt.kurtosis.p_value},
                       {"joint_p_value", mt.p_value}};
  }
}

DescentSpec descent_spec(Context& ctx, const PrecisionModel& model) {
  const auto& run = ctx.config.run;
  const auto& clamp = *run.clamp;
  DescentSpec spec;
  spec.clamped = clamp.block == "s" ? Block::sensory : Block::blanket;
  if (clamp.value) {
    spec.clamp_value = Eigen::Map<const Vector>(clamp.value->data(), static_cast<Index>(clamp.value->size()));
  } else {
    spec.clamp_value =
        *clamp.sd * model.covariance_block(spec.clamped, spec.clamped).diagonal().cwiseSqrt();
  }
  spec.n_traj = run.n_traj.value_or(1000);
  spec.dt = *run.dt;
  spec.n_steps = *run.n_steps;
  spec.seed = ctx.seed;
  spec.averaging = run.averaging.value_or("conditional_mean") == "per_trajectory"
                       ? Averaging::per_trajectory
                       : Averaging::conditional_mean;
  spec.record_stride = run.record_stride.value_or(1);
  spec.keep_per_trajectory = run.keep_per_trajectory.value_or(false);
  ctx.report["clamp"] = {{"block", std::string(to_string(spec.clamped))},
                         {"value", vector_json(spec.clamp_value)}};
  ctx.report["averaging"] = std::string(to_string(spec.averaging));
  return spec;
}

void write_free_energy_outputs(Context& ctx, const FreeEnergyEvaluator& ev,
                               const FreeEnergyReport& rep, const DescentSpec& spec) {
  add_warnings(ctx, rep.warnings);
  ctx.out.csv("free_energy.csv", [&](std::ostream& os) { write_free_energy_csv(os, rep); });
  ctx.out.csv("prediction_error.csv", [&](std::ostream& os) { write_prediction_error_csv(os, rep); });
  ctx.out.csv("sample_path.csv", [&](std::ostream& os) { write_sample_path_csv(os, rep); });
  if (rep.per_traj_F) {
    ctx.out.csv("per_trajectory_F.csv", [&](std::ostream& os) { write_per_trajectory_csv(os, rep); });
  }
  const Index n_base = ctx.config.run.n_samples.value_or(100'000);
  const auto base = steady_state_baseline(ev, spec.averaging, n_base, derive_seed(ctx.seed, kBaselineStream));
  const Index last = rep.n_records - 1;
  json& r = ctx.report;
  r["n_traj"] = rep.n_traj;
  r["initial_mean_F"] = rep.mean_F(0);
  r["initial_se_F"] = rep.se_F(0);
  r["final_mean_F"] = rep.mean_F(last);
  r["final_se_F"] = rep.se_F(last);
  r["baseline_mean_F"] = base.mean;
  r["baseline_se_F"] = base.se;
  r["final_minus_baseline_in_se"] =
      (rep.mean_F(last) - base.mean) / std::hypot(rep.se_F(last), base.se);
  r["sync_map"] = matrix_json(ev.sync().matrix);
  r["k_matrix"] = matrix_json(ev.k_matrix());

  Matrix xi(rep.n_traj, rep.dims_external);
  for (Index i = 0; i < rep.n_traj; ++i) xi.row(i) = rep.xi(i, last).transpose();
  json xi_mean = json::array(), xi_se = json::array();
  for (Index j = 0; j < rep.dims_external; ++j) {
    const auto est = stats::mean_and_se(xi.col(j));
    xi_mean.push_back(est.mean);
    xi_se.push_back(est.se);
  }
  r["final_prediction_error_mean"] = xi_mean;
  r["final_prediction_error_se"] = xi_se;
}

// Largest relative change of xᵀΠx along any trajectory.
double quadratic_form_drift(const TrajectoryEnsemble& ens, const Matrix& precision) {
  double worst = 0.0;
  for (Index i = 0; i < ens.n_traj; ++i) {
    const auto x0 = ens.state(i, 0);
    const double e0 = x0.dot(precision * x0);
    for (Index k = 1; k < ens.n_records; ++k) {
      const auto x = ens.state(i, k);
      worst = std::max(worst, std::abs(x.dot(precision * x) - e0) / e0);
    }
  }
  return worst;
}

void descent(Context& ctx) {
  const auto model = build_config_model(ctx);
  const auto diff = build_config_diffusion(ctx, model);
  const auto spec = descent_spec(ctx, model);
  const auto ev = FreeEnergyEvaluator::create(model);
  const auto ens = descent_ensemble(diff, spec);
  maybe_save_ensemble(ctx, ens);
  const auto rep = free_energy_report(ev, ens, spec.averaging, spec.keep_per_trajectory);
  write_free_energy_outputs(ctx, ev, rep, spec);
  ctx.report["quadratic_form_drift"] = quadratic_form_drift(ens, model.precision());
}

void active_inference(Context& ctx) {
  const auto model = build_config_model(ctx);
  const auto diff = build_config_diffusion(ctx, model);
  const auto spec = descent_spec(ctx, model);
  const auto ev = FreeEnergyEvaluator::create(model);
  const auto control = split_blanket(model, model.partition().split()->dims_sensory,
                                     model.partition().split()->dims_active);
  const auto ens = descent_ensemble(diff, spec);
  maybe_save_ensemble(ctx, ens);
  const auto rep = free_energy_report(ev, ens, spec.averaging, spec.keep_per_trajectory);
  write_free_energy_outputs(ctx, ev, rep, spec);

  const auto& part = control.model().partition();
  const Index s0 = part.offset(Block::sensory), ns = part.size(Block::sensory);
  const Index a0 = part.offset(Block::active), na = part.size(Block::active);
  double worst_final_gap = 0.0;
  ctx.out.csv("active_trace.csv", [&](std::ostream& os) {
    os << 't';
    for (Index j = 0; j < ns; ++j) os << ",s_" << j;
    for (Index j = 0; j < na; ++j) os << ",a_" << j;
    for (Index j = 0; j < na; ++j) os << ",a_expected_" << j;
    for (Index j = 0; j < ns; ++j) os << ",mean_s_" << j;
    for (Index j = 0; j < na; ++j) os << ",mean_a_" << j;
    for (Index j = 0; j < na; ++j) os << ",mean_a_expected_" << j;
    os << '\n';
    for (Index k = 0; k < ens.n_records; ++k) {
      const auto x = ens.state(0, k);
      const Vector s = x.segment(s0, ns);
      Vector ms = Vector::Zero(ns), ma = Vector::Zero(na);
      for (Index i = 0; i < ens.n_traj; ++i) {
        ms += ens.state(i, k).segment(s0, ns);
        ma += ens.state(i, k).segment(a0, na);
      }
      ms /= static_cast<double>(ens.n_traj);
      ma /= static_cast<double>(ens.n_traj);
      const Vector mae = expected_active(control, ms);
      if (k == ens.n_records - 1) worst_final_gap = (ma - mae).cwiseAbs().maxCoeff();
      os << csv::number(ens.time(k));
      for (Index j = 0; j < ns; ++j) csv::field(os, s(j));
      for (Index j = 0; j < na; ++j) csv::field(os, x(a0 + j));
      const Vector ae = expected_active(control, s);
      for (Index j = 0; j < na; ++j) csv::field(os, ae(j));
      for (Index j = 0; j < ns; ++j) csv::field(os, ms(j));
      for (Index j = 0; j < na; ++j) csv::field(os, ma(j));
      for (Index j = 0; j < na; ++j) csv::field(os, mae(j));
      os << '\n';
    }
  });
  ctx.report["active_gain"] = matrix_json(control.active_gain());
  ctx.report["final_mean_active_gap"] = worst_final_gap;
}

void control_trace(Context& ctx) {
  const auto model = build_config_model(ctx);
  const auto diff = build_config_diffusion(ctx, model);
  const auto spec = descent_spec(ctx, model);
  const auto& split = *model.partition().split();
  const auto control = split_blanket(model, split.dims_sensory, split.dims_active);
  const auto ens = descent_ensemble(diff, spec);
  maybe_save_ensemble(ctx, ens);
  const auto& part = control.model().partition();
  const Index s0 = part.offset(Block::sensory), ns = part.size(Block::sensory);
  const Index a0 = part.offset(Block::active), na = part.size(Block::active);
  const Index m0 = part.offset(Block::internal), nm = part.dims_internal();
  Vector cost(ens.n_records), best(ens.n_records);
  ctx.out.csv("control_trace.csv", [&](std::ostream& os) {
    os << 't';
    for (Index j = 0; j < ns; ++j) os << ",s_" << j;
    for (Index j = 0; j < na; ++j) os << ",a_" << j;
    for (Index j = 0; j < nm; ++j) os << ",mu_" << j;
    for (Index j = 0; j < na; ++j) os << ",a_optimal_" << j;
    for (Index j = 0; j < nm; ++j) os << ",mu_optimal_" << j;
    os << ",cost,cost_optimal\n";
    for (Index k = 0; k < ens.n_records; ++k) {
      const auto x = ens.state(0, k);
      const Vector s = x.segment(s0, ns), a = x.segment(a0, na), mu = x.segment(m0, nm);
      const auto opt = argmin_control(control, s);
      cost(k) = control_cost(control, s, a, mu);
      best(k) = control_cost(control, s, opt.active, opt.internal);
      os << csv::number(ens.time(k));
      for (Index j = 0; j < ns; ++j) csv::field(os, s(j));
      for (Index j = 0; j < na; ++j) csv::field(os, a(j));
      for (Index j = 0; j < nm; ++j) csv::field(os, mu(j));
      for (Index j = 0; j < na; ++j) csv::field(os, opt.active(j));
      for (Index j = 0; j < nm; ++j) csv::field(os, opt.internal(j));
      csv::field(os, cost(k));
      csv::field(os, best(k));
      os << '\n';
    }
  });
  ctx.report["k_matrix"] = matrix_json(control.k_matrix());
  ctx.report["active_gain"] = matrix_json(control.active_gain());
  ctx.report["min_cost_gap"] = (cost - best).minCoeff();
}

void chain_autocov(Context& ctx) {
  const auto& spec = *ctx.config.chain;
  std::vector<ChainLevel> levels;
  for (const auto& l : spec.levels) {
    levels.push_back({to_matrix(l.self), l.next ? to_matrix(*l.next) : Matrix(), to_matrix(l.noise)});
  }
  const auto sys = build_chain(levels, to_matrix(spec.output));
  const auto& run = ctx.config.run;
  ctx.model_echo = {{"chain_drift", matrix_json(sys.chain.stacked_drift())},
                    {"chain_noise", matrix_json(sys.chain.stacked_noise())},
                    {"output", matrix_json(sys.chain.stacked_output())},
                    {"stationary_covariance", matrix_json(sys.diffusion.covariance())},
                    {"stationary_precision", matrix_json(sys.diffusion.precision())},
                    {"fingerprint", sys.diffusion.fingerprint()}};
  const Index n_traj = run.n_traj.value_or(100);
  const Matrix x0 = sample_gaussian(sys.diffusion.covariance(), n_traj, derive_seed(ctx.seed, kInitialStream));
  const auto ens = integrate(sys.diffusion, x0, *run.dt, *run.n_steps,
                             derive_seed(ctx.seed, kPathStream), {run.record_stride.value_or(1)});
  add_warnings(ctx, ens.warnings);
  maybe_save_ensemble(ctx, ens);
  const std::vector<double> lags = run.lags.value_or(std::vector<double>{0.0, 0.5, 1.0, 2.0});
  AutocovarianceOptions opt;
  if (run.n_groups) opt.n_groups = *run.n_groups;
  if (run.burn_in_records) opt.burn_in_records = *run.burn_in_records;
  const auto est = autocovariance(ens, sys.chain.stacked_output(), lags, opt);
  std::vector<Matrix> analytic;
  json per_lag = json::array();
  for (std::size_t k = 0; k < lags.size(); ++k) {
    analytic.push_back(analytic_autocovariance(sys, lags[k]));
    per_lag.push_back({{"lag", lags[k]},
                       {"empirical", matrix_json(est.values[k])},
                       {"standard_error", matrix_json(est.standard_errors[k])},
                       {"analytic", matrix_json(analytic[k])},
                       {"relative_error", (est.values[k] - analytic[k]).norm() / analytic[k].norm()}});
  }
  ctx.out.csv("autocovariance.csv", [&](std::ostream& os) { write_autocovariance_csv(os, est, &analytic); });
  ctx.report["lags"] = per_lag;
  ctx.report["stationarity_residual"] = stationarity_residual(sys.diffusion);
}

const std::map<std::string, std::function<void(Context&)>>& experiments() {
  static const std::map<std::string, std::function<void(Context&)>> table{
      {"blanket-check", blanket_check},   {"syncmap", syncmap},
      {"syncmap-empirical", syncmap_empirical}, {"stationarity", stationarity},
      {"descent", descent},               {"active-inference", active_inference},
      {"control-trace", control_trace},   {"chain-autocov", chain_autocov},
  };
  return table;
}

std::pair<int, std::string> classify(ErrorCode code) {
  switch (code) {
    case ErrorCode::config_invalid:
      return {kExitConfigInvalid, "ConfigInvalid"};
    case ErrorCode::non_finite:
      return {kExitSimulationDiverged, "SimulationDiverged"};
    case ErrorCode::io_failure:
    case ErrorCode::internal_consistency:
      return {kExitFailure, "ExperimentFailed"};
    default:
      return {kExitModelConstructionFailed, "ModelConstructionFailed"};
  }
}

json manifest(const ExperimentConfig& config, const std::string& status, const Context* ctx) {
  json m{{"schema_version", kSchemaVersion},
         {"status", status},
         {"experiment", config.experiment},
         {"seed", config.run.seed.value_or(0)},
         {"git_describe", git_describe()},
         {"config", serialize(config)}};
  if (ctx) {
    m["model"] = ctx->model_echo;
    m["files"] = ctx->out.files();
    m["warnings"] = ctx->warnings;
  }
  return m;
}

void write_manifest(const fs::path& dir, const json& doc) {
  const fs::path tmp = dir / "manifest.json.tmp";
  write_text(tmp, doc.dump(2) + "\n", true);
  fs::rename(tmp, dir / "manifest.json");
  fsync_path(dir / "manifest.json");
  fsync_path(dir);
}

}  // namespace

std::string git_describe() { return BAYESMECH_GIT_DESCRIBE; }

RunOutcome run_experiment(const ExperimentConfig& config, const fs::path& output_override) {
  RunOutcome outcome;
  outcome.output_dir = output_override.empty() ? fs::path(config.output_dir) : output_override;
  const auto diagnostics = validate(config);

  auto write_error = [&](int code, const std::string& kind, const std::string& message,
                         const json& extra) {
    outcome.exit_code = code;
    outcome.report = {{"error", kind}, {"message", message}};
    for (const auto& [k, v] : extra.items()) outcome.report[k] = v;
    std::error_code ec;
    fs::create_directories(outcome.output_dir, ec);
    if (!ec) {
      try {
        write_text(outcome.output_dir / "error.json", outcome.report.dump(2) + "\n", true);
        write_manifest(outcome.output_dir, manifest(config, "failed", nullptr));
      } catch (const Error&) {
        // The report is still returned to the caller.
      }
    }
    return outcome;
  };

  if (has_errors(diagnostics)) {
    json::array_t errors;
    for (const auto& d : to_json(diagnostics)) errors.push_back(d);
    return write_error(kExitConfigInvalid, "ConfigInvalid", "configuration failed validation",
                       {{"diagnostics", errors}});
  }

  try {
    fs::create_directories(outcome.output_dir);
    fs::remove(outcome.output_dir / "error.json");
    write_manifest(outcome.output_dir, manifest(config, "running", nullptr));
    Artifacts artifacts(outcome.output_dir);
    Context ctx(config, artifacts);
    ctx.seed = config.run.seed.value_or(0);
    for (const auto& d : diagnostics) ctx.warnings.push_back(d.path + ": " + d.message);
    experiments().at(config.experiment)(ctx);
    ctx.report["experiment"] = config.experiment;
    ctx.report["warnings"] = ctx.warnings;
    artifacts.json_file("report.json", ctx.report);
    write_manifest(outcome.output_dir, manifest(config, "complete", &ctx));
    outcome.report = ctx.report;
    return outcome;
  } catch (const Error& e) {
    const auto [code, kind] = classify(e.code());
    return write_error(code, kind, e.what(), {{"code", std::string(to_string(e.code()))}});
  } catch (const fs::filesystem_error& e) {
    return write_error(kExitFailure, "ExperimentFailed", e.what(), {{"code", "IoFailure"}});
  }
}

RunOutcome run_config_text(const std::string& text, const fs::path& output_override) {
  auto parsed = parse_config_text(text);
  if (!parsed.config) {
    RunOutcome outcome;
    outcome.exit_code = kExitConfigInvalid;
    outcome.report = {{"error", "ConfigInvalid"},
                      {"message", "configuration failed to parse"},
                      {"diagnostics", to_json(parsed.diagnostics)}};
    if (!output_override.empty()) {
      std::error_code ec;
      fs::create_directories(output_override, ec);
      if (!ec) write_text(output_override / "error.json", outcome.report.dump(2) + "\n", true);
      outcome.output_dir = output_override;
    }
    return outcome;
  }
  return run_experiment(*parsed.config, output_override);
}

}  // namespace bayesmech::cli
