#include "bayesmech/cli/config.hpp"

#include "bayesmech/control.hpp"
#include "bayesmech/dynamics.hpp"
#include "bayesmech/error.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace bayesmech::cli {

using nlohmann::json;

namespace {

std::string join(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

std::string at(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

std::string at(const std::string& path, Index i, Index j) {
  return path + "[" + std::to_string(i) + "][" + std::to_string(j) + "]";
}

class Reader {
 public:
  explicit Reader(std::vector<Diagnostic>& out) : out_(out) {}

  void error(const std::string& path, const std::string& message) {
    out_.push_back({Diagnostic::Severity::error, path, message});
  }

  bool object(const json& j, const std::string& path,
              std::initializer_list<std::string_view> allowed) {
    if (!j.is_object()) {
      error(path, "expected an object");
      return false;
    }
    for (const auto& [key, value] : j.items()) {
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
        error(join(path, key), "unknown key");
      }
    }
    return true;
  }

  const json* field(const json& obj, std::string_view key, const std::string& path, bool required) {
    const auto it = obj.find(std::string(key));
    if (it == obj.end()) {
      if (required) error(join(path, key), "missing required field");
      return nullptr;
    }
    return &*it;
  }

  std::optional<double> number(const json& obj, std::string_view key, const std::string& path,
                               bool required = false) {
    const json* j = field(obj, key, path, required);
    if (!j) return std::nullopt;
    if (!j->is_number()) {
      error(join(path, key), "expected a number");
      return std::nullopt;
    }
    return j->get<double>();
  }

  std::optional<Index> integer(const json& obj, std::string_view key, const std::string& path,
                               bool required = false) {
    const json* j = field(obj, key, path, required);
    if (!j) return std::nullopt;
    if (!j->is_number_integer()) {
      error(join(path, key), "expected an integer");
      return std::nullopt;
    }
    return j->get<Index>();
  }

  std::optional<std::uint64_t> unsigned_integer(const json& obj, std::string_view key,
                                                const std::string& path, bool required = false) {
    const json* j = field(obj, key, path, required);
    if (!j) return std::nullopt;
    if (!j->is_number_unsigned()) {
      error(join(path, key), "expected a non-negative integer");
      return std::nullopt;
    }
    return j->get<std::uint64_t>();
  }

  std::optional<bool> boolean(const json& obj, std::string_view key, const std::string& path) {
    const json* j = field(obj, key, path, false);
    if (!j) return std::nullopt;
    if (!j->is_boolean()) {
      error(join(path, key), "expected true or false");
      return std::nullopt;
    }
    return j->get<bool>();
  }

  std::optional<std::string> string(const json& obj, std::string_view key, const std::string& path,
                                    bool required = false) {
    const json* j = field(obj, key, path, required);
    if (!j) return std::nullopt;
    if (!j->is_string()) {
      error(join(path, key), "expected a string");
      return std::nullopt;
    }
    return j->get<std::string>();
  }

  std::optional<std::vector<double>> vector(const json& obj, std::string_view key,
                                            const std::string& path, bool required = false) {
    const json* j = field(obj, key, path, required);
    if (!j) return std::nullopt;
    return vector_value(*j, join(path, key));
  }

  std::optional<std::vector<double>> vector_value(const json& j, const std::string& path) {
    if (!j.is_array()) {
      error(path, "expected an array of numbers");
      return std::nullopt;
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (!j[i].is_number()) {
        error(at(path, i), "expected a number");
        return std::nullopt;
      }
      out.push_back(j[i].get<double>());
    }
    return out;
  }

  std::optional<Rows> rows(const json& obj, std::string_view key, const std::string& path,
                           bool required = false) {
    const json* j = field(obj, key, path, required);
    if (!j) return std::nullopt;
    const std::string p = join(path, key);
    if (!j->is_array() || j->empty()) {
      error(p, "expected a non-empty array of rows");
      return std::nullopt;
    }
    Rows out;
    for (std::size_t i = 0; i < j->size(); ++i) {
      auto row = vector_value((*j)[i], at(p, i));
      if (!row) return std::nullopt;
      if (!out.empty() && row->size() != out.front().size()) {
        error(at(p, i), "rows have different lengths");
        return std::nullopt;
      }
      if (row->empty()) {
        error(at(p, i), "empty row");
        return std::nullopt;
      }
      out.push_back(std::move(*row));
    }
    return out;
  }

 private:
  std::vector<Diagnostic>& out_;
};

std::optional<ModelSpec> parse_model(Reader& r, const json& j) {
  const std::string p = "model";
  if (!r.object(j, p, {"partition", "precision", "random"})) return std::nullopt;
  ModelSpec m;
  if (const json* part = r.field(j, "partition", p, true)) {
    const std::string pp = join(p, "partition");
    if (r.object(*part, pp, {"external", "blanket", "internal", "sensory", "active"})) {
      m.external = r.integer(*part, "external", pp, true).value_or(0);
      m.blanket = r.integer(*part, "blanket", pp, true).value_or(0);
      m.internal = r.integer(*part, "internal", pp, true).value_or(0);
      m.sensory = r.integer(*part, "sensory", pp);
      m.active = r.integer(*part, "active", pp);
    }
  }
  m.precision = r.rows(j, "precision", p);
  if (const json* rnd = r.field(j, "random", p, false)) {
    const std::string rp = join(p, "random");
    if (r.object(*rnd, rp,
                 {"seed", "coupling", "min_diag", "max_diag", "internal_blanket_rank",
                  "decouple_external"})) {
      RandomRecipe rec;
      rec.seed = r.unsigned_integer(*rnd, "seed", rp, true).value_or(0);
      rec.coupling = r.number(*rnd, "coupling", rp);
      rec.min_diag = r.number(*rnd, "min_diag", rp);
      rec.max_diag = r.number(*rnd, "max_diag", rp);
      rec.internal_blanket_rank = r.integer(*rnd, "internal_blanket_rank", rp);
      rec.decouple_external = r.boolean(*rnd, "decouple_external", rp);
      m.random = rec;
    }
  }
  return m;
}

std::optional<DynamicsSpec> parse_dynamics(Reader& r, const json& j) {
  const std::string p = "dynamics";
  if (!r.object(j, p, {"mode", "q", "noise", "noise_scale", "gamma"})) return std::nullopt;
  DynamicsSpec d;
  d.mode = r.string(j, "mode", p).value_or("linear");
  d.q = r.rows(j, "q", p);
  d.noise = r.rows(j, "noise", p);
  d.noise_scale = r.number(j, "noise_scale", p);
  d.gamma = r.rows(j, "gamma", p);
  return d;
}

std::optional<ChainSpec> parse_chain(Reader& r, const json& j) {
  const std::string p = "chain";
  if (!r.object(j, p, {"levels", "output"})) return std::nullopt;
  ChainSpec c;
  if (const json* levels = r.field(j, "levels", p, true)) {
    const std::string lp = join(p, "levels");
    if (!levels->is_array() || levels->empty()) {
      r.error(lp, "expected a non-empty array of levels");
    } else {
      for (std::size_t i = 0; i < levels->size(); ++i) {
        const std::string ip = at(lp, i);
        const json& lj = (*levels)[i];
        if (!r.object(lj, ip, {"self", "next", "noise"})) continue;
        ChainLevelSpec level;
        level.self = r.rows(lj, "self", ip, true).value_or(Rows{});
        level.next = r.rows(lj, "next", ip);
        level.noise = r.rows(lj, "noise", ip, true).value_or(Rows{});
        c.levels.push_back(std::move(level));
      }
    }
  }
  c.output = r.rows(j, "output", p, true).value_or(Rows{});
  return c;
}

RunSpec parse_run(Reader& r, const json& j) {
  const std::string p = "run";
  RunSpec s;
  if (!r.object(j, p,
                {"dt", "n_steps", "n_traj", "seed", "record_stride", "clamp", "averaging",
                 "keep_per_trajectory", "n_samples", "n_bins", "min_count", "lags", "n_groups",
                 "burn_in_records", "times", "ensemble_format"})) {
    return s;
  }
  s.dt = r.number(j, "dt", p);
  s.n_steps = r.integer(j, "n_steps", p);
  s.n_traj = r.integer(j, "n_traj", p);
  s.seed = r.unsigned_integer(j, "seed", p);
  s.record_stride = r.integer(j, "record_stride", p);
  if (const json* c = r.field(j, "clamp", p, false)) {
    const std::string cp = join(p, "clamp");
    if (r.object(*c, cp, {"block", "value", "sd"})) {
      ClampSpec clamp;
      clamp.block = r.string(*c, "block", cp).value_or("b");
      clamp.value = r.vector(*c, "value", cp);
      clamp.sd = r.number(*c, "sd", cp);
      s.clamp = clamp;
    }
  }
  s.averaging = r.string(j, "averaging", p);
  s.keep_per_trajectory = r.boolean(j, "keep_per_trajectory", p);
  s.n_samples = r.integer(j, "n_samples", p);
  s.n_bins = r.integer(j, "n_bins", p);
  s.min_count = r.integer(j, "min_count", p);
  s.lags = r.vector(j, "lags", p);
  s.n_groups = r.integer(j, "n_groups", p);
  s.burn_in_records = r.integer(j, "burn_in_records", p);
  s.times = r.vector(j, "times", p);
  s.ensemble_format = r.string(j, "ensemble_format", p);
  return s;
}

template <typename T>
void put(json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

// Largest |m − mᵀ| entry above the diagonal, reported by position.
std::optional<std::pair<Index, Index>> worst_asymmetric_pair(const Matrix& m, bool anti,
                                                             double tol) {
  std::optional<std::pair<Index, Index>> worst;
  double worst_v = tol;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = i; j < m.cols(); ++j) {
      const double v = anti ? std::abs(m(i, j) + m(j, i)) : std::abs(m(i, j) - m(j, i));
      if (v > worst_v) {
        worst_v = v;
        worst = std::pair{i, j};
      }
    }
  }
  return worst;
}

std::string number_text(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

bool is_shape(const Rows& rows, Index r, Index c) {
  return static_cast<Index>(rows.size()) == r && !rows.empty() &&
         static_cast<Index>(rows.front().size()) == c;
}

std::string shape_text(const Rows& rows) {
  return std::to_string(rows.size()) + "x" + std::to_string(rows.empty() ? 0 : rows.front().size());
}

}  // namespace

std::string_view to_string(Diagnostic::Severity severity) noexcept {
  return severity == Diagnostic::Severity::error ? "error" : "warning";
}

nlohmann::json to_json(const std::vector<Diagnostic>& diagnostics) {
  json out = json::array();
  for (const auto& d : diagnostics) {
    out.push_back({{"severity", to_string(d.severity)}, {"path", d.path}, {"message", d.message}});
  }
  return out;
}

bool has_errors(const std::vector<Diagnostic>& diagnostics) {
  return std::any_of(diagnostics.begin(), diagnostics.end(),
                     [](const Diagnostic& d) { return d.severity == Diagnostic::Severity::error; });
}

ParseResult parse_config(const json& doc) {
  ParseResult res;
  Reader r(res.diagnostics);
  if (!r.object(doc, "",
                {"schema_version", "experiment", "output_dir", "description", "model", "dynamics",
                 "chain", "run"})) {
    return res;
  }
  ExperimentConfig c;
  c.schema_version = static_cast<int>(r.integer(doc, "schema_version", "", true).value_or(0));
  c.experiment = r.string(doc, "experiment", "", true).value_or("");
  c.output_dir = r.string(doc, "output_dir", "", true).value_or("");
  c.description = r.string(doc, "description", "");
  if (const json* m = r.field(doc, "model", "", false)) c.model = parse_model(r, *m);
  if (const json* d = r.field(doc, "dynamics", "", false)) c.dynamics = parse_dynamics(r, *d);
  if (const json* ch = r.field(doc, "chain", "", false)) c.chain = parse_chain(r, *ch);
  if (const json* run = r.field(doc, "run", "", false)) c.run = parse_run(r, *run);
  if (!has_errors(res.diagnostics)) res.config = std::move(c);
  return res;
}

ParseResult parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    ParseResult res;
    res.diagnostics.push_back({Diagnostic::Severity::error, "", std::string("invalid JSON: ") + e.what()});
    return res;
  }
  return parse_config(doc);
}

json serialize(const ExperimentConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  j["experiment"] = c.experiment;
  j["output_dir"] = c.output_dir;
  put(j, "description", c.description);
  if (c.model) {
    const auto& m = *c.model;
    json part{{"external", m.external}, {"blanket", m.blanket}, {"internal", m.internal}};
    put(part, "sensory", m.sensory);
    put(part, "active", m.active);
    json mj{{"partition", part}};
    put(mj, "precision", m.precision);
    if (m.random) {
      json rj{{"seed", m.random->seed}};
      put(rj, "coupling", m.random->coupling);
      put(rj, "min_diag", m.random->min_diag);
      put(rj, "max_diag", m.random->max_diag);
      put(rj, "internal_blanket_rank", m.random->internal_blanket_rank);
      put(rj, "decouple_external", m.random->decouple_external);
      mj["random"] = rj;
    }
    j["model"] = mj;
  }
  if (c.dynamics) {
    const auto& d = *c.dynamics;
    json dj{{"mode", d.mode}};
    put(dj, "q", d.q);
    put(dj, "noise", d.noise);
    put(dj, "noise_scale", d.noise_scale);
    put(dj, "gamma", d.gamma);
    j["dynamics"] = dj;
  }
  if (c.chain) {
    json levels = json::array();
    for (const auto& l : c.chain->levels) {
      json lj{{"self", l.self}, {"noise", l.noise}};
      put(lj, "next", l.next);
      levels.push_back(lj);
    }
    j["chain"] = {{"levels", levels}, {"output", c.chain->output}};
  }
  const auto& s = c.run;
  json rj = json::object();
  put(rj, "dt", s.dt);
  put(rj, "n_steps", s.n_steps);
  put(rj, "n_traj", s.n_traj);
  put(rj, "seed", s.seed);
  put(rj, "record_stride", s.record_stride);
  if (s.clamp) {
    json cj{{"block", s.clamp->block}};
    put(cj, "value", s.clamp->value);
    put(cj, "sd", s.clamp->sd);
    rj["clamp"] = cj;
  }
  put(rj, "averaging", s.averaging);
  put(rj, "keep_per_trajectory", s.keep_per_trajectory);
  put(rj, "n_samples", s.n_samples);
  put(rj, "n_bins", s.n_bins);
  put(rj, "min_count", s.min_count);
  put(rj, "lags", s.lags);
  put(rj, "n_groups", s.n_groups);
  put(rj, "burn_in_records", s.burn_in_records);
  put(rj, "times", s.times);
  put(rj, "ensemble_format", s.ensemble_format);
  if (!rj.empty()) j["run"] = rj;
  return j;
}

Matrix to_matrix(const Rows& rows) {
  const auto r = static_cast<Index>(rows.size());
  const Index c = rows.empty() ? 0 : static_cast<Index>(rows.front().size());
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return m;
}

Rows to_rows(const Matrix& m) {
  Rows out(static_cast<std::size_t>(m.rows()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)].push_back(m(i, j));
  return out;
}

Partition resolve_partition(const ModelSpec& spec) {
  std::optional<BlanketSplit> split;
  if (spec.sensory || spec.active) {
    split = BlanketSplit{spec.sensory.value_or(0), spec.active.value_or(0)};
  }
  return Partition(spec.external, spec.blanket, spec.internal, split);
}

Matrix resolve_precision(const ModelSpec& spec) {
  if (spec.precision) return to_matrix(*spec.precision);
  if (!spec.random) fail(ErrorCode::config_invalid, "model needs precision or random");
  const auto& r = *spec.random;
  RandomModelOptions opt;
  if (r.coupling) opt.coupling = *r.coupling;
  if (r.min_diag) opt.min_diag = *r.min_diag;
  if (r.max_diag) opt.max_diag = *r.max_diag;
  opt.internal_blanket_rank = r.internal_blanket_rank;
  if (r.decouple_external) opt.decouple_external = *r.decouple_external;
  return random_blanket_precision(resolve_partition(spec), r.seed, opt);
}

std::vector<Diagnostic> validate(const ExperimentConfig& c) {
  std::vector<Diagnostic> out;
  auto error = [&](const std::string& path, const std::string& msg) {
    out.push_back({Diagnostic::Severity::error, path, msg});
  };
  auto warning = [&](const std::string& path, const std::string& msg) {
    out.push_back({Diagnostic::Severity::warning, path, msg});
  };

  if (c.schema_version != kSchemaVersion) {
    error("schema_version", "unsupported schema version " + std::to_string(c.schema_version));
  }
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), c.experiment) == names.end()) {
    error("experiment", "unknown experiment '" + c.experiment + "'");
  }
  if (c.output_dir.empty()) error("output_dir", "output directory must not be empty");

  const std::string& e = c.experiment;
  const bool needs_model = e != "chain-autocov";
  const bool needs_dynamics = e == "stationarity" || e == "descent" || e == "active-inference" ||
                              e == "control-trace";
  const bool needs_split = e == "active-inference" || e == "control-trace";
  const bool needs_sync = e == "descent" || e == "active-inference" || e == "control-trace" ||
                          e == "syncmap-empirical" || e == "syncmap";

  // Model.
  std::optional<PrecisionModel> model;
  if (needs_model && !c.model) error("model", "experiment '" + e + "' needs a model");
  if (c.model) {
    const auto& m = *c.model;
    bool ok = true;
    for (auto [name, v] : {std::pair{"external", m.external}, std::pair{"blanket", m.blanket},
                           std::pair{"internal", m.internal}}) {
      if (v < 1) {
        error(std::string("model.partition.") + name, "must be at least 1");
        ok = false;
      }
    }
    if (m.sensory || m.active) {
      if (!m.sensory || !m.active || *m.sensory < 1 || *m.active < 1 ||
          *m.sensory + *m.active != m.blanket) {
        error("model.partition", "sensory + active must equal blanket, each at least 1");
        ok = false;
      }
    } else if (needs_split) {
      error("model.partition", "experiment '" + e + "' needs a sensory/active split");
    }
    if (m.precision.has_value() == m.random.has_value()) {
      error("model", "give exactly one of 'precision' or 'random'");
      ok = false;
    }
    const Index d = m.external + m.blanket + m.internal;
    if (ok && m.precision) {
      if (!is_shape(*m.precision, d, d)) {
        error("model.precision", "expected " + std::to_string(d) + "x" + std::to_string(d) +
                                     ", got " + shape_text(*m.precision));
        ok = false;
      } else {
        const Matrix p = to_matrix(*m.precision);
        const double tol = ModelTolerances{}.symmetry * p.norm();
        if (auto pair = worst_asymmetric_pair(p, false, tol)) {
          const auto [i, j] = *pair;
          error(at("model.precision", i, j),
                "precision is not symmetric: entry (" + std::to_string(i) + "," + std::to_string(j) +
                    ") = " + number_text(p(i, j)) + " but (" + std::to_string(j) + "," +
                    std::to_string(i) + ") = " + number_text(p(j, i)));
          ok = false;
        }
      }
    }
    if (ok && m.random && m.random->internal_blanket_rank &&
        (*m.random->internal_blanket_rank < 0 ||
         *m.random->internal_blanket_rank > std::min(m.blanket, m.internal))) {
      error("model.random.internal_blanket_rank", "must lie in [0, min(blanket, internal)]");
      ok = false;
    }
    if (ok) {
      try {
        model = build_model(resolve_precision(m), resolve_partition(m));
      } catch (const Error& err) {
        error(m.precision ? "model.precision" : "model.random", err.what());
      }
    }
    if (model && !model->has_blanket()) {
      const std::string msg = "external and internal states are coupled (max |Pi_eta_mu| = " +
                              number_text(model->blanket_violation()) + "); no Markov blanket";
      if (e == "blanket-check") {
        warning("model.precision", msg);
      } else {
        error("model.precision", msg);
      }
    }
    if (model && model->has_blanket() && needs_sync && e != "syncmap" && e != "syncmap-empirical") {
      // Free-energy experiments need the synchronisation map itself.
      const double r = kernel_inclusion_residual(
          model->precision_block(Block::internal, Block::blanket),
          model->precision_block(Block::external, Block::blanket));
      if (r > 1e-8) error("model", "no synchronisation map exists for this model");
    }
    if (model && e == "syncmap-empirical" && m.blanket != 1) {
      error("model.partition.blanket", "binned synchronisation check needs a 1-d blanket");
    }
  }

  // Dynamics.
  std::optional<Matrix> drift;
  if (needs_dynamics && !c.dynamics) error("dynamics", "experiment '" + e + "' needs dynamics");
  if (c.dynamics && c.model) {
    const auto& dyn = *c.dynamics;
    const Index d = c.model->external + c.model->blanket + c.model->internal;
    bool ok = true;
    if (dyn.mode != "linear" && dyn.mode != "radial_solenoidal") {
      error("dynamics.mode", "expected 'linear' or 'radial_solenoidal'");
      ok = false;
    }
    Matrix q = Matrix::Zero(d, d);
    if (dyn.q) {
      if (!is_shape(*dyn.q, d, d)) {
        error("dynamics.q", "expected " + std::to_string(d) + "x" + std::to_string(d) + ", got " +
                                shape_text(*dyn.q));
        ok = false;
      } else {
        q = to_matrix(*dyn.q);
        if (auto pair = worst_asymmetric_pair(q, true, 1e-12 * std::max(1.0, q.cwiseAbs().maxCoeff()))) {
          const auto [i, j] = *pair;
          error(at("dynamics.q", i, j),
                "Q is not antisymmetric: Q(" + std::to_string(i) + "," + std::to_string(j) + ") = " +
                    number_text(q(i, j)) + " but Q(" + std::to_string(j) + "," + std::to_string(i) +
                    ") = " + number_text(q(j, i)));
          ok = false;
        }
      }
    }
    Matrix noise;
    if (dyn.noise && dyn.noise_scale) {
      error("dynamics", "give at most one of 'noise' or 'noise_scale'");
      ok = false;
    } else if (dyn.noise) {
      if (static_cast<Index>(dyn.noise->size()) != d) {
        error("dynamics.noise", "expected " + std::to_string(d) + " rows, got " + shape_text(*dyn.noise));
        ok = false;
      } else {
        noise = to_matrix(*dyn.noise);
      }
    } else if (dyn.noise_scale) {
      if (*dyn.noise_scale < 0) {
        error("dynamics.noise_scale", "must be non-negative");
        ok = false;
      }
      noise = *dyn.noise_scale * Matrix::Identity(d, d);
    } else {
      error("dynamics", "needs 'noise' or 'noise_scale'");
      ok = false;
    }
    if (ok && dyn.gamma) {
      if (!is_shape(*dyn.gamma, d, d)) {
        error("dynamics.gamma", "expected " + std::to_string(d) + "x" + std::to_string(d));
        ok = false;
      } else {
        const Matrix g = to_matrix(*dyn.gamma);
        const Matrix g0 = 0.5 * noise * noise.transpose();
        if ((g - g0).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, g0.cwiseAbs().maxCoeff())) {
          error("dynamics.gamma", "Gamma differs from noise * noise^T / 2");
          ok = false;
        }
      }
    }
    if (ok && model && dyn.mode == "linear") {
      drift = -(0.5 * noise * noise.transpose() + q) * model->precision();
    }
    if (ok && model && needs_split && dyn.mode != "linear") {
      error("dynamics.mode", "experiment '" + e + "' needs linear dynamics");
    }
  }

  // Chain.
  if (e == "chain-autocov" && !c.chain) error("chain", "experiment 'chain-autocov' needs a chain");
  if (c.chain) {
    const auto& ch = *c.chain;
    bool ok = true;
    for (std::size_t i = 0; i < ch.levels.size(); ++i) {
      const auto& l = ch.levels[i];
      const std::string lp = at("chain.levels", i);
      const auto n = static_cast<Index>(l.self.size());
      if (!is_shape(l.self, n, n)) {
        error(lp + ".self", "expected a square matrix, got " + shape_text(l.self));
        ok = false;
        continue;
      }
      if (static_cast<Index>(l.noise.size()) != n) {
        error(lp + ".noise", "expected " + std::to_string(n) + " rows");
        ok = false;
      }
      if (i + 1 < ch.levels.size()) {
        const auto next = static_cast<Index>(ch.levels[i + 1].self.size());
        if (!l.next || !is_shape(*l.next, n, next)) {
          error(lp + ".next", "expected " + std::to_string(n) + "x" + std::to_string(next));
          ok = false;
        }
      } else if (l.next) {
        error(lp + ".next", "the last level has no forward coupling");
        ok = false;
      }
    }
    if (ok && !ch.levels.empty() &&
        (ch.output.empty() ||
         static_cast<Index>(ch.output.front().size()) != static_cast<Index>(ch.levels.front().self.size()))) {
      error("chain.output", "output map must act on the first level");
      ok = false;
    }
    if (ok && !ch.levels.empty()) {
      std::vector<ChainLevel> levels;
      for (const auto& l : ch.levels) {
        levels.push_back({to_matrix(l.self), l.next ? to_matrix(*l.next) : Matrix(), to_matrix(l.noise)});
      }
      try {
        const auto sys = build_chain(levels, to_matrix(ch.output));
        drift = sys.diffusion.drift_matrix();
      } catch (const Error& err) {
        error("chain", err.what());
      }
    }
  }

  // Run parameters.
  const auto& r = c.run;
  auto positive = [&](const auto& v, const char* name) {
    if (v && !(*v > 0)) error(std::string("run.") + name, "must be positive");
  };
  positive(r.dt, "dt");
  positive(r.n_steps, "n_steps");
  positive(r.n_traj, "n_traj");
  positive(r.record_stride, "record_stride");
  positive(r.n_samples, "n_samples");
  positive(r.n_groups, "n_groups");
  if (r.n_bins && *r.n_bins < 2) error("run.n_bins", "need at least two bins");
  if (r.min_count && *r.min_count < 1) error("run.min_count", "must be at least 1");
  if (r.burn_in_records && *r.burn_in_records < 0) error("run.burn_in_records", "must be >= 0");
  if (r.averaging && *r.averaging != "per_trajectory" && *r.averaging != "conditional_mean") {
    error("run.averaging", "expected 'per_trajectory' or 'conditional_mean'");
  }
  if (r.ensemble_format && *r.ensemble_format != "none" && *r.ensemble_format != "csv" &&
      *r.ensemble_format != "binary") {
    error("run.ensemble_format", "expected 'none', 'csv' or 'binary'");
  }
  if (r.lags) {
    for (std::size_t i = 0; i < r.lags->size(); ++i) {
      if ((*r.lags)[i] < 0) error(at("run.lags", i), "lags must be non-negative");
    }
  }
  if (r.times && (r.times->size() != 2 || (*r.times)[0] < 0 || (*r.times)[1] <= (*r.times)[0])) {
    error("run.times", "expected two increasing non-negative times");
  }
  const bool integrates = e == "stationarity" || e == "descent" || e == "active-inference" ||
                          e == "control-trace" || e == "chain-autocov";
  if (integrates && !(r.dt && r.n_steps)) {
    error("run", "experiment '" + e + "' needs dt and n_steps");
  }
  if ((e == "descent" || e == "active-inference" || e == "control-trace") && !r.clamp) {
    error("run.clamp", "experiment '" + e + "' needs a clamp");
  }
  if (r.clamp) {
    const auto& cl = *r.clamp;
    if (cl.block != "b" && cl.block != "s") error("run.clamp.block", "expected 'b' or 's'");
    if (cl.value.has_value() == cl.sd.has_value()) {
      error("run.clamp", "give exactly one of 'value' or 'sd'");
    } else if (cl.value && c.model) {
      const Index want = cl.block == "s" ? c.model->sensory.value_or(0) : c.model->blanket;
      if (static_cast<Index>(cl.value->size()) != want) {
        error("run.clamp.value", "expected " + std::to_string(want) + " entries");
      }
    }
    if (cl.block == "s" && c.model && !c.model->sensory) {
      error("run.clamp.block", "clamping 's' needs a sensory/active split");
    }
  }

  if (drift && r.dt && *r.dt > 0) {
    const double norm2 = Eigen::JacobiSVD<Matrix>(*drift).singularValues()(0);
    if (*r.dt * norm2 >= 2.0) {
      warning("run.dt", "dt * |B|_2 = " + number_text(*r.dt * norm2) +
                            " >= 2; Euler-Maruyama may be unstable");
    }
  }
  return out;
}

std::vector<Diagnostic> validate_text(const std::string& text) {
  auto parsed = parse_config_text(text);
  if (!parsed.config) return parsed.diagnostics;
  return validate(*parsed.config);
}

}  // namespace bayesmech::cli
