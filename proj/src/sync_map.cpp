#include "bayesmech/sync_map.hpp"

#include "bayesmech/csv.hpp"
#include "bayesmech/error.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace bayesmech {

namespace {

void require_blanket(const PrecisionModel& model) {
  if (!model.has_blanket()) {
    fail(ErrorCode::blanket_required, "synchronisation map needs a Markov blanket");
  }
}

}  // namespace

SyncExistence exists_sync_map(const PrecisionModel& model, double tol) {
  require_blanket(model);
  const double r = kernel_inclusion_residual(model.precision_block(Block::internal, Block::blanket),
                                             model.precision_block(Block::external, Block::blanket));
  return {r <= tol, r};
}

SyncExistence exists_sync_map_covariance(const PrecisionModel& model, double tol) {
  require_blanket(model);
  const double r = kernel_inclusion_residual(model.covariance_block(Block::internal, Block::blanket),
                                             model.covariance_block(Block::external, Block::blanket));
  return {r <= tol, r};
}

SyncMap build_sync_map(const PrecisionModel& model, double tol) {
  require_blanket(model);
  const Matrix s_eb = model.covariance_block(Block::external, Block::blanket);
  const Matrix s_mb = model.covariance_block(Block::internal, Block::blanket);
  const Matrix p_e = model.precision_block(Block::external, Block::external);
  const Matrix p_eb = model.precision_block(Block::external, Block::blanket);
  const Matrix p_mb = model.precision_block(Block::internal, Block::blanket);
  const Matrix p_m = model.precision_block(Block::internal, Block::internal);

  SyncMap out;
  const Matrix s_mb_pinv = pseudo_inverse(s_mb);
  out.matrix = s_eb * s_mb_pinv;
  out.precision_form = p_e.llt().solve(p_eb * pseudo_inverse(p_mb) * p_m);

  const auto iv = exists_sync_map(model, tol);
  out.exists = iv.exists;
  out.residual_kernel = iv.residual;
  out.residual_kernel_covariance = exists_sync_map_covariance(model, tol).residual;
  out.rank_internal_blanket = numerical_rank(p_mb);
  out.rank_external_blanket = numerical_rank(p_eb);

  // Projector onto Im Σ_μb = Im 𝛍; off that image the two forms may differ.
  const Matrix image_projector = s_mb * s_mb_pinv;
  out.form_disagreement =
      ((out.matrix - out.precision_form) * image_projector).cwiseAbs().maxCoeff();
  return out;
}

SyncCheck empirical_sync_check(const Matrix& samples, const Partition& partition,
                               const SyncMap& sync, const SyncCheckOptions& options) {
  if (partition.dims_blanket() != 1) {
    fail(ErrorCode::unsupported_dimension, "binned synchronisation check needs a 1-d blanket");
  }
  if (options.n_bins < 2) fail(ErrorCode::too_few_samples, "need at least two bins");
  if (samples.cols() != partition.total()) {
    fail(ErrorCode::dimension_mismatch, "samples do not match the partition");
  }
  if (samples.rows() < options.min_count) {
    fail(ErrorCode::too_few_samples, "fewer samples than the per-bin minimum");
  }
  const Index ne = partition.dims_external();
  const Index nm = partition.dims_internal();
  const Index b_col = partition.offset(Block::blanket);
  const Index m_col = partition.offset(Block::internal);
  if (sync.matrix.rows() != ne || sync.matrix.cols() != nm) {
    fail(ErrorCode::dimension_mismatch, "synchronisation map does not match the partition");
  }

  const auto b = samples.col(b_col);
  const double mean_b = b.mean();
  const double sd_b = std::sqrt((b.array() - mean_b).square().sum() /
                                static_cast<double>(std::max<Index>(1, b.size() - 1)));
  const double lo = mean_b - options.range_sd * sd_b;
  const double hi = mean_b + options.range_sd * sd_b;
  const double width = (hi - lo) / static_cast<double>(options.n_bins);

  struct Acc {
    Index count = 0;
    Vector sum_eta, sum_eta2, sum_mu, sum_diff, sum_diff2;
  };
  std::vector<Acc> acc(static_cast<std::size_t>(options.n_bins));
  for (auto& a : acc) {
    a.sum_eta = a.sum_eta2 = a.sum_diff = a.sum_diff2 = Vector::Zero(ne);
    a.sum_mu = Vector::Zero(nm);
  }
  for (Index i = 0; i < samples.rows(); ++i) {
    const double v = samples(i, b_col);
    if (!(v >= lo && v <= hi) || width <= 0.0) continue;
    auto k = static_cast<Index>((v - lo) / width);
    k = std::min(k, options.n_bins - 1);
    auto& a = acc[static_cast<std::size_t>(k)];
    const Vector eta = samples.row(i).segment(0, ne).transpose();
    const Vector mu = samples.row(i).segment(m_col, nm).transpose();
    const Vector diff = sync.matrix * mu - eta;
    ++a.count;
    a.sum_eta += eta;
    a.sum_eta2 += eta.cwiseProduct(eta);
    a.sum_mu += mu;
    a.sum_diff += diff;
    a.sum_diff2 += diff.cwiseProduct(diff);
  }

  auto standard_error = [](const Vector& sum, const Vector& sum2, Index n) {
    const double nn = static_cast<double>(n);
    const Vector mean = sum / nn;
    const Vector var = ((sum2 / nn - mean.cwiseProduct(mean)) * (nn / (nn - 1.0))).cwiseMax(0.0);
    return Vector((var / nn).cwiseSqrt());
  };

  SyncCheck out;
  for (Index k = 0; k < options.n_bins; ++k) {
    const auto& a = acc[static_cast<std::size_t>(k)];
    const double center = lo + (static_cast<double>(k) + 0.5) * width;
    if (a.count < options.min_count) {
      out.dropped_centers.push_back(center);
      continue;
    }
    const double n = static_cast<double>(a.count);
    SyncBin bin;
    bin.center = center;
    bin.count = a.count;
    bin.eta_hat = a.sum_eta / n;
    bin.sigma_mu_hat = sync.matrix * (a.sum_mu / n);
    bin.se_eta = standard_error(a.sum_eta, a.sum_eta2, a.count);
    bin.se_difference = standard_error(a.sum_diff, a.sum_diff2, a.count);
    const Vector mismatch = (bin.sigma_mu_hat - bin.eta_hat).cwiseAbs();
    out.max_abs_mismatch = std::max(out.max_abs_mismatch, mismatch.maxCoeff());
    for (Index j = 0; j < ne; ++j) {
      const double se = bin.se_difference(j);
      const double z = se > 0.0 ? mismatch(j) / se
                                : (mismatch(j) > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
      out.max_standardized_mismatch = std::max(out.max_standardized_mismatch, z);
    }
    out.bins.push_back(std::move(bin));
  }
  if (out.bins.empty()) {
    fail(ErrorCode::too_few_samples, "no bin reached the minimum sample count");
  }
  return out;
}

void write_sync_csv(std::ostream& out, const SyncCheck& check) {
  const Index ne = check.bins.empty() ? 0 : check.bins.front().eta_hat.size();
  out << "bin_center,count";
  for (const char* name : {"eta_hat", "sigma_mu_hat", "se_eta", "se_diff"}) {
    for (Index j = 0; j < ne; ++j) out << ',' << name << '_' << j;
  }
  out << '\n';
  for (const auto& bin : check.bins) {
    out << csv::number(bin.center) << ',' << bin.count;
    for (const Vector* v : {&bin.eta_hat, &bin.sigma_mu_hat, &bin.se_eta, &bin.se_difference}) {
      for (Index j = 0; j < v->size(); ++j) csv::field(out, (*v)(j));
    }
    out << '\n';
  }
}

}  // namespace bayesmech
