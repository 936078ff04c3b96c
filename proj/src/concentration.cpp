#include "condfield/concentration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "condfield/error.hpp"

namespace condfield {

std::string to_string(SplitMode mode) {
  return mode == SplitMode::upper ? "upper" : "two_sided";
}

std::vector<Eigen::Index> extreme_columns(const KLBasis& basis, SplitMode mode) {
  std::vector<Eigen::Index> cols;
  const auto& top = basis.top_group();
  for (std::size_t k = 0; k < top.size; ++k)
    cols.push_back(static_cast<Eigen::Index>(top.begin + k));
  if (mode == SplitMode::two_sided && !basis.negative_groups.empty()) {
    const auto& bottom = basis.negative_groups.front();
    for (std::size_t k = 0; k < bottom.size; ++k)
      cols.push_back(static_cast<Eigen::Index>(bottom.begin + k));
  }
  return cols;
}

FieldSplit split_field(const FieldSample& sample, const KLBasis& basis, SplitMode mode) {
  if (sample.coordinates.size() != basis.dim() || sample.field.size() != basis.dim())
    throw InvalidArgument("split_field: sample does not belong to this basis");
  FieldSplit out;
  out.mean_part = Eigen::VectorXcd::Zero(basis.dim());
  for (const auto col : extreme_columns(basis, mode))
    out.mean_part += sample.coordinates[col] * basis.transport.col(col).cast<std::complex<double>>();
  out.fluctuation = sample.field - out.mean_part;
  return out;
}

Proportion wilson_interval(double p, double n, double z) {
  if (!(n > 0.0)) throw InvalidArgument("wilson_interval: effective sample size must be positive");
  p = std::clamp(p, 0.0, 1.0);
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double centre = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  return {p, std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

namespace {

// Orthonormal basis of the column span (rank-revealing QR).
Eigen::MatrixXd orthonormal_span(const Eigen::MatrixXd& a) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-10);
  const auto rank = qr.rank();
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), rank);
  return q;
}

struct SampleStats {
  double weight, mean_norm2, ratio, similarity, residual;
  bool fluct, small;
};

double weighted_median(std::vector<std::pair<double, double>> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  double total = 0.0;
  for (const auto& v : values) total += v.second;
  double acc = 0.0;
  for (const auto& v : values) {
    acc += v.second;
    if (acc >= 0.5 * total) return v.first;
  }
  return values.back().first;
}

}  // namespace

ConcentrationRecord estimate_Pu(const KLBasis& basis, double u, const ConcentrationOptions& opt,
                                const Eigen::MatrixXd* reference) {
  if (!(opt.epsilon > 0.0)) throw InvalidArgument("epsilon must be positive");
  if (!(opt.floor > 0.0)) throw InvalidArgument("floor a must be positive");
  if (reference && reference->rows() != basis.dim())
    throw InvalidArgument("reference span has the wrong dimension");

  const auto cols = extreme_columns(basis, opt.mode);
  const auto k = static_cast<Eigen::Index>(cols.size());
  Eigen::MatrixXd bar_transport(basis.dim(), k);
  for (Eigen::Index j = 0; j < k; ++j) bar_transport.col(j) = basis.transport.col(cols[j]);
  const Eigen::MatrixXd span = orthonormal_span(reference ? *reference : bar_transport);

  const CoordinateSampler sampler(basis.eigenvalues, basis.top_group().size, basis.kind, u,
                                  opt.method, opt.tilt);
  BlockPlan plan;
  plan.seed = opt.seed;
  plan.stream_offset = opt.stream_offset;
  plan.samples = opt.samples;
  plan.budget = opt.budget;
  plan.block_size = opt.block_size;
  const std::size_t blocks = (opt.samples + opt.block_size - 1) / opt.block_size;
  std::vector<std::vector<SampleStats>> per_block(blocks);
  const bool complex = basis.kind == FieldKind::complex;

  const auto summary = draw_blocks(sampler, plan, [&](const BlockDraw& d) {
    const Eigen::Index m = d.q.size();
    const Eigen::MatrixXd t_re = d.coordinates.real();
    const Eigen::MatrixXd t_im = d.coordinates.imag();
    Eigen::MatrixXd bar_t_re(k, m), bar_t_im(k, m);
    for (Eigen::Index j = 0; j < k; ++j) {
      bar_t_re.row(j) = t_re.row(cols[j]);
      bar_t_im.row(j) = t_im.row(cols[j]);
    }
    // Real and imaginary parts of phi and phi-bar, one column per sample.
    const Eigen::MatrixXd phi_re = basis.transport * t_re;
    const Eigen::MatrixXd bar_re = bar_transport * bar_t_re;
    Eigen::MatrixXd phi_im, bar_im;
    if (complex) {
      phi_im = basis.transport * t_im;
      bar_im = bar_transport * bar_t_im;
    }
    const Eigen::MatrixXd proj_re = span.transpose() * phi_re;
    Eigen::MatrixXd proj_im;
    if (complex) proj_im = span.transpose() * phi_im;

    auto& out = per_block[d.block];
    out.resize(static_cast<std::size_t>(m));
    for (Eigen::Index j = 0; j < m; ++j) {
      double phi2 = phi_re.col(j).squaredNorm();
      double bar2 = bar_re.col(j).squaredNorm();
      double delta2 = (phi_re.col(j) - bar_re.col(j)).squaredNorm();
      double cross = bar_re.col(j).dot(phi_re.col(j) - bar_re.col(j));
      double proj2 = proj_re.col(j).squaredNorm();
      if (complex) {
        phi2 += phi_im.col(j).squaredNorm();
        bar2 += bar_im.col(j).squaredNorm();
        delta2 += (phi_im.col(j) - bar_im.col(j)).squaredNorm();
        cross += bar_im.col(j).dot(phi_im.col(j) - bar_im.col(j));
        proj2 += proj_im.col(j).squaredNorm();
      }
      SampleStats s;
      s.weight = std::exp(d.log_weight[j]);
      s.mean_norm2 = bar2;
      s.ratio = phi2 > 0.0 ? delta2 / phi2 : 0.0;
      s.similarity = phi2 > 0.0 ? std::sqrt(proj2 / phi2) : 0.0;
      s.residual = phi2 > 0.0 ? std::abs(phi2 - (bar2 + delta2 + 2.0 * cross)) / phi2 : 0.0;
      s.fluct = delta2 > opt.epsilon * bar2;
      s.small = bar2 < opt.floor;
      out[static_cast<std::size_t>(j)] = s;
    }
  });

  ConcentrationRecord r;
  r.u = u;
  r.epsilon = opt.epsilon;
  r.floor = opt.floor;
  r.samples = summary.accepted;
  r.proposals = summary.proposals;
  r.method = sampler.method();
  r.tilt = sampler.tilt();
  r.seed = opt.seed;

  double sw = 0.0, sw2 = 0.0, s_fluct = 0.0, s_small = 0.0, s_ratio = 0.0, s_sim = 0.0;
  r.min_mean_norm2 = std::numeric_limits<double>::infinity();
  std::vector<std::pair<double, double>> ratios;
  ratios.reserve(summary.accepted);
  for (const auto& block : per_block) {
    for (const auto& s : block) {
      sw += s.weight;
      sw2 += s.weight * s.weight;
      s_fluct += s.fluct ? s.weight : 0.0;
      s_small += s.small ? s.weight : 0.0;
      s_ratio += s.weight * s.ratio;
      s_sim += s.weight * s.similarity;
      r.min_mean_norm2 = std::min(r.min_mean_norm2, s.mean_norm2);
      r.max_identity_residual = std::max(r.max_identity_residual, s.residual);
      ratios.emplace_back(s.ratio, s.weight);
    }
  }
  if (!(sw > 0.0)) throw NumericalError("all importance weights vanished");
  r.effective_samples = sw * sw / sw2;
  if (r.effective_samples < opt.min_effective_samples)
    throw NumericalError("effective sample size " + std::to_string(r.effective_samples) +
                         " below the floor " + std::to_string(opt.min_effective_samples));
  r.fluctuation = wilson_interval(s_fluct / sw, r.effective_samples);
  r.small_mean = wilson_interval(s_small / sw, r.effective_samples);
  r.mean_ratio = s_ratio / sw;
  r.mean_similarity = s_sim / sw;
  r.median_ratio = weighted_median(std::move(ratios));

  const auto n = static_cast<double>(r.samples);
  if (r.method == SamplingMethod::rejection) {
    const auto np = static_cast<double>(r.proposals);
    r.tail_estimate = n / np;
    r.tail_standard_error = std::sqrt(r.tail_estimate * (1.0 - r.tail_estimate) / np);
  } else {
    r.tail_estimate = sw / n;
    const double var = std::max(0.0, (sw2 - n * r.tail_estimate * r.tail_estimate) / (n - 1.0));
    r.tail_standard_error = std::sqrt(var / n);
  }
  return r;
}

void assess_trend(ConcentrationCurve& c) {
  const auto& rs = c.records;
  c.fluctuation_strictly_decreasing = true;
  c.fluctuation_non_increasing = true;
  c.small_mean_non_increasing = true;
  c.similarity_increasing = true;
  for (std::size_t k = 1; k < rs.size(); ++k) {
    const auto& a = rs[k - 1];
    const auto& b = rs[k];
    c.fluctuation_strictly_decreasing &= b.fluctuation.high < a.fluctuation.low;
    c.fluctuation_non_increasing &= b.fluctuation.low <= a.fluctuation.high;
    c.small_mean_non_increasing &= b.small_mean.low <= a.small_mean.high;
    c.similarity_increasing &= b.mean_similarity > a.mean_similarity;
  }
  c.endpoint_decrease =
      rs.size() >= 2 && rs.back().fluctuation.high < rs.front().fluctuation.low;
}

ConcentrationCurve concentration_curve(const KLBasis& basis, const std::vector<double>& u_grid,
                                       const ConcentrationOptions& options,
                                       const Eigen::MatrixXd* reference) {
  if (u_grid.size() < 3) throw InvalidArgument("u grid needs at least three points");
  for (std::size_t k = 1; k < u_grid.size(); ++k)
    if (!(u_grid[k] > u_grid[k - 1])) throw InvalidArgument("u grid must be increasing");
  ConcentrationCurve curve;
  for (std::size_t k = 0; k < u_grid.size(); ++k) {
    auto opt = options;
    opt.stream_offset = options.stream_offset + (static_cast<std::uint64_t>(k) << 32);
    curve.records.push_back(estimate_Pu(basis, u_grid[k], opt, reference));
  }
  assess_trend(curve);
  return curve;
}

double median_Q(const KLBasis& basis) {
  const auto model = TailModel::from_basis(basis);
  if (model.eigenvalues.empty()) return 0.0;
  double lo = std::min(0.0, model.eigenvalues.back()), hi = std::max(0.0, model.eigenvalues.front());
  // widen until the bracket holds the median
  while (tail_prob_cf(model, lo) < 0.5) lo = 2.0 * lo - 1.0;
  while (tail_prob_cf(model, hi) > 0.5) hi = 2.0 * hi + 1.0;
  for (int it = 0; it < 200 && hi - lo > 1e-12 * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (tail_prob_cf(model, mid) > 0.5 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double default_floor(const KLBasis& basis, SplitMode mode, std::uint64_t seed,
                     std::size_t samples) {
  const double u = median_Q(basis);
  const CoordinateSampler sampler(basis.eigenvalues, basis.top_group().size, basis.kind, u,
                                  SamplingMethod::rejection);
  const auto cols = extreme_columns(basis, mode);
  BlockPlan plan;
  plan.seed = seed;
  plan.stream_offset = std::uint64_t{1} << 62;
  plan.samples = samples;
  plan.budget = 20 * samples;
  const std::size_t blocks = (samples + plan.block_size - 1) / plan.block_size;
  std::vector<std::vector<double>> per_block(blocks);
  draw_blocks(sampler, plan, [&](const BlockDraw& d) {
    auto& out = per_block[d.block];
    for (Eigen::Index j = 0; j < d.q.size(); ++j) {
      Eigen::VectorXcd bar = Eigen::VectorXcd::Zero(basis.dim());
      for (const auto c : cols)
        bar += d.coordinates(c, j) * basis.transport.col(c).cast<std::complex<double>>();
      out.push_back(bar.squaredNorm());
    }
  });
  std::vector<double> all;
  for (const auto& b : per_block) all.insert(all.end(), b.begin(), b.end());
  const auto mid = all.begin() + static_cast<std::ptrdiff_t>(all.size() / 2);
  std::nth_element(all.begin(), mid, all.end());
  return 0.1 * *mid;
}

}  // namespace condfield
