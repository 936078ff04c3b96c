#include "condfield/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <exception>
#include <mutex>

#include <boost/math/special_functions/gamma.hpp>

#include "condfield/error.hpp"

namespace condfield {

std::string to_string(FieldKind kind) {
  return kind == FieldKind::real ? "real" : "complex";
}

std::string to_string(SamplingMethod method) {
  switch (method) {
    case SamplingMethod::rejection: return "rejection";
    case SamplingMethod::tilted: return "tilted";
    case SamplingMethod::automatic: return "automatic";
  }
  return "unknown";
}

std::size_t KLBasis::g1() const {
  if (positive_groups.empty()) throw InvalidArgument("spectrum has no positive eigenvalue");
  return positive_groups.front().size;
}

const DegeneracyGroup& KLBasis::top_group() const {
  if (positive_groups.empty()) throw InvalidArgument("spectrum has no positive eigenvalue");
  return positive_groups.front();
}

Eigen::VectorXd KLBasis::nonzero_eigenvalues() const {
  Eigen::VectorXd out(positive_count + negative_count);
  const auto n = eigenvalues.size();
  for (std::size_t i = 0; i < positive_count; ++i) out[i] = eigenvalues[i];
  for (std::size_t j = 0; j < negative_count; ++j)
    out[positive_count + j] = eigenvalues[n - negative_count + j];
  return out;
}

KLBasis kl_basis_from_root(const OperatorMatrix& c_half, const Spectrum& m_spectrum,
                           FieldKind kind) {
  if (c_half.dim() != m_spectrum.values.size())
    throw InvalidArgument("covariance root and spectrum dimensions differ");
  KLBasis basis;
  basis.kind = kind;
  // Round-off eigenvalues inside the zero band are stored as exact zeros so
  // they cannot drive the tilt or the tail model.
  basis.eigenvalues = m_spectrum.values;
  for (auto& v : basis.eigenvalues)
    if (std::abs(v) <= m_spectrum.zero_threshold) v = 0.0;
  basis.eigenvectors = m_spectrum.vectors;
  basis.transport = c_half.matrix * m_spectrum.vectors;
  basis.positive_groups = m_spectrum.positive_groups;
  basis.negative_groups = m_spectrum.negative_groups;
  basis.positive_count = m_spectrum.positive_count;
  basis.negative_count = m_spectrum.negative_count;
  return basis;
}

KLBasis kl_basis(const OperatorMatrix& covariance, const Spectrum& m_spectrum,
                 FieldKind kind) {
  return kl_basis_from_root(sqrt_psd(covariance), m_spectrum, kind);
}

KLBasis make_kl_basis(const OperatorMatrix& covariance, const LowRankForm& observable,
                      FieldKind kind, const SpectrumOptions& options) {
  const auto root = sqrt_psd(covariance);
  const auto m = build_M_from_root(root, observable);
  return kl_basis_from_root(root, eig_symmetric(m, options), kind);
}

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

// Standard coordinate: CN(0,1) for complex fields, N(0,1) for real ones.
std::complex<double> standard_coordinate(std::normal_distribution<double>& nd,
                                         Philox4x32& rng, FieldKind kind) {
  if (kind == FieldKind::real) return {nd(rng), 0.0};
  const double re = nd(rng);
  const double im = nd(rng);
  return {re * kInvSqrt2, im * kInvSqrt2};
}

Eigen::VectorXcd field_from(const KLBasis& basis, const Eigen::VectorXcd& t) {
  Eigen::VectorXcd field(basis.dim());
  field.real() = basis.transport * t.real();
  if (basis.kind == FieldKind::complex)
    field.imag() = basis.transport * t.imag();
  else
    field.imag().setZero();
  return field;
}

double q_of(const Eigen::VectorXd& eigenvalues, const Eigen::Ref<const Eigen::VectorXcd>& t) {
  return eigenvalues.dot(t.cwiseAbs2());
}

}  // namespace

FieldSample sample_unconditional(const KLBasis& basis, std::uint64_t seed,
                                 std::uint64_t stream) {
  Philox4x32 rng(seed, stream);
  std::normal_distribution<double> nd;
  FieldSample s;
  s.coordinates.resize(basis.dim());
  for (Eigen::Index i = 0; i < basis.dim(); ++i)
    s.coordinates[i] = standard_coordinate(nd, rng, basis.kind);
  s.field = field_from(basis, s.coordinates);
  s.q = q_of(basis.eigenvalues, s.coordinates);
  s.seed = seed;
  s.stream = stream;
  return s;
}

double CoordinateSampler::default_tilt(const Eigen::VectorXd& eigenvalues,
                                       std::size_t top_size, FieldKind kind) {
  if (top_size == 0 || eigenvalues.size() == 0 || !(eigenvalues[0] > 0.0))
    throw InvalidArgument("tilted sampling needs a positive top eigenvalue");
  const double l1 = eigenvalues[0];
  double inv_next = 2.0 / l1;
  if (static_cast<Eigen::Index>(top_size) < eigenvalues.size() &&
      eigenvalues[static_cast<Eigen::Index>(top_size)] > 0.0)
    inv_next = 1.0 / eigenvalues[static_cast<Eigen::Index>(top_size)];
  const double c = 0.5 * (1.0 / l1 + inv_next);
  return kind == FieldKind::complex ? c : 0.5 * c;
}

CoordinateSampler::CoordinateSampler(Eigen::VectorXd eigenvalues, std::size_t top_size,
                                     FieldKind kind, double threshold,
                                     SamplingMethod method, std::optional<double> tilt)
    : eigenvalues_(std::move(eigenvalues)),
      top_size_(top_size),
      kind_(kind),
      threshold_(threshold),
      method_(method) {
  const auto n = eigenvalues_.size();
  if (n == 0) throw InvalidArgument("empty spectrum");
  if (static_cast<Eigen::Index>(top_size_) > n)
    throw InvalidArgument("top group larger than the spectrum");
  for (Eigen::Index i = 1; i < n; ++i)
    if (eigenvalues_[i] > eigenvalues_[i - 1])
      throw InvalidArgument("eigenvalues must be sorted in descending order");
  if (std::isnan(threshold_) || threshold_ == std::numeric_limits<double>::infinity())
    throw InvalidArgument("threshold must be finite or -inf");
  for (Eigen::Index i = 0; i < n; ++i) (eigenvalues_[i] != 0.0 ? active_ : passive_).push_back(i);

  if (method_ == SamplingMethod::automatic) {
    if (std::isinf(threshold_)) {
      predicted_acceptance_ = 1.0;
    } else {
      std::vector<double> ev(eigenvalues_.data(), eigenvalues_.data() + n);
      predicted_acceptance_ =
          tail_prob_cf(TailModel::from_eigenvalues(std::move(ev), kind_), threshold_);
    }
    const bool can_tilt = top_size_ > 0 && eigenvalues_[0] > 0.0;
    method_ = (predicted_acceptance_ >= kRejectionAcceptanceFloor || !can_tilt)
                  ? SamplingMethod::rejection
                  : SamplingMethod::tilted;
  }

  proposal_scale_ = Eigen::VectorXd::Ones(n);
  if (method_ == SamplingMethod::rejection) return;

  if (top_size_ == 0 || !(eigenvalues_[0] > 0.0))
    throw InvalidArgument("tilted sampling needs a positive top eigenvalue");
  tilt_ = tilt ? *tilt : default_tilt(eigenvalues_, top_size_, kind_);
  if (!(tilt_ >= 0.0) || !std::isfinite(tilt_)) throw InvalidArgument("tilt must be >= 0");
  const double factor = kind_ == FieldKind::complex ? 1.0 : 2.0;
  log_normalizer_ = 0.0;
  for (Eigen::Index i = static_cast<Eigen::Index>(top_size_); i < n; ++i) {
    const double s = 1.0 - factor * tilt_ * eigenvalues_[i];
    if (!(s > 0.0))
      throw InvalidArgument("tilt too large for eigenvalue " + std::to_string(eigenvalues_[i]));
    proposal_scale_[i] = 1.0 / std::sqrt(s);
    log_normalizer_ -= (kind_ == FieldKind::complex ? 1.0 : 0.5) * std::log(s);
  }
}

bool CoordinateSampler::draw(Philox4x32& rng, Eigen::Ref<Eigen::VectorXcd> t, double& q,
                             double& log_weight) const {
  std::normal_distribution<double> nd;
  const auto n = eigenvalues_.size();
  if (method_ == SamplingMethod::rejection) {
    // Coordinates with lambda = 0 do not enter Q; draw them only on acceptance.
    q = 0.0;
    for (const auto i : active_) {
      t[i] = standard_coordinate(nd, rng, kind_);
      q += eigenvalues_[i] * std::norm(t[i]);
    }
    log_weight = 0.0;
    if (!(q > threshold_)) return false;
    for (const auto i : passive_) t[i] = standard_coordinate(nd, rng, kind_);
    return true;
  }

  const auto top = static_cast<Eigen::Index>(top_size_);
  double x = 0.0;
  for (Eigen::Index i = top; i < n; ++i) {
    t[i] = proposal_scale_[i] * standard_coordinate(nd, rng, kind_);
    x += eigenvalues_[i] * std::norm(t[i]);
  }
  // Isotropic direction in the top group; the radius is drawn conditionally.
  double norm2 = 0.0;
  for (Eigen::Index i = 0; i < top; ++i) {
    t[i] = standard_coordinate(nd, rng, kind_);
    norm2 += std::norm(t[i]);
  }
  double lambda_eff = 0.0;
  for (Eigen::Index i = 0; i < top; ++i) {
    t[i] /= std::sqrt(norm2);
    lambda_eff += eigenvalues_[i] * std::norm(t[i]);
  }
  const bool complex = kind_ == FieldKind::complex;
  const double shape = complex ? static_cast<double>(top_size_) : 0.5 * static_cast<double>(top_size_);
  double lower = 0.0;
  if (std::isfinite(threshold_)) lower = std::max(0.0, (threshold_ - x) / lambda_eff);
  if (!complex) lower *= 0.5;
  const double tail = boost::math::gamma_q(shape, lower);
  if (!(tail > 0.0)) throw NumericalError("threshold beyond double precision range");
  const double y = boost::math::gamma_q_inv(shape, rng.uniform_open() * tail);
  const double radius2 = complex ? y : 2.0 * y;
  t.head(top) *= std::sqrt(radius2);

  q = q_of(eigenvalues_, t);
  log_weight = -tilt_ * x + log_normalizer_ + std::log(tail);
  return true;
}

BlockSummary draw_blocks(const CoordinateSampler& sampler, const BlockPlan& plan,
                         const std::function<void(const BlockDraw&)>& consume) {
  if (plan.samples == 0) throw InvalidArgument("sample count must be positive");
  if (plan.block_size == 0) throw InvalidArgument("block size must be positive");
  const std::size_t blocks = (plan.samples + plan.block_size - 1) / plan.block_size;
  std::size_t budget = plan.budget;
  if (budget == 0) {
    const double p = std::max(sampler.predicted_acceptance(), kRejectionAcceptanceFloor);
    budget = plan.samples * static_cast<std::size_t>(std::ceil(4.0 / p)) + 1000;
  }
  if (budget < plan.samples && sampler.method() == SamplingMethod::tilted) budget = plan.samples;

  std::vector<std::size_t> accepted(blocks, 0), proposals(blocks, 0);
  std::exception_ptr failure;
  std::mutex failure_mutex;

#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t b = 0; b < blocks; ++b) {
    try {
      const std::size_t want = std::min(plan.block_size, plan.samples - b * plan.block_size);
      const std::size_t cap = std::max<std::size_t>(
          want, static_cast<std::size_t>(std::ceil(static_cast<double>(budget) *
                                                   static_cast<double>(want) /
                                                   static_cast<double>(plan.samples))));
      Philox4x32 rng(plan.seed, plan.stream_offset + b);
      BlockDraw draw;
      draw.block = b;
      draw.coordinates.resize(sampler.dim(), static_cast<Eigen::Index>(want));
      draw.q.resize(static_cast<Eigen::Index>(want));
      draw.log_weight.resize(static_cast<Eigen::Index>(want));
      Eigen::VectorXcd t(sampler.dim());
      std::size_t got = 0;
      while (got < want && draw.proposals < cap) {
        double q = 0.0, lw = 0.0;
        ++draw.proposals;
        if (!sampler.draw(rng, t, q, lw)) continue;
        draw.coordinates.col(static_cast<Eigen::Index>(got)) = t;
        draw.q[static_cast<Eigen::Index>(got)] = q;
        draw.log_weight[static_cast<Eigen::Index>(got)] = lw;
        ++got;
      }
      if (got < want) {
        draw.coordinates.conservativeResize(Eigen::NoChange, static_cast<Eigen::Index>(got));
        draw.q.conservativeResize(static_cast<Eigen::Index>(got));
        draw.log_weight.conservativeResize(static_cast<Eigen::Index>(got));
      }
      accepted[b] = got;
      proposals[b] = draw.proposals;
      consume(draw);
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  BlockSummary summary;
  summary.blocks = blocks;
  for (std::size_t b = 0; b < blocks; ++b) {
    summary.accepted += accepted[b];
    summary.proposals += proposals[b];
  }
  if (summary.accepted == 0)
    throw NumericalError("rejection budget of " + std::to_string(budget) +
                         " proposals exhausted with zero acceptances");
  return summary;
}

namespace {

CoordinateSampler make_sampler(const KLBasis& basis, const ConditionalOptions& options) {
  const std::size_t top = basis.positive_groups.empty() ? 0 : basis.top_group().size;
  return CoordinateSampler(basis.eigenvalues, top, basis.kind, options.threshold,
                           options.method, options.tilt);
}

}  // namespace

ConditionalSampler::ConditionalSampler(const KLBasis& basis, const ConditionalOptions& options)
    : basis_(&basis),
      options_(options),
      sampler_(make_sampler(basis, options)),
      rng_(options.seed, options.stream) {
  if (options_.budget == 0) throw InvalidArgument("budget must be positive");
}

std::optional<FieldSample> ConditionalSampler::next() {
  Eigen::VectorXcd t(basis_->dim());
  while (proposals_ < options_.budget) {
    double q = 0.0, lw = 0.0;
    ++proposals_;
    if (!sampler_.draw(rng_, t, q, lw)) continue;
    ++accepted_;
    FieldSample s;
    s.coordinates = t;
    s.field = field_from(*basis_, t);
    s.q = q;
    s.weight = std::exp(lw);
    s.seed = options_.seed;
    s.stream = options_.stream;
    return s;
  }
  if (accepted_ == 0)
    throw NumericalError("rejection budget exhausted with zero acceptances");
  return std::nullopt;
}

McEstimate tail_prob_mc(const TailModel& model, double u, std::size_t samples,
                        SamplingMethod method, std::uint64_t seed) {
  if (samples < 2) throw InvalidArgument("need at least two samples");
  if (model.eigenvalues.empty()) throw InvalidArgument("empty spectrum");
  const Eigen::VectorXd ev = Eigen::Map<const Eigen::VectorXd>(
      model.eigenvalues.data(), static_cast<Eigen::Index>(model.eigenvalues.size()));
  CoordinateSampler probe(ev, model.g1, model.kind, u, method);
  const bool direct = probe.method() == SamplingMethod::rejection;
  const CoordinateSampler sampler =
      direct ? CoordinateSampler(ev, model.g1, model.kind,
                                 -std::numeric_limits<double>::infinity(),
                                 SamplingMethod::rejection)
             : probe;

  BlockPlan plan;
  plan.seed = seed;
  plan.samples = samples;
  plan.budget = samples;
  const std::size_t blocks = (samples + plan.block_size - 1) / plan.block_size;
  std::vector<double> sum_w(blocks, 0.0), sum_w2(blocks, 0.0);
  const auto summary = draw_blocks(sampler, plan, [&](const BlockDraw& d) {
    double s = 0.0, s2 = 0.0;
    for (Eigen::Index j = 0; j < d.q.size(); ++j) {
      const double w = direct ? (d.q[j] > u ? 1.0 : 0.0) : std::exp(d.log_weight[j]);
      s += w;
      s2 += w * w;
    }
    sum_w[d.block] = s;
    sum_w2[d.block] = s2;
  });

  double s = 0.0, s2 = 0.0;
  for (std::size_t b = 0; b < blocks; ++b) {
    s += sum_w[b];
    s2 += sum_w2[b];
  }
  const auto n = static_cast<double>(summary.accepted);
  McEstimate out;
  out.estimate = s / n;
  const double var = std::max(0.0, (s2 - n * out.estimate * out.estimate) / (n - 1.0));
  out.standard_error = std::sqrt(var / n);
  out.samples = summary.accepted;
  out.proposals = summary.proposals;
  out.effective_samples = direct ? n : (s2 > 0.0 ? s * s / s2 : 0.0);
  out.method = sampler.method();
  out.tilt = sampler.tilt();
  out.seed = seed;
  return out;
}

}  // namespace condfield
