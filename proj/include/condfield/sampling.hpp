#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "condfield/operators.hpp"
#include "condfield/rng.hpp"
#include "condfield/spectral.hpp"

namespace condfield {

/// Complex coordinates use <|t|^2> = 1 with Re and Im each of variance 1/2.
enum class FieldKind { real, complex };

/// rejection: exact draws from the conditional law. tilted: importance
/// sampling for the deep tail. automatic: rejection when the predicted
/// acceptance is at least 1e-4, tilted otherwise.
enum class SamplingMethod { rejection, tilted, automatic };

inline constexpr double kRejectionAcceptanceFloor = 1e-4;

std::string to_string(FieldKind kind);
std::string to_string(SamplingMethod method);

/**
 * Karhunen-Loeve representation aligned with the eigenbasis of M:
 *
 *   phi = sum_i t_i C^{1/2}|lambda_i>,   Q = sum_i lambda_i |t_i|^2
 *
 * All vectors are weight-normalized; eigenvalues are descending and include
 * the zero eigenspace so the expansion is complete. Eigenvalues inside the
 * spectrum's zero band are stored as exact zeros.
 */
struct KLBasis {
  FieldKind kind = FieldKind::real;
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;
  Eigen::MatrixXd transport;  // column i is C^{1/2}|lambda_i>
  std::vector<DegeneracyGroup> positive_groups;
  std::vector<DegeneracyGroup> negative_groups;
  std::size_t positive_count = 0;
  std::size_t negative_count = 0;

  Eigen::Index dim() const { return eigenvalues.size(); }
  std::size_t g1() const;
  const DegeneracyGroup& top_group() const;
  Eigen::VectorXd nonzero_eigenvalues() const;
};

KLBasis kl_basis(const OperatorMatrix& covariance, const Spectrum& m_spectrum,
                 FieldKind kind);
KLBasis kl_basis_from_root(const OperatorMatrix& c_half, const Spectrum& m_spectrum,
                           FieldKind kind);
/// Root, M and its spectrum in one go.
KLBasis make_kl_basis(const OperatorMatrix& covariance, const LowRankForm& observable,
                      FieldKind kind, const SpectrumOptions& options = {});

struct FieldSample {
  Eigen::VectorXcd field;        // weight-normalized; zero imaginary part for real fields
  Eigen::VectorXcd coordinates;  // t_i in the basis of M
  double q = 0.0;
  double weight = 1.0;  // unnormalized importance weight, 1 for exact draws
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

FieldSample sample_unconditional(const KLBasis& basis, std::uint64_t seed,
                                 std::uint64_t stream = 0);

/**
 * Draws coordinate vectors restricted to {Q > threshold}.
 *
 * Rejection proposals are unconditional. Tilted proposals scale the variance
 * of every coordinate outside the top group by (1 - c lambda_i)^{-1}
 * (complex) or (1 - 2 c lambda_i)^{-1} (real); the top group keeps its
 * isotropic direction and its radius is drawn from the Gamma law truncated
 * to {Q > threshold}. The log-weight makes the draw an unbiased estimate of
 * P(Q > threshold).
 */
class CoordinateSampler {
 public:
  /// eigenvalues descending; `top_size` leading entries form the top group.
  CoordinateSampler(Eigen::VectorXd eigenvalues, std::size_t top_size, FieldKind kind,
                    double threshold, SamplingMethod method,
                    std::optional<double> tilt = std::nullopt);

  /// Writes one proposal. Returns false for a rejected proposal.
  bool draw(Philox4x32& rng, Eigen::Ref<Eigen::VectorXcd> t, double& q,
            double& log_weight) const;

  /// Default tilt: (1/l1 + 1/l_{g1+1}) / 2 (complex) or half that (real), with
  /// 1/l_{g1+1} -> 2/l1 when no positive eigenvalue follows the top group.
  static double default_tilt(const Eigen::VectorXd& eigenvalues, std::size_t top_size,
                             FieldKind kind);

  SamplingMethod method() const { return method_; }
  double tilt() const { return tilt_; }
  double threshold() const { return threshold_; }
  double predicted_acceptance() const { return predicted_acceptance_; }
  Eigen::Index dim() const { return eigenvalues_.size(); }
  FieldKind kind() const { return kind_; }

 private:
  Eigen::VectorXd eigenvalues_;
  std::size_t top_size_;
  FieldKind kind_;
  double threshold_;
  SamplingMethod method_;
  double tilt_ = 0.0;
  double predicted_acceptance_ = 1.0;
  Eigen::VectorXd proposal_scale_;  // per-coordinate standard deviation multiplier
  std::vector<Eigen::Index> active_;   // lambda != 0
  std::vector<Eigen::Index> passive_;  // lambda == 0
  double log_normalizer_ = 0.0;
};

/// One block of accepted draws; each block owns a distinct RNG stream.
struct BlockDraw {
  std::size_t block = 0;
  Eigen::MatrixXcd coordinates;  // dim x accepted
  Eigen::VectorXd q;
  Eigen::VectorXd log_weight;
  std::size_t proposals = 0;
};

struct BlockPlan {
  std::uint64_t seed = 0;
  std::uint64_t stream_offset = 0;
  std::size_t samples = 0;      // accepted draws wanted
  std::size_t budget = 0;       // proposal cap (0: 1000 * samples for rejection)
  std::size_t block_size = 256;
};

struct BlockSummary {
  std::size_t accepted = 0;
  std::size_t proposals = 0;
  std::size_t blocks = 0;
};

/**
 * Runs the sampler over fixed-size blocks in parallel. Block b uses stream
 * stream_offset + b, so the draws do not depend on the worker count.
 * `consume` is called once per block, possibly concurrently.
 */
BlockSummary draw_blocks(const CoordinateSampler& sampler, const BlockPlan& plan,
                         const std::function<void(const BlockDraw&)>& consume);

struct ConditionalOptions {
  double threshold = -std::numeric_limits<double>::infinity();
  SamplingMethod method = SamplingMethod::automatic;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::size_t budget = 1'000'000;  // proposals
  std::optional<double> tilt;
};

/// FieldSample stream conditioned on Q > threshold.
class ConditionalSampler {
 public:
  ConditionalSampler(const KLBasis& basis, const ConditionalOptions& options);

  /// Next accepted sample; nullopt once the budget is spent. Throws
  /// NumericalError if the budget ran out before any acceptance.
  std::optional<FieldSample> next();

  SamplingMethod method() const { return sampler_.method(); }
  double tilt() const { return sampler_.tilt(); }
  std::size_t proposals() const { return proposals_; }
  std::size_t accepted() const { return accepted_; }
  double acceptance_rate() const {
    return proposals_ ? static_cast<double>(accepted_) / static_cast<double>(proposals_) : 0.0;
  }

 private:
  const KLBasis* basis_;
  ConditionalOptions options_;
  CoordinateSampler sampler_;
  Philox4x32 rng_;
  std::size_t proposals_ = 0;
  std::size_t accepted_ = 0;
};

/// Eigenvalue list of a quadratic form in independent standard coordinates.
struct TailModel {
  std::vector<double> eigenvalues;  // nonzero, descending
  FieldKind kind = FieldKind::real;
  std::size_t g1 = 0;               // 0 when no eigenvalue is positive

  static TailModel from_eigenvalues(std::vector<double> eigenvalues, FieldKind kind,
                                    double cluster_tol = 1e-6);
  static TailModel from_basis(const KLBasis& basis);
};

/**
 * P(Q > u) by inverting the characteristic function
 *   complex: prod (1 - i k lambda)^{-1},  real: prod (1 - 2 i k lambda)^{-1/2}
 * through the Gil-Pelaez/Imhof integral, evaluated with double-exponential
 * Fourier quadrature. Throws NumericalError when the error estimate exceeds
 * `target_abs_error`.
 */
double tail_prob_cf(const TailModel& model, double u, double target_abs_error = 1e-8);

/// Leading-order residue asymptotics of the density of Q and of P(Q > u).
struct TailAsymptote {
  double density = 0.0;
  double probability = 0.0;
  double constant = 0.0;  // product over eigenvalues outside the top group
};

TailAsymptote tail_asymptotic(const TailModel& model, double u);

struct McEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
  std::size_t samples = 0;
  std::size_t proposals = 0;
  double effective_samples = 0.0;
  SamplingMethod method = SamplingMethod::rejection;
  double tilt = 0.0;
  std::uint64_t seed = 0;
};

/// Monte Carlo P(Q > u): direct indicator average (rejection) or mean tilted weight.
McEstimate tail_prob_mc(const TailModel& model, double u, std::size_t samples,
                        SamplingMethod method, std::uint64_t seed);

}  // namespace condfield
