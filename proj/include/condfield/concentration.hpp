#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "condfield/sampling.hpp"

namespace condfield {

/// upper: top positive group only. two_sided: both extreme groups.
enum class SplitMode { upper, two_sided };

std::string to_string(SplitMode mode);

struct FieldSplit {
  Eigen::VectorXcd mean_part;    // phi-bar
  Eigen::VectorXcd fluctuation;  // delta-phi = phi - phi-bar
};

/// Column indices of the basis that make up phi-bar.
std::vector<Eigen::Index> extreme_columns(const KLBasis& basis, SplitMode mode);

FieldSplit split_field(const FieldSample& sample, const KLBasis& basis,
                       SplitMode mode = SplitMode::upper);

/// Proportion with a Wilson score interval computed at an effective sample size.
struct Proportion {
  double estimate = 0.0;
  double low = 0.0;
  double high = 1.0;
};

inline constexpr double kZ95 = 1.959963984540054;

Proportion wilson_interval(double p, double effective_samples, double z = kZ95);

struct ConcentrationOptions {
  double epsilon = 0.5;
  double floor = 0.0;  // a; must be positive
  std::size_t samples = 10000;
  SamplingMethod method = SamplingMethod::automatic;
  std::uint64_t seed = 0;
  std::uint64_t stream_offset = 0;
  SplitMode mode = SplitMode::upper;
  double min_effective_samples = 100.0;
  std::size_t budget = 0;  // rejection proposals, 0 picks a default
  std::optional<double> tilt;
  std::size_t block_size = 256;
};

struct ConcentrationRecord {
  double u = 0.0;
  double epsilon = 0.0;
  double floor = 0.0;
  std::size_t samples = 0;
  std::size_t proposals = 0;
  double effective_samples = 0.0;
  Proportion fluctuation;  // P_u(|dphi|^2 > eps |phibar|^2)
  Proportion small_mean;   // P_u(|phibar|^2 < a)
  double mean_ratio = 0.0;    // E_u |dphi|^2 / |phi|^2
  double median_ratio = 0.0;  // weighted median of the same ratio
  double mean_similarity = 0.0;  // E_u |P phi| / |phi| against the reference span
  double min_mean_norm2 = 0.0;
  double max_identity_residual = 0.0;
  double tail_estimate = 0.0;  // P(Q > u)
  double tail_standard_error = 0.0;
  SamplingMethod method = SamplingMethod::rejection;
  double tilt = 0.0;
  std::uint64_t seed = 0;
  std::string ci_method = "wilson-95-neff";
};

/**
 * Conditioned estimate of the concentration statistics at threshold u.
 * `reference` (optional, dim x k) is the span used for mean_similarity;
 * by default the phi-bar transport vectors. Throws NumericalError when the
 * effective sample size falls below options.min_effective_samples.
 */
ConcentrationRecord estimate_Pu(const KLBasis& basis, double u,
                                const ConcentrationOptions& options,
                                const Eigen::MatrixXd* reference = nullptr);

struct ConcentrationCurve {
  std::vector<ConcentrationRecord> records;
  bool fluctuation_strictly_decreasing = false;  // consecutive 95% CIs disjoint
  bool fluctuation_non_increasing = false;       // up to CI overlap
  bool small_mean_non_increasing = false;        // up to CI overlap
  bool endpoint_decrease = false;                // last record below first beyond CIs
  bool similarity_increasing = false;            // mean similarity strictly increases
};

/// Requires an increasing grid of at least three thresholds.
ConcentrationCurve concentration_curve(const KLBasis& basis, const std::vector<double>& u_grid,
                                       const ConcentrationOptions& options,
                                       const Eigen::MatrixXd* reference = nullptr);

/// Trend flags for an already computed record list.
void assess_trend(ConcentrationCurve& curve);

/// Median of Q from the characteristic-function inversion.
double median_Q(const KLBasis& basis);

/// a = 0.1 * median |phibar|^2 over exact samples conditioned on Q > median(Q).
double default_floor(const KLBasis& basis, SplitMode mode, std::uint64_t seed,
                     std::size_t samples = 4000);

}  // namespace condfield
