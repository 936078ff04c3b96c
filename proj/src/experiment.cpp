#include "condfield/experiment.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <limits>
#include <random>

#include <omp.h>

#include "condfield/applications.hpp"
#include "condfield/operators.hpp"
#include "condfield/spectral.hpp"

#ifndef CONDFIELD_VERSION
#define CONDFIELD_VERSION "unknown"
#endif

namespace condfield {
namespace {

using io::Json;

struct Verdict {
  std::vector<std::string> failures;
  bool check(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
    return ok;
  }
};

Json to_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

template <class T>
Json to_json(const std::vector<T>& v) {
  Json out = Json::array();
  for (const auto& x : v) out.push_back(x);
  return out;
}

Json groups_json(const std::vector<DegeneracyGroup>& groups) {
  Json out = Json::array();
  for (const auto& g : groups) out.push_back({{"begin", g.begin}, {"size", g.size}, {"value", g.value}});
  return out;
}

Json proportion_json(const Proportion& p) {
  return {{"estimate", p.estimate}, {"ci_low", p.low}, {"ci_high", p.high}};
}

Json record_json(const ConcentrationRecord& r) {
  return {{"u", r.u},
          {"epsilon", r.epsilon},
          {"floor", r.floor},
          {"samples", r.samples},
          {"proposals", r.proposals},
          {"effective_samples", r.effective_samples},
          {"fluctuation", proportion_json(r.fluctuation)},
          {"small_mean", proportion_json(r.small_mean)},
          {"mean_ratio", r.mean_ratio},
          {"median_ratio", r.median_ratio},
          {"mean_similarity", r.mean_similarity},
          {"min_mean_norm2", r.min_mean_norm2},
          {"max_identity_residual", r.max_identity_residual},
          {"tail_estimate", r.tail_estimate},
          {"tail_standard_error", r.tail_standard_error},
          {"method", to_string(r.method)},
          {"tilt", r.tilt},
          {"seed", r.seed},
          {"ci_method", r.ci_method}};
}

Json curve_json(const ConcentrationCurve& c) {
  Json records = Json::array();
  for (const auto& r : c.records) records.push_back(record_json(r));
  return {{"records", records},
          {"fluctuation_strictly_decreasing", c.fluctuation_strictly_decreasing},
          {"fluctuation_non_increasing", c.fluctuation_non_increasing},
          {"small_mean_non_increasing", c.small_mean_non_increasing},
          {"endpoint_decrease", c.endpoint_decrease},
          {"similarity_increasing", c.similarity_increasing}};
}

std::string concentration_csv(const std::vector<ConcentrationRecord>& records) {
  io::CsvTable t({"u", "epsilon", "a", "P_u", "CI_low", "CI_high", "P_phibar_small", "mean_ratio",
                  "n_eff", "method", "seed", "P_phibar_small_low", "P_phibar_small_high",
                  "median_ratio", "mean_similarity", "n", "proposals", "tail_estimate",
                  "tail_stderr", "tilt"});
  for (const auto& r : records) {
    t.row() << r.u << r.epsilon << r.floor << r.fluctuation.estimate << r.fluctuation.low
            << r.fluctuation.high << r.small_mean.estimate << r.mean_ratio << r.effective_samples
            << to_string(r.method) << static_cast<unsigned long long>(r.seed) << r.small_mean.low
            << r.small_mean.high << r.median_ratio << r.mean_similarity << r.samples
            << r.proposals << r.tail_estimate << r.tail_standard_error << r.tilt;
  }
  return t.str();
}

Grid make_grid(const ExperimentConfig& c) {
  return Grid::build(c.grid->d, c.grid->L, c.grid->n, c.grid->N);
}

LowRankForm make_observable(const ExperimentConfig& c, const Grid& grid) {
  if (c.observable->kind == ObservableKind::helicity) return observable_helicity(grid);
  return observable_point_intensity(grid, c.observable->point);
}

std::string observable_name(const ObservableSpec& o) {
  return o.kind == ObservableKind::helicity ? "helicity" : "point-intensity";
}

Json kernel_json(const Kernel& k) {
  if (const auto* s = std::get_if<ScalarKernel>(&k)) {
    return {{"type", "scalar"}, {"family", to_string(s->family)}, {"length", s->length},
            {"variance", s->variance}};
  }
  const auto& t = std::get<TurbulenceKernel>(k);
  return {{"type", "turbulence"}, {"shape", to_string(t.shape)}, {"energy", t.energy},
          {"taylor_scale", t.taylor_scale}, {"alpha", t.shape_alpha}};
}

/// Scale applied to the configured u grid.
double threshold_scale(const KLBasis& basis, ThresholdUnits units) {
  if (units == ThresholdUnits::absolute) return 1.0;
  const Eigen::VectorXd l = basis.eigenvalues;
  const double mean = l.sum();
  if (units == ThresholdUnits::mean) {
    if (!(mean > 0.0))
      throw InvalidArgument("u_units = mean needs <Q> > 0; use rms for indefinite observables");
    return mean;
  }
  const double var = (basis.kind == FieldKind::real ? 2.0 : 1.0) * l.squaredNorm();
  return std::sqrt(mean * mean + var);
}

ConcentrationOptions concentration_options(const ExperimentConfig& c, const KLBasis& basis) {
  const SamplingSpec& s = *c.sampling;
  ConcentrationOptions o;
  o.epsilon = s.epsilon;
  o.floor = s.floor ? *s.floor : default_floor(basis, s.mode, c.seed);
  o.samples = s.n_samples;
  o.method = s.method;
  o.seed = c.seed;
  o.mode = s.mode;
  o.min_effective_samples = s.min_ess;
  o.budget = s.budget;
  o.tilt = s.tilt;
  return o;
}

std::vector<double> scaled_grid(const std::vector<double>& grid, double scale) {
  std::vector<double> out = grid;
  for (auto& u : out) u *= scale;
  return out;
}

/// Analytic reference span for similarity, when one exists.
std::optional<Eigen::MatrixXd> reference_span(const ExperimentConfig& c, const Grid& grid) {
  if (c.observable->kind == ObservableKind::helicity) {
    const auto& k = std::get<TurbulenceKernel>(*c.kernel);
    Eigen::MatrixXd plus = helicity_analytic_span(grid, k, 1);
    if (c.sampling->mode == SplitMode::upper) return plus;
    Eigen::MatrixXd minus = helicity_analytic_span(grid, k, -1);
    Eigen::MatrixXd both(plus.rows(), plus.cols() + minus.cols());
    both << plus, minus;
    return both;
  }
  if (const auto* s = std::get_if<ScalarKernel>(&*c.kernel))
    return kernel_column(grid, *s, c.observable->point);
  return std::nullopt;
}

KLBasis field_basis(const ExperimentConfig& c, const Grid& grid, const LowRankForm& form) {
  const auto cov = assemble_covariance(grid, *c.kernel, AssemblyOptions{c.dense_cap});
  return make_kl_basis(cov, form, c.sampling->field, SpectrumOptions{c.spectrum.cluster_tol});
}

Json basis_json(const KLBasis& b) {
  return {{"field", to_string(b.kind)},
          {"dim", b.dim()},
          {"nonzero_eigenvalues", to_json(b.nonzero_eigenvalues())},
          {"positive_groups", groups_json(b.positive_groups)},
          {"negative_groups", groups_json(b.negative_groups)},
          {"g1", b.g1()}};
}

// ------------------------------------------------------------------ prop3

ExperimentOutput run_prop3(const ExperimentConfig& c) {
  const Prop3Spec& p = c.prop3;
  ExperimentOutput out;
  Verdict verdict;
  io::CsvTable table({"instance", "c_rank", "o_kind", "route", "m_count", "co_count",
                      "max_relative_mismatch", "max_imaginary", "pass", "seed", "stream"});
  Json instances = Json::array();
  const Eigen::Index n = p.dim;
  for (int i = 0; i < p.instances; ++i) {
    Philox4x32 rng(c.seed, static_cast<std::uint64_t>(i));
    std::normal_distribution<double> normal;
    const auto gaussian = [&](Eigen::Index rows, Eigen::Index cols) {
      Eigen::MatrixXd m(rows, cols);
      for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = normal(rng);
      return m;
    };
    const int c_rank = i % 2 == 0 ? p.dim : p.deficient_rank;
    const bool dense_o = (i / 2) % 2 == 0;
    const Eigen::MatrixXd a = gaussian(n, c_rank);
    OperatorMatrix cov{a * a.transpose() / c_rank, "C", true, true};
    Prop3Report r;
    if (dense_o) {
      const Eigen::MatrixXd b = gaussian(n, n);
      r = check_prop3(cov, symmetrize(0.5 * (b + b.transpose())), p.tolerance);
    } else {
      LowRankForm o;
      o.basis = gaussian(n, p.lowrank_rank);
      o.core = Eigen::MatrixXd::Zero(p.lowrank_rank, p.lowrank_rank);
      for (int k = 0; k < p.lowrank_rank; ++k) o.core(k, k) = normal(rng);
      o.label = "random low-rank";
      r = check_prop3(cov, o, p.tolerance);
    }
    verdict.check(r.pass, "instance " + std::to_string(i) + ": spectra differ");
    table.row() << i << c_rank << (dense_o ? "dense" : "low-rank") << r.route
                << static_cast<unsigned long>(r.m_spectrum.size())
                << static_cast<unsigned long>(r.co_spectrum.size()) << r.max_relative_mismatch
                << r.max_imaginary << (r.pass ? "true" : "false")
                << static_cast<unsigned long long>(c.seed) << i;
    instances.push_back({{"instance", i},
                         {"c_rank", c_rank},
                         {"o_kind", dense_o ? "dense" : "low-rank"},
                         {"route", r.route},
                         {"m_spectrum", to_json(r.m_spectrum)},
                         {"co_spectrum", to_json(r.co_spectrum)},
                         {"max_relative_mismatch", r.max_relative_mismatch},
                         {"max_imaginary", r.max_imaginary},
                         {"pass", r.pass}});
  }
  out.report = {{"dim", p.dim},
                {"deficient_rank", p.deficient_rank},
                {"lowrank_rank", p.lowrank_rank},
                {"tolerance", p.tolerance},
                {"instances", instances}};
  out.artifacts.emplace_back("prop3.csv", table.str());
  out.failures = std::move(verdict.failures);
  return out;
}

// --------------------------------------------------------------- spectrum

ExperimentOutput run_spectrum(const ExperimentConfig& c) {
  ExperimentOutput out;
  Verdict verdict;
  const Grid grid = make_grid(c);
  const LowRankForm form = make_observable(c, grid);
  const auto low = lowrank_spectrum(functional_gram(grid, *c.kernel, form), form.core);
  const std::vector<double> low_values(low.values.data(), low.values.data() + low.values.size());
  const auto groups = degeneracy_groups(low_values, c.spectrum.cluster_tol);

  Json report = {{"dim", grid.size()},
                 {"observable", observable_name(*c.observable)},
                 {"cluster_tol", c.spectrum.cluster_tol},
                 {"lowrank", {{"eigenvalues", to_json(low.values)},
                              {"groups", groups_json(groups.groups)}}}};
  Eigen::VectorXd dense_values;
  if (c.spectrum.dense) {
    const auto cov = assemble_covariance(grid, *c.kernel, AssemblyOptions{c.dense_cap});
    const auto m = eig_symmetric(build_M(cov, form), SpectrumOptions{c.spectrum.cluster_tol});
    dense_values = m.nonzero_values();
    double mismatch = std::numeric_limits<double>::infinity();
    if (dense_values.size() == low.values.size()) {
      const double scale = std::max(low.values.cwiseAbs().maxCoeff(), 1e-300);
      mismatch = (dense_values - low.values).cwiseAbs().maxCoeff() / scale;
    }
    verdict.check(dense_values.size() == low.values.size(), "nonzero counts differ between routes");
    verdict.check(mismatch <= 1e-8, "low-rank and dense spectra differ beyond 1e-8 relative");
    report["dense"] = {{"eigenvalues", to_json(dense_values)},
                       {"positive_groups", groups_json(m.positive_groups)},
                       {"negative_groups", groups_json(m.negative_groups)},
                       {"max_relative_mismatch", mismatch},
                       {"tolerance", 1e-8}};
  }
  io::CsvTable table({"index", "eigenvalue_lowrank", "eigenvalue_dense"});
  for (Eigen::Index k = 0; k < low.values.size(); ++k) {
    table.row() << static_cast<long>(k + 1) << low.values[k]
                << (k < dense_values.size() ? dense_values[k]
                                            : std::numeric_limits<double>::quiet_NaN());
  }
  out.report = std::move(report);
  out.artifacts.emplace_back("spectrum.csv", table.str());
  out.failures = std::move(verdict.failures);
  return out;
}

// ------------------------------------------------------------------ tails

ExperimentOutput run_tails(const ExperimentConfig& c) {
  const TailsSpec& t = c.tails;
  ExperimentOutput out;
  Verdict verdict;
  constexpr double kCfTarget = 1e-8;
  // Zero-variance tilted estimates (rank-1 spectra) are exact; the comparison then
  // resolves the quadrature error of the CF inversion itself (~1e-16 absolute).
  constexpr double kCfAbsFloor = 1e-14;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  io::CsvTable table({"spectrum", "field", "u", "method", "estimate", "stderr", "n", "seed"});
  Json spectra = Json::array();
  for (std::size_t s = 0; s < t.spectra.size(); ++s) {
    const auto model = TailModel::from_eigenvalues(t.spectra[s].eigenvalues, t.spectra[s].field);
    Json rows = Json::array();
    for (std::size_t k = 0; k < t.u.size(); ++k) {
      const double u = t.u[k];
      const std::string tag = "spectrum " + std::to_string(s) + " u=" + io::format_double(u);
      std::optional<double> cf;
      try {
        cf = tail_prob_cf(model, u, kCfTarget);
      } catch (const NumericalError& e) {
        verdict.check(false, tag + ": CF inversion failed: " + e.what());
      }
      Json row = {{"u", u}, {"cf", cf ? Json(*cf) : Json()}};
      const std::string field = to_string(model.kind);
      table.row() << static_cast<unsigned long>(s) << field << u << "cf" << (cf ? *cf : nan)
                  << kCfTarget << 0 << 0;
      if (u > 0.0) {
        const auto a = tail_asymptotic(model, u);
        row["asymptotic"] = a.probability;
        row["asymptotic_density"] = a.density;
        table.row() << static_cast<unsigned long>(s) << field << u << "asymptotic" << a.probability
                    << nan << 0 << 0;
        if (cf && *cf <= t.asymptote_max_p && *cf > 0.0) {
          const double ratio = a.probability / *cf;
          row["asymptotic_ratio"] = ratio;
          verdict.check(std::abs(ratio - 1.0) <= t.asymptote_band,
                        tag + ": asymptote/CF ratio " + io::format_double(ratio) + " outside band");
        }
      }
      if (t.mc_samples > 0) {
        const std::uint64_t seed = c.seed + (static_cast<std::uint64_t>(s) << 20) + k;
        const auto mc = tail_prob_mc(model, u, t.mc_samples, t.method, seed);
        const std::string method = "mc-" + to_string(mc.method);
        row["mc"] = {{"estimate", mc.estimate},
                     {"standard_error", mc.standard_error},
                     {"samples", mc.samples},
                     {"effective_samples", mc.effective_samples},
                     {"method", to_string(mc.method)},
                     {"tilt", mc.tilt},
                     {"seed", mc.seed}};
        table.row() << static_cast<unsigned long>(s) << field << u << method << mc.estimate
                    << mc.standard_error << mc.samples << static_cast<unsigned long long>(seed);
        const bool checked = cf && (mc.method == SamplingMethod::tilted || *cf >= t.mc_min_p);
        if (checked) {
          const double gap = std::abs(mc.estimate - *cf);
          row["mc_z"] = gap / std::max(mc.standard_error, 1e-300);
          verdict.check(gap <= 3.0 * mc.standard_error + kCfAbsFloor,
                        tag + ": Monte Carlo differs from CF by " + io::format_double(gap) +
                            " (stderr " + io::format_double(mc.standard_error) + ")");
        }
      }
      rows.push_back(row);
    }
    spectra.push_back({{"eigenvalues", to_json(model.eigenvalues)},
                       {"field", to_string(model.kind)},
                       {"g1", model.g1},
                       {"rows", rows}});
  }
  out.report = {{"cf_target_abs_error", kCfTarget},
                {"asymptote_band", t.asymptote_band},
                {"asymptote_max_p", t.asymptote_max_p},
                {"mc_min_p", t.mc_min_p},
                {"mc_samples", t.mc_samples},
                {"mc_z_max", 3.0},
                {"cf_abs_floor", kCfAbsFloor},
                {"spectra", spectra}};
  out.artifacts.emplace_back("tails.csv", table.str());
  out.failures = std::move(verdict.failures);
  return out;
}

// ---------------------------------------------------------- concentration

void check_curve(const ConcentrationCurve& curve, bool strict, Verdict& verdict) {
  if (strict) {
    verdict.check(curve.fluctuation_strictly_decreasing,
                  "P_u(|dphi|^2 > eps |phibar|^2) is not strictly decreasing beyond CI overlap");
  } else {
    verdict.check(curve.fluctuation_non_increasing,
                  "P_u(|dphi|^2 > eps |phibar|^2) increases beyond CI overlap");
  }
  verdict.check(curve.endpoint_decrease, "largest-u fluctuation probability not below smallest-u");
  verdict.check(curve.small_mean_non_increasing, "P_u(|phibar|^2 < a) increases beyond CI overlap");
  for (const auto& r : curve.records) {
    const std::string tag = "u=" + io::format_double(r.u) + ": ";
    verdict.check(r.min_mean_norm2 > 0.0, tag + "|phibar|^2 vanished on a sample");
    verdict.check(r.max_identity_residual <= 1e-10, tag + "norm identity residual above 1e-10");
  }
}

ExperimentOutput run_concentration(const ExperimentConfig& c) {
  ExperimentOutput out;
  Verdict verdict;
  const Grid grid = make_grid(c);
  const LowRankForm form = make_observable(c, grid);
  const KLBasis basis = field_basis(c, grid, form);
  const auto options = concentration_options(c, basis);
  const double scale = threshold_scale(basis, c.sampling->units);
  const auto u_grid = scaled_grid(c.sampling->u_grid, scale);
  const auto reference = reference_span(c, grid);
  const auto curve =
      concentration_curve(basis, u_grid, options, reference ? &*reference : nullptr);
  check_curve(curve, c.sampling->strict, verdict);
  out.report = {{"observable", observable_name(*c.observable)},
                {"basis", basis_json(basis)},
                {"u_scale", scale},
                {"epsilon", options.epsilon},
                {"floor", options.floor},
                {"floor_default", !c.sampling->floor.has_value()},
                {"mode", to_string(options.mode)},
                {"reference", reference ? "analytic" : "phibar-transport"},
                {"strict", c.sampling->strict},
                {"curve", curve_json(curve)}};
  out.artifacts.emplace_back("concentration.csv", concentration_csv(curve.records));
  out.failures = std::move(verdict.failures);
  return out;
}

// ------------------------------------------------------------------ adler

ExperimentOutput run_adler(const ExperimentConfig& c) {
  ExperimentOutput out;
  Verdict verdict;
  const Grid grid = make_grid(c);
  const auto& kernel = std::get<ScalarKernel>(*c.kernel);
  const auto cov = assemble_covariance(grid, kernel, AssemblyOptions{c.dense_cap});
  const auto mode = adler_mode_check(grid, cov, kernel, c.observable->point);
  verdict.check(mode.pass, "top eigenvalue or mode shape differs from C(point, .) beyond 1e-10");

  const LowRankForm form = observable_point_intensity(grid, c.observable->point);
  const KLBasis basis =
      make_kl_basis(cov, form, c.sampling->field, SpectrumOptions{c.spectrum.cluster_tol});
  const auto options = concentration_options(c, basis);
  const double scale = threshold_scale(basis, c.sampling->units);
  const Eigen::MatrixXd ray = kernel_column(grid, kernel, c.observable->point);
  const auto shape = adler_conditioned_shape(basis, ray, scaled_grid(c.sampling->u_grid, scale),
                                             options);
  check_curve(shape.curve, c.sampling->strict, verdict);
  verdict.check(shape.similarity_increasing, "mean similarity to C(., point) does not increase");
  verdict.check(shape.final_similarity_ok, "largest-u mean similarity below 0.9");
  verdict.check(shape.median_ratio_decreases, "median |dphi|^2/|phi|^2 does not decrease");

  io::CsvTable modes({"node", "x", "y", "z", "kernel_column", "transported_mode"});
  const Eigen::Index top = static_cast<Eigen::Index>(basis.top_group().begin);
  Eigen::VectorXd shape_mode = to_nodal(grid, basis.transport.col(top));
  Eigen::VectorXd column = to_nodal(grid, ray.col(0));
  const auto origin = grid.node_flat(grid.locate(c.observable->point));
  const double norm = shape_mode[static_cast<Eigen::Index>(origin)];
  if (norm != 0.0) shape_mode *= column[static_cast<Eigen::Index>(origin)] / norm;
  for (std::size_t a = 0; a < grid.num_nodes(); ++a) {
    const auto x = grid.position(a);
    modes.row() << static_cast<unsigned long>(a) << x[0] << x[1] << x[2]
                << column[static_cast<Eigen::Index>(a)] << shape_mode[static_cast<Eigen::Index>(a)];
  }
  out.report = {{"mode",
                 {{"expected", mode.expected},
                  {"eigenvalue_lowrank", mode.eigenvalue_lowrank},
                  {"eigenvalue_m", mode.eigenvalue_m},
                  {"max_relative_error", mode.max_relative_error},
                  {"max_other_eigenvalue", mode.max_other_eigenvalue},
                  {"cosine_m", mode.cosine_m},
                  {"cosine_lowrank", mode.cosine_lowrank},
                  {"tolerance", mode.tolerance},
                  {"pass", mode.pass}}},
                {"basis", basis_json(basis)},
                {"u_scale", scale},
                {"epsilon", options.epsilon},
                {"floor", options.floor},
                {"floor_default", !c.sampling->floor.has_value()},
                {"baseline", record_json(shape.baseline)},
                {"curve", curve_json(shape.curve)},
                {"final_similarity", shape.final_similarity},
                {"final_similarity_min", 0.9},
                {"median_ratio_decreases", shape.median_ratio_decreases}};
  std::vector<ConcentrationRecord> records{shape.baseline};
  records.insert(records.end(), shape.curve.records.begin(), shape.curve.records.end());
  out.artifacts.emplace_back("concentration.csv", concentration_csv(records));
  out.artifacts.emplace_back("mode.csv", modes.str());
  out.failures = std::move(verdict.failures);
  return out;
}

// --------------------------------------------------------------- helicity

ExperimentOutput run_helicity(const ExperimentConfig& c) {
  const HelicitySpec& h = c.helicity;
  ExperimentOutput out;
  Verdict verdict;
  const Grid grid = make_grid(c);
  const auto& kernel = std::get<TurbulenceKernel>(*c.kernel);
  const double lam = kernel.taylor_scale;

  const auto spec = helicity_numeric_check(grid, kernel, h.cluster_tol);
  verdict.check(spec.max_relative_error <= h.eigen_tolerance,
                "eigenvalue error " + io::format_double(spec.max_relative_error) + " above " +
                    io::format_double(h.eigen_tolerance));
  verdict.check(spec.clusters_3_3, "eigenvalues do not cluster 3+3");
  const double max_angle = spec.principal_angles_deg.size() ? spec.principal_angles_deg.maxCoeff() : 0.0;
  verdict.check(max_angle <= h.angle_tolerance_deg, "principal angle " +
                                                        io::format_double(max_angle) + " deg above " +
                                                        io::format_double(h.angle_tolerance_deg));

  Json refinement = Json::object();
  io::CsvTable refine({"h", "max_relative_error", "ratio"});
  if (h.refinement_levels > 0) {
    const auto study = helicity_refinement(kernel, c.grid->L, c.grid->n, h.refinement_levels);
    for (std::size_t k = 0; k < study.spacings.size(); ++k) {
      refine.row() << study.spacings[k] << study.errors[k]
                   << (k == 0 ? std::numeric_limits<double>::quiet_NaN() : study.ratios[k - 1]);
    }
    for (double r : study.ratios) {
      verdict.check(std::abs(r - h.ratio_target) <= h.ratio_band * h.ratio_target,
                    "refinement ratio " + io::format_double(r) + " outside band");
    }
    refinement = {{"spacings", to_json(study.spacings)},
                  {"errors", to_json(study.errors)},
                  {"ratios", to_json(study.ratios)},
                  {"target", h.ratio_target},
                  {"band", h.ratio_band}};
  }

  Json audits = Json::array();
  for (int sign : {1, -1}) {
    const auto mode = helicity_analytic(kernel, sign, Vec3::UnitZ(), 1.0);
    const auto audit = helicity_curl_audit(mode, c.grid->L, c.grid->n, h.audit_points, c.seed);
    const auto series = helicity_series_agreement(mode, h.series_x_max, 64, c.seed);
    const double bound = h.audit_constant * std::pow(audit.spacing / lam, 2);
    const std::string tag = sign > 0 ? "sign +: " : "sign -: ";
    verdict.check(audit.max_residual <= bound + 1e-8, tag + "curled eigen-equation residual above C h^2");
    verdict.check(audit.curl_origin_residual <= bound + 1e-8, tag + "curl relation at 0 above C h^2");
    verdict.check(std::abs(audit.ratio - h.ratio_target) <= h.ratio_band * h.ratio_target,
                  tag + "curled eigen-equation residual is not second order");
    verdict.check(audit.eigen_relation_residual <= 1e-6, tag + "v v(0) != (E/3) curl v(0)");
    verdict.check(audit.helicity_residual <= 1e-6, tag + "helicity at 0 differs from h0");
    verdict.check(series.max_scaled_gap <= 1.0, tag + "series gap exceeds (x/lambda)^3");
    audits.push_back({{"sign", sign},
                      {"eigenvalue", mode.eigenvalue()},
                      {"amplitude", mode.amplitude()},
                      {"spacing", audit.spacing},
                      {"points", audit.points},
                      {"bound", bound},
                      {"max_residual", audit.max_residual},
                      {"max_residual_fine", audit.max_residual_fine},
                      {"ratio", audit.ratio},
                      {"curl_origin_residual", audit.curl_origin_residual},
                      {"curl_origin_residual_fine", audit.curl_origin_residual_fine},
                      {"eigen_relation_residual", audit.eigen_relation_residual},
                      {"helicity_residual", audit.helicity_residual},
                      {"series_x_max", series.x_max},
                      {"series_max_gap", series.max_gap},
                      {"series_max_scaled_gap", series.max_scaled_gap}});
  }

  io::CsvTable values({"index", "eigenvalue", "expected", "relative_error"});
  for (Eigen::Index k = 0; k < spec.eigenvalues.size(); ++k) {
    const double expected = spec.eigenvalues[k] > 0 ? spec.expected : -spec.expected;
    values.row() << static_cast<long>(k + 1) << spec.eigenvalues[k] << expected
                 << std::abs(spec.eigenvalues[k] - expected) / spec.expected;
  }
  const auto mode = helicity_analytic(kernel, 1, Vec3::UnitZ(), 1.0);
  const Eigen::VectorXd v = mode.nodal(grid);
  const Eigen::VectorXd w = curl_field(grid, v);
  const auto nn = static_cast<Eigen::Index>(grid.num_nodes());
  io::CsvTable field({"node", "x", "y", "z", "v1", "v2", "v3", "curl1", "curl2", "curl3"});
  for (Eigen::Index a = 0; a < nn; ++a) {
    const auto x = grid.position(static_cast<std::size_t>(a));
    field.row() << static_cast<long>(a) << x[0] << x[1] << x[2] << v[a] << v[nn + a]
                << v[2 * nn + a] << w[a] << w[nn + a] << w[2 * nn + a];
  }
  std::vector<std::size_t> pos = spec.positive_groups, neg = spec.negative_groups;
  out.report = {{"expected", spec.expected},
                {"eigenvalues", to_json(spec.eigenvalues)},
                {"max_relative_error", spec.max_relative_error},
                {"eigen_tolerance", h.eigen_tolerance},
                {"cluster_tol", spec.cluster_tol},
                {"positive_groups", to_json(pos)},
                {"negative_groups", to_json(neg)},
                {"clusters_3_3", spec.clusters_3_3},
                {"principal_angles_deg", to_json(spec.principal_angles_deg)},
                {"angle_tolerance_deg", h.angle_tolerance_deg},
                {"spacing", spec.spacing},
                {"refinement", refinement},
                {"audits", audits}};
  out.artifacts.emplace_back("helicity_spectrum.csv", values.str());
  if (h.refinement_levels > 0) out.artifacts.emplace_back("refinement.csv", refine.str());
  out.artifacts.emplace_back("helicity_mode.csv", field.str());
  out.failures = std::move(verdict.failures);
  return out;
}

// ----------------------------------------------------------------- sample

ExperimentOutput run_sample(const ExperimentConfig& c) {
  ExperimentOutput out;
  Verdict verdict;
  const SamplingSpec& s = *c.sampling;
  const Grid grid = make_grid(c);
  const LowRankForm form = make_observable(c, grid);
  const KLBasis basis = field_basis(c, grid, form);
  const double scale = threshold_scale(basis, s.units);
  const double u = s.u_grid.empty() ? -std::numeric_limits<double>::infinity() : s.u_grid.front() * scale;

  ConditionalOptions opt;
  opt.threshold = u;
  opt.method = s.method;
  opt.seed = c.seed;
  opt.tilt = s.tilt;
  if (s.budget) opt.budget = s.budget;
  ConditionalSampler sampler(basis, opt);

  io::CsvTable samples({"index", "q", "q_field", "weight", "mean_norm2", "fluct_norm2", "seed",
                        "stream"});
  io::CsvTable fields({"sample", "node", "component", "x", "y", "z", "re", "im"});
  double max_q_error = 0.0;
  std::size_t drawn = 0;
  const auto nn = grid.num_nodes();
  while (drawn < s.n_samples) {
    auto sample = sampler.next();
    if (!sample) break;
    const Eigen::VectorXcd nodal = sample->field / grid.sqrt_weight();
    const double q_field = quadratic_form(form, Eigen::VectorXcd(sample->field));
    const double q_scale = std::max(std::abs(sample->q), 1e-300);
    max_q_error = std::max(max_q_error, std::abs(q_field - sample->q) / std::max(1.0, q_scale));
    const auto split = split_field(*sample, basis, s.mode);
    samples.row() << static_cast<unsigned long>(drawn) << sample->q << q_field << sample->weight
                  << split.mean_part.squaredNorm() << split.fluctuation.squaredNorm()
                  << static_cast<unsigned long long>(sample->seed)
                  << static_cast<unsigned long long>(sample->stream);
    if (drawn < s.dump_fields) {
      for (int comp = 0; comp < grid.components(); ++comp) {
        for (std::size_t a = 0; a < nn; ++a) {
          const auto x = grid.position(a);
          const auto z = nodal[static_cast<Eigen::Index>(comp * nn + a)];
          fields.row() << static_cast<unsigned long>(drawn) << static_cast<unsigned long>(a) << comp
                       << x[0] << x[1] << x[2] << z.real() << z.imag();
        }
      }
    }
    ++drawn;
  }
  verdict.check(drawn == s.n_samples, "budget spent after " + std::to_string(drawn) + " samples");
  verdict.check(max_q_error <= 1e-8, "Q recomputed from the field differs from sum lambda |t|^2");
  out.report = {{"observable", observable_name(*c.observable)},
                {"basis", basis_json(basis)},
                {"threshold", u},
                {"method", to_string(sampler.method())},
                {"tilt", sampler.tilt()},
                {"samples", drawn},
                {"proposals", sampler.proposals()},
                {"acceptance_rate", sampler.acceptance_rate()},
                {"max_q_consistency_error", max_q_error},
                {"q_tolerance", 1e-8}};
  out.artifacts.emplace_back("samples.csv", samples.str());
  if (s.dump_fields) out.artifacts.emplace_back("fields.csv", fields.str());
  out.failures = std::move(verdict.failures);
  return out;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Json hashed_document(const ExperimentConfig& c) {
  Json doc = c.source;
  doc.erase("output");
  doc["seed"] = c.seed;
  return doc;
}

}  // namespace

ExperimentOutput execute_experiment(const ExperimentConfig& c) {
  ExperimentOutput out;
  if (c.experiment == "prop3") out = run_prop3(c);
  else if (c.experiment == "spectrum") out = run_spectrum(c);
  else if (c.experiment == "tails") out = run_tails(c);
  else if (c.experiment == "concentration") out = run_concentration(c);
  else if (c.experiment == "adler") out = run_adler(c);
  else if (c.experiment == "helicity") out = run_helicity(c);
  else if (c.experiment == "sample") out = run_sample(c);
  else throw ConfigError("/experiment", "unknown experiment \"" + c.experiment + "\"");
  out.verdict = out.failures.empty();
  Json body = std::move(out.report);
  out.report = {{"experiment", c.experiment},
                {"seed", c.seed},
                {"config", hashed_document(c)},
                {"verdict", {{"pass", out.verdict}, {"failures", to_json(out.failures)}}}};
  if (c.grid) out.report["grid"] = {{"d", c.grid->d}, {"L", c.grid->L}, {"n", c.grid->n}, {"N", c.grid->N}};
  if (c.kernel) out.report["kernel"] = kernel_json(*c.kernel);
  out.report["results"] = std::move(body);
  return out;
}

std::string config_hash(const ExperimentConfig& config) {
  // nlohmann::json sorts keys, so the dump is canonical.
  const nlohmann::json canonical = nlohmann::json::parse(hashed_document(config).dump());
  return io::sha256_hex(canonical.dump());
}

RunResult run_experiment(ExperimentConfig config, const RunOptions& options) {
  if (options.seed) config.seed = *options.seed;
  if (options.workers) {
    if (*options.workers < 1) throw InvalidArgument("--workers must be at least 1");
    omp_set_num_threads(*options.workers);
  }
  const std::filesystem::path root =
      options.out_dir ? *options.out_dir : std::filesystem::path(config.out_dir);
  const std::string hash = config_hash(config);
  RunResult result;
  result.directory = root / (config.experiment + "-" + hash.substr(0, 12));
  if (std::filesystem::exists(result.directory) && !options.force) {
    throw std::runtime_error("run directory " + result.directory.string() +
                             " exists; pass --force to overwrite");
  }
  const std::string started = utc_now();
  ExperimentOutput out = execute_experiment(config);
  const std::string finished = utc_now();

  if (std::filesystem::exists(result.directory)) std::filesystem::remove_all(result.directory);
  std::filesystem::create_directories(result.directory);
  out.artifacts.insert(out.artifacts.begin(), {"report.json", io::dump_json(out.report)});
  Json files = Json::array();
  for (const auto& [name, content] : out.artifacts) {
    io::write_text(result.directory / name, content);
    files.push_back({{"path", name},
                     {"sha256", io::sha256_file(result.directory / name)},
                     {"bytes", content.size()}});
  }
  result.verdict = out.verdict;
  result.exit_code = out.verdict ? kExitPass : kExitVerdict;
  result.manifest = {{"experiment", config.experiment},
                     {"config_hash", hash},
                     {"code_version", CONDFIELD_VERSION},
                     {"seed", config.seed},
                     {"started_at", started},
                     {"finished_at", finished},
                     {"verdict", out.verdict ? "pass" : "fail"},
                     {"exit_code", result.exit_code},
                     {"files", files}};
  io::write_text(result.directory / "manifest.json", io::dump_json(result.manifest));
  return result;
}

}  // namespace condfield
