#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <sstream>
#include <string_view>

#include "condfield/experiment.hpp"

namespace condfield {
namespace {

using io::Json;

std::string escape(std::string_view key) {
  std::string out;
  for (char c : key) {
    if (c == '~') {
      out += "~0";
    } else if (c == '/') {
      out += "~1";
    } else {
      out += c;
    }
  }
  return out;
}

/// Object view that tracks its JSON pointer.
class Block {
 public:
  Block(const Json& value, std::string pointer) : value_(value), pointer_(std::move(pointer)) {
    if (!value_.is_object()) throw ConfigError(where(), "expected an object");
  }

  std::string where() const { return pointer_.empty() ? "/" : pointer_; }
  std::string path(std::string_view key) const { return pointer_ + "/" + escape(key); }

  void allow(std::initializer_list<std::string_view> keys) const {
    for (const auto& item : value_.items()) {
      if (std::find(keys.begin(), keys.end(), item.key()) == keys.end())
        throw ConfigError(path(item.key()), "unknown key");
    }
  }

  bool has(std::string_view key) const { return value_.contains(std::string(key)); }

  const Json& at(std::string_view key) const {
    if (!has(key)) throw ConfigError(path(key), "required key is missing");
    return value_.at(std::string(key));
  }

  Block block(std::string_view key) const { return Block(at(key), path(key)); }

  double number(std::string_view key) const {
    const Json& v = at(key);
    if (!v.is_number()) throw ConfigError(path(key), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(path(key), "expected a finite number");
    return x;
  }
  double number(std::string_view key, double fallback) const {
    return has(key) ? number(key) : fallback;
  }
  double positive(std::string_view key, double fallback) const {
    const double x = number(key, fallback);
    if (!(x > 0.0)) throw ConfigError(path(key), "must be positive");
    return x;
  }

  long long integer(std::string_view key) const {
    const Json& v = at(key);
    if (!v.is_number_integer()) throw ConfigError(path(key), "expected an integer");
    return v.get<long long>();
  }
  long long integer(std::string_view key, long long fallback, long long lo,
                    long long hi = std::numeric_limits<long long>::max()) const {
    const long long x = has(key) ? integer(key) : fallback;
    if (x < lo || x > hi) {
      throw ConfigError(path(key), "must lie in [" + std::to_string(lo) + ", " +
                                       (hi == std::numeric_limits<long long>::max()
                                            ? std::string("inf")
                                            : std::to_string(hi)) +
                                       "]");
    }
    return x;
  }

  std::uint64_t unsigned_integer(std::string_view key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const Json& v = at(key);
    if (!v.is_number_unsigned()) throw ConfigError(path(key), "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

  bool boolean(std::string_view key, bool fallback) const {
    if (!has(key)) return fallback;
    const Json& v = at(key);
    if (!v.is_boolean()) throw ConfigError(path(key), "expected true or false");
    return v.get<bool>();
  }

  std::string string(std::string_view key) const {
    const Json& v = at(key);
    if (!v.is_string()) throw ConfigError(path(key), "expected a string");
    return v.get<std::string>();
  }

  template <class E>
  E choice(std::string_view key, const std::vector<std::pair<std::string_view, E>>& options,
           std::optional<E> fallback = std::nullopt) const {
    if (!has(key)) {
      if (fallback) return *fallback;
      throw ConfigError(path(key), "required key is missing");
    }
    const std::string s = string(key);
    std::string names;
    for (const auto& [name, value] : options) {
      if (name == s) return value;
      names += names.empty() ? "" : ", ";
      names += name;
    }
    throw ConfigError(path(key), "unknown value \"" + s + "\" (expected one of " + names + ")");
  }

  std::vector<double> numbers(std::string_view key) const {
    const Json& v = at(key);
    if (!v.is_array()) throw ConfigError(path(key), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) {
        throw ConfigError(path(key) + "/" + std::to_string(i), "expected a number");
      }
      const double x = v[i].get<double>();
      if (!std::isfinite(x)) {
        throw ConfigError(path(key) + "/" + std::to_string(i), "expected a finite number");
      }
      out.push_back(x);
    }
    return out;
  }

  const Json& json() const { return value_; }

 private:
  const Json& value_;
  std::string pointer_;
};

const std::vector<std::pair<std::string_view, FieldKind>> kFieldKinds = {
    {"real", FieldKind::real}, {"complex", FieldKind::complex}};
const std::vector<std::pair<std::string_view, SamplingMethod>> kMethods = {
    {"rejection", SamplingMethod::rejection},
    {"tilted", SamplingMethod::tilted},
    {"automatic", SamplingMethod::automatic}};

GridSpec parse_grid(const Block& b) {
  b.allow({"d", "L", "n", "N"});
  GridSpec g;
  g.d = static_cast<int>(b.integer("d", 1, 1, 3));
  g.L = b.positive("L", 1.0);
  g.n = static_cast<int>(b.integer("n", 3, 3));
  if (g.n % 2 == 0) throw ConfigError(b.path("n"), "must be odd so the origin is a node");
  g.N = static_cast<int>(b.integer("N", 0, 0, 3));
  return g;
}

Kernel parse_kernel(const Block& b) {
  const std::string type = b.string("type");
  if (type == "scalar") {
    b.allow({"type", "family", "length", "variance"});
    ScalarKernel k;
    k.family = b.choice<ScalarFamily>(
        "family",
        {{"squared-exponential", ScalarFamily::squared_exponential},
         {"exponential", ScalarFamily::exponential}},
        ScalarFamily::squared_exponential);
    k.length = b.positive("length", 1.0);
    k.variance = b.positive("variance", 1.0);
    return k;
  }
  if (type == "turbulence") {
    b.allow({"type", "shape", "energy", "taylor_scale", "alpha"});
    TurbulenceKernel k;
    k.shape = b.choice<ShapeFamily>("shape",
                                    {{"gaussian", ShapeFamily::gaussian},
                                     {"rational-quadratic", ShapeFamily::rational_quadratic}},
                                    ShapeFamily::gaussian);
    k.energy = b.positive("energy", 1.0);
    k.taylor_scale = b.positive("taylor_scale", 1.0);
    k.shape_alpha = b.positive("alpha", 2.0);
    return k;
  }
  throw ConfigError(b.path("type"), "unknown kernel type \"" + type +
                                        "\" (expected scalar or turbulence)");
}

ObservableSpec parse_observable(const Block& b) {
  ObservableSpec o;
  o.kind = b.choice<ObservableKind>("type", {{"point-intensity", ObservableKind::point_intensity},
                                             {"helicity", ObservableKind::helicity}});
  if (o.kind == ObservableKind::point_intensity) {
    b.allow({"type", "point"});
    o.point = b.numbers("point");
  } else {
    b.allow({"type"});
  }
  return o;
}

SamplingSpec parse_sampling(const Block& b) {
  b.allow({"field", "method", "u_grid", "u_units", "epsilon", "floor", "n_samples", "tilt", "mode",
           "min_ess", "budget", "dump_fields", "strict"});
  SamplingSpec s;
  s.field = b.choice<FieldKind>("field", kFieldKinds, FieldKind::real);
  s.method = b.choice<SamplingMethod>("method", kMethods, SamplingMethod::automatic);
  if (b.has("u_grid")) {
    s.u_grid = b.numbers("u_grid");
    for (std::size_t i = 1; i < s.u_grid.size(); ++i) {
      if (!(s.u_grid[i] > s.u_grid[i - 1]))
        throw ConfigError(b.path("u_grid") + "/" + std::to_string(i), "u_grid must increase");
    }
  }
  s.units = b.choice<ThresholdUnits>("u_units",
                                     {{"absolute", ThresholdUnits::absolute},
                                      {"mean", ThresholdUnits::mean},
                                      {"rms", ThresholdUnits::rms}},
                                     ThresholdUnits::absolute);
  s.epsilon = b.positive("epsilon", 0.5);
  if (b.has("floor")) s.floor = b.positive("floor", 1.0);
  s.n_samples = static_cast<std::size_t>(b.integer("n_samples", 10000, 1));
  if (b.has("tilt")) s.tilt = b.positive("tilt", 1.0);
  s.mode = b.choice<SplitMode>("mode", {{"upper", SplitMode::upper},
                                        {"two_sided", SplitMode::two_sided}},
                               SplitMode::upper);
  s.min_ess = b.positive("min_ess", 100.0);
  s.budget = static_cast<std::size_t>(b.integer("budget", 0, 0));
  s.dump_fields = static_cast<std::size_t>(b.integer("dump_fields", 0, 0, 1000));
  s.strict = b.boolean("strict", true);
  return s;
}

SpectrumSpec parse_spectrum(const Block& b) {
  b.allow({"cluster_tol", "dense"});
  SpectrumSpec s;
  s.cluster_tol = b.positive("cluster_tol", 1e-6);
  s.dense = b.boolean("dense", true);
  return s;
}

Prop3Spec parse_prop3(const Block& b) {
  b.allow({"instances", "dim", "deficient_rank", "lowrank_rank", "tolerance"});
  Prop3Spec p;
  p.instances = static_cast<int>(b.integer("instances", 20, 1, 10000));
  p.dim = static_cast<int>(b.integer("dim", 64, 2, kMaxNonsymmetricDim));
  p.deficient_rank = static_cast<int>(b.integer("deficient_rank", p.dim / 2, 1, p.dim));
  p.lowrank_rank = static_cast<int>(b.integer("lowrank_rank", 3, 1, p.dim));
  p.tolerance = b.positive("tolerance", 1e-8);
  return p;
}

TailsSpec parse_tails(const Block& b) {
  b.allow({"spectra", "u", "mc_samples", "method", "asymptote_band", "asymptote_max_p", "mc_min_p"});
  TailsSpec t;
  const Json& spectra = b.at("spectra");
  if (!spectra.is_array() || spectra.empty())
    throw ConfigError(b.path("spectra"), "expected a non-empty array");
  for (std::size_t i = 0; i < spectra.size(); ++i) {
    const Block s(spectra[i], b.path("spectra") + "/" + std::to_string(i));
    s.allow({"eigenvalues", "field"});
    TailSpectrum ts;
    ts.eigenvalues = s.numbers("eigenvalues");
    if (std::none_of(ts.eigenvalues.begin(), ts.eigenvalues.end(), [](double v) { return v > 0; }))
      throw ConfigError(s.path("eigenvalues"), "needs at least one positive eigenvalue");
    ts.field = s.choice<FieldKind>("field", kFieldKinds);
    t.spectra.push_back(std::move(ts));
  }
  t.u = b.numbers("u");
  if (t.u.empty()) throw ConfigError(b.path("u"), "expected at least one threshold");
  t.mc_samples = static_cast<std::size_t>(b.integer("mc_samples", 100000, 0));
  t.method = b.choice<SamplingMethod>("method", kMethods, SamplingMethod::automatic);
  t.asymptote_band = b.positive("asymptote_band", 0.1);
  t.asymptote_max_p = b.positive("asymptote_max_p", 1e-4);
  t.mc_min_p = b.positive("mc_min_p", 1e-3);
  return t;
}

HelicitySpec parse_helicity(const Block& b) {
  b.allow({"eigen_tolerance", "ratio_target", "ratio_band", "refinement_levels", "cluster_tol",
           "angle_tolerance_deg", "audit_points", "audit_constant", "series_x_max"});
  HelicitySpec h;
  h.eigen_tolerance = b.positive("eigen_tolerance", 0.03);
  h.ratio_target = b.positive("ratio_target", 4.0);
  h.ratio_band = b.positive("ratio_band", 0.3);
  h.refinement_levels = static_cast<int>(b.integer("refinement_levels", 1, 0, 3));
  h.cluster_tol = b.positive("cluster_tol", 1e-3);
  h.angle_tolerance_deg = b.positive("angle_tolerance_deg", 5.0);
  h.audit_points = static_cast<std::size_t>(b.integer("audit_points", 20, 1, 10000));
  h.audit_constant = b.positive("audit_constant", 1.0);
  h.series_x_max = b.positive("series_x_max", 0.1);
  return h;
}

// Cross-block requirements of each experiment.
void check_requirements(ExperimentConfig& c) {
  const auto need = [&](bool present, const char* key) {
    if (!present) throw ConfigError(std::string("/") + key, "required for experiment " + c.experiment);
  };
  const bool field_experiment = c.experiment == "spectrum" || c.experiment == "concentration" ||
                                c.experiment == "adler" || c.experiment == "helicity" ||
                                c.experiment == "sample";
  if (field_experiment) {
    need(c.grid.has_value(), "grid");
    need(c.kernel.has_value(), "kernel");
    const int comps = kernel_components(*c.kernel);
    if (c.grid->N == 0) c.grid->N = comps;
    if (c.grid->N != comps) {
      throw ConfigError("/grid/N", "kernel " + std::string(comps == 1 ? "scalar" : "turbulence") +
                                       " describes " + std::to_string(comps) + " components");
    }
    if (comps == 3 && c.grid->d != 3) throw ConfigError("/grid/d", "turbulence kernel needs d = 3");
  }
  if (c.experiment == "helicity") {
    if (!std::holds_alternative<TurbulenceKernel>(*c.kernel))
      throw ConfigError("/kernel/type", "helicity experiment needs the turbulence kernel");
    if (c.observable && c.observable->kind != ObservableKind::helicity)
      throw ConfigError("/observable/type", "helicity experiment uses the helicity observable");
    c.observable = ObservableSpec{ObservableKind::helicity, {}};
  }
  if (c.experiment == "spectrum" || c.experiment == "concentration" ||
      c.experiment == "adler" || c.experiment == "sample") {
    need(c.observable.has_value(), "observable");
  }
  if (c.experiment == "concentration" || c.experiment == "adler" || c.experiment == "sample") {
    need(c.sampling.has_value(), "sampling");
  }
  if (c.experiment == "concentration" || c.experiment == "adler") {
    if (c.sampling->u_grid.size() < 3)
      throw ConfigError("/sampling/u_grid", "needs at least three increasing thresholds");
  }
  if (c.experiment == "adler") {
    if (!std::holds_alternative<ScalarKernel>(*c.kernel))
      throw ConfigError("/kernel/type", "adler experiment needs a scalar kernel");
    if (c.observable->kind != ObservableKind::point_intensity)
      throw ConfigError("/observable/type", "adler experiment uses point-intensity");
  }
  if (c.observable && field_experiment) {
    if (c.observable->kind == ObservableKind::point_intensity) {
      if (static_cast<int>(c.observable->point.size()) != c.grid->d)
        throw ConfigError("/observable/point", "needs " + std::to_string(c.grid->d) + " coordinates");
      try {
        Grid::build(c.grid->d, c.grid->L, c.grid->n, c.grid->N).locate(c.observable->point);
      } catch (const InvalidArgument& e) {
        throw ConfigError("/observable/point", e.what());
      }
    } else if (c.grid->d != 3 || c.grid->N != 3) {
      throw ConfigError("/observable/type", "helicity needs d = 3 and N = 3");
    }
  }
  if (c.experiment == "tails") need(c.source.contains("tails"), "tails");
}

}  // namespace

const std::vector<ExperimentInfo>& list_experiments() {
  static const std::vector<ExperimentInfo> info = {
      {"prop3", "randomized spectral equivalence of C^{1/2} O C^{1/2} and C O"},
      {"spectrum", "nonzero spectrum of C O by the low-rank and dense routes"},
      {"tails", "P(Q > u) by CF inversion, residue asymptotics and Monte Carlo"},
      {"concentration", "conditioned concentration curve on a u grid"},
      {"adler", "high local maximum: eigenstructure and conditioned shape"},
      {"helicity", "large local helicity: spectrum, refinement and mode audits"},
      {"sample", "conditioned field samples with CSV dumps"},
  };
  return info;
}

ExperimentConfig parse_config(const io::Json& document) {
  const Block root(document, "");
  root.allow({"experiment", "seed", "grid", "kernel", "observable", "sampling", "spectrum", "prop3",
              "tails", "helicity", "limits", "output"});
  ExperimentConfig c;
  c.source = document;
  c.experiment = root.string("experiment");
  const auto& names = list_experiments();
  if (std::none_of(names.begin(), names.end(),
                   [&](const ExperimentInfo& e) { return e.name == c.experiment; })) {
    throw ConfigError("/experiment", "unknown experiment \"" + c.experiment + "\"");
  }
  c.seed = root.unsigned_integer("seed", 0);
  if (root.has("grid")) c.grid = parse_grid(root.block("grid"));
  if (root.has("kernel")) c.kernel = parse_kernel(root.block("kernel"));
  if (root.has("observable")) c.observable = parse_observable(root.block("observable"));
  if (root.has("sampling")) c.sampling = parse_sampling(root.block("sampling"));
  if (root.has("spectrum")) c.spectrum = parse_spectrum(root.block("spectrum"));
  if (root.has("prop3")) c.prop3 = parse_prop3(root.block("prop3"));
  if (root.has("tails")) c.tails = parse_tails(root.block("tails"));
  if (root.has("helicity")) c.helicity = parse_helicity(root.block("helicity"));
  if (root.has("limits")) {
    const Block b = root.block("limits");
    b.allow({"dense_cap"});
    c.dense_cap = static_cast<std::size_t>(b.integer("dense_cap", 4096, 1));
  }
  if (root.has("output")) {
    const Block b = root.block("output");
    b.allow({"directory"});
    c.out_dir = b.string("directory");
  }
  check_requirements(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("/", "cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  io::Json doc;
  try {
    doc = io::Json::parse(buffer.str());
  } catch (const io::Json::parse_error& e) {
    throw ConfigError("/", std::string("malformed JSON: ") + e.what());
  }
  return parse_config(doc);
}

}  // namespace condfield
