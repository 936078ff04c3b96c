#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "condfield/experiment.hpp"

using namespace condfield;
using io::Json;

namespace fs = std::filesystem;

namespace {

std::string pointer_of(const Json& doc) {
  try {
    parse_config(doc);
  } catch (const ConfigError& e) {
    return e.pointer();
  }
  return "";
}

Json adler_doc() {
  return Json::parse(R"({
    "experiment": "adler",
    "grid": {"d": 1, "L": 5.0, "n": 41},
    "kernel": {"type": "scalar"},
    "observable": {"type": "point-intensity", "point": [0.0]},
    "sampling": {"field": "complex", "u_grid": [4, 16, 32], "u_units": "mean", "n_samples": 1000}
  })");
}

Json prop3_doc() {
  return Json::parse(R"({"experiment": "prop3", "seed": 4,
                         "prop3": {"instances": 4, "dim": 16, "deficient_rank": 8}})");
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  return Json::parse(in);
}

}  // namespace

TEST_CASE("config errors carry the JSON pointer of the offending key") {
  CHECK_NOTHROW(parse_config(adler_doc()));

  Json even = adler_doc();
  even["grid"]["n"] = 200;
  CHECK(pointer_of(even) == "/grid/n");

  Json unknown = adler_doc();
  unknown["sampling"]["samples"] = 10;
  CHECK(pointer_of(unknown) == "/sampling/samples");

  Json top = adler_doc();
  top["extra"] = 1;
  CHECK(pointer_of(top) == "/extra");

  Json type = adler_doc();
  type["grid"]["L"] = "five";
  CHECK(pointer_of(type) == "/grid/L");

  Json element = adler_doc();
  element["sampling"]["u_grid"][1] = "x";
  CHECK(pointer_of(element) == "/sampling/u_grid/1");

  Json order = adler_doc();
  order["sampling"]["u_grid"] = {4, 2, 8};
  CHECK(pointer_of(order) == "/sampling/u_grid/1");

  Json missing = adler_doc();
  missing.erase("grid");
  CHECK(pointer_of(missing) == "/grid");

  Json name = adler_doc();
  name["experiment"] = "nope";
  CHECK(pointer_of(name) == "/experiment");

  Json comps = adler_doc();
  comps["grid"]["N"] = 3;
  CHECK(pointer_of(comps) == "/grid/N");

  Json point = adler_doc();
  point["observable"]["point"] = {0.01};
  CHECK(pointer_of(point) == "/observable/point");

  Json kernel = adler_doc();
  kernel["kernel"] = {{"type", "turbulence"}};
  CHECK(pointer_of(kernel) == "/grid/d");

  Json seed = adler_doc();
  seed["seed"] = -1;
  CHECK(pointer_of(seed) == "/seed");

  Json family = adler_doc();
  family["kernel"]["family"] = "matern";
  CHECK(pointer_of(family) == "/kernel/family");

  Json helicity = Json::parse(R"({"experiment": "helicity", "grid": {"d": 3, "L": 2, "n": 5},
                                  "kernel": {"type": "scalar"}})");
  CHECK(pointer_of(helicity) == "/kernel/type");
}

TEST_CASE("shipped configs validate") {
  for (const auto& entry : fs::directory_iterator(fs::path(CONDFIELD_SOURCE_DIR) / "configs")) {
    CAPTURE(entry.path().string());
    CHECK_NOTHROW(load_config(entry.path()));
  }
  CHECK_THROWS_AS(load_config(fs::path(CONDFIELD_SOURCE_DIR) / "tests/data/even_n.json"),
                  ConfigError);
}

TEST_CASE("run_experiment writes report, CSV and manifest; reruns are identical") {
  const auto out = fresh_dir("condfield_run_test");
  const auto config = parse_config(prop3_doc());
  RunOptions opt;
  opt.out_dir = out;
  const auto first = run_experiment(config, opt);
  CHECK(first.verdict);
  CHECK(first.exit_code == kExitPass);
  CHECK(first.directory.filename().string() == "prop3-" + config_hash(config).substr(0, 12));

  const Json manifest = read_json(first.directory / "manifest.json");
  CHECK(manifest["seed"] == 4);
  CHECK(manifest["config_hash"] == config_hash(config));
  std::size_t listed = 0;
  for (const auto& f : manifest["files"]) {
    const auto path = first.directory / f["path"].get<std::string>();
    CHECK(io::sha256_file(path) == f["sha256"].get<std::string>());
    ++listed;
  }
  std::size_t on_disk = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(first.directory)) ++on_disk;
  CHECK(on_disk == listed + 1);  // everything but the manifest itself

  CHECK_THROWS_AS(run_experiment(config, opt), std::runtime_error);
  opt.force = true;
  const auto second = run_experiment(config, opt);
  const Json again = read_json(second.directory / "manifest.json");
  CHECK(again["files"] == manifest["files"]);

  opt.seed = 5;
  CHECK(run_experiment(config, opt).directory != first.directory);
  fs::remove_all(out);
}

TEST_CASE("verdict failures and resource caps") {
  Json doc = prop3_doc();
  doc["prop3"]["tolerance"] = 1e-300;
  const auto out = execute_experiment(parse_config(doc));
  CHECK_FALSE(out.verdict);
  CHECK_FALSE(out.failures.empty());
  CHECK(out.report["verdict"]["pass"] == false);

  Json big = adler_doc();
  big["limits"] = {{"dense_cap", 10}};
  CHECK_THROWS_AS(execute_experiment(parse_config(big)), ResourceLimitError);
}

TEST_CASE("adler experiment end to end") {
  const auto out = execute_experiment(parse_config(adler_doc()));
  CAPTURE(out.report["verdict"].dump());
  CHECK(out.verdict);
  CHECK(out.report["results"]["mode"]["eigenvalue_lowrank"].get<double>() ==
        doctest::Approx(1.0).epsilon(1e-10));
  bool csv = false;
  for (const auto& [name, content] : out.artifacts) {
    if (name == "concentration.csv") {
      csv = true;
      CHECK(content.rfind("u,epsilon,a,P_u,CI_low,CI_high,P_phibar_small,mean_ratio,n_eff,method,seed", 0) == 0);
    }
  }
  CHECK(csv);
}
